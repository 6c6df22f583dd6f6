//! Discrete calculus on the polar grid.
//!
//! The Dirichlet form is a finite-volume sum over the edges of the polar mesh:
//! radial edges between consecutive rings, a pole edge tying ring 0 to its own
//! ring mean, and angular edges within each ring. Its matrix `A` satisfies
//! `u^T A u ~ int |grad u|^2`, is exact on linear functions and vanishes
//! exactly on constants. Pairing `A` with the control-volume weights of
//! [`Grid::ring_weight`] gives the interior Laplacian, so the discrete
//! Euler-Lagrange residual is exactly the weighted gradient of the discrete
//! energy.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{BoundaryField, Grid, ScalarField};
use crate::linalg::TridiagLu;
use crate::sum::{self, Compensated};

/// Edge coefficients of the Dirichlet form on a grid.
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: Grid,
    /// Radial edge between rings `j` and `j+1`.
    radial: Vec<f64>,
    /// Pole edge between ring 0 and its ring mean.
    pole: f64,
    /// Angular edge within ring `j`.
    angular: Vec<f64>,
    weights: Vec<f64>,
}

impl Stencil {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n_r();
        let dr = grid.dr();
        let dt = grid.dtheta();
        // Scaling the angular difference by (dt/2)^2 / sin^2(dt/2) makes it
        // exact on the first Fourier mode, which keeps the pole region second
        // order for smooth Cartesian functions.
        let half = 0.5 * dt;
        let sigma = half * half / (half.sin() * half.sin());
        let radial = (0..n - 1).map(|j| dt * (j as f64 + 1.5)).collect();
        let angular = (0..n)
            .map(|j| {
                let len = if j == n - 1 { 0.5 * dr } else { dr };
                sigma * len / (grid.r(j) * dt)
            })
            .collect();
        Self { grid, radial, pole: 0.5 * dt, angular, weights: grid.ring_weights() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `A u` for ring-major data.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let nt = self.grid.n_theta();
        let n = self.grid.n_r();
        let mut out = vec![0.0; u.len()];
        for j in 0..n {
            let row = &u[j * nt..(j + 1) * nt];
            let a = self.angular[j];
            for i in 0..nt {
                let ip = if i + 1 == nt { 0 } else { i + 1 };
                let im = if i == 0 { nt - 1 } else { i - 1 };
                // Differences first: roundoff then scales with the local
                // variation, not with |u|, which matters on the tiny pole cells.
                out[j * nt + i] += a * ((row[i] - row[ip]) + (row[i] - row[im]));
            }
            if j + 1 < n {
                let k = self.radial[j];
                for i in 0..nt {
                    let d = u[(j + 1) * nt + i] - u[j * nt + i];
                    out[j * nt + i] -= k * d;
                    out[(j + 1) * nt + i] += k * d;
                }
            }
        }
        let mean = ring_mean(&u[..nt]);
        for i in 0..nt {
            out[i] += self.pole * (u[i] - mean);
        }
        out
    }

    /// `u^T A v`, the discrete `int grad u . grad v`.
    pub fn form(&self, u: &[f64], v: &[f64]) -> f64 {
        sum::dot(u, &self.apply(v))
    }

    /// Tridiagonal coupling of rings for Fourier mode `m`.
    fn mode_matrix(&self, m: usize, ring_diag: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.grid.n_r();
        let nt = self.grid.n_theta() as f64;
        let lambda = 2.0 - 2.0 * (2.0 * std::f64::consts::PI * m as f64 / nt).cos();
        let mut diag = vec![0.0; n];
        for j in 0..n {
            let mut d = self.angular[j] * lambda + ring_diag[j];
            if j > 0 {
                d += self.radial[j - 1];
            }
            if j + 1 < n {
                d += self.radial[j];
            }
            if j == 0 && m != 0 {
                d += self.pole;
            }
            diag[j] = d;
        }
        let off: Vec<f64> = self.radial.iter().map(|k| -k).collect();
        (off.clone(), diag, off)
    }
}

fn ring_mean(ring: &[f64]) -> f64 {
    sum::sum(ring.iter().copied()) / ring.len() as f64
}

/// Direct solver for `A + diag(c)` with `c` constant on each ring, using a
/// discrete Fourier transform in angle and one tridiagonal solve per mode.
pub struct ModeSolver {
    grid: Grid,
    factors: Vec<TridiagLu>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl ModeSolver {
    /// `ring_diag[j]` is added to every diagonal entry on ring `j`.
    /// Returns `None` if some mode block is singular.
    pub fn new(stencil: &Stencil, ring_diag: &[f64]) -> Option<Self> {
        let grid = stencil.grid();
        assert_eq!(ring_diag.len(), grid.n_r());
        let mut factors = Vec::with_capacity(grid.n_theta() / 2 + 1);
        for m in 0..=grid.n_theta() / 2 {
            let (lo, d, up) = stencil.mode_matrix(m, ring_diag);
            factors.push(TridiagLu::factor(&lo, &d, &up)?);
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n_theta());
        let inverse = planner.plan_fft_inverse(grid.n_theta());
        Some(Self { grid, factors, forward, inverse })
    }

    /// The H1 Gram operator `A + M` with `M` the control-volume weights.
    pub fn gram(stencil: &Stencil) -> Self {
        Self::new(stencil, stencil.weights()).expect("the H1 Gram operator is positive definite")
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let nt = self.grid.n_theta();
        let n = self.grid.n_r();
        let mut spec: Vec<Complex<f64>> = rhs.iter().map(|&x| Complex::new(x, 0.0)).collect();
        for row in spec.chunks_mut(nt) {
            self.forward.process(row);
        }
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for m in 0..nt {
            let lu = &self.factors[m.min(nt - m)];
            for j in 0..n {
                let c = spec[j * nt + m];
                re[j] = c.re;
                im[j] = c.im;
            }
            lu.solve_in_place(&mut re);
            lu.solve_in_place(&mut im);
            for j in 0..n {
                spec[j * nt + m] = Complex::new(re[j], im[j]);
            }
        }
        let scale = 1.0 / nt as f64;
        for row in spec.chunks_mut(nt) {
            self.inverse.process(row);
        }
        spec.iter().map(|c| c.re * scale).collect()
    }
}

/// Angular modes up to this order are differentiated in the pole-regular
/// variable `s = r^2`; higher modes vanish fast enough at the pole for the
/// edge stencil to stay second order.
const POLE_REGULAR_MODES: usize = 3;

/// Second-order polar Laplacian `u_rr + u_r/r + u_thth/r^2`, uniformly on
/// every ring including the boundary row (which uses one-sided differences).
///
/// Modes `m <= 3` are written as `r^m f(s)` with `s = r^2`, for which
/// `Delta = r^m 4 (s f'' + (m+1) f')`; the remaining modes use the edge
/// stencil `-(A u)/w` of the variational discretization.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let nt = grid.n_theta();
    let n = grid.n_r();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nt);
    let inv = planner.plan_fft_inverse(nt);
    let to_spec = |data: &[f64]| {
        let mut c: Vec<Complex<f64>> = data.iter().map(|&x| Complex::new(x, 0.0)).collect();
        for row in c.chunks_mut(nt) {
            fwd.process(row);
        }
        c
    };
    let su = to_spec(u.data());
    let mut sl = to_spec(laplacian_edges(u).data());
    let s_nodes: Vec<f64> = (0..n).map(|j| grid.r(j).powi(2)).collect();
    let stencils: Vec<(usize, [Vec<f64>; 2])> = (0..n)
        .map(|j| {
            let lo = if j == 0 {
                0
            } else if j == n - 1 {
                n - 4
            } else {
                j - 1
            };
            let len = if j == n - 1 { 4 } else { 3 };
            (lo, lagrange_derivatives(&s_nodes[lo..lo + len], s_nodes[j]))
        })
        .collect();
    for m in 0..=POLE_REGULAR_MODES.min(nt / 2 - 1) {
        let mut modes = vec![m];
        if m != 0 {
            modes.push(nt - m);
        }
        for &mm in &modes {
            let f: Vec<Complex<f64>> = (0..n).map(|j| su[j * nt + mm] / grid.r(j).powi(m as i32)).collect();
            for (j, (lo, [d1, d2])) in stencils.iter().enumerate() {
                let mut fs = Complex::new(0.0, 0.0);
                let mut fss = Complex::new(0.0, 0.0);
                for (k, (w1, w2)) in d1.iter().zip(d2).enumerate() {
                    fs += f[lo + k] * *w1;
                    fss += f[lo + k] * *w2;
                }
                let rm = grid.r(j).powi(m as i32);
                sl[j * nt + mm] = (fss * s_nodes[j] + fs * (m as f64 + 1.0)) * (4.0 * rm);
            }
        }
    }
    for row in sl.chunks_mut(nt) {
        inv.process(row);
    }
    let scale = 1.0 / nt as f64;
    ScalarField::from_vec(grid, sl.iter().map(|c| c.re * scale).collect()).expect("same grid")
}

/// High-order polar Laplacian with exact (spectral) angular derivatives,
/// at least fourth order in `dr`.
///
/// Each angular mode `u_m(r)` is differentiated on the uniform line
/// `r = p dr` from seven centred nodes (eight shifted nodes at the boundary),
/// extended through the pole by the parity `u_m(-r) = (-1)^m u_m(r)` and
/// `u_m(0) = 0` for `m >= 1`; for `m = 0` the pole node is left out.
pub fn laplacian_fourth_order(u: &ScalarField) -> ScalarField {
    const HALF: i64 = 3;
    let grid = u.grid();
    let nt = grid.n_theta();
    let n = grid.n_r();
    let n_i = n as i64;
    let dr = grid.dr();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nt);
    let inv = planner.plan_fft_inverse(nt);
    let mut su: Vec<Complex<f64>> = u.data().iter().map(|&x| Complex::new(x, 0.0)).collect();
    for row in su.chunks_mut(nt) {
        fwd.process(row);
    }
    // Ring j sits at p = j + 1; windows are lists of line indices p.
    let window = |j: usize, skip_pole: bool| -> (Vec<i64>, [Vec<f64>; 2]) {
        let p = j as i64 + 1;
        let nodes: Vec<i64> = if p + HALF <= n_i {
            (p - HALF..=p + HALF).collect()
        } else {
            (n_i - 2 * HALF - 1..=n_i).collect()
        };
        let nodes: Vec<i64> = nodes.into_iter().filter(|&q| !(skip_pole && q == 0)).collect();
        let xs: Vec<f64> = nodes.iter().map(|&q| q as f64 * dr).collect();
        let w = lagrange_derivatives(&xs, p as f64 * dr);
        (nodes, w)
    };
    let even: Vec<_> = (0..n).map(|j| window(j, true)).collect();
    let odd: Vec<_> = (0..n).map(|j| window(j, false)).collect();
    let mut out = vec![Complex::new(0.0, 0.0); grid.len()];
    for mm in 0..nt {
        let m = mm.min(nt - mm);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let at = |q: i64| match q {
            0 => Complex::new(0.0, 0.0),
            q if q > 0 => su[(q as usize - 1) * nt + mm],
            q => su[((-q) as usize - 1) * nt + mm] * sign,
        };
        for j in 0..n {
            let r = grid.r(j);
            let (nodes, [d1, d2]) = if m == 0 { &even[j] } else { &odd[j] };
            let mut ur = Complex::new(0.0, 0.0);
            let mut urr = Complex::new(0.0, 0.0);
            for ((&q, w1), w2) in nodes.iter().zip(d1).zip(d2) {
                let v = at(q);
                ur += v * *w1;
                urr += v * *w2;
            }
            out[j * nt + mm] = urr + ur / r - su[j * nt + mm] * ((m * m) as f64 / (r * r));
        }
    }
    for row in out.chunks_mut(nt) {
        inv.process(row);
    }
    let scale = 1.0 / nt as f64;
    ScalarField::from_vec(grid, out.iter().map(|c| c.re * scale).collect()).expect("same grid")
}

/// First and second derivative weights at `x` of the Lagrange interpolant
/// through `nodes`.
fn lagrange_derivatives(nodes: &[f64], x: f64) -> [Vec<f64>; 2] {
    let k = nodes.len();
    let mut d1 = vec![0.0; k];
    let mut d2 = vec![0.0; k];
    for a in 0..k {
        let denom: f64 = (0..k).filter(|&i| i != a).map(|i| nodes[a] - nodes[i]).product();
        let others: Vec<f64> = (0..k).filter(|&i| i != a).map(|i| nodes[i]).collect();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for p in 0..others.len() {
            s1 += (0..others.len()).filter(|&q| q != p).map(|q| x - others[q]).product::<f64>();
            for q in 0..others.len() {
                if q != p {
                    s2 += (0..others.len()).filter(|&l| l != p && l != q).map(|l| x - others[l]).product::<f64>();
                }
            }
        }
        d1[a] = s1 / denom;
        d2[a] = s2 / denom;
    }
    [d1, d2]
}

/// The Laplacian implied by the edge stencil: `-(A u)/w` below the boundary
/// and one-sided radial differences on the boundary ring.
pub fn laplacian_edges(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let stencil = Stencil::new(grid);
    let au = stencil.apply(u.data());
    let nt = grid.n_theta();
    let n = grid.n_r();
    let mut out = vec![0.0; grid.len()];
    for j in 0..n - 1 {
        let w = stencil.weights[j];
        for i in 0..nt {
            out[j * nt + i] = -au[j * nt + i] / w;
        }
    }
    let dr = grid.dr();
    let dt = grid.dtheta();
    let half = 0.5 * dt;
    let sigma = half * half / (half.sin() * half.sin());
    let d = u.data();
    for i in 0..nt {
        let at = |jj: usize| d[jj * nt + i];
        let urr = (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / (dr * dr);
        let ur = (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * dr);
        let ip = (i + 1) % nt;
        let im = (i + nt - 1) % nt;
        let b = (n - 1) * nt;
        let utt = sigma * (d[b + ip] - 2.0 * d[b + i] + d[b + im]) / (dt * dt);
        out[b + i] = urr + ur + utt;
    }
    ScalarField::from_vec(grid, out).expect("same grid")
}

/// Outward normal derivative at `r = 1` by the one-sided three-point formula.
pub fn normal_derivative(u: &ScalarField) -> BoundaryField {
    let grid = u.grid();
    let n = grid.n_r();
    let dr = grid.dr();
    let vals = (0..grid.n_theta())
        .map(|i| (3.0 * u.get(n - 1, i) - 4.0 * u.get(n - 2, i) + u.get(n - 3, i)) / (2.0 * dr))
        .collect();
    BoundaryField::from_vec(grid, vals).expect("same grid")
}

/// Control-volume quadrature of `int_D f`; exact for constants.
pub fn integrate_disk(f: &ScalarField) -> f64 {
    weighted_sum(f.grid(), f.data())
}

pub(crate) fn weighted_sum(grid: Grid, data: &[f64]) -> f64 {
    let nt = grid.n_theta();
    let mut acc = Compensated::new();
    for (j, row) in data.chunks(nt).enumerate() {
        let w = grid.ring_weight(j);
        for &x in row {
            acc.add(w * x);
        }
    }
    acc.value()
}

/// Periodic trapezoid rule on the boundary circle.
pub fn integrate_boundary(f: &BoundaryField) -> f64 {
    f.grid().dtheta() * sum::sum(f.data().iter().copied())
}

/// Pointwise `u_r^2 + u_th^2 / r^2` by centered differences; ring 0 differences
/// across the pole value extrapolated from the two innermost ring means, the
/// boundary ring uses the one-sided radial formula.
pub fn gradient_sq(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let nt = grid.n_theta();
    let n = grid.n_r();
    let dr = grid.dr();
    let dt = grid.dtheta();
    let d = u.data();
    let pole = (4.0 * ring_mean(u.ring(0)) - ring_mean(u.ring(1))) / 3.0;
    let mut out = vec![0.0; grid.len()];
    for j in 0..n {
        let r = grid.r(j);
        for i in 0..nt {
            let ur = if j == 0 {
                (d[nt + i] - pole) / (2.0 * dr)
            } else if j == n - 1 {
                (3.0 * d[j * nt + i] - 4.0 * d[(j - 1) * nt + i] + d[(j - 2) * nt + i]) / (2.0 * dr)
            } else {
                (d[(j + 1) * nt + i] - d[(j - 1) * nt + i]) / (2.0 * dr)
            };
            let ip = (i + 1) % nt;
            let im = (i + nt - 1) % nt;
            let ut = (d[j * nt + ip] - d[j * nt + im]) / (2.0 * dt);
            out[j * nt + i] = ur * ur + ut * ut / (r * r);
        }
    }
    ScalarField::from_vec(grid, out).expect("same grid")
}

/// Discrete Dirichlet integral `int |grad u|^2` from the edge form.
pub fn dirichlet_integral(u: &ScalarField) -> f64 {
    Stencil::new(u.grid()).form(u.data(), u.data())
}

/// Spectral derivative in angle of a periodic sample (Nyquist mode dropped).
pub fn spectral_derivative(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut c: Vec<Complex<f64>> = values.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fwd.process(&mut c);
    for (m, z) in c.iter_mut().enumerate() {
        let k = if m < n / 2 {
            m as f64
        } else if m == n / 2 && n.is_multiple_of(2) {
            0.0
        } else {
            m as f64 - n as f64
        };
        *z *= Complex::new(0.0, k);
    }
    inv.process(&mut c);
    c.iter().map(|z| z.re / n as f64).collect()
}

/// Fourier coefficients `(a_m, b_m)` of a periodic sample with
/// `f(t) = a_0 + sum_m a_m cos(m t) + b_m sin(m t)`, for `m <= n/2`.
pub fn fourier_coefficients(values: &[f64]) -> Vec<(f64, f64)> {
    let n = values.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let mut c: Vec<Complex<f64>> = values.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fwd.process(&mut c);
    (0..=n / 2)
        .map(|m| {
            let z = c[m] / n as f64;
            if m == 0 || (n.is_multiple_of(2) && m == n / 2) {
                (z.re, 0.0)
            } else {
                (2.0 * z.re, -2.0 * z.im)
            }
        })
        .collect()
}

/// Evaluates a trigonometric polynomial given by [`fourier_coefficients`]
/// (the Nyquist term uses `cos` only).
pub fn eval_fourier(coeffs: &[(f64, f64)], t: f64) -> f64 {
    sum::sum(coeffs.iter().enumerate().map(|(m, (a, b))| {
        let mt = m as f64 * t;
        a * mt.cos() + b * mt.sin()
    }))
}

/// Derivative of [`eval_fourier`] in `t`.
pub fn eval_fourier_derivative(coeffs: &[(f64, f64)], t: f64) -> f64 {
    sum::sum(coeffs.iter().enumerate().map(|(m, (a, b))| {
        let k = m as f64;
        let mt = k * t;
        k * (b * mt.cos() - a * mt.sin())
    }))
}

pub(crate) fn check_finite(name: &str, data: &[f64]) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g(nr: usize, nt: usize) -> Grid {
        Grid::new(nr, nt).unwrap()
    }

    #[test]
    fn laplacian_exact_on_r_squared() {
        let u = ScalarField::from_fn(g(32, 48), |r, _| r * r);
        let lap = laplacian(&u);
        assert!(lap.data().iter().all(|v| (v - 4.0).abs() < 1e-9), "{:?}", lap.max());
    }

    #[test]
    fn laplacian_small_on_harmonic_linear() {
        for n in [32, 64] {
            let u = ScalarField::from_fn(g(n, 2 * n), |r, t| r * t.cos());
            let err = laplacian(&u).norm_inf();
            assert!(err < 1e-8, "n={n}: {err}");
        }
    }

    #[test]
    fn laplacian_second_order_on_r3_cos3() {
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let u = ScalarField::from_fn(g(n, 2 * n), |r, t| r.powi(3) * (3.0 * t).cos());
                laplacian(&u).norm_inf()
            })
            .collect();
        // The pole-regular modes reproduce this harmonic to round-off.
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(w[1] < 1e-9 || slope >= 1.9, "slope {slope} from {errs:?}");
        }
    }

    #[test]
    fn laplacian_second_order_on_mixed_modes() {
        let f = |r: f64, t: f64| (1.3 * r * t.cos()).exp() + r.powi(5) * (3.0 * t).sin() + r.powi(3) * t.cos();
        let lap = |r: f64, t: f64| 1.69 * (1.3 * r * t.cos()).exp() + 16.0 * r.powi(3) * (3.0 * t).sin() + 8.0 * r * t.cos();
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let grid = g(n, 2 * n);
                let num = laplacian(&ScalarField::from_fn(grid, f));
                num.max_abs_diff(&ScalarField::from_fn(grid, lap)).unwrap()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.9, "{errs:?}");
        }
    }

    #[test]
    fn edge_laplacian_matches_stencil_rows_and_quadratics() {
        let u = ScalarField::from_cartesian(g(16, 32), |x, y| x * x + y * y + 0.5 * y - x);
        let lap = laplacian_edges(&u);
        assert!(lap.data().iter().all(|v| (v - 4.0).abs() < 1e-8), "{}", lap.max());
    }

    #[test]
    fn normal_derivative_examples() {
        let grid = g(64, 32);
        let nd = normal_derivative(&ScalarField::from_fn(grid, |r, _| r * r));
        assert!(nd.data().iter().all(|v| (v - 2.0).abs() < 1e-10));
        let nd0 = normal_derivative(&ScalarField::constant(grid, 3.5));
        assert!(nd0.norm_inf() < 1e-12);
        let mu: f64 = 2.0;
        let errs: Vec<f64> = [64, 128]
            .iter()
            .map(|&n| {
                let u = ScalarField::from_fn(g(n, 16), |r, _| 2.0 * (2.0 * mu / (mu * mu - r * r)).ln());
                normal_derivative(&u).data().iter().fold(0.0f64, |m, v| m.max((v - 4.0 / 3.0).abs()))
            })
            .collect();
        assert!(errs[0] < 1e-3 && (errs[0] / errs[1]).log2() > 1.9, "{errs:?}");
    }

    #[test]
    fn disk_quadrature_examples() {
        let one = ScalarField::constant(g(128, 64), 1.0);
        assert!((integrate_disk(&one) - PI).abs() < 1e-12);
        let mu: f64 = 2.0;
        let f = ScalarField::from_fn(g(256, 16), |r, _| 4.0 * mu * mu / (mu * mu - r * r).powi(2));
        let exact = 4.0 * PI / 3.0;
        assert!(((integrate_disk(&f) - exact) / exact).abs() < 1e-4);
        let odd = ScalarField::from_fn(g(64, 64), |r, t| r * t.cos());
        assert!(integrate_disk(&odd).abs() < 1e-12);
    }

    #[test]
    fn boundary_quadrature_examples() {
        let grid = g(8, 64);
        assert_eq!(integrate_boundary(&BoundaryField::constant(grid, 1.0)), 2.0 * PI);
        let c3 = BoundaryField::from_fn(grid, |t| (3.0 * t).cos());
        assert!(integrate_boundary(&c3).abs() < 1e-14);
        // 2 pi I_0(1/2) from the Bessel series sum (t^2/4)^k / (k!)^2.
        let mut i0 = 0.0;
        let mut term = 1.0;
        for k in 0..30 {
            if k > 0 {
                term *= 0.0625 / (k * k) as f64;
            }
            i0 += term;
        }
        let e = BoundaryField::from_fn(grid, |t| (0.5 * t.cos()).exp());
        let exact = 2.0 * PI * i0;
        assert!(((integrate_boundary(&e) - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn gradient_sq_examples() {
        let grid = g(128, 128);
        let lin = gradient_sq(&ScalarField::from_fn(grid, |r, t| r * t.cos()));
        assert!(lin.data().iter().all(|v| (v - 1.0).abs() < 1e-3), "{}", lin.max());
        assert!(gradient_sq(&ScalarField::constant(grid, -2.0)).norm_inf() < 1e-12);
        let mu = 2f64.sqrt();
        let bub = ScalarField::from_fn(g(512, 16), |r, _| 2.0 * (2.0 * mu / (mu * mu - r * r)).ln());
        // |grad phi|^2 = 16 r^2 / (mu^2 - r^2)^2 integrates to
        // 16 pi (1/(mu^2 - 1) + log(1 - 1/mu^2)).
        let exact = 16.0 * PI * (1.0 - 2f64.ln());
        let val = integrate_disk(&gradient_sq(&bub));
        assert!(((val - exact) / exact).abs() < 1e-3, "{val}");
    }

    #[test]
    fn dirichlet_form_exact_on_linear_and_zero_on_constants() {
        let grid = g(16, 24);
        let u = ScalarField::from_fn(grid, |r, t| r * (t - 0.3).cos());
        assert!((dirichlet_integral(&u) - PI).abs() < 1e-12);
        assert!(dirichlet_integral(&ScalarField::constant(grid, 4.0)).abs() < 1e-20);
    }

    #[test]
    fn mode_solver_inverts_gram_operator() {
        let grid = g(16, 24);
        let st = Stencil::new(grid);
        let u = ScalarField::from_fn(grid, |r, t| (3.0 * r).sin() * (2.0 * t).cos() + r * t.sin() + 0.2);
        let au = st.apply(u.data());
        let rhs: Vec<f64> = au.iter().zip(u.data()).enumerate().map(|(k, (a, x))| a + st.weights()[k / 24] * x).collect();
        let back = ModeSolver::gram(&st).solve(&rhs);
        for (a, e) in back.iter().zip(u.data()) {
            assert!((a - e).abs() < 1e-11);
        }
    }

    #[test]
    fn spectral_derivative_of_trig_polynomial() {
        let n = 32;
        let vals: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64 * 2.0).cos() * 0.3 + 1.8).collect();
        let d = spectral_derivative(&vals);
        for (i, v) in d.iter().enumerate() {
            let t = 2.0 * PI * i as f64 / n as f64;
            assert!((v + 0.6 * (2.0 * t).sin()).abs() < 1e-13);
        }
        let c = fourier_coefficients(&vals);
        assert!((eval_fourier(&c, 0.1) - (1.8 + 0.3 * 0.2f64.cos())).abs() < 1e-13);
        assert!((eval_fourier_derivative(&c, 0.1) + 0.6 * 0.2f64.sin()).abs() < 1e-13);
    }
    #[test]
    fn fourth_order_laplacian_converges_at_rate_four() {
        // u = e^x sin(y) + x^5 - 10 x^3 y^2 + 5 x y^4 (harmonic) + r^4, Lap u = 16 r^2.
        let f = |x: f64, y: f64| x.exp() * y.sin() + x.powi(5) - 10.0 * x.powi(3) * y * y + 5.0 * x * y.powi(4) + (x * x + y * y).powi(2);
        let errs: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let grid = Grid::new(n, 32).unwrap();
                let u = ScalarField::from_cartesian(grid, f);
                let exact = ScalarField::from_fn(grid, |r, _| 16.0 * r * r);
                laplacian_fourth_order(&u).max_abs_diff(&exact).unwrap()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 3.5, "{errs:?}");
        }
    }

}
