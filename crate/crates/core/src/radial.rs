//! Rotationally symmetric reduction: shooting for the radial ODE
//! `u'' + u'/r = 2 Kt(r) - 2 Ke(r) e^u` with `u(0) = a`, `u'(0) = 0`, the
//! boundary mismatch `F(a) = u'(1) + 2 ht - 2 he e^(u(1)/2)`, the exact
//! hyperbolic family and the multiplier identity along solutions.

use std::f64::consts::PI;

use serde::Serialize;

use crate::curvature::{eval_radial_polynomial, CurvatureSpec};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

/// Shooting stops once `u` exceeds this value.
pub const BLOW_UP_CLAMP: f64 = 500.0;

/// Degree (in `r^2`) of the power series used for the first step off the pole.
const SERIES_ORDER: usize = 8;

/// Radial data of a perturbed problem: `K(r) = sum_n c_n r^(2n)`, `h` constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialCoeffs {
    pub eps: f64,
    pub k_poly: Vec<f64>,
    pub h0: f64,
}

impl RadialCoeffs {
    pub fn new(k_poly: Vec<f64>, h0: f64, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::NegativeEps(eps));
        }
        if k_poly.is_empty() || !h0.is_finite() || k_poly.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("radial curvature data".into()));
        }
        for i in 0..=1000 {
            let r = i as f64 / 1000.0;
            let value = eval_radial_polynomial(&k_poly, r);
            if value > 0.0 {
                return Err(Error::PositiveCurvature { r, theta: 0.0, value });
            }
        }
        Ok(Self { eps, k_poly, h0 })
    }

    /// Radial data of a rotationally symmetric curvature specification.
    pub fn from_spec(spec: &CurvatureSpec, eps: f64) -> Result<Self> {
        let k = spec.radial_k().ok_or_else(|| Error::SymmetryViolation("K is not an analytic radial profile".into()))?;
        let h = spec.constant_h().ok_or_else(|| Error::SymmetryViolation("h is not constant".into()))?;
        Self::new(k, h, eps)
    }

    pub fn scale(&self) -> f64 {
        1.0 + 2.0 * self.eps
    }

    pub fn k(&self, r: f64) -> f64 {
        eval_radial_polynomial(&self.k_poly, r)
    }

    /// `Kt = -eps |K| / (2 s) = eps K / (2 s)` as coefficients in `r^2`.
    fn k_tilde_poly(&self) -> Vec<f64> {
        let f = self.eps / (2.0 * self.scale());
        self.k_poly.iter().map(|c| f * c).collect()
    }

    /// `Ke = -|K| (1 + eps/2) / s = K (1 + eps/2) / s` as coefficients in `r^2`.
    fn k_eff_poly(&self) -> Vec<f64> {
        let f = (1.0 + 0.5 * self.eps) / self.scale();
        self.k_poly.iter().map(|c| f * c).collect()
    }

    pub fn k_tilde(&self, r: f64) -> f64 {
        eval_radial_polynomial(&self.k_tilde_poly(), r)
    }

    pub fn k_eff(&self, r: f64) -> f64 {
        eval_radial_polynomial(&self.k_eff_poly(), r)
    }

    /// `d Ke / dr`.
    pub fn k_eff_prime(&self, r: f64) -> f64 {
        let p = self.k_eff_poly();
        let s = r * r;
        let mut acc = 0.0;
        for (n, c) in p.iter().enumerate().skip(1).rev() {
            acc = acc * s + 2.0 * n as f64 * c;
        }
        acc * r
    }

    pub fn h_tilde(&self) -> f64 {
        1.0 / self.scale()
    }

    pub fn h_eff(&self) -> f64 {
        self.h0 / self.scale()
    }

    /// `chi = 2 pi int_0^1 Kt r dr + 2 pi ht`, exact for polynomial data.
    pub fn chi(&self) -> f64 {
        let int: f64 = self.k_tilde_poly().iter().enumerate().map(|(n, c)| c / (2.0 * n as f64 + 2.0)).sum();
        2.0 * PI * (int + self.h_tilde())
    }

    fn rhs(&self, r: f64, u: f64) -> f64 {
        2.0 * self.k_tilde(r) - 2.0 * self.k_eff(r) * u.exp()
    }
}

/// Power series `u = sum_n b_n s^n`, `s = r^2`, of the regular solution with `u(0) = a`.
fn pole_series(c: &RadialCoeffs, a: f64) -> Vec<f64> {
    let pad = |p: Vec<f64>| {
        let mut p = p;
        p.resize(SERIES_ORDER + 1, 0.0);
        p
    };
    let kt = pad(c.k_tilde_poly());
    let ke = pad(c.k_eff_poly());
    let mut b = vec![0.0; SERIES_ORDER + 1];
    b[0] = a;
    // e^u = e^a * E with E = exp(u - a), E' = (u - a)' E in s.
    let mut e = [0.0; SERIES_ORDER + 1];
    e[0] = 1.0;
    for n in 1..=SERIES_ORDER {
        // Coefficient n - 1 of the right-hand side only needs E up to n - 1.
        let ke_e: f64 = (0..n).map(|i| ke[n - 1 - i] * e[i]).sum();
        let f = 2.0 * kt[n - 1] - 2.0 * a.exp() * ke_e;
        b[n] = f / (4.0 * (n * n) as f64);
        e[n] = (1..=n).map(|m| m as f64 * b[m] * e[n - m]).sum::<f64>() / n as f64;
    }
    b
}

fn eval_series(b: &[f64], r: f64) -> (f64, f64) {
    let s = r * r;
    let u = b.iter().rev().fold(0.0, |acc, c| acc * s + c);
    let du_ds = b.iter().enumerate().skip(1).rev().fold(0.0, |acc, (n, c)| acc * s + n as f64 * c);
    (u, 2.0 * r * du_ds)
}

/// A radial solution candidate sampled at `r_k = k / n`, `k = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub r_nodes: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    /// `u(0)`.
    pub a: f64,
    pub coeffs: RadialCoeffs,
}

impl RadialProfile {
    fn with_pole(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut r = vec![0.0];
        r.extend_from_slice(&self.r_nodes);
        let mut u = vec![self.a];
        u.extend_from_slice(&self.u);
        let mut up = vec![0.0];
        up.extend_from_slice(&self.u_prime);
        (r, u, up)
    }

    pub fn u_boundary(&self) -> f64 {
        *self.u.last().expect("non-empty profile")
    }

    pub fn u_prime_boundary(&self) -> f64 {
        *self.u_prime.last().expect("non-empty profile")
    }

    /// Cubic Hermite interpolation of `u` at `r` in `[0, 1]`.
    pub fn eval(&self, r: f64) -> f64 {
        let (rs, u, up) = self.with_pole();
        let n = rs.len() - 1;
        let r = r.clamp(0.0, 1.0);
        let k = rs.partition_point(|&x| x <= r).clamp(1, n);
        let (r0, r1) = (rs[k - 1], rs[k]);
        let hstep = r1 - r0;
        let t = (r - r0) / hstep;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        h00 * u[k - 1] + h10 * hstep * up[k - 1] + h01 * u[k] + h11 * hstep * up[k]
    }

    /// The profile as a rotationally symmetric field on `grid`.
    pub fn to_field(&self, grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |r, _| self.eval(r))
    }

    /// `F = u'(1) + 2 ht - 2 he e^(u(1)/2)`.
    pub fn mismatch(&self) -> f64 {
        let c = &self.coeffs;
        self.u_prime_boundary() + 2.0 * c.h_tilde() - 2.0 * c.h_eff() * (0.5 * self.u_boundary()).exp()
    }
}

/// Composite Simpson rule on uniform nodes; an odd number of intervals ends
/// with the three-eighths rule.
fn simpson(step: f64, f: &[f64]) -> f64 {
    let intervals = f.len() - 1;
    match intervals {
        0 => 0.0,
        1 => 0.5 * step * (f[0] + f[1]),
        2 => step / 3.0 * (f[0] + 4.0 * f[1] + f[2]),
        3 => 3.0 * step / 8.0 * (f[0] + 3.0 * f[1] + 3.0 * f[2] + f[3]),
        _ if intervals.is_multiple_of(2) => {
            let mut acc = crate::sum::Compensated::new();
            for k in (0..intervals).step_by(2) {
                acc.add(step / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]));
            }
            acc.value()
        }
        _ => simpson(step, &f[..f.len() - 3]) + simpson(step, &f[f.len() - 4..]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootResult {
    pub u1: f64,
    pub up1: f64,
    /// `+inf` when the trajectory blows up before the boundary.
    pub mismatch: f64,
    pub blowup_radius: Option<f64>,
    pub profile: RadialProfile,
}

/// Integrates from the pole with `n_steps` uniform RK4 steps; the first step
/// is taken with the regular power series.
pub fn shoot(a: f64, c: &RadialCoeffs, n_steps: usize) -> Result<ShootResult> {
    if n_steps < 64 {
        return Err(Error::InvalidOptions(format!("n_steps must be >= 64, got {n_steps}")));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("shooting value".into()));
    }
    let step = 1.0 / n_steps as f64;
    let series = pole_series(c, a);
    let (mut u, mut v) = eval_series(&series, step);
    let mut r_nodes = Vec::with_capacity(n_steps);
    let mut us = Vec::with_capacity(n_steps);
    let mut ups = Vec::with_capacity(n_steps);
    r_nodes.push(step);
    us.push(u);
    ups.push(v);
    let deriv = |r: f64, u: f64, v: f64| (v, c.rhs(r, u) - v / r);
    let mut blowup_radius = None;
    for k in 1..n_steps {
        let r = k as f64 * step;
        let (k1u, k1v) = deriv(r, u, v);
        let (k2u, k2v) = deriv(r + 0.5 * step, u + 0.5 * step * k1u, v + 0.5 * step * k1v);
        let (k3u, k3v) = deriv(r + 0.5 * step, u + 0.5 * step * k2u, v + 0.5 * step * k2v);
        let (k4u, k4v) = deriv(r + step, u + step * k3u, v + step * k3v);
        u += step / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += step / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        let r_next = (k + 1) as f64 * step;
        if !(u <= BLOW_UP_CLAMP) || !v.is_finite() {
            blowup_radius = Some(r_next);
            break;
        }
        r_nodes.push(r_next);
        us.push(u);
        ups.push(v);
    }
    let profile = RadialProfile { r_nodes, u: us, u_prime: ups, a, coeffs: c.clone() };
    Ok(match blowup_radius {
        Some(_) => ShootResult { u1: f64::INFINITY, up1: f64::INFINITY, mismatch: f64::INFINITY, blowup_radius, profile },
        None => ShootResult { u1: profile.u_boundary(), up1: profile.u_prime_boundary(), mismatch: profile.mismatch(), blowup_radius, profile },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialOptions {
    pub scan_points: usize,
    pub n_steps: usize,
    pub tol: f64,
    pub max_refine: usize,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self { scan_points: 200, n_steps: 4096, tol: 1e-10, max_refine: 200 }
    }
}

/// Default upper end of the shooting bracket.
pub const DEFAULT_A_HI: f64 = 2.0 * std::f64::consts::LN_2 + 2.0;
pub const DEFAULT_A_LO: f64 = -20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub a: f64,
    pub mismatch: f64,
    pub blowup_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialSolve {
    pub scan: Vec<ScanRow>,
    pub roots: Vec<RadialProfile>,
}

impl RadialSolve {
    /// Smallest finite mismatch on the scan.
    pub fn min_mismatch(&self) -> f64 {
        self.scan.iter().map(|r| r.mismatch).filter(|m| m.is_finite()).fold(f64::INFINITY, f64::min)
    }
}

pub fn scan_mismatch(c: &RadialCoeffs, bracket: (f64, f64), points: usize, n_steps: usize) -> Result<Vec<ScanRow>> {
    let (lo, hi) = bracket;
    if !(lo < hi) || points < 2 {
        return Err(Error::InvalidOptions(format!("bad shooting bracket ({lo}, {hi}) with {points} points")));
    }
    (0..points)
        .map(|i| {
            let a = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let s = shoot(a, c, n_steps)?;
            Ok(ScanRow { a, mismatch: s.mismatch, blowup_radius: s.blowup_radius })
        })
        .collect()
}

/// All roots of `F` found by scanning `bracket` and refining each finite sign
/// change (Illinois false position with bisection fallback).
pub fn solve_radial(c: &RadialCoeffs, bracket: (f64, f64), opts: &RadialOptions) -> Result<RadialSolve> {
    let scan = scan_mismatch(c, bracket, opts.scan_points, opts.n_steps)?;
    let mut roots = Vec::new();
    for pair in scan.windows(2) {
        let (p, q) = (pair[0], pair[1]);
        if !p.mismatch.is_finite() || !q.mismatch.is_finite() {
            continue;
        }
        if p.mismatch == 0.0 {
            roots.push(shoot(p.a, c, opts.n_steps)?.profile);
            continue;
        }
        if p.mismatch.signum() == q.mismatch.signum() || q.mismatch == 0.0 {
            continue;
        }
        roots.push(refine_root(c, (p.a, p.mismatch), (q.a, q.mismatch), opts)?);
    }
    if let Some(last) = scan.last() {
        if last.mismatch == 0.0 {
            roots.push(shoot(last.a, c, opts.n_steps)?.profile);
        }
    }
    Ok(RadialSolve { scan, roots })
}

fn refine_root(c: &RadialCoeffs, lo: (f64, f64), hi: (f64, f64), opts: &RadialOptions) -> Result<RadialProfile> {
    let (mut a0, mut f0) = lo;
    let (mut a1, mut f1) = hi;
    let mut side = 0i8;
    let mut best = shoot(if f0.abs() < f1.abs() { a0 } else { a1 }, c, opts.n_steps)?;
    for _ in 0..opts.max_refine {
        if best.mismatch.abs() <= opts.tol || (a1 - a0).abs() <= 4.0 * f64::EPSILON * a0.abs().max(a1.abs()).max(1.0) {
            break;
        }
        let mut a = (a0 * f1 - a1 * f0) / (f1 - f0);
        if !(a > a0.min(a1) && a < a0.max(a1)) {
            a = 0.5 * (a0 + a1);
        }
        let s = shoot(a, c, opts.n_steps)?;
        let f = if s.mismatch.is_finite() { s.mismatch } else { f64::INFINITY.copysign(f1) };
        if f.is_finite() && f.abs() < best.mismatch.abs() {
            best = s;
        }
        if f.signum() == f1.signum() {
            a1 = a;
            f1 = f;
            if side == 1 {
                f0 *= 0.5;
            }
            side = 1;
        } else {
            a0 = a;
            f0 = f;
            if side == -1 {
                f1 *= 0.5;
            }
            side = -1;
        }
        if !f1.is_finite() {
            // Fall back to bisection when an endpoint is the blow-up sentinel.
            f1 = f64::MAX.copysign(f1);
        }
    }
    Ok(best.profile)
}

/// `A2 - A1` of the multiplier identity obtained from `u' * (equation)`,
/// with `u'(1)` replaced by the boundary condition; zero on solutions.
/// The source term is kept as `int 2 Kt u'` so that radially varying
/// curvature is covered.
pub fn pohozaev_residual(p: &RadialProfile) -> f64 {
    let c = &p.coeffs;
    let (rs, u, up) = p.with_pole();
    let step = rs[1] - rs[0];
    let u0 = p.a;
    let u1 = p.u_boundary();
    let (he, ht) = (c.h_eff(), c.h_tilde());
    let grad_over_r: Vec<f64> = rs
        .iter()
        .zip(&up)
        .enumerate()
        .map(|(k, (&r, &v))| if k == 0 { 0.0 } else { v * v / r })
        .collect();
    // int 2 Kt u' dr, which is 2 Kt (u(1) - u(0)) for constant data.
    let source: Vec<f64> = rs.iter().zip(&up).map(|(&r, &v)| 2.0 * c.k_tilde(r) * v).collect();
    let a1 = -2.0 * he * he * u1.exp() - 2.0 * ht * ht + 4.0 * he * ht * (0.5 * u1).exp() - simpson(step, &grad_over_r)
        + simpson(step, &source);
    let dk: Vec<f64> = rs.iter().zip(&u).map(|(&r, &x)| c.k_eff_prime(r) * x.exp()).collect();
    let a2 = 2.0 * c.k_eff(1.0) * u1.exp() - 2.0 * c.k_eff(0.0) * u0.exp() - 2.0 * simpson(step, &dk);
    a2 - a1
}

/// `2 pi int_0^1 Ke e^u r dr + 2 pi he e^(u(1)/2) - chi`.
pub fn gauss_bonnet_residual(p: &RadialProfile) -> f64 {
    let c = &p.coeffs;
    let (rs, u, _) = p.with_pole();
    let step = rs[1] - rs[0];
    let f: Vec<f64> = rs.iter().zip(&u).map(|(&r, &x)| c.k_eff(r) * x.exp() * r).collect();
    2.0 * PI * simpson(step, &f) + 2.0 * PI * c.h_eff() * (0.5 * p.u_boundary()).exp() - c.chi()
}

/// `mu = h0 + sqrt(h0^2 - 1)`, the concentration of the exact solution for `K = -1`.
pub fn hyperbolic_mu(h0: f64) -> Result<f64> {
    if !(h0 > 1.0) {
        return Err(Error::DeficitNotAboveOne(h0));
    }
    Ok(h0 + (h0 * h0 - 1.0).sqrt())
}

/// `u(r) = 2 log(2 mu / (mu^2 - r^2))`.
pub fn hyperbolic_u(mu: f64, r: f64) -> f64 {
    2.0 * (2.0 * mu / (mu * mu - r * r)).ln()
}

pub fn hyperbolic_u_prime(mu: f64, r: f64) -> f64 {
    4.0 * r / (mu * mu - r * r)
}

/// The closed-form solution for `K = -1`, `h = h0 > 1`, sampled on `n` nodes.
pub fn exact_hyperbolic(h0: f64, n: usize) -> Result<(f64, RadialProfile)> {
    let mu = hyperbolic_mu(h0)?;
    let r_nodes: Vec<f64> = (1..=n).map(|k| k as f64 / n as f64).collect();
    let profile = RadialProfile {
        u: r_nodes.iter().map(|&r| hyperbolic_u(mu, r)).collect(),
        u_prime: r_nodes.iter().map(|&r| hyperbolic_u_prime(mu, r)).collect(),
        r_nodes,
        a: hyperbolic_u(mu, 0.0),
        coeffs: RadialCoeffs::new(vec![-1.0], h0, 0.0)?,
    };
    Ok((mu, profile))
}
