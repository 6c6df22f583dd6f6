//! The curvature energy `I`, the coercive auxiliary functional `J`, the
//! perturbed family `I_eps = I + eps J` and its first and second variations.
//!
//! With `s = 1 + 2 eps` the perturbed functional factors exactly as
//! `I_eps = s * I_n`, where
//!
//! ```text
//! I_n(u) = int(|grad u|^2 / 2 + 2 Kt u - 2 Ke e^u) + oint(2 ht u - 4 he e^(u/2))
//! Kt = -eps |K| / (2 s),  Ke = -|K| (1 + eps/2) / s,  ht = 1/s,  he = h/s.
//! ```
//!
//! The residual returned here is the gradient of the discrete `I_n`, divided
//! by the control-volume weight of each node, so its interior part is
//! `-Lap u + 2 Kt - 2 Ke e^u` and its boundary part is the flux balance
//! `d_nu u + 2 ht - 2 he e^(u/2)` of the boundary half-cell.

use serde::Serialize;

use crate::disk::{self, Stencil};
use crate::error::{Error, Result};
use crate::grid::{BoundaryField, Grid, ScalarField};
use crate::sum::{self, Compensated};

/// Exponents above this are clamped and flag an overflow.
pub const EXP_CLAMP: f64 = 250.0;

/// `e^x` clamped at [`EXP_CLAMP`]; sets `overflow` when clamping (or on NaN).
#[inline]
pub fn clamped_exp(x: f64, overflow: &mut bool) -> f64 {
    if x > EXP_CLAMP || x.is_nan() {
        *overflow = true;
        EXP_CLAMP.exp()
    } else {
        x.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub i_value: f64,
    /// `int |grad u|^2 / 2`.
    pub dirichlet: f64,
    /// `-2 int K e^u` (with the effective curvature for a perturbed problem).
    pub area_term: f64,
    /// `2 int Kt u`; zero for the unperturbed energy.
    pub linear_interior: f64,
    /// `2 ht oint u`.
    pub linear_boundary: f64,
    /// `-4 oint h e^(u/2)`.
    pub curvature_boundary: f64,
    pub overflow: bool,
}

impl EnergyReport {
    fn assemble(dirichlet: f64, area_term: f64, linear_interior: f64, linear_boundary: f64, curvature_boundary: f64, overflow: bool) -> Self {
        let i_value = sum::sum([dirichlet, area_term, linear_interior, linear_boundary, curvature_boundary]);
        Self { i_value, dirichlet, area_term, linear_interior, linear_boundary, curvature_boundary, overflow }
    }
}

/// A functional value with the exponential-overflow flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Functional {
    pub value: f64,
    pub overflow: bool,
}

fn check_boundary(grid: Grid, h: &BoundaryField) -> Result<()> {
    if h.data().len() != grid.n_theta() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} boundary values", grid.n_theta()),
            found: format!("{}", h.data().len()),
        });
    }
    Ok(())
}

/// `I(u) = int(|grad u|^2/2 - 2 K e^u) + oint(2u - 4 h e^(u/2))`.
pub fn energy_i(u: &ScalarField, k: &ScalarField, h: &BoundaryField) -> Result<EnergyReport> {
    let grid = u.grid();
    grid.require_same(&k.grid())?;
    check_boundary(grid, h)?;
    let zero = ScalarField::zeros(grid);
    Ok(discrete_energy(u, &zero, k, 1.0, h))
}

fn discrete_energy(u: &ScalarField, k_tilde: &ScalarField, k_eff: &ScalarField, h_tilde: f64, h_eff: &BoundaryField) -> EnergyReport {
    let grid = u.grid();
    let nt = grid.n_theta();
    let stencil = Stencil::new(grid);
    let dirichlet = 0.5 * stencil.form(u.data(), u.data());
    let mut overflow = false;
    let mut area = Compensated::new();
    let mut lin = Compensated::new();
    for (idx, ((&x, &kt), &ke)) in u.data().iter().zip(k_tilde.data()).zip(k_eff.data()).enumerate() {
        let w = grid.ring_weight(idx / nt);
        area.add(-2.0 * w * ke * clamped_exp(x, &mut overflow));
        lin.add(2.0 * w * kt * x);
    }
    let dt = grid.dtheta();
    let b = u.ring(grid.boundary_ring());
    let mut lb = Compensated::new();
    let mut cb = Compensated::new();
    for (&x, &he) in b.iter().zip(h_eff.data()) {
        lb.add(2.0 * h_tilde * dt * x);
        cb.add(-4.0 * dt * he * clamped_exp(0.5 * x, &mut overflow));
    }
    EnergyReport::assemble(dirichlet, area.value(), lin.value(), lb.value(), cb.value(), overflow)
}

/// `J(u) = int |grad u|^2 + |K| (e^u - u)`.
pub fn energy_j(u: &ScalarField, k: &ScalarField) -> Result<Functional> {
    let grid = u.grid();
    grid.require_same(&k.grid())?;
    let nt = grid.n_theta();
    let mut overflow = false;
    let mut acc = Compensated::new();
    acc.add(disk::dirichlet_integral(u));
    for (idx, (&x, &kv)) in u.data().iter().zip(k.data()).enumerate() {
        let w = grid.ring_weight(idx / nt);
        acc.add(w * kv.abs() * (clamped_exp(x, &mut overflow) - x));
    }
    Ok(Functional { value: acc.value(), overflow })
}

/// `I_eps = I + eps J`.
pub fn energy_eps(u: &ScalarField, k: &ScalarField, h: &BoundaryField, eps: f64) -> Result<Functional> {
    let i = energy_i(u, k, h)?;
    let j = energy_j(u, k)?;
    Ok(Functional { value: i.i_value + eps * j.value, overflow: i.overflow || j.overflow })
}

/// Coefficients of the normalized Euler-Lagrange problem of `I_eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedCoeffs {
    pub eps: f64,
    pub k_tilde: ScalarField,
    pub k_eff: ScalarField,
    pub h_tilde: f64,
    pub h_eff: BoundaryField,
}

/// Ranges of the coefficients for reporting, including the interior pair as
/// it is often printed (positive magnitudes, `Kt = |K| eps / s`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffSummary {
    pub eps: f64,
    pub k_tilde: [f64; 2],
    pub k_eff: [f64; 2],
    pub h_tilde: f64,
    pub h_eff: [f64; 2],
    pub printed_k_tilde: [f64; 2],
    pub printed_k_eff: [f64; 2],
    pub chi: f64,
}

pub fn perturbed_coeffs(k: &ScalarField, h: &BoundaryField, eps: f64) -> Result<PerturbedCoeffs> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::NegativeEps(eps));
    }
    let grid = k.grid();
    check_boundary(grid, h)?;
    if let Some(idx) = k.data().iter().position(|&x| x > 0.0) {
        let nt = grid.n_theta();
        return Err(Error::PositiveCurvature { r: grid.r(idx / nt), theta: grid.theta(idx % nt), value: k.data()[idx] });
    }
    let s = 1.0 + 2.0 * eps;
    Ok(PerturbedCoeffs {
        eps,
        k_tilde: k.map(|x| -eps * x.abs() / (2.0 * s)),
        k_eff: if eps == 0.0 { k.clone() } else { k.map(|x| -x.abs() * (1.0 + 0.5 * eps) / s) },
        h_tilde: 1.0 / s,
        h_eff: if eps == 0.0 { h.clone() } else { h.map(|x| x / s) },
    })
}

impl PerturbedCoeffs {
    pub fn grid(&self) -> Grid {
        self.k_eff.grid()
    }

    /// `1 + 2 eps`, the factor with `I_eps = scale * I_n`.
    pub fn scale(&self) -> f64 {
        1.0 + 2.0 * self.eps
    }

    /// `chi_eps = int Kt + oint ht`, the Gauss-Bonnet target.
    pub fn chi(&self) -> f64 {
        disk::integrate_disk(&self.k_tilde) + self.h_tilde * 2.0 * std::f64::consts::PI
    }

    pub fn summary(&self) -> CoeffSummary {
        let range = |v: &[f64]| [v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max)];
        let s = self.scale();
        let abs_k: Vec<f64> = self.k_eff.data().iter().map(|ke| ke.abs() * s / (1.0 + 0.5 * self.eps)).collect();
        let printed_kt: Vec<f64> = abs_k.iter().map(|a| a * self.eps / s).collect();
        let printed_ke: Vec<f64> = abs_k.iter().map(|a| a * (1.0 + 0.5 * self.eps) / s).collect();
        CoeffSummary {
            eps: self.eps,
            k_tilde: range(self.k_tilde.data()),
            k_eff: range(self.k_eff.data()),
            h_tilde: self.h_tilde,
            h_eff: range(self.h_eff.data()),
            printed_k_tilde: range(&printed_kt),
            printed_k_eff: range(&printed_ke),
            chi: self.chi(),
        }
    }

    fn check(&self, u: &ScalarField) -> Result<()> {
        self.grid().require_same(&u.grid())
    }
}

/// The normalized energy `I_n = I_eps / (1 + 2 eps)` with its parts.
pub fn perturbed_energy(u: &ScalarField, c: &PerturbedCoeffs) -> Result<EnergyReport> {
    c.check(u)?;
    Ok(discrete_energy(u, &c.k_tilde, &c.k_eff, c.h_tilde, &c.h_eff))
}

/// Gradient of the discrete `I_n` in ring-major layout, with the overflow flag.
pub fn gradient(u: &ScalarField, c: &PerturbedCoeffs) -> Result<(Vec<f64>, bool)> {
    c.check(u)?;
    let grid = u.grid();
    let nt = grid.n_theta();
    let stencil = Stencil::new(grid);
    let mut g = stencil.apply(u.data());
    let mut overflow = false;
    for (idx, gv) in g.iter_mut().enumerate() {
        let w = grid.ring_weight(idx / nt);
        let e = clamped_exp(u.data()[idx], &mut overflow);
        *gv += w * (2.0 * c.k_tilde.data()[idx] - 2.0 * c.k_eff.data()[idx] * e);
    }
    let dt = grid.dtheta();
    let b0 = grid.boundary_ring() * nt;
    for i in 0..nt {
        let e = clamped_exp(0.5 * u.data()[b0 + i], &mut overflow);
        g[b0 + i] += dt * (2.0 * c.h_tilde - 2.0 * c.h_eff.data()[i] * e);
    }
    Ok((g, overflow))
}

/// Interior and boundary residuals of the perturbed problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    /// `-Lap u + 2 Kt - 2 Ke e^u`; the boundary ring is zero.
    pub interior: ScalarField,
    pub boundary: BoundaryField,
    pub overflow: bool,
}

impl Residual {
    pub fn interior_norm(&self) -> f64 {
        self.interior.norm_inf()
    }

    pub fn boundary_norm(&self) -> f64 {
        self.boundary.norm_inf()
    }

    /// Sup-norm of the combined residual.
    pub fn norm(&self) -> f64 {
        self.interior_norm().max(self.boundary_norm())
    }

    /// `int interior * v + oint boundary * v`, which equals the first
    /// variation `I_n'(u) v` of the discrete energy exactly.
    pub fn pair(&self, v: &ScalarField) -> f64 {
        let grid = v.grid();
        let mut data = self.interior.data().to_vec();
        let nt = grid.n_theta();
        let b0 = grid.boundary_ring() * nt;
        let mut acc = Compensated::new();
        for (idx, (&r, &x)) in data.iter().zip(v.data()).enumerate().take(b0) {
            acc.add(grid.ring_weight(idx / nt) * r * x);
        }
        let dt = grid.dtheta();
        for i in 0..nt {
            acc.add(dt * self.boundary.data()[i] * v.data()[b0 + i]);
        }
        data.clear();
        acc.value()
    }

    pub(crate) fn from_gradient(grid: Grid, g: &[f64], overflow: bool) -> Self {
        let nt = grid.n_theta();
        let b0 = grid.boundary_ring() * nt;
        let mut interior = vec![0.0; grid.len()];
        for (idx, (out, gv)) in interior.iter_mut().zip(g).enumerate().take(b0) {
            *out = gv / grid.ring_weight(idx / nt);
        }
        let dt = grid.dtheta();
        let boundary = g[b0..].iter().map(|gv| gv / dt).collect();
        Self {
            interior: ScalarField::from_vec(grid, interior).expect("same grid"),
            boundary: BoundaryField::from_vec(grid, boundary).expect("same grid"),
            overflow,
        }
    }
}

pub fn residual(u: &ScalarField, c: &PerturbedCoeffs) -> Result<Residual> {
    let (g, overflow) = gradient(u, c)?;
    Ok(Residual::from_gradient(u.grid(), &g, overflow))
}

/// Node-wise diagonal added to the stiffness matrix by the second variation
/// of the nonlinear terms.
pub fn hessian_reaction(u: &ScalarField, c: &PerturbedCoeffs) -> Vec<f64> {
    let grid = u.grid();
    let nt = grid.n_theta();
    let mut overflow = false;
    let mut d: Vec<f64> = u
        .data()
        .iter()
        .zip(c.k_eff.data())
        .enumerate()
        .map(|(idx, (&x, &ke))| -2.0 * grid.ring_weight(idx / nt) * ke * clamped_exp(x, &mut overflow))
        .collect();
    let dt = grid.dtheta();
    let b0 = grid.boundary_ring() * nt;
    for i in 0..nt {
        d[b0 + i] -= dt * c.h_eff.data()[i] * clamped_exp(0.5 * u.data()[b0 + i], &mut overflow);
    }
    d
}

/// `H psi` for the Hessian `H` of the discrete `I_n` at `u`.
pub fn hessian_apply(stencil: &Stencil, reaction: &[f64], psi: &[f64]) -> Vec<f64> {
    let mut out = stencil.apply(psi);
    for ((o, r), p) in out.iter_mut().zip(reaction).zip(psi) {
        *o += r * p;
    }
    out
}

/// `Q(psi) = int |grad psi|^2 - 2 int Ke e^u psi^2 - oint he e^(u/2) psi^2`,
/// the second variation of `I_n` (so `I_eps'' = (1 + 2 eps) Q`).
pub fn quadratic_form_q(u: &ScalarField, c: &PerturbedCoeffs, psi: &ScalarField) -> Result<f64> {
    c.check(u)?;
    u.grid().require_same(&psi.grid())?;
    let stencil = Stencil::new(u.grid());
    let reaction = hessian_reaction(u, c);
    Ok(sum::dot(psi.data(), &hessian_apply(&stencil, &reaction, psi.data())))
}
