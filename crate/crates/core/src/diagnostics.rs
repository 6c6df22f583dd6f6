//! Consistency checks on fields and solutions: the Gauss-Bonnet balance,
//! the boundary Moser-Trudinger (Lebedev-Milin) gap, boundary sets where
//! concentration can occur, the hyperbolic metric pulled back by disk maps,
//! and the total-curvature lattice check along a perturbation family.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curvature::{unit_level_points, DeficitProfile};
use crate::disk;
use crate::error::{Error, Result};
use crate::grid::{BoundaryField, Grid, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussBonnet {
    /// `int Ke e^u`.
    pub area_term: f64,
    /// `oint he e^(u/2)`.
    pub boundary_term: f64,
    /// `area_term + boundary_term - chi_target`.
    pub residual: f64,
}

/// Total curvature of the metric `e^u |dx|^2` against `chi_target`.
pub fn gauss_bonnet_residual(u: &ScalarField, k_eff: &ScalarField, h_eff: &BoundaryField, chi_target: f64) -> Result<GaussBonnet> {
    let grid = u.grid();
    grid.require_same(&k_eff.grid())?;
    grid.require_same(&h_eff.grid())?;
    let area_term = disk::integrate_disk(&u.zip_map(k_eff, |x, k| k * x.exp())?);
    let boundary_term = disk::integrate_boundary(&u.boundary().zip_map(h_eff, |x, h| h * (0.5 * x).exp())?);
    Ok(GaussBonnet { area_term, boundary_term, residual: area_term + boundary_term - chi_target })
}

/// `int |grad u|^2 + 4 oint u - 16 pi log((1/2 pi) oint e^(u/2))`, which is
/// non-negative and vanishes on constants.
pub fn lebedev_milin_gap(u: &ScalarField) -> f64 {
    let b = u.boundary();
    let shift = b.max();
    // oint e^(u/2) = e^(shift/2) oint e^((u - shift)/2), kept in log form.
    let log_len = 0.5 * shift + disk::integrate_boundary(&b.map(|x| (0.5 * (x - shift)).exp())).ln();
    disk::dirichlet_integral(u) + 4.0 * disk::integrate_boundary(&b) - 16.0 * PI * (log_len - (2.0 * PI).ln())
}

/// Boundary angles where concentration of solutions can take place.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowUpCandidates {
    /// Nodes with `D >= 1 - tol`.
    pub ge_one: Vec<f64>,
    /// Nodes with `D > 1 + tol`.
    pub s1_set: Vec<f64>,
    /// Points with `D = 1` and `D_tau = 0` (tangential contact with the unit level).
    pub s0_set: Vec<f64>,
    pub s0_empty: bool,
}

pub fn blow_up_candidates(d: &DeficitProfile, tol: f64, tol_d: f64) -> BlowUpCandidates {
    let grid = d.values.grid();
    let angles = |pred: &dyn Fn(f64) -> bool| -> Vec<f64> {
        d.values.data().iter().enumerate().filter(|(_, &v)| pred(v)).map(|(i, _)| grid.theta(i)).collect()
    };
    let ge_one = angles(&|v| v >= 1.0 - tol);
    let s1_set = angles(&|v| v > 1.0 + tol);
    let s0_set: Vec<f64> = unit_level_points(d, tol, tol_d).into_iter().filter(|p| p.degenerate).map(|p| p.theta).collect();
    BlowUpCandidates { s0_empty: s0_set.is_empty(), ge_one, s1_set, s0_set }
}

/// `g(z) = scale e^(i rotation) (z - a) / (1 - conj(a) z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoebiusParams {
    pub scale: f64,
    #[serde(default)]
    pub center: (f64, f64),
    #[serde(default)]
    pub rotation: f64,
}

impl MoebiusParams {
    pub fn scaling(scale: f64) -> Self {
        Self { scale, center: (0.0, 0.0), rotation: 0.0 }
    }

    /// `(|g(z)|^2, |g'(z)|^2)`; both are independent of the rotation.
    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let (ax, ay) = self.center;
        // 1 - conj(a) z
        let den = (1.0 - (ax * x + ay * y), -(ax * y - ay * x));
        let den2 = den.0 * den.0 + den.1 * den.1;
        let num2 = (x - ax).powi(2) + (y - ay).powi(2);
        let s2 = self.scale * self.scale;
        let a2 = ax * ax + ay * ay;
        (s2 * num2 / den2, s2 * (1.0 - a2).powi(2) / (den2 * den2))
    }

    /// `max |g|` on the closed disk.
    pub fn max_modulus(&self) -> f64 {
        if self.center.0.hypot(self.center.1) < 1.0 {
            self.scale.abs()
        } else {
            f64::INFINITY
        }
    }
}

/// `log(4 |g'|^2 / (1 - |g|^2)^2)`, a solution of `-Lap u = -2 e^u`.
pub fn liouville_field(g: &MoebiusParams, grid: Grid) -> Result<ScalarField> {
    let m = g.max_modulus();
    if !(m < 1.0) {
        return Err(Error::ImageLeavesDisk(m));
    }
    Ok(ScalarField::from_cartesian(grid, |x, y| {
        let (g2, dg2) = g.eval(x, y);
        (4.0 * dg2).ln() - 2.0 * (1.0 - g2).ln()
    }))
}

/// `max |-Lap u + 2 e^u|` over the nodes off the boundary circle, with the
/// fourth-order Laplacian (the second-order one is dominated by the steep
/// boundary growth of `u`).
pub fn liouville_residual(g: &MoebiusParams, grid: Grid) -> Result<f64> {
    let u = liouville_field(g, grid)?;
    let lap = disk::laplacian_fourth_order(&u);
    let n_inner = grid.boundary_ring() * grid.n_theta();
    Ok(lap.data()[..n_inner]
        .iter()
        .zip(&u.data()[..n_inner])
        .fold(0.0f64, |m, (l, x)| m.max((-l + 2.0 * x.exp()).abs())))
}

/// Geodesic curvature `(r^2 + 1) / (2 r)` of the circle `|z| = r` in the
/// Poincare metric; always above one.
pub fn geodesic_curvature_circle(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::OutOfRange { value: r, lo: 0.0, hi: 1.0 });
    }
    Ok((r * r + 1.0) / (2.0 * r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiReport {
    /// `(eps, chi)` in the given order.
    pub samples: Vec<(f64, f64)>,
    /// Linear extrapolation to `eps = 0` from the two smallest `eps`, or the
    /// single value.
    pub limit_estimate: f64,
    /// Nearest multiple `2 pi j` of the estimate.
    pub nearest_multiple: i64,
    pub lattice_distance: f64,
}

/// Position of the total curvature `chi_eps` relative to the lattice `2 pi Z`.
pub fn chi_quantization_check(samples: &[(f64, f64)]) -> Result<ChiReport> {
    if samples.is_empty() {
        return Err(Error::InvalidOptions("no samples for the total-curvature check".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let limit_estimate = match sorted.as_slice() {
        [(e0, c0), (e1, c1), ..] if e1 > e0 => c0 - e0 * (c1 - c0) / (e1 - e0),
        [(_, c0), ..] => *c0,
        [] => unreachable!(),
    };
    let j = (limit_estimate / (2.0 * PI)).round();
    Ok(ChiReport {
        samples: samples.to_vec(),
        limit_estimate,
        nearest_multiple: j as i64,
        lattice_distance: (limit_estimate - 2.0 * PI * j).abs(),
    })
}
