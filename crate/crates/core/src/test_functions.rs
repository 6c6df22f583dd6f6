//! Concentrating test functions: boundary bubbles centred outside the disk,
//! their log-sum over a cyclic orbit, the radial bubble, closed-form and
//! leading-order oracles for their integrals, and the energy scan along a
//! concentrating family.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curvature::{deficit, symmetrize, SymmetryGroup};
use crate::disk;
use crate::energy::{energy_i, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{BoundaryField, Grid, ScalarField};
use crate::sum;

/// Minimum number of grid nodes across a boundary layer.
pub const NODES_PER_LAYER: f64 = 8.0;

/// Parameters of `k` bubbles with poles `q_i = (1 + r_off) e^(i (base_angle + 2 pi i / k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleParams {
    pub mu: f64,
    pub r_off: f64,
    pub k: usize,
    #[serde(default)]
    pub base_angle: f64,
}

impl BubbleParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidGroupOrder { k: 0 });
        }
        if !(self.r_off > 0.0) || !self.mu.is_finite() {
            return Err(Error::OutOfRange { value: self.r_off, lo: 0.0, hi: f64::INFINITY });
        }
        if !(self.mu * self.r_off > 1.0) {
            return Err(Error::PoleInsideClosure { min_scaled_distance: self.mu * self.r_off });
        }
        Ok(())
    }

    pub fn poles(&self) -> Vec<(f64, f64)> {
        let rho = 1.0 + self.r_off;
        (0..self.k)
            .map(|i| {
                let t = self.base_angle + 2.0 * PI * i as f64 / self.k as f64;
                (rho * t.cos(), rho * t.sin())
            })
            .collect()
    }

    /// `s = sqrt(mu^2 r_off^2 - 1)`.
    pub fn gap(&self) -> f64 {
        (self.mu * self.mu * self.r_off * self.r_off - 1.0).sqrt()
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..*self }
    }
}

fn phi_at(mu: f64, q: (f64, f64), x: f64, y: f64) -> f64 {
    let d2 = (x - q.0).powi(2) + (y - q.1).powi(2);
    (4.0 * mu * mu).ln() - 2.0 * (mu * mu * d2 - 1.0).ln()
}

/// `phi(x) = log(4 mu^2 / (mu^2 |x - q|^2 - 1)^2)`.
pub fn bubble_phi(mu: f64, q: (f64, f64), grid: Grid) -> Result<ScalarField> {
    let dist = q.0.hypot(q.1) - 1.0;
    if !(mu * dist > 1.0) {
        return Err(Error::PoleInsideClosure { min_scaled_distance: mu * dist.max(0.0) });
    }
    Ok(ScalarField::from_cartesian(grid, |x, y| phi_at(mu, q, x, y)))
}

/// `Phi = log sum_i e^(phi_i)`, evaluated with a max shift.
pub fn bubble_sum_phi(p: &BubbleParams, grid: Grid) -> Result<ScalarField> {
    p.validate()?;
    let poles = p.poles();
    Ok(ScalarField::from_cartesian(grid, |x, y| log_sum_exp(poles.iter().map(|&q| phi_at(p.mu, q, x, y)))))
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    m + sum::sum(vals.map(|v| (v - m).exp())).ln()
}

/// `phi_mu(x) = 2 log(2 mu / (mu^2 - |x|^2))`.
pub fn radial_bubble(mu: f64, grid: Grid) -> Result<ScalarField> {
    if !(mu > 1.0) || !mu.is_finite() {
        return Err(Error::MuNotAboveOne(mu));
    }
    Ok(ScalarField::from_fn(grid, |r, _| 2.0 * (2.0 * mu / (mu * mu - r * r)).ln()))
}

/// `f - log|K|`; requires `K < 0` on every node.
pub fn tilde(f: &ScalarField, k: &ScalarField) -> Result<ScalarField> {
    let grid = f.grid();
    grid.require_same(&k.grid())?;
    if let Some(idx) = k.data().iter().position(|&x| !(x < 0.0)) {
        return Err(Error::DegenerateCurvature { theta: grid.theta(idx % grid.n_theta()), value: k.data()[idx] });
    }
    f.zip_map(k, |a, b| a - (-b).ln())
}

/// Exact integrals of the radial bubble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialOracle {
    pub mu: f64,
    /// `int |grad phi|^2 = 16 pi (1/(mu^2 - 1) + log(1 - 1/mu^2))`.
    pub dirichlet: f64,
    /// The upper bound `16 pi / (mu^2 (mu^2 - 1))` on the Dirichlet integral.
    pub dirichlet_bound: f64,
    /// `int e^phi = 4 pi / (mu^2 - 1)`.
    pub area: f64,
    /// `oint e^(phi/2) = 4 pi mu / (mu^2 - 1)`.
    pub boundary_length: f64,
    /// `oint phi = 4 pi log(2 mu / (mu^2 - 1))`.
    pub boundary_mean: f64,
}

impl RadialOracle {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 1.0) {
            return Err(Error::MuNotAboveOne(mu));
        }
        let m2 = mu * mu;
        Ok(Self {
            mu,
            dirichlet: 16.0 * PI * (1.0 / (m2 - 1.0) + (-1.0 / m2).ln_1p()),
            dirichlet_bound: 16.0 * PI / (m2 * (m2 - 1.0)),
            area: 4.0 * PI / (m2 - 1.0),
            boundary_length: 4.0 * PI * mu / (m2 - 1.0),
            boundary_mean: 4.0 * PI * (2.0 * mu / (m2 - 1.0)).ln(),
        })
    }

    /// `I(phi_mu - log kappa)` for `K = -kappa` and constant `h`.
    pub fn energy(&self, kappa: f64, h: f64) -> f64 {
        0.5 * self.dirichlet + 2.0 * self.area + 2.0 * self.boundary_mean - 4.0 * PI * kappa.ln()
            - 4.0 * h / kappa.sqrt() * self.boundary_length
    }

    /// Leading term `16 pi (1 - D) / (mu^2 - 1)` of the energy for deficit `D`.
    pub fn leading_energy(&self, deficit: f64) -> f64 {
        16.0 * PI * (1.0 - deficit) / (self.mu * self.mu - 1.0)
    }
}

/// Leading-order one-sided predictions for `k` boundary bubbles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointOracle {
    pub s: f64,
    /// Upper bound `8 k pi / s` on `int |grad Phi|^2`.
    pub dirichlet: f64,
    /// Upper bound `2 k pi mu r / s` on `int e^Phi`.
    pub area: f64,
    /// Lower bound `D_min 2 k pi / s` on `oint D e^(Phi/2)`.
    pub weighted_boundary_length: f64,
    /// `(4 k pi + 4 k pi mu r - 8 k pi D_min) / s`.
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum OracleReport {
    Radial(RadialOracle),
    Points(PointOracle),
}

pub fn point_oracle(p: &BubbleParams, d_min: f64) -> Result<PointOracle> {
    p.validate()?;
    let s = p.gap();
    let k = p.k as f64;
    Ok(PointOracle {
        s,
        dirichlet: 8.0 * k * PI / s,
        area: 2.0 * k * PI * p.mu * p.r_off / s,
        weighted_boundary_length: d_min * 2.0 * k * PI / s,
        energy: (4.0 * k * PI + 4.0 * k * PI * p.mu * p.r_off - 8.0 * k * PI * d_min) / s,
    })
}

/// `oint e^(phi/2)` over the whole circle for one pole at distance
/// `1 + r_off`: `4 pi mu / sqrt((mu^2 r^2 - 1)(mu^2 (2 + r)^2 - 1))`.
pub fn single_bubble_boundary_length(mu: f64, r_off: f64) -> f64 {
    let m2 = mu * mu;
    4.0 * PI * mu / ((m2 * r_off * r_off - 1.0) * (m2 * (2.0 + r_off).powi(2) - 1.0)).sqrt()
}

/// A concentrating family of test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BubbleFamily {
    Radial,
    Points { r_off: f64, k: usize, base_angle: f64 },
}

impl BubbleFamily {
    pub fn params(&self, mu: f64) -> Option<BubbleParams> {
        match *self {
            Self::Radial => None,
            Self::Points { r_off, k, base_angle } => Some(BubbleParams { mu, r_off, k, base_angle }),
        }
    }

    /// `mu` at which the family concentrates on the boundary.
    pub fn critical_mu(&self) -> f64 {
        match *self {
            Self::Radial => 1.0,
            Self::Points { r_off, .. } => 1.0 / r_off,
        }
    }

    pub fn field(&self, mu: f64, grid: Grid) -> Result<ScalarField> {
        match self.params(mu) {
            None => radial_bubble(mu, grid),
            Some(p) => bubble_sum_phi(&p, grid),
        }
    }

    /// Radial and angular widths of the boundary layer.
    pub fn layer_widths(&self, mu: f64) -> (f64, f64) {
        match self.params(mu) {
            None => ((mu * mu - 1.0) / 2.0, f64::INFINITY),
            Some(p) => {
                let s2 = p.gap().powi(2);
                (s2 / (2.0 * mu * mu * p.r_off), s2.sqrt() / (mu * (1.0 + p.r_off).sqrt()))
            }
        }
    }

    /// Fails with the grid size needed to put [`NODES_PER_LAYER`] nodes across the layer.
    pub fn check_resolution(&self, mu: f64, grid: Grid) -> Result<()> {
        let (radial, angular) = self.layer_widths(mu);
        if radial / grid.dr() < NODES_PER_LAYER {
            return Err(Error::InsufficientResolution {
                layer_width: radial,
                required_n: (NODES_PER_LAYER / radial).ceil() as usize,
            });
        }
        if angular / grid.dtheta() < NODES_PER_LAYER {
            return Err(Error::InsufficientResolution {
                layer_width: angular,
                required_n: (2.0 * PI * NODES_PER_LAYER / angular).ceil() as usize,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub mu: f64,
    pub energy: EnergyReport,
    /// `oint e^(u/2)` of the tilde field.
    pub boundary_length: f64,
    /// Leading-order energy prediction.
    pub prediction: f64,
    /// Exact energy when the data are constant and the family radial.
    pub closed_form: Option<f64>,
    /// Minimum deficit on the arc of the first bubble (point families).
    pub cap_min_deficit: Option<f64>,
}

/// Energy of the tilde family along `mu_schedule`.
pub fn unboundedness_scan(
    k: &ScalarField,
    h: &BoundaryField,
    family: BubbleFamily,
    mu_schedule: &[f64],
) -> Result<Vec<ScanRow>> {
    let grid = k.grid();
    let d = deficit(k, h)?;
    let d_mean = disk::integrate_boundary(&d.values) / (2.0 * PI);
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    mu_schedule
        .iter()
        .map(|&mu| {
            family.check_resolution(mu, grid)?;
            let u = tilde(&family.field(mu, grid)?, k)?;
            let energy = energy_i(&u, k, h)?;
            let boundary_length = disk::integrate_boundary(&u.boundary().map(|x| (0.5 * x).exp()));
            let (prediction, closed_form, cap_min_deficit) = match family.params(mu) {
                None => {
                    let oracle = RadialOracle::new(mu)?;
                    let closed = (constant(k.data()) && constant(h.data())).then(|| oracle.energy(-k.data()[0], h.data()[0]));
                    (oracle.leading_energy(d_mean), closed, None)
                }
                Some(p) => {
                    let cap = cap_min(&d.values, &p);
                    (point_oracle(&p, cap)?.energy, None, Some(cap))
                }
            };
            Ok(ScanRow { mu, energy, boundary_length, prediction, closed_form, cap_min_deficit })
        })
        .collect()
}

fn arc_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Minimum of a boundary function on the arc `|theta - base_angle| < pi / k`.
fn cap_min(f: &BoundaryField, p: &BubbleParams) -> f64 {
    let grid = f.grid();
    let half = PI / p.k as f64;
    f.data()
        .iter()
        .enumerate()
        .filter(|(i, _)| arc_distance(grid.theta(*i), p.base_angle) <= half + 1e-14)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min)
}

/// `oint_{A_1} w e^(Phi/2)` over the arc of the first bubble, `A_1 = {|theta - base_angle| < pi / k}`.
pub fn cap_boundary_integral(p: &BubbleParams, weight: &BoundaryField) -> Result<f64> {
    p.validate()?;
    let grid = weight.grid();
    let poles = p.poles();
    let half = PI / p.k as f64;
    let dt = grid.dtheta();
    let mut acc = sum::Compensated::new();
    for (i, &w) in weight.data().iter().enumerate() {
        let t = grid.theta(i);
        let dist = arc_distance(t, p.base_angle);
        // Trapezoid weights with halved end nodes when the arc ends on a node.
        let factor = if (dist - half).abs() < 1e-12 {
            if p.k == 1 { 1.0 } else { 0.5 }
        } else if dist < half {
            1.0
        } else {
            continue;
        };
        let phi = log_sum_exp(poles.iter().map(|&q| phi_at(p.mu, q, t.cos(), t.sin())));
        acc.add(factor * dt * w * (0.5 * phi).exp());
    }
    Ok(acc.value())
}

/// Mountain-pass endpoint: a tilde bubble whose energy lies below `below` and
/// whose boundary length exceeds `min_length`, searched along decreasing `mu`.
/// The radial family is tried first, then point bubbles at the maximum of the
/// deficit with the orbit of `group`.
pub fn concentrated_endpoint(
    k: &ScalarField,
    h: &BoundaryField,
    group: SymmetryGroup,
    below: f64,
    min_length: f64,
) -> Result<(f64, BubbleFamily, ScalarField)> {
    let grid = k.grid();
    let d = deficit(k, h)?;
    let mut families = vec![BubbleFamily::Radial];
    let (imax, _) = d.values.data().iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let orbit = match group {
        SymmetryGroup::Cyclic { k } => k,
        SymmetryGroup::Trivial => 1,
        SymmetryGroup::FullRotation => 0,
    };
    if orbit > 0 {
        families.push(BubbleFamily::Points { r_off: 0.2, k: orbit, base_angle: grid.theta(imax) });
    }
    let mut last_err = Error::InsufficientResolution { layer_width: 0.0, required_n: grid.n_r() };
    for family in families {
        let crit = family.critical_mu();
        let mut gap = 1.0;
        while gap > 1e-4 {
            let mu = crit * (1.0 + gap);
            gap *= 0.8;
            if let Err(e) = family.check_resolution(mu, grid) {
                last_err = e;
                break;
            }
            let u = symmetrize(&tilde(&family.field(mu, grid)?, k)?, group)?;
            let e = energy_i(&u, k, h)?;
            let length = disk::integrate_boundary(&u.boundary().map(|x| (0.5 * x).exp()));
            if e.i_value < below && length > min_length {
                return Ok((mu, family, u));
            }
        }
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bubble_formula_examples() {
        let grid = Grid::new(16, 16).unwrap();
        // Pointwise value only: this pole touches the closed disk at (1, 0).
        assert!((phi_at(2.0, (1.5, 0.0), 0.0, 0.0) - (0.25f64).ln()).abs() < 1e-15);
        // Equal distance to q gives equal values.
        let a = phi_at(2.0, (1.5, 0.0), 0.5, 0.3);
        let b = phi_at(2.0, (1.5, 0.0), 0.5, -0.3);
        assert_eq!(a, b);
        assert!(bubble_phi(2.0, (1.6, 0.0), grid).unwrap().is_finite());
        assert!(matches!(bubble_phi(2.0, (1.5, 0.0), grid), Err(Error::PoleInsideClosure { .. })));
    }

    #[test]
    fn bubble_sum_examples() {
        let grid = Grid::new(16, 32).unwrap();
        let p = BubbleParams { mu: 6.0, r_off: 0.25, k: 1, base_angle: 0.3 };
        let single = bubble_phi(6.0, p.poles()[0], grid).unwrap();
        assert!(bubble_sum_phi(&p, grid).unwrap().max_abs_diff(&single).unwrap() < 1e-13);
        let p2 = BubbleParams { k: 2, base_angle: 0.0, ..p };
        let phi = bubble_sum_phi(&p2, grid).unwrap();
        for j in 0..16 {
            for i in 0..16 {
                assert!((phi.get(j, i) - phi.get(j, i + 16)).abs() < 1e-13);
            }
        }
        let sum_exp = disk::integrate_disk(&phi.map(f64::exp));
        let parts: f64 = p2.poles().iter().map(|&q| disk::integrate_disk(&bubble_phi(6.0, q, grid).unwrap().map(f64::exp))).sum();
        assert!(((sum_exp - parts) / parts).abs() < 1e-10);
    }

    #[test]
    fn radial_bubble_examples() {
        let grid = Grid::new(8, 8).unwrap();
        let f = radial_bubble(2.0, grid).unwrap();
        assert!((f.get(7, 0) - 0.575_364_144_903_562_1).abs() < 1e-14);
        assert!(matches!(radial_bubble(1.0, grid), Err(Error::MuNotAboveOne(_))));
        assert_eq!(2.0 * (2.0f64 * 2.0 / (4.0 - 0.0)).ln(), 0.0);
    }

    #[test]
    fn tilde_examples() {
        let grid = Grid::new(8, 8).unwrap();
        let f = radial_bubble(1.5, grid).unwrap();
        assert_eq!(tilde(&f, &ScalarField::constant(grid, -1.0)).unwrap(), f);
        let t4 = tilde(&f, &ScalarField::constant(grid, -4.0)).unwrap();
        assert!(t4.data().iter().zip(f.data()).all(|(a, b)| (b - a - 4f64.ln()).abs() < 1e-14));
        let k = ScalarField::from_fn(grid, |r, _| -1.0 - r);
        let t = tilde(&f, &k).unwrap();
        for ((a, b), kv) in t.data().iter().zip(f.data()).zip(k.data()) {
            assert!((a.exp() * kv.abs() - b.exp()).abs() < 1e-12 * b.exp());
        }
        let mut k0 = ScalarField::constant(grid, -1.0);
        k0.data_mut()[3] = 0.0;
        assert!(matches!(tilde(&f, &k0), Err(Error::DegenerateCurvature { .. })));
    }

    #[test]
    fn radial_oracle_values() {
        let o = RadialOracle::new(2.0).unwrap();
        assert!((o.boundary_length - 8.0 * PI / 3.0).abs() < 1e-13);
        let o = RadialOracle::new(2f64.sqrt()).unwrap();
        assert!((o.dirichlet - 16.0 * PI * (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!((o.dirichlet_bound - 8.0 * PI).abs() < 1e-12);
        // Exact hyperbolic solution for h = 5/4 has I = -8 pi.
        assert!((RadialOracle::new(2.0).unwrap().energy(1.0, 1.25) + 8.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn radial_quadrature_matches_oracle() {
        let grid = Grid::new(512, 16).unwrap();
        for mu in [1.05, 2f64.sqrt(), 2.0, 3.0] {
            let o = RadialOracle::new(mu).unwrap();
            let f = radial_bubble(mu, grid).unwrap();
            let rel = |a: f64, b: f64| ((a - b) / b).abs();
            assert!(rel(disk::integrate_disk(&disk::gradient_sq(&f)), o.dirichlet) < 1e-3, "{mu}");
            assert!(rel(disk::dirichlet_integral(&f), o.dirichlet) < 1e-3, "{mu}");
            assert!(rel(disk::integrate_disk(&f.map(f64::exp)), o.area) < 1e-3);
            assert!(rel(disk::integrate_boundary(&f.boundary().map(|x| (0.5 * x).exp())), o.boundary_length) < 1e-12);
            assert!(rel(disk::integrate_boundary(&f.boundary()), o.boundary_mean) < 1e-12);
        }
    }

    #[test]
    fn point_oracle_example() {
        let p = BubbleParams { mu: 1.01 / 0.2, r_off: 0.2, k: 2, base_angle: 0.0 };
        let o = point_oracle(&p, 1.0).unwrap();
        assert!((o.s - 0.0201f64.sqrt()).abs() < 1e-12);
        assert!((o.dirichlet - 354.5).abs() < 0.1);
    }

    #[test]
    fn single_bubble_boundary_closed_form() {
        let grid = Grid::new(8, 4096).unwrap();
        let p = BubbleParams { mu: 1.05 / 0.2, r_off: 0.2, k: 1, base_angle: 0.0 };
        let num = cap_boundary_integral(&p, &BoundaryField::constant(grid, 1.0)).unwrap();
        let exact = single_bubble_boundary_length(p.mu, p.r_off);
        assert!(((num - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn scan_radial_constant_data() {
        let grid = Grid::new(256, 16).unwrap();
        let k = ScalarField::constant(grid, -1.0);
        let rows = unboundedness_scan(&k, &BoundaryField::constant(grid, 1.5), BubbleFamily::Radial, &[1.2, 1.1]).unwrap();
        for r in &rows {
            let c = r.closed_form.unwrap();
            assert!(((r.energy.i_value - c) / c).abs() < 1e-3, "{r:?}");
        }
        assert!(rows[1].energy.i_value < rows[0].energy.i_value);
        let err = unboundedness_scan(&k, &BoundaryField::constant(grid, 1.5), BubbleFamily::Radial, &[1.01]).unwrap_err();
        assert!(matches!(err, Error::InsufficientResolution { required_n, .. } if required_n >= 796));
    }

    #[test]
    fn endpoint_search_finds_low_energy_bubble() {
        let grid = Grid::new(128, 32).unwrap();
        let k = ScalarField::constant(grid, -1.0);
        let h = BoundaryField::constant(grid, 1.25);
        let below = energy_i(&ScalarField::constant(grid, -8.0), &k, &h).unwrap().i_value - 1.0;
        let (mu, family, u) = concentrated_endpoint(&k, &h, SymmetryGroup::FullRotation, below, 2.0 * PI / 1.25).unwrap();
        assert_eq!(family, BubbleFamily::Radial);
        assert!(mu > 1.0);
        assert!(energy_i(&u, &k, &h).unwrap().i_value < below);
    }
}
