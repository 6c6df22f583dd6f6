//! Curvature data `(K, h)`, the deficit `D = h / sqrt|K|` on the boundary,
//! symmetry groups and the structural hypotheses on the data.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::disk::{eval_fourier, eval_fourier_derivative, fourier_coefficients, spectral_derivative};
use crate::error::{Error, Result};
use crate::grid::{BoundaryField, Grid, ScalarField};
use crate::sum;

/// Inner radius of the boundary annulus on which strict negativity of `K`
/// is reported separately from the global sign condition.
pub const ANNULUS_INNER_RADIUS: f64 = 0.9;

/// Relative tolerance for treating tabulated data as group invariant.
const INVARIANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymmetryGroup {
    /// Rotations by multiples of `2 pi / k`.
    Cyclic { k: usize },
    FullRotation,
    Trivial,
}

impl SymmetryGroup {
    pub fn cyclic(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidGroupOrder { k });
        }
        Ok(Self::Cyclic { k })
    }

    pub fn check_grid(&self, grid: Grid) -> Result<()> {
        match *self {
            Self::Cyclic { k } if k < 2 => Err(Error::InvalidGroupOrder { k }),
            Self::Cyclic { k } if !grid.n_theta().is_multiple_of(k) => {
                Err(Error::ResolutionNotDivisible { n_theta: grid.n_theta(), k })
            }
            _ => Ok(()),
        }
    }

    /// Group average of ring-major data in place.
    pub fn project_in_place(&self, grid: Grid, data: &mut [f64]) -> Result<()> {
        self.check_grid(grid)?;
        let nt = grid.n_theta();
        match *self {
            Self::Trivial => {}
            Self::FullRotation => {
                for row in data.chunks_mut(nt) {
                    let mean = sum::sum(row.iter().copied()) / nt as f64;
                    row.iter_mut().for_each(|x| *x = mean);
                }
            }
            Self::Cyclic { k } => {
                let shift = nt / k;
                let mut avg = vec![0.0; shift];
                for row in data.chunks_mut(nt) {
                    for (i, a) in avg.iter_mut().enumerate() {
                        *a = sum::sum((0..k).map(|s| row[i + s * shift])) / k as f64;
                    }
                    for (i, x) in row.iter_mut().enumerate() {
                        *x = avg[i % shift];
                    }
                }
            }
        }
        Ok(())
    }

    /// Dimension of the invariant subspace of fields on `grid`.
    pub fn invariant_dimension(&self, grid: Grid) -> usize {
        match *self {
            Self::Trivial => grid.len(),
            Self::FullRotation => grid.n_r(),
            Self::Cyclic { k } => grid.n_r() * grid.n_theta() / k,
        }
    }
}

pub fn symmetrize(f: &ScalarField, group: SymmetryGroup) -> Result<ScalarField> {
    let mut out = f.clone();
    group.project_in_place(f.grid(), out.data_mut())?;
    Ok(out)
}

pub fn symmetrize_boundary(f: &BoundaryField, group: SymmetryGroup) -> Result<BoundaryField> {
    let mut out = f.clone();
    // A boundary field is a single ring.
    let ring = Grid::new(8, f.grid().n_theta())?;
    group.project_in_place(ring, out.data_mut())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum KDef {
    Constant(f64),
    /// `K(r) = sum_n c_n r^(2n)`.
    RadialPolynomial(Vec<f64>),
    Tabulated(ScalarField),
}

#[derive(Debug, Clone, PartialEq)]
pub enum HDef {
    Constant(f64),
    /// `h(theta) = sum_m c_m cos(m theta) + s_m sin(m theta)`; mode 0 is the constant.
    FourierCosSin(BTreeMap<usize, (f64, f64)>),
    Tabulated(BoundaryField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSpec {
    pub k: KDef,
    pub h: HDef,
    pub group: SymmetryGroup,
}

impl CurvatureSpec {
    /// Checks the structural compatibility of the analytic parts with the group.
    pub fn new(k: KDef, h: HDef, group: SymmetryGroup) -> Result<Self> {
        if let SymmetryGroup::Cyclic { k: order } = group {
            if order < 2 {
                return Err(Error::InvalidGroupOrder { k: order });
            }
            if let HDef::FourierCosSin(modes) = &h {
                if let Some(m) = modes.keys().find(|&&m| m != 0 && m % order != 0) {
                    return Err(Error::SymmetryViolation(format!(
                        "h has Fourier mode {m}, not a multiple of {order}"
                    )));
                }
            }
        }
        if group == SymmetryGroup::FullRotation {
            if let HDef::FourierCosSin(modes) = &h {
                if modes.iter().any(|(&m, &(c, s))| m != 0 && (c != 0.0 || s != 0.0)) {
                    return Err(Error::SymmetryViolation("h must be constant under full rotation".into()));
                }
            }
        }
        Ok(Self { k, h, group })
    }

    pub fn constant(k: f64, h: f64, group: SymmetryGroup) -> Self {
        Self { k: KDef::Constant(k), h: HDef::Constant(h), group }
    }

    /// Radial profile of `K` as coefficients in `r^2`, if `K` is analytic and radial.
    pub fn radial_k(&self) -> Option<Vec<f64>> {
        match &self.k {
            KDef::Constant(c) => Some(vec![*c]),
            KDef::RadialPolynomial(c) => Some(c.clone()),
            KDef::Tabulated(_) => None,
        }
    }

    /// Value of `h` if it is a constant.
    pub fn constant_h(&self) -> Option<f64> {
        match &self.h {
            HDef::Constant(c) => Some(*c),
            HDef::FourierCosSin(m) => {
                if m.iter().all(|(&k, &(c, s))| k == 0 || (c == 0.0 && s == 0.0)) {
                    Some(m.get(&0).map_or(0.0, |p| p.0))
                } else {
                    None
                }
            }
            HDef::Tabulated(_) => None,
        }
    }
}

pub fn eval_radial_polynomial(coeffs: &[f64], r: f64) -> f64 {
    let s = r * r;
    coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

/// Pointwise values of `K` on all nodes and `h` on the boundary nodes.
pub fn eval_curvatures(spec: &CurvatureSpec, grid: Grid) -> Result<(ScalarField, BoundaryField)> {
    spec.group.check_grid(grid)?;
    let k = match &spec.k {
        KDef::Constant(c) => ScalarField::constant(grid, *c),
        KDef::RadialPolynomial(coeffs) => ScalarField::from_fn(grid, |r, _| eval_radial_polynomial(coeffs, r)),
        KDef::Tabulated(f) => {
            grid.require_same(&f.grid())?;
            f.clone()
        }
    };
    let h = match &spec.h {
        HDef::Constant(c) => BoundaryField::constant(grid, *c),
        HDef::FourierCosSin(modes) => BoundaryField::from_fn(grid, |t| {
            sum::sum(modes.iter().map(|(&m, &(c, s))| {
                let mt = m as f64 * t;
                c * mt.cos() + s * mt.sin()
            }))
        }),
        HDef::Tabulated(f) => {
            if f.data().len() != grid.n_theta() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} boundary values", grid.n_theta()),
                    found: format!("{}", f.data().len()),
                });
            }
            BoundaryField::from_vec(grid, f.data().to_vec())?
        }
    };
    if !k.is_finite() || !h.is_finite() {
        return Err(Error::NonFinite("curvature data".into()));
    }
    if matches!(spec.k, KDef::Tabulated(_)) {
        check_invariant("K", k.data(), &symmetrize(&k, spec.group)?)?;
    }
    if matches!(spec.h, HDef::Tabulated(_)) {
        check_invariant_b("h", &h, &symmetrize_boundary(&h, spec.group)?)?;
    }
    Ok((k, h))
}

fn check_invariant(name: &str, data: &[f64], projected: &ScalarField) -> Result<()> {
    let scale = 1.0 + data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let drift = data.iter().zip(projected.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if drift > INVARIANCE_TOL * scale {
        return Err(Error::SymmetryViolation(format!("tabulated {name} drifts by {drift:.3e} under the group")));
    }
    Ok(())
}

fn check_invariant_b(name: &str, f: &BoundaryField, projected: &BoundaryField) -> Result<()> {
    let scale = 1.0 + f.norm_inf();
    let drift = f.data().iter().zip(projected.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if drift > INVARIANCE_TOL * scale {
        return Err(Error::SymmetryViolation(format!("tabulated {name} drifts by {drift:.3e} under the group")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeficitProfile {
    pub values: BoundaryField,
    /// Derivative in arclength of `values`.
    pub tangential_derivative: BoundaryField,
}

/// `D = h / sqrt|K|` on the boundary, with its spectral tangential derivative.
pub fn deficit(k: &ScalarField, h: &BoundaryField) -> Result<DeficitProfile> {
    let grid = k.grid();
    if h.data().len() != grid.n_theta() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} boundary values", grid.n_theta()),
            found: format!("{}", h.data().len()),
        });
    }
    let kb = k.boundary();
    if let Some(i) = kb.data().iter().position(|&x| x >= 0.0 || !x.is_finite()) {
        return Err(Error::DegenerateCurvature { theta: grid.theta(i), value: kb.data()[i] });
    }
    let vals: Vec<f64> = h.data().iter().zip(kb.data()).map(|(hv, kv)| hv / kv.abs().sqrt()).collect();
    let deriv = spectral_derivative(&vals);
    Ok(DeficitProfile {
        values: BoundaryField::from_vec(grid, vals)?,
        tangential_derivative: BoundaryField::from_vec(grid, deriv)?,
    })
}

pub fn default_deficit_tol(d: &DeficitProfile) -> f64 {
    1e-6 * (1.0 + d.values.norm_inf())
}

pub fn default_derivative_tol(d: &DeficitProfile) -> f64 {
    1e-6 * (1.0 + d.tangential_derivative.norm_inf())
}

/// A boundary angle where the deficit equals one (within tolerance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitLevelPoint {
    pub theta: f64,
    pub deficit: f64,
    pub derivative: f64,
    /// The derivative vanishes too, so the point violates the transversality hypothesis.
    pub degenerate: bool,
}

/// Locates the set `{D = 1}` on the boundary from the trigonometric
/// interpolant of the sampled deficit: nodes inside the tolerance band,
/// sign changes of `D - 1` between nodes, and critical points of `D`
/// between nodes whose value lies in the band (tangential contact).
pub fn unit_level_points(d: &DeficitProfile, tol: f64, tol_d: f64) -> Vec<UnitLevelPoint> {
    let vals = d.values.data();
    let der = d.tangential_derivative.data();
    let n = vals.len();
    let grid = d.values.grid();
    let dt = grid.dtheta();
    let coeffs = fourier_coefficients(vals);
    let mut pts: Vec<UnitLevelPoint> = Vec::new();
    let push = |p: UnitLevelPoint, pts: &mut Vec<UnitLevelPoint>| {
        let close = pts.iter_mut().find(|q| circular_distance(q.theta, p.theta) < 0.5 * dt);
        match close {
            Some(q) => {
                if p.degenerate && !q.degenerate {
                    *q = p;
                }
            }
            None => pts.push(p),
        }
    };
    for i in 0..n {
        if (vals[i] - 1.0).abs() <= tol {
            let p = UnitLevelPoint {
                theta: grid.theta(i),
                deficit: vals[i],
                derivative: der[i],
                degenerate: der[i].abs() <= tol_d,
            };
            push(p, &mut pts);
        }
    }
    for i in 0..n {
        let ip = (i + 1) % n;
        let a = grid.theta(i);
        let b = a + dt;
        let fa = vals[i] - 1.0;
        let fb = vals[ip] - 1.0;
        if fa.abs() > tol && fb.abs() > tol && fa * fb < 0.0 {
            let t = bisect(|t| eval_fourier(&coeffs, t) - 1.0, a, b);
            let dv = eval_fourier_derivative(&coeffs, t);
            let p = UnitLevelPoint {
                theta: t.rem_euclid(2.0 * PI),
                deficit: eval_fourier(&coeffs, t),
                derivative: dv,
                degenerate: dv.abs() <= tol_d,
            };
            push(p, &mut pts);
        }
        let da = der[i];
        let db = der[ip];
        if da * db < 0.0 {
            let t = bisect(|t| eval_fourier_derivative(&coeffs, t), a, b);
            let v = eval_fourier(&coeffs, t);
            if (v - 1.0).abs() <= tol {
                let p = UnitLevelPoint {
                    theta: t.rem_euclid(2.0 * PI),
                    deficit: v,
                    derivative: eval_fourier_derivative(&coeffs, t),
                    degenerate: true,
                };
                push(p, &mut pts);
            }
        }
    }
    pts.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    pts
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    /// `K <= 0` on the whole disk and `K < 0` on the boundary.
    pub h1: bool,
    pub k_nonpositive_everywhere: bool,
    pub k_negative_on_boundary: bool,
    /// `K < 0` on every ring with `r >= ANNULUS_INNER_RADIUS`.
    pub k_negative_on_boundary_annulus: bool,
    /// The deficit exceeds one somewhere.
    pub h2: bool,
    /// Every point with `D = 1` has non-vanishing tangential derivative.
    pub h3: bool,
    /// `None` when the group is trivial (nothing to check).
    pub g_symmetric: Option<bool>,
    pub max_deficit: Option<f64>,
    pub min_deficit: Option<f64>,
    pub tol: f64,
    pub tol_d: f64,
    pub unit_level_points: Vec<UnitLevelPoint>,
    /// Angles where `D = 1` and `D_tau = 0`.
    pub h3_violations: Vec<f64>,
}

/// Evaluates the data and reports the structural hypotheses. A `tol` of
/// `None` selects `1e-6 (1 + max |D|)`.
pub fn check_hypotheses(spec: &CurvatureSpec, grid: Grid, tol: Option<f64>) -> Result<HypothesisReport> {
    let (k, h) = eval_curvatures(spec, grid)?;
    let k_nonpositive_everywhere = k.data().iter().all(|&x| x <= 0.0);
    let k_negative_on_boundary = k.boundary().data().iter().all(|&x| x < 0.0);
    let k_negative_on_boundary_annulus = (0..grid.n_r())
        .filter(|&j| grid.r(j) >= ANNULUS_INNER_RADIUS)
        .all(|j| k.ring(j).iter().all(|&x| x < 0.0));
    let g_symmetric = match spec.group {
        SymmetryGroup::Trivial => None,
        g => {
            let ks = symmetrize(&k, g)?;
            let hs = symmetrize_boundary(&h, g)?;
            Some(check_invariant("K", k.data(), &ks).is_ok() && check_invariant_b("h", &h, &hs).is_ok())
        }
    };
    let mut report = HypothesisReport {
        h1: k_nonpositive_everywhere && k_negative_on_boundary,
        k_nonpositive_everywhere,
        k_negative_on_boundary,
        k_negative_on_boundary_annulus,
        h2: false,
        h3: false,
        g_symmetric,
        max_deficit: None,
        min_deficit: None,
        tol: tol.unwrap_or(f64::NAN),
        tol_d: f64::NAN,
        unit_level_points: Vec::new(),
        h3_violations: Vec::new(),
    };
    if !k_negative_on_boundary {
        return Ok(report);
    }
    let d = deficit(&k, &h)?;
    let tol = tol.unwrap_or_else(|| default_deficit_tol(&d));
    let tol_d = default_derivative_tol(&d);
    let pts = unit_level_points(&d, tol, tol_d);
    report.max_deficit = Some(d.values.max());
    report.min_deficit = Some(d.values.min());
    report.h2 = d.values.max() > 1.0 + tol;
    report.h3_violations = pts.iter().filter(|p| p.degenerate).map(|p| p.theta).collect();
    report.h3 = report.h3_violations.is_empty();
    report.unit_level_points = pts;
    report.tol = tol;
    report.tol_d = tol_d;
    Ok(report)
}

/// The scaling map `(K, h) -> (lambda^2 K, lambda h)`; the deficit is invariant.
pub fn rescale_curvatures(k: &ScalarField, h: &BoundaryField, lambda: f64) -> Result<(ScalarField, BoundaryField)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let l2 = lambda * lambda;
    Ok((k.map(|x| l2 * x), h.map(|x| lambda * x)))
}
