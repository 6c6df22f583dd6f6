//! Mountain-pass driver. A string of fields joining two low-energy endpoints
//! is relaxed by preconditioned descent with equal G-arclength spacing; the
//! search then zooms onto the two neighbours of the highest node, and the
//! highest node of the last string seeds a Newton polish.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{morse_index_g, newton_in, SolutionRecord, SolverOptions, Workspace};
use crate::disk;
use crate::energy::PerturbedCoeffs;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::sum;

fn default_n_path() -> usize {
    33
}
fn default_string_iters() -> usize {
    100
}
fn default_zooms() -> usize {
    8
}
fn default_zoom_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountainPassOptions {
    /// Number of fields on the string, endpoints included.
    #[serde(default = "default_n_path")]
    pub n_path: usize,
    /// Relaxation sweeps per string.
    #[serde(default = "default_string_iters")]
    pub max_string_iters: usize,
    #[serde(default = "default_zooms")]
    pub max_zooms: usize,
    /// Zooming stops once the highest node has a residual below this.
    #[serde(default = "default_zoom_tol")]
    pub zoom_tol: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Default for MountainPassOptions {
    fn default() -> Self {
        Self {
            n_path: default_n_path(),
            max_string_iters: default_string_iters(),
            max_zooms: default_zooms(),
            zoom_tol: default_zoom_tol(),
            solver: SolverOptions::default(),
        }
    }
}

impl MountainPassOptions {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.n_path < 5 {
            return Err(Error::InvalidOptions(format!("n_path must be at least 5, got {}", self.n_path)));
        }
        if !(self.zoom_tol > 0.0) {
            return Err(Error::InvalidOptions(format!("zoom_tol must be positive, got {}", self.zoom_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MountainPassResult {
    /// `I_eps` at the polished critical point.
    pub level: f64,
    /// Maximum of `I_eps` on the first relaxed string. It resolves the level
    /// only to the sampling of the string.
    pub path_level: f64,
    pub endpoint_energies: (f64, f64),
    /// Boundary lengths `oint e^(u/2)` of the endpoints.
    pub endpoint_lengths: (f64, f64),
    /// `I_eps` along the first relaxed string.
    pub path_energies: Vec<f64>,
    pub zooms: usize,
    /// Lower bound for the level from the separating length `delta`, when the
    /// endpoints lie on opposite sides of it (only for `eps = 0`).
    pub lower_bound: Option<LevelBound>,
    pub critical_point: SolutionRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelBound {
    pub delta: f64,
    pub value: f64,
}

/// Normalization constant of the lower bound: `8 pi log(2 pi)`.
pub const C_NORM: f64 = 46.190_888_720_262_08;

/// `8 pi log(delta) - 4 delta max_h - C_NORM`, a lower bound for `I` on fields
/// with boundary length `oint e^(u/2) = delta`; maximal at `delta = 2 pi / max_h`.
pub fn level_lower_bound(delta: f64, max_h: f64) -> f64 {
    8.0 * PI * delta.ln() - 4.0 * delta * max_h - C_NORM
}

pub fn boundary_length(u: &ScalarField) -> f64 {
    disk::integrate_boundary(&u.boundary().map(|x| (0.5 * x).exp()))
}

/// Mountain pass between `u_a` and `u_b` for the perturbed functional.
pub fn mountain_pass(u_a: &ScalarField, u_b: &ScalarField, c: &PerturbedCoeffs, opts: &MountainPassOptions) -> Result<MountainPassResult> {
    opts.validate()?;
    let grid = c.grid();
    grid.require_same(&u_a.grid())?;
    grid.require_same(&u_b.grid())?;
    if !u_a.is_finite() || !u_b.is_finite() {
        return Err(Error::NonFinite("mountain-pass endpoint".into()));
    }
    let ws = Workspace::new(c, opts.solver.symmetry)?;
    let ua = ws.project_field(u_a);
    let ub = ws.project_field(u_b);
    let scale = c.scale();
    let e_a = ws.energy(&ua).i_value;
    let e_b = ws.energy(&ub).i_value;
    let n = opts.n_path;
    let mut path = resample(&ws, &[ua.clone(), ub.clone()], n);
    let mut path_level = None;
    let mut path_energies = Vec::new();
    let mut zooms = 0;
    let mut top;
    loop {
        let energies = relax(&ws, &mut path, opts);
        top = argmax(&energies);
        if top == 0 || top == n - 1 {
            return Err(Error::PathCollapse(format!(
                "the highest node of the string is endpoint {top} (energies {:.6} at start, {:.6} at end)",
                scale * energies[0],
                scale * energies[n - 1]
            )));
        }
        if path_level.is_none() {
            path_level = Some(scale * energies[top]);
            path_energies = energies.iter().map(|e| scale * e).collect();
        }
        let res = ws.residual(&path[top]).norm();
        if res <= opts.zoom_tol || zooms == opts.max_zooms {
            break;
        }
        path = resample(&ws, &path[top - 1..=top + 1], n);
        zooms += 1;
    }
    let mut critical_point = newton_in(&ws, &path[top], &opts.solver);
    if critical_point.converged && opts.solver.compute_morse {
        critical_point.morse_index_g = Some(morse_index_g(&critical_point.u, c, opts.solver.symmetry, opts.solver.n_eigs)?.index);
    }
    let max_h = c.h_eff.max();
    let lengths = (boundary_length(&ua), boundary_length(&ub));
    let delta = 2.0 * PI / max_h;
    let lower_bound = (c.eps == 0.0 && max_h > 0.0 && lengths.0 < delta && delta < lengths.1)
        .then(|| LevelBound { delta, value: level_lower_bound(delta, max_h) });
    Ok(MountainPassResult {
        level: critical_point.i_eps,
        path_level: path_level.expect("set on the first pass"),
        endpoint_energies: (scale * e_a, scale * e_b),
        endpoint_lengths: lengths,
        path_energies,
        zooms,
        lower_bound,
        critical_point,
    })
}

fn argmax(values: &[f64]) -> usize {
    values.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc }).0
}

fn g_norm(ws: &Workspace, a: &ScalarField, b: &ScalarField) -> f64 {
    let d: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    ws.g_inner(&d, &d).max(0.0).sqrt()
}

/// `n` fields at equal G-arclength along the polyline through `nodes`.
fn resample(ws: &Workspace, nodes: &[ScalarField], n: usize) -> Vec<ScalarField> {
    let mut arc = vec![0.0];
    for w in nodes.windows(2) {
        arc.push(arc.last().unwrap() + g_norm(ws, &w[0], &w[1]));
    }
    let total = *arc.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if k == 0 {
            out.push(nodes[0].clone());
            continue;
        }
        if k == n - 1 {
            out.push(nodes[nodes.len() - 1].clone());
            continue;
        }
        let s = total * k as f64 / (n - 1) as f64;
        while seg + 2 < arc.len() && arc[seg + 1] < s {
            seg += 1;
        }
        let len = arc[seg + 1] - arc[seg];
        let t = if len > 0.0 { ((s - arc[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (&nodes[seg], &nodes[seg + 1]);
        out.push(a.zip_map(b, |x, y| x + t * (y - x)).expect("same grid"));
    }
    out
}

/// Nodes within this many places of the highest node descend; the rest of
/// the string only follows the reparametrization.
const WINDOW: usize = 2;
const STALL_SWEEPS: usize = 10;
const STALL_TOL: f64 = 1e-6;

/// Descent sweeps near the top of the string, each followed by
/// reparametrization. A node moves normal to the string and by at most half
/// the G-distance to its nearer neighbour, so the string cannot jump over
/// the ridge between samples. Returns the normalized energies of the string.
fn relax(ws: &Workspace, path: &mut Vec<ScalarField>, opts: &MountainPassOptions) -> Vec<f64> {
    let n = path.len();
    let damping = opts.solver.damping;
    let mut steps = vec![opts.solver.flow_step; n];
    let mut energies: Vec<f64> = path.iter().map(|u| ws.energy(u).i_value).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..opts.max_string_iters {
        let top = argmax(&energies);
        let lo = top.saturating_sub(WINDOW).max(1);
        let hi = (top + WINDOW).min(n - 2);
        for i in lo..=hi {
            let (g, _) = ws.gradient(&path[i]);
            let mut w: Vec<f64> = ws.gram.solve(&g).iter().map(|x| -x).collect();
            ws.project(&mut w);
            let tangent: Vec<f64> = path[i + 1].data().iter().zip(path[i - 1].data()).map(|(a, b)| a - b).collect();
            let tt = ws.g_inner(&tangent, &tangent);
            if tt > 0.0 {
                let coef = ws.g_inner(&tangent, &w) / tt;
                w.iter_mut().zip(&tangent).for_each(|(x, t)| *x -= coef * t);
            }
            let slope = sum::dot(&g, &w);
            let w_norm = ws.g_inner(&w, &w).max(0.0).sqrt();
            if !(slope < 0.0) || w_norm == 0.0 {
                continue;
            }
            let spacing = g_norm(ws, &path[i], &path[i - 1]).min(g_norm(ws, &path[i], &path[i + 1]));
            let dir = ScalarField::from_vec(ws.grid(), w).expect("same grid");
            let mut t = steps[i].min(0.5 * spacing / w_norm);
            let first = t;
            while t > 1e-12 * first {
                let trial = path[i].axpy(t, &dir).expect("same grid");
                let et = ws.energy(&trial);
                if !et.overflow && et.i_value <= energies[i] + 1e-4 * t * slope {
                    steps[i] = if t == first { 2.0 * t } else { t };
                    path[i] = trial;
                    energies[i] = et.i_value;
                    break;
                }
                t *= damping;
            }
        }
        *path = resample(ws, path, n);
        energies = path.iter().map(|u| ws.energy(u).i_value).collect();
        let itop = argmax(&energies);
        let top = energies[itop];
        if ws.residual(&path[itop]).norm() <= opts.zoom_tol {
            break;
        }
        // The top energy oscillates once the string resolves the ridge.
        if top < best - STALL_TOL * (1.0 + top.abs()) {
            best = top;
            stale = 0;
        } else {
            stale += 1;
            if stale >= STALL_SWEEPS {
                break;
            }
        }
    }
    energies
}
