//! Solvers for the perturbed Euler-Lagrange problem: damped Newton with a
//! Krylov linear solve, H1-preconditioned gradient descent, continuation in
//! `eps`, a string-method mountain pass and the G-symmetric Morse index.

mod morse;
mod mountain;

pub use morse::{morse_index_g, MorseReport};
pub use mountain::{mountain_pass, MountainPassOptions, MountainPassResult};

use serde::{Deserialize, Serialize};

use crate::curvature::{check_hypotheses, eval_curvatures, CurvatureSpec, SymmetryGroup};
use crate::diagnostics::gauss_bonnet_residual;
use crate::disk::{ModeSolver, Stencil};
use crate::energy::{self, perturbed_coeffs, perturbed_energy, EnergyReport, PerturbedCoeffs, Residual};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::gmres;
use crate::radial::hyperbolic_mu;
use crate::sum;
use crate::test_functions::{radial_bubble, tilde};

fn default_max_iters() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-9
}
fn default_damping() -> f64 {
    0.5
}
fn default_schedule() -> Vec<f64> {
    vec![0.5, 0.25, 0.1, 0.04, 0.01, 0.0]
}
fn default_flow_step() -> f64 {
    1.0
}
fn default_n_eigs() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Sup-norm bound on the combined residual.
    #[serde(default = "default_tol")]
    pub tol_residual: f64,
    /// Backtracking factor of the line searches.
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_schedule")]
    pub eps_schedule: Vec<f64>,
    /// Initial pseudo-time step of the gradient flow.
    #[serde(default = "default_flow_step")]
    pub flow_step: f64,
    /// Every iterate is projected onto the fields invariant under this group.
    #[serde(default = "default_group")]
    pub symmetry: SymmetryGroup,
    /// Compute the Morse index of converged records.
    #[serde(default)]
    pub compute_morse: bool,
    #[serde(default = "default_n_eigs")]
    pub n_eigs: usize,
}

fn default_group() -> SymmetryGroup {
    SymmetryGroup::Trivial
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            tol_residual: default_tol(),
            damping: default_damping(),
            eps_schedule: default_schedule(),
            flow_step: default_flow_step(),
            symmetry: default_group(),
            compute_morse: false,
            n_eigs: default_n_eigs(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidOptions(m));
        if !(self.tol_residual > 0.0) {
            return bad(format!("tol_residual must be positive, got {}", self.tol_residual));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return bad(format!("damping must lie in (0, 1), got {}", self.damping));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.flow_step > 0.0) {
            return bad(format!("flow_step must be positive, got {}", self.flow_step));
        }
        if self.n_eigs < 3 {
            return bad(format!("n_eigs must be at least 3, got {}", self.n_eigs));
        }
        if self.eps_schedule.last() != Some(&0.0) || self.eps_schedule.windows(2).any(|w| !(w[0] > w[1])) {
            return bad(format!("eps_schedule must decrease strictly to 0, got {:?}", self.eps_schedule));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// No step along the search direction reduced the merit function.
    LineSearchFailed,
    /// The linear solve failed and no step was accepted.
    SingularJacobian,
    /// The exponential clamp was hit at the accepted iterate.
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationLog {
    pub iter: usize,
    pub residual_int: f64,
    pub residual_bdy: f64,
    /// Normalized energy `I_eps / (1 + 2 eps)`.
    pub energy: f64,
    pub max_u: f64,
    /// Accepted step length (zero on the initial row).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionRecord {
    #[serde(skip)]
    pub u: ScalarField,
    pub eps: f64,
    pub residual_norms: (f64, f64),
    /// Parts of the normalized energy; at `eps = 0` this is `I`.
    pub energy: EnergyReport,
    /// `I_eps = (1 + 2 eps) I_n`.
    pub i_eps: f64,
    pub gauss_bonnet_residual: f64,
    pub morse_index_g: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    pub max_u: f64,
    #[serde(skip)]
    pub log: Vec<IterationLog>,
}

impl SolutionRecord {
    pub fn residual_norm(&self) -> f64 {
        self.residual_norms.0.max(self.residual_norms.1)
    }
}

/// Operators shared by the solvers on one grid.
pub(crate) struct Workspace<'a> {
    pub c: &'a PerturbedCoeffs,
    pub group: SymmetryGroup,
    pub stencil: Stencil,
    pub gram: ModeSolver,
}

impl<'a> Workspace<'a> {
    pub fn new(c: &'a PerturbedCoeffs, group: SymmetryGroup) -> Result<Self> {
        let grid = c.grid();
        group.check_grid(grid)?;
        let stencil = Stencil::new(grid);
        let gram = ModeSolver::gram(&stencil);
        Ok(Self { c, group, stencil, gram })
    }

    pub fn grid(&self) -> Grid {
        self.stencil.grid()
    }

    pub fn project(&self, v: &mut [f64]) {
        self.group.project_in_place(self.grid(), v).expect("grid checked on construction");
    }

    pub fn project_field(&self, u: &ScalarField) -> ScalarField {
        let mut out = u.clone();
        self.project(out.data_mut());
        out
    }

    /// `a^T (A + M) b`.
    pub fn g_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let ab = self.stencil.apply(b);
        let nt = self.grid().n_theta();
        let w = self.stencil.weights();
        sum::sum(a.iter().zip(&ab).zip(b).enumerate().map(|(idx, ((x, y), z))| x * (y + w[idx / nt] * z)))
    }

    pub fn energy(&self, u: &ScalarField) -> EnergyReport {
        perturbed_energy(u, self.c).expect("grid checked")
    }

    pub fn gradient(&self, u: &ScalarField) -> (Vec<f64>, bool) {
        let (mut g, overflow) = energy::gradient(u, self.c).expect("grid checked");
        self.project(&mut g);
        (g, overflow)
    }

    pub fn residual(&self, u: &ScalarField) -> Residual {
        let (g, overflow) = self.gradient(u);
        Residual::from_gradient(self.grid(), &g, overflow)
    }
}

/// Weighted L2 norm of the gradient, the merit function of the Newton line search.
fn merit(g: &[f64], metric: &[f64]) -> f64 {
    sum::sum(g.iter().zip(metric).map(|(x, m)| x * x / m)).sqrt()
}

fn node_weights(grid: Grid) -> Vec<f64> {
    let nt = grid.n_theta();
    grid.ring_weights().iter().flat_map(|&w| std::iter::repeat_n(w, nt)).collect()
}

pub(crate) fn make_record(
    ws: &Workspace,
    u: ScalarField,
    iterations: usize,
    status: SolveStatus,
    log: Vec<IterationLog>,
) -> SolutionRecord {
    let c = ws.c;
    let res = ws.residual(&u);
    let energy = ws.energy(&u);
    let gb = gauss_bonnet_residual(&u, &c.k_eff, &c.h_eff, c.chi()).expect("grid checked");
    SolutionRecord {
        eps: c.eps,
        residual_norms: (res.interior_norm(), res.boundary_norm()),
        i_eps: c.scale() * energy.i_value,
        energy,
        gauss_bonnet_residual: gb.residual,
        morse_index_g: None,
        iterations,
        converged: status == SolveStatus::Converged,
        status,
        max_u: u.max(),
        log,
        u,
    }
}

fn log_row(iter: usize, res: &Residual, energy: f64, u: &ScalarField, step: f64) -> IterationLog {
    IterationLog { iter, residual_int: res.interior_norm(), residual_bdy: res.boundary_norm(), energy, max_u: u.max(), step }
}

fn check_start(u0: &ScalarField, c: &PerturbedCoeffs) -> Result<()> {
    c.grid().require_same(&u0.grid())?;
    crate::disk::check_finite("initial field", u0.data())
}

/// Damped Newton iteration on the discrete residual. The linearization is
/// the exact Hessian of the discrete energy, solved by GMRES preconditioned
/// with the ring-averaged operator; steps backtrack on the weighted residual.
pub fn newton_solve(u0: &ScalarField, c: &PerturbedCoeffs, opts: &SolverOptions) -> Result<SolutionRecord> {
    opts.validate()?;
    check_start(u0, c)?;
    let ws = Workspace::new(c, opts.symmetry)?;
    let mut rec = newton_in(&ws, u0, opts);
    if rec.converged && opts.compute_morse {
        rec.morse_index_g = Some(morse_index_g(&rec.u, c, opts.symmetry, opts.n_eigs)?.index);
    }
    Ok(rec)
}

pub(crate) fn newton_in(ws: &Workspace, u0: &ScalarField, opts: &SolverOptions) -> SolutionRecord {
    let grid = ws.grid();
    let nt = grid.n_theta();
    let metric = node_weights(grid);
    let mut u = ws.project_field(u0);
    let mut log = Vec::new();
    let (mut g, _) = ws.gradient(&u);
    let mut res = Residual::from_gradient(grid, &g, false);
    let mut m0 = merit(&g, &metric);
    log.push(log_row(0, &res, ws.energy(&u).i_value, &u, 0.0));
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        if res.norm() <= opts.tol_residual {
            status = SolveStatus::Converged;
            break;
        }
        iterations = it;
        let reaction = energy::hessian_reaction(&u, ws.c);
        let ring_diag: Vec<f64> = reaction.chunks(nt).map(|r| sum::sum(r.iter().copied()) / nt as f64).collect();
        let precond = ModeSolver::new(&ws.stencil, &ring_diag);
        let apply = |x: &[f64]| energy::hessian_apply(&ws.stencil, &reaction, x);
        let pre = |x: &[f64]| match &precond {
            Some(p) => p.solve(x),
            None => ws.gram.solve(x),
        };
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut delta = vec![0.0; rhs.len()];
        let out = gmres(&apply, &pre, &rhs, &mut delta, &metric, 1e-8, 60, 600);
        ws.project(&mut delta);
        if delta.iter().any(|x| !x.is_finite()) {
            status = SolveStatus::SingularJacobian;
            break;
        }
        let try_step = |step: &[f64]| {
            let mut trial = u.axpy(1.0, &ScalarField::from_vec(grid, step.to_vec()).expect("same grid")).expect("same grid");
            ws.project(trial.data_mut());
            let (gt, overflow) = ws.gradient(&trial);
            let mt = merit(&gt, &metric);
            (trial, gt, mt, overflow)
        };
        let mut accepted = None;
        let (trial, gt, mt, overflow) = try_step(&delta);
        if !overflow && mt.is_finite() && mt <= (1.0 - 1e-4) * m0 {
            accepted = Some((trial, gt, mt, 1.0));
        } else if !overflow && mt.is_finite() {
            // Along a curved valley of near-solutions the straight step leaves
            // the valley quadratically; one corrector solve with the same
            // operator at the trial residual steers back into it.
            let rhs2: Vec<f64> = gt.iter().map(|x| -x).collect();
            let mut corr = vec![0.0; rhs2.len()];
            gmres(&apply, &pre, &rhs2, &mut corr, &metric, 1e-8, 60, 600);
            ws.project(&mut corr);
            let combined: Vec<f64> = delta.iter().zip(&corr).map(|(a, b)| a + b).collect();
            if combined.iter().all(|x| x.is_finite()) {
                let (trial, gt, mt, overflow) = try_step(&combined);
                if !overflow && mt.is_finite() && mt <= (1.0 - 1e-4) * m0 {
                    accepted = Some((trial, gt, mt, 1.0));
                }
            }
        }
        let mut t = opts.damping;
        while accepted.is_none() && t > 1e-10 {
            let scaled: Vec<f64> = delta.iter().map(|x| t * x).collect();
            let (trial, gt, mt, overflow) = try_step(&scaled);
            if !overflow && mt.is_finite() && mt <= (1.0 - 1e-4 * t) * m0 {
                accepted = Some((trial, gt, mt, t));
            }
            t *= opts.damping;
        }
        match accepted {
            Some((trial, gt, mt, t)) => {
                u = trial;
                g = gt;
                m0 = mt;
                res = Residual::from_gradient(grid, &g, false);
                log.push(log_row(it, &res, ws.energy(&u).i_value, &u, t));
            }
            None => {
                status = if out.converged { SolveStatus::LineSearchFailed } else { SolveStatus::SingularJacobian };
                break;
            }
        }
    }
    if status == SolveStatus::MaxIterations && res.norm() <= opts.tol_residual {
        status = SolveStatus::Converged;
    }
    make_record(ws, u, iterations, status, log)
}

/// Descent on `I_eps` along `w = -(A + M)^{-1} grad`, with Armijo
/// backtracking on the energy; every accepted step lowers `I_eps`.
pub fn gradient_flow(u0: &ScalarField, c: &PerturbedCoeffs, opts: &SolverOptions) -> Result<SolutionRecord> {
    opts.validate()?;
    check_start(u0, c)?;
    let ws = Workspace::new(c, opts.symmetry)?;
    let grid = ws.grid();
    let mut u = ws.project_field(u0);
    let mut e = ws.energy(&u);
    let (mut g, _) = ws.gradient(&u);
    let mut res = Residual::from_gradient(grid, &g, false);
    let mut log = vec![log_row(0, &res, e.i_value, &u, 0.0)];
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    // Descent converges linearly, so a small residual alone can leave the
    // iterate well short of the critical point; the next correction must be
    // below tolerance too.
    let correction = |g: &[f64]| {
        let mut w: Vec<f64> = ws.gram.solve(g).iter().map(|x| -x).collect();
        ws.project(&mut w);
        w
    };
    let settled = |res: &Residual, w: &[f64]| res.norm() <= opts.tol_residual && w.iter().all(|x| x.abs() <= opts.tol_residual);
    for it in 1..=opts.max_iters {
        let w = correction(&g);
        if settled(&res, &w) {
            status = SolveStatus::Converged;
            break;
        }
        iterations = it;
        let slope = sum::dot(&g, &w);
        let dir = ScalarField::from_vec(grid, w).expect("same grid");
        let mut t = opts.flow_step;
        let mut accepted = None;
        while t > 1e-14 {
            let trial = u.axpy(t, &dir).expect("same grid");
            let et = ws.energy(&trial);
            if !et.overflow && et.i_value <= e.i_value + 1e-4 * t * slope {
                accepted = Some((trial, et));
                break;
            }
            t *= opts.damping;
        }
        match accepted {
            Some((trial, et)) => {
                u = trial;
                e = et;
                let (gn, _) = ws.gradient(&u);
                g = gn;
                res = Residual::from_gradient(grid, &g, false);
                log.push(log_row(it, &res, e.i_value, &u, t));
            }
            None => {
                status = if ws.energy(&u.axpy(1e-14, &dir).expect("same grid")).overflow {
                    SolveStatus::Overflow
                } else {
                    SolveStatus::LineSearchFailed
                };
                break;
            }
        }
    }
    if status == SolveStatus::MaxIterations && settled(&res, &correction(&g)) {
        status = SolveStatus::Converged;
    }
    let mut rec = make_record(&ws, u, iterations, status, log);
    if rec.converged && opts.compute_morse {
        rec.morse_index_g = Some(morse_index_g(&rec.u, c, opts.symmetry, opts.n_eigs)?.index);
    }
    Ok(rec)
}

/// Default start of the continuation: the tilde of the radial bubble whose
/// boundary curvature matches the mean deficit when it exceeds one, else zero.
pub fn default_start(spec: &CurvatureSpec, grid: Grid) -> Result<ScalarField> {
    let (k, h) = eval_curvatures(spec, grid)?;
    let report = check_hypotheses(spec, grid, None)?;
    if !report.h2 || !k.data().iter().all(|&x| x < 0.0) {
        return Ok(ScalarField::zeros(grid));
    }
    let kb = k.boundary();
    let mean_deficit = sum::sum(h.data().iter().zip(kb.data()).map(|(hv, kv)| hv / kv.abs().sqrt())) / grid.n_theta() as f64;
    if !(mean_deficit > 1.0) {
        return Ok(ScalarField::zeros(grid));
    }
    let mu = hyperbolic_mu(mean_deficit)?;
    let mut u = tilde(&radial_bubble(mu, grid)?, &k)?;
    spec.group.project_in_place(grid, u.data_mut())?;
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationResult {
    pub records: Vec<SolutionRecord>,
    /// Some stage did not converge; later stages started from its best iterate.
    pub chain_broken: bool,
}

/// Newton along the decreasing `eps` schedule, each stage warm-started from
/// the previous one. The group of the options is replaced by the data's group
/// when the options leave it trivial.
pub fn continuation_solve(spec: &CurvatureSpec, grid: Grid, opts: &SolverOptions) -> Result<ContinuationResult> {
    continuation_from(spec, grid, &default_start(spec, grid)?, opts)
}

pub fn continuation_from(spec: &CurvatureSpec, grid: Grid, u0: &ScalarField, opts: &SolverOptions) -> Result<ContinuationResult> {
    opts.validate()?;
    let mut opts = opts.clone();
    if opts.symmetry == SymmetryGroup::Trivial {
        opts.symmetry = spec.group;
    }
    let (k, h) = eval_curvatures(spec, grid)?;
    let mut u = u0.clone();
    let mut records = Vec::with_capacity(opts.eps_schedule.len());
    let mut chain_broken = false;
    for &eps in &opts.eps_schedule {
        let c = perturbed_coeffs(&k, &h, eps)?;
        let rec = newton_solve(&u, &c, &opts)?;
        chain_broken |= !rec.converged;
        u = rec.u.clone();
        records.push(rec);
    }
    Ok(ContinuationResult { records, chain_broken })
}

#[cfg(test)]
mod tests;
