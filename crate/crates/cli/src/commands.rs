//! One function per subcommand. Each writes its artifacts into the staging
//! directory and reports whether the run produced what it was asked for.

use conformal_disk::curvature::{check_hypotheses, deficit, default_deficit_tol, default_derivative_tol, eval_curvatures, CurvatureSpec};
use conformal_disk::diagnostics::{blow_up_candidates, gauss_bonnet_residual, lebedev_milin_gap};
use conformal_disk::energy::{energy_j, perturbed_coeffs, perturbed_energy, residual};
use conformal_disk::io::{self, BubbleScanRow};
use conformal_disk::radial::{gauss_bonnet_residual as radial_gauss_bonnet, pohozaev_residual, solve_radial, RadialCoeffs, RadialProfile};
use conformal_disk::solvers::{continuation_solve, morse_index_g, mountain_pass, newton_solve, SolutionRecord};
use conformal_disk::test_functions::{concentrated_endpoint, unboundedness_scan};
use conformal_disk::{Error, Grid, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::output::Staging;

/// Whether a finished command found what it looked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    NotConverged,
}

impl Outcome {
    fn from_flag(ok: bool) -> Self {
        if ok {
            Self::Completed
        } else {
            Self::NotConverged
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::NotConverged => "not_converged",
        }
    }
}

pub fn run(command: Command, cfg: &RunConfig, out: &Staging) -> conformal_disk::Result<Outcome> {
    let grid = match (command, &cfg.field) {
        (Command::Diagnose, Some(path)) => ScalarField::read_snapshot(path)?.grid(),
        _ => Grid::new(cfg.grid.n_r, cfg.grid.n_theta)?,
    };
    let spec = cfg.curvature_spec(grid).map_err(|e| match e {
        crate::config::ConfigError::Library(e) => e,
        other => Error::Parse(other.to_string()),
    })?;
    let hypotheses = check_hypotheses(&spec, grid, None)?;
    let (outcome, details) = match command {
        Command::Solve => solve(cfg, &spec, grid, out)?,
        Command::SolveRadial => radial(cfg, &spec, grid, out, command)?,
        Command::NonexistenceScan => nonexistence(cfg, &spec, grid, out)?,
        Command::MountainPass => pass(cfg, &spec, grid, out)?,
        Command::BubbleScan => bubbles(cfg, &spec, grid, out)?,
        Command::Diagnose => diagnose(cfg, &spec, grid, out)?,
        Command::CheckHypotheses => hypothesis_tables(&spec, grid, out)?,
    };
    let report = json!({
        "command": command,
        "status": outcome.label(),
        "grid": { "n_r": grid.n_r(), "n_theta": grid.n_theta() },
        "config": cfg,
        "hypotheses": hypotheses,
        "result": details,
    });
    io::write_json(&out.path("report.json"), &report)?;
    Ok(outcome)
}

type Step = conformal_disk::Result<(Outcome, Value)>;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize to JSON")
}

fn record_summary(rec: &SolutionRecord, spec: &CurvatureSpec, grid: Grid) -> conformal_disk::Result<Value> {
    let (k, h) = eval_curvatures(spec, grid)?;
    let c = perturbed_coeffs(&k, &h, rec.eps)?;
    let gb = gauss_bonnet_residual(&rec.u, &c.k_eff, &c.h_eff, c.chi())?;
    let mut v = to_value(rec);
    v["coefficients"] = to_value(&c.summary());
    v["gauss_bonnet"] = to_value(&gb);
    v["chi"] = json!(c.chi());
    Ok(v)
}

fn solve(cfg: &RunConfig, spec: &CurvatureSpec, grid: Grid, out: &Staging) -> Step {
    let result = continuation_solve(spec, grid, &cfg.solver_options())?;
    let mut stages = Vec::new();
    for (i, rec) in result.records.iter().enumerate() {
        io::write_record(out.dir(), &format!("stage_{i}"), rec)?;
        stages.push(record_summary(rec, spec, grid)?);
    }
    let last = result.records.last().expect("the schedule ends at eps = 0");
    io::write_record(out.dir(), "solution", last)?;
    let details = json!({
        "chain_broken": result.chain_broken,
        "converged": last.converged,
        "gauss_bonnet_residual": last.gauss_bonnet_residual,
        "residual_norm": last.residual_norm(),
        "energy": last.energy,
        "morse_index_g": last.morse_index_g,
        "stages": stages,
    });
    Ok((Outcome::from_flag(last.converged), details))
}

#[derive(Serialize)]
struct RootSummary {
    a: f64,
    u_boundary: f64,
    u_prime_boundary: f64,
    mismatch: f64,
    pohozaev_residual: f64,
    gauss_bonnet_residual: f64,
}

fn root_summary(p: &RadialProfile) -> RootSummary {
    RootSummary {
        a: p.a,
        u_boundary: p.u_boundary(),
        u_prime_boundary: p.u_prime_boundary(),
        mismatch: p.mismatch(),
        pohozaev_residual: pohozaev_residual(p),
        gauss_bonnet_residual: radial_gauss_bonnet(p),
    }
}

fn radial(cfg: &RunConfig, spec: &CurvatureSpec, grid: Grid, out: &Staging, command: Command) -> Step {
    let c = RadialCoeffs::from_spec(spec, cfg.eps)?;
    let solved = solve_radial(&c, cfg.a_bracket(command), &cfg.radial.into())?;
    io::write_csv(&out.path("scan.csv"), &solved.scan)?;
    let mut roots = Vec::new();
    for (i, p) in solved.roots.iter().enumerate() {
        io::write_csv(&out.path(&format!("profile_{i}.csv")), io::profile_rows(p))?;
        p.to_field(grid).write_snapshot(&out.path(&format!("profile_{i}.snapshot")))?;
        roots.push(root_summary(p));
    }
    let details = json!({
        "eps": cfg.eps,
        "chi": c.chi(),
        "a_bracket": cfg.a_bracket(command),
        "min_mismatch": solved.min_mismatch(),
        "roots": roots,
    });
    Ok((Outcome::from_flag(!solved.roots.is_empty()), details))
}

/// A smooth random start: a constant plus low Fourier modes.
fn random_start(grid: Grid, rng: &mut ChaCha8Rng) -> (f64, ScalarField) {
    let level = rng.gen_range(-4.0..1.0);
    let modes: Vec<(f64, f64)> = (1..=3).map(|_| (rng.gen_range(-0.3..0.3), rng.gen_range(0.0..std::f64::consts::TAU))).collect();
    let u = ScalarField::from_fn(grid, |r, t| {
        level + modes.iter().enumerate().map(|(m, (amp, phase))| amp * r.powi(m as i32 + 1) * ((m + 1) as f64 * t + phase).cos()).sum::<f64>()
    });
    (level, u)
}

#[derive(Serialize)]
struct StartRow {
    start: usize,
    level: f64,
    status: String,
    converged: bool,
    iterations: usize,
    residual: f64,
    max_u: f64,
}

fn nonexistence(cfg: &RunConfig, spec: &CurvatureSpec, grid: Grid, out: &Staging) -> Step {
    let mut found = false;
    let mut radial_part = Value::Null;
    if let Ok(c) = RadialCoeffs::from_spec(spec, cfg.eps) {
        let bracket = cfg.a_bracket(Command::NonexistenceScan);
        let solved = solve_radial(&c, bracket, &cfg.radial.into())?;
        io::write_csv(&out.path("scan.csv"), &solved.scan)?;
        found |= !solved.roots.is_empty();
        radial_part = json!({
            "a_bracket": bracket,
            "min_mismatch": solved.min_mismatch(),
            "roots": solved.roots.iter().map(root_summary).collect::<Vec<_>>(),
        });
    }
    let (k, h) = eval_curvatures(spec, grid)?;
    let c = perturbed_coeffs(&k, &h, cfg.eps)?;
    let opts = cfg.solver_options();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for start in 0..cfg.n_starts {
        let (level, u0) = random_start(grid, &mut rng);
        let rec = newton_solve(&u0, &c, &opts)?;
        if rec.converged {
            found = true;
            io::write_record(out.dir(), &format!("start_{start}"), &rec)?;
        }
        rows.push(StartRow {
            start,
            level,
            status: to_value(&rec.status).as_str().unwrap_or_default().to_string(),
            converged: rec.converged,
            iterations: rec.iterations,
            residual: rec.residual_norm(),
            max_u: rec.max_u,
        });
    }
    io::write_csv(&out.path("newton_starts.csv"), &rows)?;
    let details = json!({
        "radial": radial_part,
        "seed": cfg.seed,
        "newton_starts": rows,
        "any_converged": rows.iter().any(|r| r.converged),
        "solution_found": found,
    });
    Ok((Outcome::from_flag(found), details))
}

fn pass(cfg: &RunConfig, spec: &CurvatureSpec, grid: Grid, out: &Staging) -> Step {
    let (k, h) = eval_curvatures(spec, grid)?;
    let c = perturbed_coeffs(&k, &h, cfg.eps)?;
    let ua = ScalarField::constant(grid, cfg.mountain_pass.low_endpoint);
    let below = conformal_disk::energy::energy_i(&ua, &k, &h)?.i_value - 1.0;
    let separating_length = 2.0 * std::f64::consts::PI / h.max();
    let (mu, family, ub) = concentrated_endpoint(&k, &h, spec.group, below, separating_length)?;
    ua.write_snapshot(&out.path("endpoint_low.snapshot"))?;
    ub.write_snapshot(&out.path("endpoint_high.snapshot"))?;
    let endpoint = json!({ "mu": mu, "family": family });
    match mountain_pass(&ua, &ub, &c, &cfg.mountain_pass_options()) {
        Ok(mp) => {
            #[derive(Serialize)]
            struct PathRow {
                node: usize,
                energy: f64,
            }
            io::write_csv(&out.path("path_energies.csv"), mp.path_energies.iter().enumerate().map(|(node, &energy)| PathRow { node, energy }))?;
            io::write_record(out.dir(), "critical_point", &mp.critical_point)?;
            let mut details = to_value(&mp);
            details["critical_point"] = record_summary(&mp.critical_point, spec, grid)?;
            details["concentrated_endpoint"] = endpoint;
            Ok((Outcome::from_flag(mp.critical_point.converged), details))
        }
        Err(Error::PathCollapse(msg)) => Ok((Outcome::NotConverged, json!({ "path_collapse": msg, "concentrated_endpoint": endpoint }))),
        Err(e) => Err(e),
    }
}

fn strictly(values: &[f64], cmp: fn(f64, f64) -> bool) -> bool {
    values.windows(2).all(|w| cmp(w[0], w[1]))
}

fn bubbles(cfg: &RunConfig, spec: &CurvatureSpec, grid: Grid, out: &Staging) -> Step {
    let (k, h) = eval_curvatures(spec, grid)?;
    let rows = unboundedness_scan(&k, &h, cfg.family(), &cfg.mu_schedule())?;
    let flat: Vec<BubbleScanRow> = rows.iter().map(BubbleScanRow::from).collect();
    io::write_csv(&out.path("bubble_scan.csv"), &flat)?;
    let energies: Vec<f64> = flat.iter().map(|r| r.energy).collect();
    let details = json!({
        "family": cfg.family(),
        "rows": flat,
        "strictly_decreasing": strictly(&energies, |a, b| b < a),
        "strictly_increasing": strictly(&energies, |a, b| b > a),
    });
    Ok((Outcome::Completed, details))
}

fn diagnose(cfg: &RunConfig, spec: &CurvatureSpec, grid: Grid, out: &Staging) -> Step {
    let u = ScalarField::read_snapshot(cfg.field.as_deref().expect("validated"))?;
    let (k, h) = eval_curvatures(spec, grid)?;
    let c = perturbed_coeffs(&k, &h, cfg.eps)?;
    let energy = perturbed_energy(&u, &c)?;
    let res = residual(&u, &c)?;
    let gb = gauss_bonnet_residual(&u, &c.k_eff, &c.h_eff, c.chi())?;
    let blow_up = match deficit(&k, &h) {
        Ok(d) => to_value(&blow_up_candidates(&d, default_deficit_tol(&d), default_derivative_tol(&d))),
        Err(_) => Value::Null,
    };
    let morse = if cfg.solver.compute_morse { to_value(&morse_index_g(&u, &c, spec.group, cfg.solver.n_eigs)?) } else { Value::Null };
    let converged = res.norm() <= cfg.solver.tol_residual;
    u.write_snapshot(&out.path("field.snapshot"))?;
    let details = json!({
        "eps": cfg.eps,
        "energy": energy,
        "i_eps": c.scale() * energy.i_value,
        "j": energy_j(&u, &k)?.value,
        "residual_norms": [res.interior_norm(), res.boundary_norm()],
        "residual_norm": res.norm(),
        "is_critical_point": converged,
        "gauss_bonnet": gb,
        "chi": c.chi(),
        "coefficients": c.summary(),
        "lebedev_milin_gap": lebedev_milin_gap(&u),
        "max_u": u.max(),
        "blow_up_candidates": blow_up,
        "morse": morse,
    });
    Ok((Outcome::Completed, details))
}

fn hypothesis_tables(spec: &CurvatureSpec, grid: Grid, out: &Staging) -> Step {
    let (k, h) = eval_curvatures(spec, grid)?;
    let mut details = json!({ "deficit_available": false });
    if let Ok(d) = deficit(&k, &h) {
        #[derive(Serialize)]
        struct DeficitRow {
            theta: f64,
            h: f64,
            k_boundary: f64,
            deficit: f64,
            derivative: f64,
        }
        let kb = k.boundary();
        let rows = (0..grid.n_theta()).map(|i| DeficitRow {
            theta: grid.theta(i),
            h: h.data()[i],
            k_boundary: kb.data()[i],
            deficit: d.values.data()[i],
            derivative: d.tangential_derivative.data()[i],
        });
        io::write_csv(&out.path("deficit.csv"), rows)?;
        details = json!({
            "deficit_available": true,
            "blow_up_candidates": blow_up_candidates(&d, default_deficit_tol(&d), default_derivative_tol(&d)),
        });
    }
    Ok((Outcome::Completed, details))
}
