use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::collections::BTreeMap;

use super::mountain::{level_lower_bound, C_NORM};
use super::*;
use crate::curvature::{HDef, KDef};
use crate::test_functions::concentrated_endpoint;
use crate::grid::BoundaryField;
use crate::radial::hyperbolic_u;

fn constant_data(grid: Grid, k: f64, h: f64) -> (ScalarField, BoundaryField) {
    (ScalarField::constant(grid, k), BoundaryField::constant(grid, h))
}

fn exact(grid: Grid, mu: f64) -> ScalarField {
    ScalarField::from_fn(grid, |r, _| hyperbolic_u(mu, r))
}

fn noisy(u: &ScalarField, amp: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = u.data().iter().map(|x| x + amp * rng.gen_range(-1.0..1.0)).collect();
    ScalarField::from_vec(u.grid(), data).unwrap()
}

fn radial_spec(k: f64, h: f64) -> CurvatureSpec {
    CurvatureSpec::constant(k, h, SymmetryGroup::FullRotation)
}

fn cyclic_spec() -> CurvatureSpec {
    let mut modes = BTreeMap::new();
    modes.insert(0, (1.8, 0.0));
    modes.insert(2, (0.3, 0.0));
    CurvatureSpec::new(KDef::Constant(-1.0), HDef::FourierCosSin(modes), SymmetryGroup::cyclic(2).unwrap()).unwrap()
}

fn gauss_bonnet_bound(rec: &SolutionRecord, c: &PerturbedCoeffs, tol: f64) -> f64 {
    let weighted = c.h_eff.zip_map(&rec.u.boundary(), |h, u| h.abs() * (0.5 * u).exp()).unwrap();
    10.0 * tol * (1.0 + crate::disk::integrate_boundary(&weighted))
}

#[test]
fn newton_recovers_exact_solution_at_second_order() {
    let mut errors = Vec::new();
    for n in [64usize, 128] {
        let grid = Grid::new(n, 2 * n).unwrap();
        let (k, h) = constant_data(grid, -1.0, 1.25);
        let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
        let ue = exact(grid, 2.0);
        let opts = SolverOptions::default();
        let rec = newton_solve(&noisy(&ue, 0.1, 7), &c, &opts).unwrap();
        assert!(rec.converged, "{:?}", rec.status);
        assert!(rec.residual_norm() <= opts.tol_residual);
        assert!(rec.gauss_bonnet_residual.abs() <= gauss_bonnet_bound(&rec, &c, opts.tol_residual));
        errors.push(rec.u.max_abs_diff(&ue).unwrap());
    }
    assert!(errors[1] <= 1e-3, "{errors:?}");
    assert!((errors[0] / errors[1]).log2() >= 1.9, "{errors:?}");
}

#[test]
fn newton_fails_in_the_nonexistence_regime() {
    let grid = Grid::new(32, 64).unwrap();
    let (k, h) = constant_data(grid, -1.0, 1.0);
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let opts = SolverOptions { max_iters: 30, ..Default::default() };
    for seed in 0..3u64 {
        let rec = newton_solve(&noisy(&ScalarField::zeros(grid), 0.5, seed), &c, &opts).unwrap();
        assert!(!rec.converged);
        assert!(rec.residual_norm() > opts.tol_residual);
        assert!(rec.max_u.is_finite());
    }
}

#[test]
fn symmetric_data_gives_symmetric_iterates() {
    let grid = Grid::new(32, 64).unwrap();
    let spec = cyclic_spec();
    let (k, h) = eval_curvatures(&spec, grid).unwrap();
    let c = perturbed_coeffs(&k, &h, 0.1).unwrap();
    let opts = SolverOptions { symmetry: spec.group, ..Default::default() };
    let rec = newton_solve(&noisy(&ScalarField::zeros(grid), 0.3, 3), &c, &opts).unwrap();
    assert!(rec.converged);
    let sym = crate::curvature::symmetrize(&rec.u, spec.group).unwrap();
    assert!(rec.u.max_abs_diff(&sym).unwrap() <= 1e-10);
}

#[test]
fn gradient_flow_descends_and_agrees_with_newton() {
    // A large eps makes the functional coercive, so the flow has a minimizer to reach.
    let grid = Grid::new(32, 64).unwrap();
    let spec = cyclic_spec();
    let (k, h) = eval_curvatures(&spec, grid).unwrap();
    let c = perturbed_coeffs(&k, &h, 5.0).unwrap();
    let tol = 1e-9;
    let opts = SolverOptions { max_iters: 3000, tol_residual: tol, symmetry: spec.group, ..Default::default() };
    let flow = gradient_flow(&ScalarField::zeros(grid), &c, &opts).unwrap();
    assert!(flow.converged, "{:?} after {}", flow.status, flow.iterations);
    assert!(flow.log.windows(2).all(|w| w[1].energy <= w[0].energy));
    let newton = newton_solve(&ScalarField::zeros(grid), &c, &opts).unwrap();
    assert!(newton.converged);
    let diff = flow.u.max_abs_diff(&newton.u).unwrap();
    assert!(diff <= 5.0 * tol, "{diff:e}");
    let m = morse_index_g(&newton.u, &c, spec.group, 3).unwrap();
    assert_eq!(m.index, 0);
}

#[test]
fn gradient_flow_from_a_low_constant_runs_off() {
    let grid = Grid::new(32, 64).unwrap();
    let (k, h) = constant_data(grid, -1.0, 1.5);
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let opts = SolverOptions { max_iters: 200, symmetry: SymmetryGroup::FullRotation, ..Default::default() };
    let u0 = ScalarField::constant(grid, -5.0);
    let rec = gradient_flow(&u0, &c, &opts).unwrap();
    let first = rec.log.first().unwrap();
    let last = rec.log.last().unwrap();
    assert!(rec.log.windows(2).all(|w| w[1].energy <= w[0].energy));
    // Radial fields cannot concentrate at a boundary point; the flow leaves
    // along the constants, where the energy is unbounded below as well.
    assert!(!rec.converged);
    assert!(last.energy < first.energy - 1e3 && last.max_u < first.max_u - 100.0, "{last:?}");
}

#[test]
fn continuation_reaches_the_exact_solution() {
    let grid = Grid::new(128, 64).unwrap();
    let opts = SolverOptions { eps_schedule: vec![0.5, 0.25, 0.1, 0.05, 0.0], ..Default::default() };
    let out = continuation_solve(&radial_spec(-1.0, 1.25), grid, &opts).unwrap();
    // No radial solution exists at eps = 0.5 for this data (the shooting
    // mismatch stays positive), so the first stage fails and the chain
    // recovers from its best iterate.
    assert!(!out.records[0].converged);
    assert!(out.chain_broken);
    assert!(out.records[1..].iter().all(|r| r.converged));
    let last = out.records.last().unwrap();
    assert_eq!(last.eps, 0.0);
    assert!(last.u.max_abs_diff(&exact(grid, 2.0)).unwrap() <= 1e-3);
}

#[test]
fn single_stage_continuation_is_newton() {
    let grid = Grid::new(32, 64).unwrap();
    let spec = radial_spec(-1.0, 1.25);
    let opts = SolverOptions { eps_schedule: vec![0.0], ..Default::default() };
    let out = continuation_solve(&spec, grid, &opts).unwrap();
    let (k, h) = eval_curvatures(&spec, grid).unwrap();
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let direct = newton_solve(&default_start(&spec, grid).unwrap(), &c, &SolverOptions { symmetry: spec.group, ..opts }).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].u, direct.u);
}

#[test]
fn existence_pipeline_on_cyclic_data() {
    let grid = Grid::new(64, 128).unwrap();
    let spec = cyclic_spec();
    let opts = SolverOptions { compute_morse: true, ..Default::default() };
    let out = continuation_solve(&spec, grid, &opts).unwrap();
    assert!(!out.chain_broken);
    for rec in &out.records {
        let (k, h) = eval_curvatures(&spec, grid).unwrap();
        let c = perturbed_coeffs(&k, &h, rec.eps).unwrap();
        assert!(rec.gauss_bonnet_residual.abs() <= gauss_bonnet_bound(rec, &c, opts.tol_residual));
        assert!(rec.morse_index_g.unwrap() <= 1);
    }
    let (k, h) = eval_curvatures(&spec, grid).unwrap();
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let ua = ScalarField::constant(grid, -8.0);
    let below = crate::energy::energy_i(&ua, &k, &h).unwrap().i_value - 1.0;
    let (_, _, ub) = concentrated_endpoint(&k, &h, spec.group, below, 2.0 * std::f64::consts::PI / h.max()).unwrap();
    let mp_opts = MountainPassOptions { solver: SolverOptions { symmetry: spec.group, compute_morse: true, ..Default::default() }, ..Default::default() };
    let mp = mountain_pass(&ua, &ub, &c, &mp_opts).unwrap();
    let cp = &mp.critical_point;
    assert!(cp.converged);
    assert!(cp.morse_index_g.unwrap() <= 1);
    assert!(mp.level > mp.endpoint_energies.0.max(mp.endpoint_energies.1));
    let bound = mp.lower_bound.expect("endpoints straddle the separating length");
    assert!(mp.level >= bound.value);
    assert!(cp.u.max_abs_diff(&out.records.last().unwrap().u).unwrap() <= 1e-6);
}

#[test]
fn mountain_pass_finds_the_exact_solution() {
    let grid = Grid::new(128, 16).unwrap();
    let group = SymmetryGroup::FullRotation;
    let (k, h) = constant_data(grid, -1.0, 1.25);
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let ua = ScalarField::constant(grid, -8.0);
    let below = crate::energy::energy_i(&ua, &k, &h).unwrap().i_value - 1.0;
    let (_, _, ub) = concentrated_endpoint(&k, &h, group, below, 2.0 * std::f64::consts::PI / 1.25).unwrap();
    let opts = MountainPassOptions { solver: SolverOptions { symmetry: group, ..Default::default() }, ..Default::default() };
    let mp = mountain_pass(&ua, &ub, &c, &opts).unwrap();
    let cp = &mp.critical_point;
    assert!(cp.converged && cp.residual_norm() <= opts.solver.tol_residual);
    assert!(mp.level > mp.endpoint_energies.0.max(mp.endpoint_energies.1));
    assert!(mp.level >= mp.lower_bound.unwrap().value);
    // Same discretization error as Newton on this grid.
    assert!(cp.u.max_abs_diff(&exact(grid, 2.0)).unwrap() <= 1e-3);
}

#[test]
fn endpoint_above_the_ridge_collapses_the_path() {
    let grid = Grid::new(16, 8).unwrap();
    let (k, h) = constant_data(grid, -1.0, 1.25);
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let opts = MountainPassOptions { solver: SolverOptions { symmetry: SymmetryGroup::FullRotation, ..Default::default() }, ..Default::default() };
    let ua = ScalarField::constant(grid, -8.0);
    let ub = ScalarField::constant(grid, -7.0);
    assert!(matches!(mountain_pass(&ua, &ub, &c, &opts), Err(Error::PathCollapse(_))));
}

#[test]
fn lower_bound_constant() {
    let two_pi = 2.0 * std::f64::consts::PI;
    assert!((C_NORM - 8.0 * std::f64::consts::PI * two_pi.ln()).abs() < 1e-12);
    // Optimal separating length for max h = 1: 8 pi log(2 pi) - 8 pi - C_NORM = -8 pi.
    assert!((level_lower_bound(two_pi, 1.0) + 8.0 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn morse_index_at_the_exact_solutions() {
    let grid = Grid::new(64, 16).unwrap();
    let group = SymmetryGroup::FullRotation;
    let (k, h) = constant_data(grid, -1.0, 1.25);
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let u = exact(grid, 2.0);
    let q1 = crate::energy::quadratic_form_q(&u, &c, &ScalarField::constant(grid, 1.0)).unwrap();
    assert!((q1 / (-2.0 * std::f64::consts::PI / 3.0) - 1.0).abs() <= 1e-2);
    let m = morse_index_g(&u, &c, group, 4).unwrap();
    assert!(m.index >= 1, "{:?}", m.eigenvalues);
    assert!(m.eigenvector_means[0].abs() > 1e-3);
    assert!(m.eigenvalues.windows(2).all(|w| w[0] <= w[1]));

    let mu: f64 = 1.2;
    let (k, h) = constant_data(grid, -1.0, (mu * mu + 1.0) / (2.0 * mu));
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let u = exact(grid, mu);
    let q1 = crate::energy::quadratic_form_q(&u, &c, &ScalarField::constant(grid, 1.0)).unwrap();
    let expected = 2.0 * std::f64::consts::PI * (3.0 - mu * mu) / (mu * mu - 1.0);
    assert!(q1 > 0.0 && (q1 / expected - 1.0).abs() <= 1e-2, "{q1} vs {expected}");
}

#[test]
fn deep_negative_field_has_only_the_constant_direction() {
    // Q(1) = 2 pi e^u - 2 pi h e^(u/2) < 0 for every constant u < 2 log h,
    // however small; every other direction sees the Dirichlet form.
    let grid = Grid::new(16, 16).unwrap();
    let (k, h) = constant_data(grid, -1.0, 1.25);
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let u = ScalarField::constant(grid, -20.0);
    let m = morse_index_g(&u, &c, SymmetryGroup::Trivial, 3).unwrap();
    let q1 = 2.0 * std::f64::consts::PI * ((-20.0f64).exp() - 1.25 * (-10.0f64).exp());
    assert_eq!(m.index, 1);
    // G(1, 1) is the disk area.
    assert!((m.eigenvalues[0] / (q1 / std::f64::consts::PI) - 1.0).abs() < 1e-3, "{:?}", m.eigenvalues);
    assert!(m.eigenvalues[1] > 0.01);
    assert_eq!(m.eigenvalues.len(), 3);
}

#[test]
fn morse_index_is_invariant_under_rescaling() {
    let grid = Grid::new(16, 16).unwrap();
    let (k, h) = constant_data(grid, -1.0, 1.25);
    let u = exact(grid, 2.0);
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let lambda: f64 = 2.0;
    let (k2, h2) = crate::curvature::rescale_curvatures(&k, &h, lambda).unwrap();
    let c2 = perturbed_coeffs(&k2, &h2, 0.0).unwrap();
    let u2 = u.map(|x| x - 2.0 * lambda.ln());
    let a = morse_index_g(&u, &c, SymmetryGroup::Trivial, 6).unwrap();
    let b = morse_index_g(&u2, &c2, SymmetryGroup::Trivial, 6).unwrap();
    assert_eq!(a.index, b.index);
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
    }
}

#[test]
fn options_validate_and_deserialize() {
    let opts: SolverOptions = serde_json::from_str("{}").unwrap();
    assert_eq!(opts, SolverOptions::default());
    assert!(opts.validate().is_ok());
    assert!(serde_json::from_str::<SolverOptions>(r#"{"tolerance": 1}"#).is_err());
    let sym: SolverOptions = serde_json::from_str(r#"{"symmetry": {"kind": "cyclic", "k": 2}}"#).unwrap();
    assert_eq!(sym.symmetry, SymmetryGroup::Cyclic { k: 2 });
    for bad in [
        SolverOptions { tol_residual: 0.0, ..Default::default() },
        SolverOptions { damping: 1.0, ..Default::default() },
        SolverOptions { eps_schedule: vec![0.1, 0.2, 0.0], ..Default::default() },
        SolverOptions { eps_schedule: vec![0.1], ..Default::default() },
        SolverOptions { n_eigs: 2, ..Default::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::InvalidOptions(_))));
    }
}

#[test]
fn newton_rejects_bad_input() {
    let grid = Grid::new(8, 8).unwrap();
    let (k, h) = constant_data(grid, -1.0, 1.25);
    let c = perturbed_coeffs(&k, &h, 0.0).unwrap();
    let bad = ScalarField::constant(grid, f64::NAN);
    assert!(matches!(newton_solve(&bad, &c, &SolverOptions::default()), Err(Error::NonFinite(_))));
    let other = ScalarField::zeros(Grid::new(8, 16).unwrap());
    assert!(newton_solve(&other, &c, &SolverOptions::default()).is_err());
}

