use std::f64::consts::PI;

use conformal_disk::curvature::{check_hypotheses, deficit, rescale_curvatures, symmetrize, CurvatureSpec, HDef, KDef, SymmetryGroup};
use conformal_disk::diagnostics::lebedev_milin_gap;
use conformal_disk::energy::{energy_eps, perturbed_coeffs, residual};
use conformal_disk::radial::{shoot, RadialCoeffs};
use conformal_disk::{BoundaryField, Grid, ScalarField};
use proptest::prelude::*;

/// Coefficients of `sum_m r^m (a_m cos m theta + b_m sin m theta)` plus a radial `r^2` term.
fn band_limited() -> impl Strategy<Value = (Vec<(f64, f64)>, f64)> {
    (prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64), 1..7), -1.0..1.0f64)
}

fn field(grid: Grid, modes: &[(f64, f64)], radial: f64) -> ScalarField {
    ScalarField::from_fn(grid, |r, t| {
        radial * r * r + modes.iter().enumerate().map(|(m, (a, b))| r.powi(m as i32) * (a * (m as f64 * t).cos() + b * (m as f64 * t).sin())).sum::<f64>()
    })
}

fn negative_k(grid: Grid, base: f64, modes: &[(f64, f64)]) -> ScalarField {
    // Strictly below -base/2 everywhere since the perturbation is at most base/2.
    let total: f64 = modes.iter().map(|(a, b)| a.abs() + b.abs()).sum::<f64>().max(1e-300);
    let scale = 0.5 * base / total;
    ScalarField::from_fn(grid, |r, t| {
        -base + scale * modes.iter().enumerate().map(|(m, (a, b))| r.powi(m as i32) * (a * (m as f64 * t).cos() + b * (m as f64 * t).sin())).sum::<f64>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deficit_is_invariant_under_rescaling((modes, _) in band_limited(), base in 0.2..3.0f64, h0 in 0.1..2.0f64, lambda in 1e-3..1e3f64) {
        let grid = Grid::new(8, 32).unwrap();
        let k = negative_k(grid, base, &modes);
        let h = BoundaryField::from_fn(grid, |t| h0 + 0.3 * t.sin());
        let (ks, hs) = rescale_curvatures(&k, &h, lambda).unwrap();
        let d = deficit(&k, &h).unwrap();
        let ds = deficit(&ks, &hs).unwrap();
        for (a, b) in d.values.data().iter().zip(ds.values.data()) {
            prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(1.0));
        }
    }

    #[test]
    fn symmetrize_is_an_idempotent_linear_projection(
        (modes, radial) in band_limited(),
        (modes2, radial2) in band_limited(),
        order in 2usize..5,
        full in any::<bool>(),
        alpha in -3.0..3.0f64,
    ) {
        let grid = Grid::new(8, 48).unwrap();
        let group = if full { SymmetryGroup::FullRotation } else { SymmetryGroup::cyclic(order).unwrap() };
        let f = field(grid, &modes, radial);
        let g = field(grid, &modes2, radial2);
        let pf = symmetrize(&f, group).unwrap();
        let ppf = symmetrize(&pf, group).unwrap();
        prop_assert!(ppf.max_abs_diff(&pf).unwrap() <= 1e-12 * f.norm_inf().max(1e-300));
        let combo = f.axpy(alpha, &g).unwrap();
        let lhs = symmetrize(&combo, group).unwrap();
        let rhs = pf.axpy(alpha, &symmetrize(&g, group).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * (1.0 + combo.norm_inf()));
    }

    #[test]
    fn curvature_dominating_the_boundary_data_rules_out_h2(c0 in 0.1..3.0f64, extra in 0.0..2.0f64, shrink in 0.0..1.0f64, m in 0usize..4) {
        let grid = Grid::new(8, 32).unwrap();
        let mut modes = std::collections::BTreeMap::new();
        // h = c0 (1 - shrink (1 - cos m theta) / 2) <= c0.
        modes.insert(0, (c0 * (1.0 - 0.5 * shrink), 0.0));
        if m > 0 {
            modes.insert(m, (0.5 * c0 * shrink, 0.0));
        }
        let spec = CurvatureSpec::new(KDef::RadialPolynomial(vec![-(c0 * c0) - extra, -extra]), HDef::FourierCosSin(modes), SymmetryGroup::Trivial).unwrap();
        let report = check_hypotheses(&spec, grid, None).unwrap();
        prop_assert!(!report.h2);
        prop_assert!(report.max_deficit.unwrap() <= 1.0 + report.tol);
    }

    #[test]
    fn lebedev_milin_gap_is_nonnegative((modes, radial) in band_limited()) {
        let grid = Grid::new(32, 64).unwrap();
        prop_assert!(lebedev_milin_gap(&field(grid, &modes, radial)) >= -1e-6);
    }

    #[test]
    fn residual_is_the_gradient_of_the_energy(
        (modes, radial) in band_limited(),
        (dir, dir_radial) in band_limited(),
        eps in 0.0..1.0f64,
        h0 in 0.5..2.0f64,
    ) {
        let grid = Grid::new(12, 16).unwrap();
        let k = ScalarField::from_fn(grid, |r, t| -1.0 - 0.5 * r * r * (1.0 + 0.5 * t.cos()));
        let h = BoundaryField::from_fn(grid, |t| h0 + 0.2 * (2.0 * t).cos());
        let u = field(grid, &modes, radial).map(|x| 0.3 * x);
        let v = field(grid, &dir, dir_radial);
        let c = perturbed_coeffs(&k, &h, eps).unwrap();
        let pair = residual(&u, &c).unwrap().pair(&v);
        let step = 1e-5;
        let i = |f: &ScalarField| energy_eps(f, &k, &h, eps).unwrap().value;
        let fd = (i(&u.axpy(step, &v).unwrap()) - i(&u.axpy(-step, &v).unwrap())) / (2.0 * step) / c.scale();
        let scale = v.norm_inf() * (1.0 + u.norm_inf()).exp() * 10.0;
        prop_assert!((fd - pair).abs() <= 1e-6 * scale, "{} vs {}", fd, pair);
    }

    #[test]
    fn snapshot_round_trip_is_bitwise((modes, radial) in band_limited(), tiny in -300i32..300) {
        let grid = Grid::new(8, 16).unwrap();
        let u = field(grid, &modes, radial).map(|x| x * 10f64.powi(tiny));
        let text = u.to_snapshot_string();
        let back = ScalarField::from_snapshot_str(&text).unwrap();
        prop_assert_eq!(back.data(), u.data());
        prop_assert_eq!(back.to_snapshot_string(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mismatch_along_the_hyperbolic_family(mu in 1.05..6.0f64) {
        // The family 2 log(2 mu / (mu^2 - r^2)) solves the interior problem; with
        // h = 1 its boundary mismatch is 2 - 4 / (mu + 1).
        let c = RadialCoeffs::new(vec![-1.0], 1.0, 0.0).unwrap();
        let s = shoot(2.0 * (2.0 / mu).ln(), &c, 4096).unwrap();
        prop_assert!((s.mismatch - (2.0 - 4.0 / (mu + 1.0))).abs() <= 1e-7);
        prop_assert!(s.mismatch > 0.0);
    }

    #[test]
    fn total_curvature_target_tends_to_two_pi(eps in 1e-4..2.0f64) {
        let grid = Grid::new(16, 16).unwrap();
        let c = perturbed_coeffs(&ScalarField::constant(grid, -1.0), &BoundaryField::constant(grid, 1.0), eps).unwrap();
        let closed = -PI * eps / (2.0 * (1.0 + 2.0 * eps)) + 2.0 * PI / (1.0 + 2.0 * eps);
        prop_assert!((c.chi() - closed).abs() <= 1e-12);
        prop_assert!(c.chi() < 2.0 * PI);
    }
}
