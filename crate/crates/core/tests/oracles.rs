//! Worked examples with independently computed expected values.

use nalgebra::{DMatrix, DVector};

use sgdrl::certificates::{
    dominance_check, l2_bound_certificate, lp_error, lp_induction_chain, noise_moment_check, CertificateSetup,
    MomentBoundSpec, MomentForm,
};
use sgdrl::drift::{
    check_contraction, derived_bounds_check, euler_monotonicity_check, r_grid, standard_samples,
    transport_constants, unit_directions, DriftField, Property, PropertyId, DEFAULT_TOL, R_GRID_POINTS,
};
use sgdrl::engine::{noise_mean_check, simulate, simulate_ensemble, Noise, SaaProblem};
use sgdrl::experiment::{resolve, ExperimentConfig};
use sgdrl::gronwall::{bound_constant, recursion_envelope, verify_bound, RecursionSpec};
use sgdrl::linreg::{interchange_check, spd_contraction_constant, MomentSource, RegressionModel};
use sgdrl::math::check_power_convexity;
use sgdrl::schedule::{check_admissibility, decay_ratio_check, Verdict, DEFAULT_TOL as SCHEDULE_TOL};
use sgdrl::{Error, Point, Schedule};

fn harmonic(last: u64) -> Schedule {
    Schedule::tabulate(last, "1/(n+1)", |n| 1.0 / (n as f64 + 1.0)).unwrap()
}

fn two_point() -> sgdrl::experiment::ResolvedProblem {
    resolve(&ExperimentConfig::default()).unwrap()
}

#[test]
fn reference_examples() {
    let e1 = Point::new(vec![1.0, 0.0]).unwrap();
    assert!(check_power_convexity(&e1, &e1, 2.0).unwrap());

    let s = Schedule::polynomial(1.0, 1.5).unwrap();
    let rep = check_admissibility(&s, 1.0, 1, 1_000_000, SCHEDULE_TOL).unwrap();
    assert_eq!(rep.verdict, Verdict::Inadmissible);

    assert!(decay_ratio_check(1.0, 0.5, 1_000_000).unwrap());
    assert!(decay_ratio_check(0.5, 0.5, 1_000_000).unwrap());

    let g = DriftField::scalar(1.0, Point::scalar(0.0));
    let samples = standard_samples(g.target(), 10, 1);
    let rep = derived_bounds_check(&g, 2.0, 1.0, &samples, DEFAULT_TOL).unwrap();
    assert!(!rep.product_bound);

    assert_eq!(
        transport_constants(Property::I { c: 1.0 }, PropertyId::II).unwrap(),
        Property::II { c: 1.0, rho: 1.0 }
    );
    assert_eq!(
        transport_constants(Property::V { big_c: 0.5, r: 2.0 }, PropertyId::I).unwrap(),
        Property::I { c: 0.25 }
    );
    assert_eq!(
        transport_constants(Property::II { c: 0.3, rho: 0.7 }, PropertyId::III).unwrap(),
        Property::III { c: 0.3, rho: 0.7 }
    );
}

#[test]
fn admissibility_tail_approaches_half() {
    let s = Schedule::polynomial(1.0, 0.5).unwrap();
    let rep = check_admissibility(&s, 1.0, 1, 1_000_000, SCHEDULE_TOL).unwrap();
    assert_eq!(rep.verdict, Verdict::Admissible);
    let min = rep.per_k_min_tail[0].min;
    assert!((min - 0.5).abs() < 1e-3, "{min}");

    let d1 = |l: f64| {
        let (g, gp) = (l.powf(-0.5), (l - 1.0).powf(-0.5));
        (g - gp) / (g * g) + gp / (2.0 * g)
    };
    let mut prev = f64::NEG_INFINITY;
    for j in 1..=6 {
        let v = d1(10f64.powi(j));
        assert!(v > prev && v < 0.5);
        prev = v;
    }
    assert!((prev - 0.5).abs() < 1e-3);
}

#[test]
fn contraction_and_step_examples() {
    let g = DriftField::scalar(2.0, Point::scalar(0.7));
    let samples = standard_samples(g.target(), 10, 2);
    assert!(check_contraction(&g, 0.5, &samples, DEFAULT_TOL).unwrap().is_valid());
    assert!(!check_contraction(&g, 0.6, &samples, DEFAULT_TOL).unwrap().is_valid());

    let grid = r_grid(0.5, R_GRID_POINTS);
    assert!(euler_monotonicity_check(&g, 2.0, 0.5, &samples, &grid, DEFAULT_TOL).unwrap());
}

#[test]
fn derived_bounds_for_spd_drift() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0]));
    let c = spd_contraction_constant(&a).unwrap().c;
    let target = Point::new(vec![0.0, 0.0]).unwrap();
    let g = DriftField::linear(a, target.clone()).unwrap();
    let samples = standard_samples(&target, 1000, 3);
    assert!(samples.len() >= 10_000);
    let rep = derived_bounds_check(&g, c, c, &samples, DEFAULT_TOL).unwrap();
    assert!(rep.all_hold(), "{rep:?}");
}

#[test]
fn gronwall_examples() {
    let spec = RecursionSpec {
        n_burn: 0,
        k: 1.0,
        kappa: 1.0,
        c: 1e-4,
        schedule: harmonic(100_000),
        e_prefix: vec![0.0],
    };
    let env = recursion_envelope(&spec, 100_000).unwrap();
    assert!(env[1..].iter().all(|e| *e > 0.0 && *e < 1.0));

    for e0 in [3.0, 0.5] {
        let spec = RecursionSpec {
            n_burn: 0,
            k: 1.0,
            kappa: 1.0,
            c: 2.0,
            schedule: harmonic(1_000_000),
            e_prefix: vec![e0],
        };
        let cert = bound_constant(&spec, 1_000_000).unwrap();
        assert!((cert.lambda - f64::max(e0, 1.0)).abs() < 1e-5);
        assert!((cert.c_inf - 1.0).abs() < 1e-5);
        assert!(cert.c_inf_argmin > 900_000);

        let short = RecursionSpec {
            schedule: harmonic(100_000),
            ..spec
        };
        let cert = bound_constant(&short, 100_000).unwrap();
        let env = recursion_envelope(&short, 100_000).unwrap();
        assert!(verify_bound(&cert, &env, &short.schedule).unwrap());
        let mut corrupt = cert.clone();
        corrupt.lambda /= 2.0;
        assert!(!verify_bound(&corrupt, &env, &short.schedule).unwrap());
    }

    let zero_c = RecursionSpec {
        n_burn: 0,
        k: 1.0,
        kappa: 1.0,
        c: 1.0,
        schedule: harmonic(10_000),
        e_prefix: vec![0.5],
    };
    assert!(matches!(
        bound_constant(&zero_c, 10_000),
        Err(Error::CertificateUnavailable(_))
    ));
}

#[test]
fn simulation_reproducible() {
    let problem = SaaProblem::new(
        DriftField::scalar(1.0, Point::scalar(0.0)),
        Noise::Gaussian { sigma: 1.0 },
        "scalar",
    )
    .unwrap();
    let s = Schedule::polynomial(0.5, 0.5).unwrap();
    let x0 = Point::scalar(1.0);
    let a = simulate(&problem, &s, &x0, &[1, 10, 100], 11).unwrap();
    let b = simulate(&problem, &s, &x0, &[1, 10, 100], 11).unwrap();
    let c = simulate(&problem, &s, &x0, &[1, 10, 100], 12).unwrap();
    assert_eq!(a, b);
    for ((_, p), (_, q)) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!(p[0].to_bits(), q[0].to_bits());
    }
    assert_ne!(a.checkpoints, c.checkpoints);
}

#[test]
fn linreg_noise_mean_zero() {
    let r = two_point();
    let thetas: Vec<Point> = [-1.0, 0.0, 1.4, 3.0].iter().map(|x| Point::scalar(*x)).collect();
    for check in noise_mean_check(&r.saa, &thetas, 100_000, 5).unwrap() {
        assert!(check.mean_norm <= 3.0 * check.std_error, "{check:?}");
    }
}

#[test]
fn two_point_noise_moments_by_enumeration() {
    let model = RegressionModel::two_point();
    let support = model.support().unwrap();
    let theta = 0.0;
    let grads: Vec<(f64, f64)> = support.iter().map(|s| (s.prob, 2.0 * (theta * s.x[0] - s.h) * s.x[0])).collect();
    let mean: f64 = grads.iter().map(|(w, g)| w * g).sum();
    let r = two_point();
    for p in [2u32, 4, 6] {
        let exact: f64 = grads.iter().map(|(w, g)| w * (mean - g).abs().powi(p as i32)).sum();
        let spec = MomentBoundSpec::new(exact, p, MomentForm::Uncentered).unwrap();
        let rep = noise_moment_check(&r.saa, &spec, &[Point::scalar(theta)], 10_000, 9).unwrap();
        let row = &rep.rows[0];
        assert!(
            (row.estimate - exact).abs() <= 4.0 * row.std_error + 1e-9 * exact,
            "p={p}: {} vs {exact}",
            row.estimate
        );
    }
}

#[test]
fn deterministic_l2_certificate_dominates() {
    let target = Point::scalar(0.0);
    let problem = SaaProblem::new(DriftField::scalar(1.0, target.clone()), Noise::Zero, "det").unwrap();
    let s = Schedule::polynomial(1.0, 0.5).unwrap();
    let theta0 = Point::scalar(1.0);
    let setup = CertificateSetup {
        problem: &problem,
        schedule: &s,
        c: 1.0,
        theta0: &theta0,
        horizon: 1_000_000,
        mc_budget: 2,
        master_seed: 0,
    };
    let cert = l2_bound_certificate(&setup, 1.0).unwrap();
    assert!(cert.is_certified());
    let checkpoints: Vec<u64> = (1..=10_000).collect();
    let ens = simulate_ensemble(&problem, &s, &theta0, &checkpoints, 0, 1).unwrap();
    for row in dominance_check(&cert, &ens, &target, &s, &checkpoints).unwrap() {
        assert!(row.estimate <= row.bound, "n={}: {} > {}", row.n, row.estimate, row.bound);
    }
}

#[test]
fn deterministic_l4_chain_dominates() {
    let target = Point::scalar(0.0);
    let problem = SaaProblem::new(DriftField::scalar(1.0, target.clone()), Noise::Zero, "det").unwrap();
    let s = Schedule::polynomial(1.0, 0.5).unwrap();
    let theta0 = Point::scalar(1.0);
    let setup = CertificateSetup {
        problem: &problem,
        schedule: &s,
        c: 1.0,
        theta0: &theta0,
        horizon: 10_000_000,
        mc_budget: 2,
        master_seed: 0,
    };
    let chain = lp_induction_chain(&setup, &[1.0, 1.0], 4).unwrap();
    assert_eq!(chain.len(), 2);
    assert!(chain.iter().all(|c| c.is_certified()), "{chain:?}");
    let checkpoints: Vec<u64> = (1..=10_000).collect();
    let ens = simulate_ensemble(&problem, &s, &theta0, &checkpoints, 0, 1).unwrap();
    for row in dominance_check(&chain[1], &ens, &target, &s, &checkpoints).unwrap() {
        assert!(row.estimate <= row.bound, "n={}: {} > {}", row.n, row.estimate, row.bound);
    }
}

#[test]
fn linreg_error_decays_in_every_percentile() {
    let r = two_point();
    let ens = simulate_ensemble(&r.saa, &r.schedule, &r.theta0, &[64, 8192], 2024, 2000).unwrap();
    let target = r.saa.target();
    for p in [2.0, 4.0] {
        let early = lp_error(&ens, target, p, 64).unwrap().estimate;
        let late = lp_error(&ens, target, p, 8192).unwrap().estimate;
        assert!(late < early, "p={p}: {late} >= {early}");
    }
    let sorted = |n: u64| {
        let mut e: Vec<f64> = ens.iter().map(|t| (t.state_at(n).unwrap()[0] - target[0]).abs()).collect();
        e.sort_by(f64::total_cmp);
        e
    };
    let (early, late) = (sorted(64), sorted(8192));
    for pct in 1..100 {
        let i = pct * early.len() / 100;
        assert!(late[i] < early[i], "percentile {pct}: {} >= {}", late[i], early[i]);
    }
}

#[test]
fn linreg_drift_contracts() {
    let r = two_point();
    let samples = standard_samples(r.saa.target(), 1000, 4);
    assert!(check_contraction(&r.saa.drift, r.c, &samples, DEFAULT_TOL).unwrap().is_valid());
}

#[test]
fn interchange_monte_carlo_mode() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
    let model = RegressionModel::gaussian(vec![1.0, -0.5], cov).unwrap();
    let thetas: Vec<Point> = unit_directions(2, 5, 8)
        .into_iter()
        .map(|u| u.scale(2.0))
        .collect();
    let rep = interchange_check(&model, &thetas, 1_000_000, 1e-4, 8).unwrap();
    assert_eq!(rep.source, MomentSource::Estimated);
    assert!(rep.passes(), "{rep:?}");
}
