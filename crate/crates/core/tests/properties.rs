use nalgebra::DMatrix;
use proptest::prelude::*;

use sgdrl::certificates::{lp_error, rate_fit};
use sgdrl::drift::{
    check_contraction, check_property, standard_samples, transport_constants, DriftField, Property,
    PropertyId, DEFAULT_TOL,
};
use sgdrl::engine::{simulate, Noise, SaaProblem, Trajectory};
use sgdrl::gronwall::{bound_constant, recursion_envelope, verify_bound, RecursionSpec};
use sgdrl::linreg::{gradient, spd_contraction_constant, true_minimizer, RegressionModel, SupportPoint};
use sgdrl::math::{check_power_convexity, check_power_reverse_triangle, LyapunovSpec};
use sgdrl::schedule::{check_admissibility, Verdict, DEFAULT_TOL as SCHEDULE_TOL};
use sgdrl::{Point, Schedule};

fn coords(d: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, d)
}

fn pair(lo: f64, hi: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(move |d| (coords(d, lo, hi), coords(d, lo, hi)))
}

fn triple(lo: f64, hi: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(move |d| (coords(d, lo, hi), coords(d, lo, hi), coords(d, lo, hi)))
}

fn pt(v: &[f64]) -> Point {
    Point::new(v.to_vec()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn power_convexity_holds((v, w) in pair(-1e3, 1e3), p in 1.0f64..8.0) {
        prop_assert!(check_power_convexity(&pt(&v), &pt(&w), p).unwrap());
    }

    #[test]
    fn power_reverse_triangle_holds((v, w) in pair(-1e3, 1e3), p in 1u32..8) {
        prop_assert!(check_power_reverse_triangle(&pt(&v), &pt(&w), p).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn lyapunov_gradient_linear_in_v(
        (t, th, v) in triple(-10.0, 10.0),
        w_seed in -10.0f64..10.0,
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
        q in 2u32..7,
    ) {
        let spec = LyapunovSpec::new(pt(&t), q).unwrap();
        let w: Vec<f64> = v.iter().map(|x| x * 0.5 + w_seed).collect();
        let comb: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = spec.gradient(&pt(&th), &pt(&comb)).unwrap();
        let gv = spec.gradient(&pt(&th), &pt(&v)).unwrap();
        let gw = spec.gradient(&pt(&th), &pt(&w)).unwrap();
        let rhs = a * gv + b * gw;
        let scale = (a * gv).abs() + (b * gw).abs();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300), "{lhs} vs {rhs}");
    }

    #[test]
    fn lyapunov_gradient_matches_finite_difference((t, th, v) in triple(-3.0, 3.0), q in 2u32..7) {
        let diff: Vec<f64> = th.iter().zip(&t).map(|(x, y)| x - y).collect();
        prop_assume!(norm(&diff) >= 0.1 && norm(&v) > 1e-3);
        let spec = LyapunovSpec::new(pt(&t), q).unwrap();
        let h = 1e-5;
        let at = |s: f64| {
            let x: Vec<f64> = th.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            spec.value(&pt(&x)).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let g = spec.gradient(&pt(&th), &pt(&v)).unwrap();
        let scale = q as f64 * norm(&diff).powi(q as i32 - 1) * norm(&v);
        prop_assert!((fd - g).abs() <= 1e-6 * scale, "fd {fd} vs {g}");
    }

    #[test]
    fn linreg_gradient_matches_finite_difference((th, x) in pair(-3.0, 3.0), h in -3.0f64..3.0) {
        let g = gradient(&pt(&th), &pt(&x), h).unwrap();
        let f = |t: &[f64]| (dot(t, &x) - h).powi(2);
        let step = 1e-6;
        for j in 0..th.len() {
            let mut up = th.clone();
            let mut dn = th.clone();
            up[j] += step;
            dn[j] -= step;
            let fd = (f(&up) - f(&dn)) / (2.0 * step);
            let scale = g[j].abs() + f(&th) + 1.0;
            prop_assert!((fd - g[j]).abs() <= 1e-8 * scale, "j={j}: fd {fd} vs {}", g[j]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gamma_positive(alpha in 1e-3f64..1e3, nu in -2.0f64..2.0, n in 0u64..10_000_000) {
        let s = Schedule::polynomial(alpha, nu).unwrap();
        prop_assert!(s.gamma(n).unwrap() > 0.0);
    }

    #[test]
    fn contraction_monotone_in_c(a in 0.1f64..10.0, b in 0.1f64..10.0, frac in 0.01f64..1.0) {
        let g = DriftField::linear(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a, b])), pt(&[0.0, 0.0]))
            .unwrap();
        let samples = standard_samples(g.target(), 20, 5);
        let c = spd_contraction_constant(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a, b])))
            .unwrap()
            .c;
        prop_assert!(check_contraction(&g, c, &samples, DEFAULT_TOL).unwrap().is_valid());
        prop_assert!(check_contraction(&g, c * frac, &samples, DEFAULT_TOL).unwrap().is_valid());
    }

    #[test]
    fn transport_round_trip_never_violated(a in 0.1f64..10.0, b in 0.1f64..10.0, seed in 0u64..1000) {
        let m = DMatrix::from_row_slice(2, 2, &[a, 0.3 * a.min(b), 0.3 * a.min(b), b]);
        let g = DriftField::linear(m.clone(), pt(&[1.0, -2.0])).unwrap();
        let samples = standard_samples(g.target(), 10, seed);
        let c = spd_contraction_constant(&m).unwrap().c;
        prop_assert!(check_contraction(&g, c, &samples, DEFAULT_TOL).unwrap().is_valid());
        let ii = transport_constants(Property::I { c }, PropertyId::II).unwrap();
        let iii = transport_constants(ii, PropertyId::III).unwrap();
        prop_assert_eq!(iii.id(), PropertyId::III);
        let cert = check_property(&g, iii, &samples, DEFAULT_TOL).unwrap();
        prop_assert!(cert.is_valid(), "violation {}", cert.max_violation);
    }

    #[test]
    fn spd_constant_passes(l in prop::collection::vec(-2.0f64..2.0, 9), seed in 0u64..1000) {
        let b = DMatrix::from_row_slice(3, 3, &l);
        let a = &b * b.transpose() + DMatrix::identity(3, 3) * 0.1;
        let g = DriftField::linear(a.clone(), pt(&[0.5, 0.0, -1.0])).unwrap();
        let c = spd_contraction_constant(&a).unwrap().c;
        let samples = standard_samples(g.target(), 100, seed);
        prop_assert!(check_contraction(&g, c, &samples, DEFAULT_TOL).unwrap().is_valid());
    }

    #[test]
    fn fixed_point_with_zero_noise(t in coords(3, -5.0, 5.0), c in 0.1f64..2.0, alpha in 0.01f64..1.0) {
        let target = pt(&t);
        let problem = SaaProblem::new(DriftField::scalar(c, target.clone()), Noise::Zero, "fixed").unwrap();
        let s = Schedule::polynomial(alpha, 0.5).unwrap();
        let traj = simulate(&problem, &s, &target, &[1, 10, 100, 1000], 7).unwrap();
        for (_, p) in &traj.checkpoints {
            prop_assert_eq!(p, &target);
        }
    }

    #[test]
    fn rate_fit_recovers_exponent(a in 1e-3f64..1e3, slope in -3.0f64..3.0, lo in 1u32..5, len in 4u32..12) {
        let pts: Vec<(f64, f64)> = (lo..lo + len)
            .map(|j| {
                let n = (1u64 << j) as f64;
                (n, a * n.powf(slope))
            })
            .collect();
        let fit = rate_fit(&pts).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-12, "{} vs {slope}", fit.slope);
    }

    #[test]
    fn lp_error_monotone_in_p_and_jensen(
        states in prop::collection::vec(coords(2, -10.0, 10.0), 2..60),
        p1 in 1.0f64..8.0,
        dp in 0.0f64..4.0,
    ) {
        let ensemble: Vec<Trajectory> = states
            .iter()
            .enumerate()
            .map(|(i, s)| Trajectory {
                checkpoints: vec![(5, pt(s))],
                seed: 0,
                stream: i as u64,
                schedule: "poly:alpha=1,nu=0.5".into(),
                diverged_at: None,
            })
            .collect();
        let target = pt(&[0.3, -0.2]);
        let lo = lp_error(&ensemble, &target, p1, 5).unwrap().estimate;
        let hi = lp_error(&ensemble, &target, p1 + dp, 5).unwrap().estimate;
        prop_assert!(lo <= hi * (1.0 + 1e-12), "{lo} > {hi}");
        let q = (2.0 * (p1 / 2.0).ceil()).max(2.0);
        let even = lp_error(&ensemble, &target, q, 5).unwrap().estimate;
        prop_assert!(lo <= even * (1.0 + 1e-12), "p={p1}: {lo} > q={q}: {even}");
    }

    #[test]
    fn true_minimizer_zeroes_gradient(
        xs in prop::collection::vec(coords(2, -3.0, 3.0), 3..8),
        hs in prop::collection::vec(-5.0f64..5.0, 8),
    ) {
        let w = 1.0 / xs.len() as f64;
        let support: Vec<SupportPoint> = xs
            .iter()
            .zip(&hs)
            .map(|(x, h)| SupportPoint { prob: w, x: x.clone(), h: *h })
            .collect();
        let Ok(model) = RegressionModel::from_support(support, "random") else {
            return Ok(());
        };
        let Ok((theta, _)) = true_minimizer(&model, 0, 0) else {
            return Ok(());
        };
        let mut m2 = [[0.0; 2]; 2];
        let mut b = [0.0; 2];
        for (x, h) in xs.iter().zip(&hs) {
            for i in 0..2 {
                b[i] += w * x[i] * h;
                for j in 0..2 {
                    m2[i][j] += w * x[i] * x[j];
                }
            }
        }
        let resid: Vec<f64> = (0..2)
            .map(|i| 2.0 * (m2[i][0] * theta[0] + m2[i][1] * theta[1]) - 2.0 * b[i])
            .collect();
        prop_assert!(norm(&resid) <= 1e-10 * (1.0 + norm(&b)), "residual {}", norm(&resid));
    }
}

fn spec_strategy() -> impl Strategy<Value = RecursionSpec> {
    (0u64..20, 0.5f64..2.0, 0.0f64..10.0, 0.1f64..5.0, 0.05f64..2.0, 0.05f64..0.95).prop_flat_map(
        |(n_burn, k, kappa, c, alpha, nu)| {
            prop::collection::vec(0.0f64..5.0, n_burn as usize + 1).prop_map(move |e_prefix| RecursionSpec {
                n_burn,
                k,
                kappa,
                c,
                schedule: Schedule::polynomial(alpha, nu).unwrap(),
                e_prefix,
            })
        },
    )
}

const GRONWALL_HORIZON: u64 = 20_000;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gronwall_sound(spec in spec_strategy()) {
        let Ok(cert) = bound_constant(&spec, GRONWALL_HORIZON) else {
            return Ok(());
        };
        let env = recursion_envelope(&spec, GRONWALL_HORIZON).unwrap();
        prop_assert!(verify_bound(&cert, &env, &spec.schedule).unwrap());
    }

    #[test]
    fn gronwall_monotone(spec in spec_strategy(), dk in 0.0f64..5.0, idx in 0usize..20, de in 0.0f64..5.0) {
        let Ok(base) = bound_constant(&spec, GRONWALL_HORIZON) else {
            return Ok(());
        };
        let mut more_kappa = spec.clone();
        more_kappa.kappa += dk;
        let lk = bound_constant(&more_kappa, GRONWALL_HORIZON).unwrap().lambda;
        prop_assert!(lk >= base.lambda);
        let mut more_e = spec.clone();
        let i = idx % more_e.e_prefix.len();
        more_e.e_prefix[i] += de;
        let le = bound_constant(&more_e, GRONWALL_HORIZON).unwrap().lambda;
        prop_assert!(le >= base.lambda);
    }

    #[test]
    fn gronwall_scaling(spec in spec_strategy(), s in 0.01f64..100.0) {
        let Ok(base) = bound_constant(&spec, GRONWALL_HORIZON) else {
            return Ok(());
        };
        let mut scaled = spec.clone();
        scaled.kappa *= s;
        scaled.e_prefix.iter_mut().for_each(|e| *e *= s);
        let l = bound_constant(&scaled, GRONWALL_HORIZON).unwrap().lambda;
        prop_assert!(close(l, s * base.lambda, 1e-12), "{l} vs {}", s * base.lambda);
    }
}

const NU_GRID: [f64; 10] = [-0.5, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.1, 1.5];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn admissibility_matches_dichotomy(c in 0.01f64..50.0, k_max in 1u32..=8, alpha in 0.01f64..10.0) {
        for nu in NU_GRID {
            let s = Schedule::polynomial(alpha, nu).unwrap();
            let rep = check_admissibility(&s, c, k_max, 100_000, SCHEDULE_TOL).unwrap();
            let expected = if nu > 0.0 && nu < 1.0 { Verdict::Admissible } else { Verdict::Inadmissible };
            prop_assert_eq!(rep.verdict, expected, "c={} k_max={} alpha={} nu={}", c, k_max, alpha, nu);
        }
    }

    #[test]
    fn admissibility_monotone_in_horizon(
        c in 0.01f64..50.0,
        k_max in 1u32..=8,
        alpha in 0.01f64..10.0,
        nu in 0.01f64..1.5,
        exp in 2u32..6,
    ) {
        let s = Schedule::polynomial(alpha, nu).unwrap();
        let h = 10u64.pow(exp);
        let at_h = check_admissibility(&s, c, k_max, h, SCHEDULE_TOL).unwrap();
        if at_h.verdict == Verdict::Admissible {
            let at_2h = check_admissibility(&s, c, k_max, 2 * h, SCHEDULE_TOL).unwrap();
            prop_assert_eq!(at_2h.verdict, Verdict::Admissible);
        }
    }
}
