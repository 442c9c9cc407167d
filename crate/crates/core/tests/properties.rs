use nsf_stability::functionals::{FunctionalSample, FunctionalTrace, TraceMeta};
use nsf_stability::grid::{
    divergence, double_dot, face_dot, grad_sq, gradient, integrate, sym_grad, Grid, ScalarBc, ScalarField, VectorField,
};
use nsf_stability::harness::{default_scenario, parse_config, parse_trace_csv, trace_to_csv, Snapshot};
use nsf_stability::lemmas::{gap_f, gap_f_at_ratio, gap_g, gap_g_at_ratio, gap_g_lower_limit};
use nsf_stability::thermo::{
    alt_internal_energy, alt_perturbation, alt_scale, alt_scale_inverse, relative_entropy, ExponentPair, Material,
};
use proptest::prelude::*;

fn grid_and_data() -> impl Strategy<Value = (Grid, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (4usize..12, 4usize..12, 0.5f64..2.0, 0.5f64..2.0).prop_flat_map(|(nx, ny, lx, ly)| {
        let g = Grid::new(nx, ny, lx, ly).unwrap();
        (
            Just(g),
            prop::collection::vec(-1.0f64..1.0, g.n_cells()),
            prop::collection::vec(-1.0f64..1.0, g.n_u()),
            prop::collection::vec(-1.0f64..1.0, g.n_v()),
        )
    })
}

fn pair() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..0.99, 0.0f64..1.0).prop_map(|(n, s)| (n, n * (0.5 + 1e-6 + (0.5 - 2e-6) * s))).prop_map(|(n, m)| (m, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_and_divergence_are_negative_adjoints((g, p, u, v) in grid_and_data()) {
        let f = ScalarField::from_vec(g, p).unwrap();
        let mut w = VectorField { grid: g, u, v };
        w.enforce_no_penetration();
        let lhs = integrate(&f.zip_map(&divergence(&w), |a, b| a * b));
        let rhs = -face_dot(&gradient(&f, ScalarBc::Neumann), &w);
        let scale = integrate(&f.map(f64::abs)) * divergence(&w).max_abs() + 1.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn discrete_korn_identity_holds_for_arbitrary_wall_fields((g, _p, u, v) in grid_and_data()) {
        let mut w = VectorField { grid: g, u, v };
        w.enforce_no_penetration();
        let lhs = 2.0 * integrate(&double_dot(&sym_grad(&w)));
        let div = divergence(&w);
        let rhs = integrate(&grad_sq(&w)) + integrate(&div.map(|a| a * a));
        prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs.max(1e-300), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn gap_f_is_nonnegative_and_gap_g_nonpositive((m, n) in pair(), lr in -690.0f64..690.0) {
        let r = lr.exp();
        prop_assert!(gap_f_at_ratio(r, m, n).unwrap() >= 0.0);
        let g = gap_g_at_ratio(r, m, n).unwrap();
        prop_assert!(g <= 1e-12 * gap_g_lower_limit(m, n).abs().max(1.0), "g = {} at ln r = {}", g, lr);
    }

    #[test]
    fn gap_g_keeps_falling_for_large_x((m, n) in pair()) {
        // g(1e6) < -1e3 only holds for larger exponents; the trend holds for all
        let (a, b) = (gap_g(1e3, m, n).unwrap(), gap_g(1e6, m, n).unwrap());
        prop_assert!(b < a && a < 0.0, "g(1e3) = {}, g(1e6) = {}", a, b);
    }

    #[test]
    fn gap_f_series_branch_joins_smoothly((m, n) in pair(), x in 0.09f64..0.12) {
        // crosses |ln(1 + x)| = 0.1 where the evaluation switches form
        let a = gap_f(x, m, n).unwrap();
        let b = gap_f(x * (1.0 + 1e-9), m, n).unwrap();
        prop_assert!(b > a && (b - a) / a < 1e-8);
        prop_assert!(gap_g(x, m, n).unwrap() <= 0.0);
    }

    #[test]
    fn exponent_pairs_validate_exactly_when_admissible(m in 0.0f64..1.0, n in 0.0f64..1.0) {
        let ok = 0.0 < m && m < n && n < 1.0 && m > n / 2.0;
        prop_assert_eq!(ExponentPair::new(m, n).is_ok(), ok);
    }

    #[test]
    fn alternative_scale_inverts(theta in 1.0f64..2000.0, m in 0.01f64..0.99) {
        let mat = Material::default();
        let back = alt_scale_inverse(alt_scale(theta, m, &mat).unwrap(), m, &mat).unwrap();
        prop_assert!((back - theta).abs() <= 1e-12 * theta / (1.0 - m));
        let e = alt_internal_energy(alt_scale(theta, m, &mat).unwrap(), m, &mat).unwrap();
        prop_assert!((e - mat.cv_ref * theta).abs() <= 1e-12 * e / (1.0 - m));
    }

    #[test]
    fn alternative_perturbation_matches_the_difference(th in 200.0f64..400.0, s in -0.9f64..3.0, m in 0.01f64..0.99) {
        let mat = Material::default();
        let tilde = s * th;
        let d = alt_perturbation(tilde, th, m, &mat).unwrap();
        let direct = alt_scale(th + tilde, m, &mat).unwrap() - alt_scale(th, m, &mat).unwrap();
        prop_assert!((d - direct).abs() <= 1e-12 * alt_scale(th, m, &mat).unwrap());
        prop_assert_eq!(d > 0.0, tilde > 0.0);
    }

    #[test]
    fn relative_entropy_has_the_sign_of_the_perturbation(th in 1.0f64..1000.0, s in -0.999f64..10.0) {
        let mat = Material::default();
        let e = relative_entropy(s * th, th, &mat).unwrap();
        prop_assert_eq!(e > 0.0, s > 0.0);
        prop_assert!(relative_entropy(-th, th, &mat).is_err());
    }

    #[test]
    fn config_round_trips_through_json(nx in 8usize..64, seed in any::<u64>(), mu in 1e-4f64..1.0, t in 1u32..100) {
        let mut cfg = default_scenario();
        cfg.grid.nx = nx;
        cfg.seed = seed;
        cfg.material.mu = mu;
        cfg.t_end = f64::from(t) * cfg.sample_interval;
        prop_assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn trace_csv_round_trips_bit_for_bit(rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 25), 0..6)) {
        let mut trace = trace_with_levels(vec![3, 5]);
        for r in rows {
            trace.samples.push(FunctionalSample::from_values(&r[..23], r[23..].to_vec()).unwrap());
        }
        let table = parse_trace_csv(&trace_to_csv(&trace).unwrap()).unwrap();
        prop_assert_eq!(table.l_values, vec![3, 5]);
        prop_assert_eq!(table.samples, trace.samples);
    }

    #[test]
    fn snapshot_round_trips_bit_for_bit((g, p, _u, _v) in grid_and_data(), t in 0.0f64..1e4) {
        let s = Snapshot::scalar("theta", &ScalarField::from_vec(g, p).unwrap(), t);
        let (bytes, json) = s.encode();
        prop_assert_eq!(Snapshot::decode(&bytes, &json).unwrap(), s);
    }

    #[test]
    fn trace_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_trace_csv(&bytes);
    }
}

fn trace_with_levels(l_values: Vec<u32>) -> FunctionalTrace {
    FunctionalTrace::new(TraceMeta {
        grid: Grid::unit_square(4).unwrap(),
        material: Material::default(),
        pair: ExponentPair { m: 0.6, n: 0.9 },
        l_values,
        k_mn: 1.0,
        k_mn_unnormalized: 1.0,
        theta_min: 300.0,
        theta_max: 300.0,
        poincare: 1.0,
        quad_eps: 0.0,
        sample_interval: 1.0,
    })
}
