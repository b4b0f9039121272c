//! Randomized invariants over costs, symmetry, surrogates and solvers.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use intdecomp::analysis::boxcar_smooth;
use intdecomp::decomposition::{
    black_box_cost, canonical_form, decompose_with, gen_random_instance, symmetry_orbit, SpinAssignment,
};
use intdecomp::engine::{run_bbo, AlgoSpec, RunRecord};
use intdecomp::ising::{energy, solve, IsingProblem, SolverConfig, SolverKind};
use intdecomp::surrogate::{expand_features, feature_len, predict, QuadraticModel};

/// `(n_rows, n_cols, k, instance seed, spin seed)` with `k <= n_rows`.
fn shapes() -> impl Strategy<Value = (usize, usize, usize, u64, u64)> {
    (1usize..=3, 1usize..=7, any::<u64>(), any::<u64>())
        .prop_flat_map(|(k, d, s1, s2)| (k..=6usize, Just(d), Just(k), Just(s1), Just(s2)))
        .prop_map(|(n, d, k, s1, s2)| (n, d, k, s1, s2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_is_bounded_by_the_target_norm((n, d, k, s1, s2) in shapes()) {
        let inst = gen_random_instance(n, d, k, s1, None).unwrap();
        let m = SpinAssignment::random(n * k, n, &mut ChaCha8Rng::seed_from_u64(s2));
        let cost = black_box_cost(&inst, &m).unwrap();
        let total = inst.w().frobenius_norm_sq();
        prop_assert!(cost >= 0.0);
        prop_assert!(cost <= total * (1.0 + 1e-12));
    }

    #[test]
    fn cost_matches_the_fitted_decomposition((n, d, k, s1, s2) in shapes()) {
        let inst = gen_random_instance(n, d, k, s1, None).unwrap();
        let m = SpinAssignment::random(n * k, n, &mut ChaCha8Rng::seed_from_u64(s2));
        let dec = decompose_with(&inst, &m).unwrap();
        let cost = black_box_cost(&inst, &m).unwrap();
        prop_assert!((dec.cost - cost).abs() <= 1e-9 * inst.w().frobenius_norm_sq().max(1.0));
    }

    #[test]
    fn orbit_members_share_cost_and_canonical_form((n, d, k, s1, s2) in shapes()) {
        let inst = gen_random_instance(n, d, k, s1, None).unwrap();
        let m = SpinAssignment::random(n * k, n, &mut ChaCha8Rng::seed_from_u64(s2));
        let base = black_box_cost(&inst, &m).unwrap();
        let canon = canonical_form(&m);
        let scale = inst.w().frobenius_norm_sq().max(1.0);
        for o in symmetry_orbit(&m) {
            prop_assert!((black_box_cost(&inst, &o).unwrap() - base).abs() <= 1e-9 * scale);
            prop_assert_eq!(canonical_form(&o), canon.clone());
        }
    }

    #[test]
    fn sign_strings_round_trip(bits in any::<u64>(), rows in 1usize..=4, cols in 1usize..=4) {
        let len = rows * cols;
        let m = SpinAssignment::from_bits(bits & ((1u64 << len) - 1), len, rows).unwrap();
        prop_assert_eq!(SpinAssignment::parse_signs(&m.to_sign_string(), rows).unwrap(), m);
    }

    #[test]
    fn ising_energy_equals_surrogate_prediction(n in 1usize..=8, seed in any::<u64>(), xbits in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..feature_len(n))
            .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let model = QuadraticModel::from_feature_weights(n, &weights).unwrap();
        let x = SpinAssignment::from_bits(xbits & ((1u64 << n) - 1), n, n).unwrap();
        let direct: f64 = expand_features(&x).iter().zip(&weights).map(|(a, b)| a * b).sum();
        let problem = IsingProblem::from_quadratic(&model);
        prop_assert!((predict(&model, &x) - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        prop_assert!((energy(&problem, &x) - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn solvers_never_beat_exact(n in 1usize..=10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng);
        let h: Vec<f64> = (0..n).map(|_| normal()).collect();
        let mut j = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                j[a * n + b] = normal();
            }
        }
        let p = IsingProblem::new(h, j, 0.3).unwrap();
        let (_, exact) = solve(&p, &SolverConfig::new(SolverKind::Exact)).unwrap();
        for kind in [SolverKind::Sa, SolverKind::Sq] {
            let cfg = SolverConfig { sweeps: 50, restarts: 2, ..SolverConfig::new(kind).with_seed(seed) };
            let (x, e) = solve(&p, &cfg).unwrap();
            prop_assert!(e >= exact - 1e-9);
            prop_assert!((energy(&p, &x) - e).abs() <= 1e-9 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn boxcar_preserves_partitions(labels in prop::collection::vec(0usize..3, 1..60), window in 1usize..20) {
        let traces: Vec<Vec<f64>> = (0..3)
            .map(|d| boxcar_smooth(&labels.iter().map(|&l| f64::from(u8::from(l == d))).collect::<Vec<_>>(), window))
            .collect();
        for t in 0..labels.len() {
            let sum: f64 = traces.iter().map(|tr| tr[t]).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(traces.iter().all(|tr| (0.0..=1.0 + 1e-12).contains(&tr[t])));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn run_records_round_trip_and_track_the_best(seed in any::<u64>(), algo in prop::sample::select(vec!["rs", "nbocs", "gbocs", "fmqa04"])) {
        let inst = gen_random_instance(3, 5, 2, seed, None).unwrap();
        let spec: AlgoSpec = algo.parse::<AlgoSpec>().unwrap().with_iters(5);
        let rec = run_bbo(&inst, &spec, seed).unwrap();
        prop_assert_eq!(RunRecord::from_jsonl(&rec.to_jsonl()).unwrap(), rec.clone());
        let mut best = f64::INFINITY;
        for it in &rec.iterations {
            best = best.min(it.cost);
            prop_assert_eq!(it.best_cost_so_far, best);
        }
    }
}
