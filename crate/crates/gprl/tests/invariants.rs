use gprl::advantage::{
    aggregate_advantage, grpo_advantage, normalize_global, normalize_per_dimension, population_scores,
    PopulationScores,
};
use gprl::drift::{controller_step, drift_metric, variance_profile, ControllerConfig, DriftState, VarianceProfile};
use gprl::policy_sim::{run_scenario, ScenarioConfig, ScenarioKind};
use gprl::preference_core::{
    aggregate_score, preference_probability, score_tensor, subspace_score, PreferenceEmbedding, SubspaceWeights,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn embedding(k: usize) -> impl Strategy<Value = PreferenceEmbedding> {
    vec(-1.0f64..1.0, 2 * k).prop_filter_map("norm too small", |v| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n > 1e-3).then(|| PreferenceEmbedding::new(v.iter().map(|x| x / n).collect()).unwrap())
    })
}

fn group() -> impl Strategy<Value = Vec<PreferenceEmbedding>> {
    (1usize..=4, 2usize..=10).prop_flat_map(|(k, g)| vec(embedding(k), g))
}

fn simplex(k: usize) -> impl Strategy<Value = VarianceProfile> {
    vec(0.001f64..1.0, k).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        let mut a: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let rest: f64 = a[1..].iter().sum();
        a[0] = 1.0 - rest;
        VarianceProfile::new(a).unwrap()
    })
}

proptest! {
    #[test]
    fn scores_are_antisymmetric_and_bounded(
        (vi, vj) in (1usize..=6).prop_flat_map(|k| (embedding(k), embedding(k)))
    ) {
        for l in 0..vi.k() {
            let s = subspace_score(&vi, &vj, l).unwrap();
            prop_assert_eq!(s, -subspace_score(&vj, &vi, l).unwrap());
            prop_assert!(s.abs() <= 1.0);
        }
        prop_assert_eq!(subspace_score(&vi, &vi, 0).unwrap(), 0.0);
    }

    #[test]
    fn aggregate_is_linear_in_weights(
        (vi, vj, a, b) in (1usize..=4).prop_flat_map(|k| {
            (embedding(k), embedding(k), vec(0.0f64..3.0, k), vec(0.0f64..3.0, k))
        })
    ) {
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let f = |w: &[f64]| aggregate_score(&vi, &vj, &SubspaceWeights::new(w.to_vec()).unwrap()).unwrap();
        prop_assert!((f(&sum) - f(&a) - f(&b)).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one(s in -40.0f64..40.0) {
        let total = preference_probability(s) + preference_probability(-s);
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&preference_probability(s)));
    }

    #[test]
    fn advantages_have_zero_mean(grp in group(), seed_w in vec(-3.0f64..3.0, 4)) {
        let p = population_scores(&score_tensor(&grp).unwrap()).unwrap();
        let k = p.k();
        let w = &seed_w[..k];
        for prof in [normalize_per_dimension(&p, 1e-8).unwrap(), normalize_global(&p, 1e-8).unwrap()] {
            let prof = aggregate_advantage(&prof, w).unwrap();
            for l in 0..k {
                prop_assert!(prof.column(l).iter().sum::<f64>().abs() < 1e-9);
            }
            prop_assert!(prof.aggregate.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn population_scores_sum_to_zero(grp in group()) {
        // antisymmetry makes every column cancel
        let p = population_scores(&score_tensor(&grp).unwrap()).unwrap();
        for l in 0..p.k() {
            prop_assert!(p.column(l).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn grpo_is_shift_and_scale_invariant(r in vec(-5.0f64..5.0, 2..12), shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
        let base = grpo_advantage(&r, 0.0).unwrap();
        let moved: Vec<f64> = r.iter().map(|x| scale * x + shift).collect();
        let spread = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - r.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        for (a, b) in base.iter().zip(grpo_advantage(&moved, 0.0).unwrap()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn variance_profile_is_a_simplex_point(grps in vec(group(), 1..4)) {
        let k = grps[0][0].k();
        let batch: Vec<PopulationScores> = grps
            .iter()
            .filter(|g| g[0].k() == k)
            .map(|g| population_scores(&score_tensor(g).unwrap()).unwrap())
            .collect();
        let a = variance_profile(&batch).unwrap();
        prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.as_slice().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn drift_is_nonnegative_and_zero_on_reference(
        (p, q) in (2usize..=6).prop_flat_map(|k| (simplex(k), simplex(k)))
    ) {
        prop_assert!(drift_metric(&p, &q, 1e-6).unwrap() >= 0.0);
        prop_assert_eq!(drift_metric(&p, &p, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn controller_keeps_mean_one_and_beta_in_band(
        (reference, profiles) in (2usize..=6).prop_flat_map(|k| (simplex(k), vec(simplex(k), 1..20))),
        tau in 0.0001f64..0.5,
    ) {
        let cfg = ControllerConfig { tau, ..ControllerConfig::default() };
        let mut state = DriftState::new(reference, cfg).unwrap();
        for current in &profiles {
            let before = state.multipliers.clone();
            state = controller_step(&state, current).unwrap();
            prop_assert!(state.beta >= cfg.beta_0 && state.beta <= cfg.beta_max);
            prop_assert!(state.multipliers.iter().all(|m| *m > 0.0));
            let mean = state.multipliers.iter().sum::<f64>() / state.multipliers.len() as f64;
            if state.engaged {
                prop_assert!((mean - 1.0).abs() < 1e-9);
            } else {
                // relaxation is affine toward 1, so it preserves a mean of 1
                let prev = before.iter().sum::<f64>() / before.len() as f64;
                prop_assert!((mean - 1.0).abs() <= (prev - 1.0).abs() + 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn scenarios_are_deterministic(seed in 0u64..1000, kind in 0usize..3) {
        let mut cfg = ScenarioConfig::new([ScenarioKind::Healthy, ScenarioKind::Hacked, ScenarioKind::Corrected][kind]);
        cfg.seed = seed;
        cfg.steps = 40;
        prop_assert_eq!(run_scenario(&cfg).unwrap(), run_scenario(&cfg).unwrap());
    }
}
