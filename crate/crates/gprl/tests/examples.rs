//! Hand-evaluated values, frozen.

use gprl::advantage::{clipped_surrogate, grpo_advantage, hacking_verdict, normalize_per_dimension, PopulationScores, SurrogateInputs};
use gprl::drift::{controller_step, drift_metric, effective_weights, ControllerConfig, DriftState, VarianceProfile};
use gprl::oracle::{naive_pipeline, naive_scores, random_group, random_unit_embedding, TOL_ALGEBRAIC};
use gprl::preference_core::{
    aggregate_score, bt_score, phase_embed, preference_probability, score_tensor, subspace_score, SubspaceWeights,
};
use gprl::advantage::{aggregate_advantage, population_scores};
use gprl::GprlError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn logistic_at_minus_one() {
    close(preference_probability(-1.0), 0.268_941_421_369_995_1, 1e-15);
    close(preference_probability(0.0), 0.5, 0.0);
}

#[test]
fn phase_embedding_quarter_turn() {
    let vi = phase_embed(&[std::f64::consts::FRAC_PI_2], 1.0).unwrap();
    let vj = phase_embed(&[0.0], 1.0).unwrap();
    close(subspace_score(&vi, &vj, 0).unwrap(), 1.0, 1e-15);
}

#[test]
fn bt_layout_matches_subspace_form() {
    // (c, r) pairs scored with the 2x2 skew form directly
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let (ri, rj, c): (f64, f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.1..2.0));
        let skew = c * ri - c * rj;
        close(bt_score(ri, rj, c).unwrap(), skew, 1e-12);
    }
    assert!(bt_score(1.0, 0.0, 0.0).is_err());
}

#[test]
fn score_tensor_matches_naive_g3_k2() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grp = random_group(3, 2, &mut rng);
    let (fast, slow) = (score_tensor(&grp).unwrap(), naive_scores(&grp).unwrap());
    for l in 0..2 {
        for (a, b) in fast.matrix(l).iter().zip(slow.matrix(l)) {
            close(*a, *b, TOL_ALGEBRAIC);
        }
    }
}

#[test]
fn aggregate_matches_termwise_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (vi, vj) = (random_unit_embedding(3, &mut rng), random_unit_embedding(3, &mut rng));
    let lam = [0.3, 1.7, 0.9];
    let want: f64 = (0..3).map(|l| lam[l] * subspace_score(&vi, &vj, l).unwrap()).sum();
    close(aggregate_score(&vi, &vj, &SubspaceWeights::new(lam.to_vec()).unwrap()).unwrap(), want, TOL_ALGEBRAIC);
}

#[test]
fn pipeline_matches_naive_g5_k3() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grp = random_group(5, 3, &mut rng);
    let w = [1.0, -0.5, 2.0];
    let fast = aggregate_advantage(
        &normalize_per_dimension(&population_scores(&score_tensor(&grp).unwrap()).unwrap(), 1e-8).unwrap(),
        &w,
    )
    .unwrap();
    let slow = naive_pipeline(&grp, &w, 1e-8).unwrap();
    for (a, b) in fast.aggregate.iter().zip(&slow.aggregate) {
        close(*a, *b, TOL_ALGEBRAIC);
    }
}

#[test]
fn column_one_two_three() {
    let p = PopulationScores::from_rows(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
    let prof = normalize_per_dimension(&p, 0.0).unwrap();
    close(prof.mu[0], 2.0, 0.0);
    close(prof.sigma[0], (2.0f64 / 3.0).sqrt(), 1e-15);
    let col = prof.column(0);
    close(col[0], -1.224_744_871_391_589, 1e-12);
    close(col[1], 0.0, 0.0);
    close(col[2], 1.224_744_871_391_589, 1e-12);
}

#[test]
fn two_rewards() {
    assert_eq!(grpo_advantage(&[0.0, 1.0], 0.0).unwrap(), vec![-1.0, 1.0]);
}

#[test]
fn surrogate_clip_branches() {
    let run = |r: f64, a: f64| {
        clipped_surrogate(&SurrogateInputs {
            ratios: vec![r],
            advantages: vec![a],
            clip_epsilon: 0.2,
            beta: 0.0,
            kl_value: 0.0,
        })
        .unwrap()
    };
    close(run(2.0, 1.0), -1.2, 1e-15);
    close(run(0.5, -1.0), 0.8, 1e-15);
}

#[test]
fn hacking_examples() {
    let v = hacking_verdict(&[0.5, 0.5], &[1.0, -0.5], &SubspaceWeights::new(vec![1.0, 1.0]).unwrap(), 0).unwrap();
    assert!(v.condition_holds);
    close(v.aggregate_star, 1.0, 0.0);
    close(v.aggregate_dagger, 0.5, 0.0);
    let v = hacking_verdict(&[0.5, 0.5], &[1.0, -0.5], &SubspaceWeights::new(vec![1.0, 0.0]).unwrap(), 0).unwrap();
    assert!(!v.condition_holds);
    let err = hacking_verdict(&[0.5, 0.5], &[1.0, 0.7], &SubspaceWeights::uniform(2), 0).unwrap_err();
    assert!(matches!(err, GprlError::PreconditionFailed { axis: 1, .. }));
}

#[test]
fn drift_against_uniform() {
    let cur = VarianceProfile::new(vec![0.8, 0.1, 0.1]).unwrap();
    close(drift_metric(&cur, &VarianceProfile::uniform(3), 0.0).unwrap(), 0.459_580_429_017_932_7, 1e-12);
}

#[test]
fn tighten_and_relax() {
    let cfg = ControllerConfig { eps_profile: 1e-12, ..ControllerConfig::default() };
    let state = DriftState::new(VarianceProfile::uniform(3), cfg).unwrap();
    let next = controller_step(&state, &VarianceProfile::new(vec![0.8, 0.1, 0.1]).unwrap()).unwrap();
    assert!(next.engaged);
    close(next.multipliers[0], 0.4507, 1e-4);
    close(next.multipliers[1], 1.2747, 1e-4);
    close(next.multipliers[2], 1.2747, 1e-4);
    close(next.beta, 0.015, 1e-15);

    let mut s = DriftState::new(VarianceProfile::uniform(3), ControllerConfig::default()).unwrap();
    s.multipliers = vec![0.5, 1.5, 1.0];
    s.beta = 0.05;
    let relaxed = controller_step(&s, &VarianceProfile::uniform(3)).unwrap();
    assert!(!relaxed.engaged);
    for (m, want) in relaxed.multipliers.iter().zip([0.505, 1.495, 1.0]) {
        close(*m, want, 1e-15);
    }
    close(relaxed.beta, 0.0495, 1e-15);

    s.multipliers = vec![0.5, 1.5];
    let s = DriftState { alpha_ref: VarianceProfile::uniform(2), ..s };
    assert_eq!(effective_weights(&s, &SubspaceWeights::new(vec![2.0, 2.0]).unwrap()).unwrap(), vec![1.0, 3.0]);
}
