//! Brute-force reference implementations and the checks built on them.
//!
//! Nothing here calls into the fast paths it is used to check: scores go
//! through the complex-phase form, sums use Neumaier compensation, and the
//! standard deviation is a two-pass computation over explicit loops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::advantage::{
    aggregate_advantage, grpo_advantage, hacking_verdict, normalize_per_dimension, population_scores,
    AdvantageProfile,
};
use crate::error::{invalid, GprlError, Result};
use crate::policy_sim::{surrogate_gradient, surrogate_loss, RolloutGroup, SoftmaxPolicy};
use crate::preference_core::{
    preference_probability, score_tensor, subspace_score, PreferenceEmbedding, ScoreTensor, SubspaceWeights,
};

/// Tolerance for algebraic identities.
pub const TOL_ALGEBRAIC: f64 = 1e-12;
/// Tolerance for sums that cancel to zero.
pub const TOL_CANCELLATION: f64 = 1e-9;
/// Relative tolerance for gradients.
pub const TOL_GRADIENT: f64 = 1e-5;

/// Result of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub case_count: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
}

impl OracleReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            case_count: 0,
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            tolerance,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn record(&mut self, case: usize, abs: f64, rel: f64, bad: bool, what: impl FnOnce() -> String) {
        self.max_abs_error = self.max_abs_error.max(abs);
        self.max_rel_error = self.max_rel_error.max(rel);
        if bad || abs.is_nan() {
            self.failures.push(format!("case {case}: {}", what()));
        }
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<24} {} cases={} max_abs={:.3e} max_rel={:.3e} tol={:.0e}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.case_count,
            self.max_abs_error,
            self.max_rel_error,
            self.tolerance
        )?;
        for fail in self.failures.iter().take(5) {
            write!(f, "\n    {fail}")?;
        }
        Ok(())
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// A uniformly random point on the unit sphere in `R^{2k}`.
pub fn random_unit_embedding(k: usize, rng: &mut ChaCha8Rng) -> PreferenceEmbedding {
    loop {
        let v: Vec<f64> = (0..2 * k).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return PreferenceEmbedding::new(v.into_iter().map(|x| x / n).collect())
                .expect("normalized draw is unit norm");
        }
    }
}

/// A random group of `g` unit embeddings.
pub fn random_group(g: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<PreferenceEmbedding> {
    (0..g).map(|_| random_unit_embedding(k, rng)).collect()
}

/// Score tensor via `Im(z_i * conj(z_j))` with `z = v^(2l-1) + i v^(2l)`,
/// one entry at a time.
pub fn naive_scores(group: &[PreferenceEmbedding]) -> Result<ScoreTensor> {
    let g = group.len();
    if g < 2 {
        return invalid("group needs at least 2 members");
    }
    let k = group[0].k();
    if group.iter().any(|v| v.k() != k) {
        return invalid("group mixes embeddings with different k");
    }
    let mut out = Vec::with_capacity(k * g * g);
    for l in 0..k {
        for vi in group {
            for vj in group {
                let (re_i, im_i) = (vi.components()[2 * l], vi.components()[2 * l + 1]);
                let (re_j, im_j) = (vj.components()[2 * l], -vj.components()[2 * l + 1]);
                // imaginary part of (re_i + i im_i)(re_j + i im_j)
                out.push(im_i * re_j + re_i * im_j);
            }
        }
    }
    ScoreTensor::from_matrices(k, g, out)
}

/// The three-step advantage construction written out literally.
pub fn naive_pipeline(group: &[PreferenceEmbedding], weights: &[f64], epsilon: f64) -> Result<AdvantageProfile> {
    let t = naive_scores(group)?;
    let (g, k) = (t.g(), t.k());
    if weights.len() != k {
        return invalid(format!("expected {k} weights"));
    }
    let mut s_hat = vec![vec![0.0; k]; g];
    for (i, row) in s_hat.iter_mut().enumerate() {
        for (l, cell) in row.iter_mut().enumerate() {
            *cell = compensated_sum((0..g).filter(|&j| j != i).map(|j| t.get(l, i, j))) / (g - 1) as f64;
        }
    }
    let mut per_dim = vec![0.0; g * k];
    let mut mu = vec![0.0; k];
    let mut sigma = vec![0.0; k];
    for l in 0..k {
        let m = compensated_sum(s_hat.iter().map(|r| r[l])) / g as f64;
        let var = compensated_sum(s_hat.iter().map(|r| (r[l] - m).powi(2))) / g as f64;
        let s = var.sqrt();
        mu[l] = m;
        sigma[l] = s;
        for i in 0..g {
            per_dim[i * k + l] = if s == 0.0 { 0.0 } else { (s_hat[i][l] - m) / (s + epsilon) };
        }
    }
    let aggregate = (0..g).map(|i| compensated_sum((0..k).map(|l| weights[l] * per_dim[i * k + l]))).collect();
    Ok(AdvantageProfile { per_dim, aggregate, mu, sigma, epsilon, g, k })
}

/// Central differences `(f(x + h e_a) - f(x - h e_a)) / 2h`.
pub fn fd_gradient(loss: impl Fn(&[f64]) -> f64, logits: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return invalid("finite-difference step must be positive");
    }
    let mut x = logits.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for a in 0..x.len() {
        let orig = x[a];
        x[a] = orig + step;
        let up = loss(&x);
        x[a] = orig - step;
        let down = loss(&x);
        x[a] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(GprlError::EvaluationFailed(format!("non-finite loss at coordinate {a}")));
        }
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Random instances of the single-axis hacking pattern, checked against an
/// independent evaluation of the weighted gain/loss decomposition.
pub fn prop2_search(trials: usize, k: usize, rng: &mut ChaCha8Rng) -> OracleReport {
    let mut rep = OracleReport::new(&format!("prop2 k={k}"), 0.0);
    if k < 2 {
        rep.failures.push("k must be at least 2".into());
        return rep;
    }
    for case in 0..trials {
        let l_star = rng.random_range(0..k);
        let lam: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0)).collect();
        let a_star: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a_dag: Vec<f64> = (0..k)
            .map(|l| {
                let step = rng.random_range(1e-3..1.0);
                if l == l_star { a_star[l] + step } else { a_star[l] - step }
            })
            .collect();
        rep.case_count += 1;
        let w = SubspaceWeights::new(lam.clone()).expect("weights drawn nonnegative");
        let verdict = match hacking_verdict(&a_star, &a_dag, &w, l_star) {
            Ok(v) => v,
            Err(e) => {
                rep.failures.push(format!("case {case}: rejected valid input: {e}"));
                continue;
            }
        };
        let h = lam[l_star] * (a_dag[l_star] - a_star[l_star]);
        let d = compensated_sum((0..k).filter(|&l| l != l_star).map(|l| lam[l] * (a_star[l] - a_dag[l])));
        let agg_star = compensated_sum((0..k).map(|l| lam[l] * a_star[l]));
        let agg_dag = compensated_sum((0..k).map(|l| lam[l] * a_dag[l]));
        let gap = d - h;
        // ignore near-ties where rounding decides the comparison
        let decided = gap.abs() > 1e-12;
        if decided && verdict.condition_holds != (gap > 0.0) {
            rep.failures.push(format!("case {case}: condition mismatch (D-H={gap:e})"));
        }
        if verdict.condition_holds && decided && !(agg_dag < agg_star) {
            rep.failures.push(format!("case {case}: implication fails, {agg_dag} >= {agg_star}"));
        }
        let err = ((verdict.aggregate_star - agg_star).abs()).max((verdict.aggregate_dagger - agg_dag).abs());
        rep.max_abs_error = rep.max_abs_error.max(err);
    }
    rep
}

/// Which fast path the `verify` suite should deliberately corrupt. Used to
/// prove the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    Scores,
}

fn sizes(case: usize) -> (usize, usize) {
    const GS: [usize; 4] = [2, 4, 8, 16];
    const KS: [usize; 4] = [1, 2, 3, 6];
    (GS[case % 4], KS[(case / 4) % 4])
}

/// Fast score tensor vs [`naive_scores`].
pub fn check_scores(trials: usize, rng: &mut ChaCha8Rng, fault: Fault) -> OracleReport {
    let mut rep = OracleReport::new("scores", TOL_ALGEBRAIC);
    for case in 0..trials {
        let (g, k) = sizes(case);
        let group = random_group(g, k, rng);
        let fast = score_tensor(&group).expect("valid group");
        let slow = naive_scores(&group).expect("valid group");
        let mut err: f64 = 0.0;
        for l in 0..k {
            for (a, b) in fast.matrix(l).iter().zip(slow.matrix(l)) {
                err = err.max((a - b).abs());
            }
        }
        if fault == Fault::Scores {
            err += 1e-6;
        }
        rep.case_count += 1;
        rep.record(case, err, 0.0, err > TOL_ALGEBRAIC, || format!("G={g} k={k} deviation {err:e}"));
    }
    rep
}

/// Fast advantage pipeline vs [`naive_pipeline`], signed random weights.
pub fn check_pipeline(trials: usize, rng: &mut ChaCha8Rng) -> OracleReport {
    let mut rep = OracleReport::new("pipeline", TOL_ALGEBRAIC);
    for case in 0..trials {
        let (g, k) = sizes(case);
        let group = random_group(g, k, rng);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eps = 1e-8;
        let fast = score_tensor(&group)
            .and_then(|t| population_scores(&t))
            .and_then(|p| normalize_per_dimension(&p, eps))
            .and_then(|p| aggregate_advantage(&p, &w))
            .expect("valid group");
        let slow = naive_pipeline(&group, &w, eps).expect("valid group");
        let err = fast
            .per_dim
            .iter()
            .zip(&slow.per_dim)
            .chain(fast.aggregate.iter().zip(&slow.aggregate))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rep.case_count += 1;
        rep.record(case, err, 0.0, err > TOL_ALGEBRAIC, || format!("G={g} k={k} deviation {err:e}"));
    }
    rep
}

/// Every advantage column and every aggregate sums to zero, for signed
/// weights, over `G in {2,4,8,16}` and `k in {1,2,3,6}`.
pub fn check_zero_mean(trials: usize, rng: &mut ChaCha8Rng) -> OracleReport {
    let mut rep = OracleReport::new("zero-mean", TOL_CANCELLATION);
    for case in 0..trials {
        let (g, k) = sizes(case);
        let group = if case % 97 == 0 {
            vec![random_unit_embedding(k, rng); g]
        } else {
            random_group(g, k, rng)
        };
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let prof = score_tensor(&group)
            .and_then(|t| population_scores(&t))
            .and_then(|p| normalize_per_dimension(&p, 1e-8))
            .and_then(|p| aggregate_advantage(&p, &w))
            .expect("valid group");
        let mut worst: f64 = compensated_sum(prof.aggregate.iter().copied()).abs();
        for l in 0..k {
            worst = worst.max(compensated_sum(prof.column(l)).abs());
        }
        rep.case_count += 1;
        rep.record(case, worst, 0.0, worst > TOL_CANCELLATION, || format!("G={g} k={k} sum {worst:e}"));
    }
    rep
}

/// With one subspace and unit weight, the per-dimension pipeline equals the
/// scalar baseline applied to the population score.
pub fn check_single_axis_reduction(trials: usize, rng: &mut ChaCha8Rng) -> OracleReport {
    let mut rep = OracleReport::new("k=1 reduction", TOL_ALGEBRAIC);
    for case in 0..trials {
        let g = [2, 4, 8, 16][case % 4];
        let group = random_group(g, 1, rng);
        let p = score_tensor(&group).and_then(|t| population_scores(&t)).expect("valid group");
        let gprl = normalize_per_dimension(&p, 1e-8)
            .and_then(|a| aggregate_advantage(&a, &[1.0]))
            .expect("valid profile")
            .aggregate;
        let grpo = grpo_advantage(&p.column(0), 1e-8).expect("valid rewards");
        let err = gprl.iter().zip(&grpo).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rep.case_count += 1;
        rep.record(case, err, 0.0, err > TOL_ALGEBRAIC, || format!("G={g} deviation {err:e}"));
    }
    rep
}

/// The scalar baseline preserves the reward ordering inside a group.
pub fn check_rank_order(trials: usize, rng: &mut ChaCha8Rng) -> OracleReport {
    let mut rep = OracleReport::new("scalar rank order", 0.0);
    for case in 0..trials {
        let g = [2, 4, 8, 16][case % 4];
        let rewards: Vec<f64> = (0..g).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let adv = grpo_advantage(&rewards, 1e-8).expect("valid rewards");
        let mut bad = false;
        for i in 0..g {
            for j in 0..g {
                if rewards[i] < rewards[j] && !(adv[i] < adv[j]) {
                    bad = true;
                }
            }
        }
        rep.case_count += 1;
        rep.record(case, 0.0, 0.0, bad, || format!("G={g} ordering not preserved"));
    }
    rep
}

/// `|s_l| <= 1`, exact antisymmetry, and constant-sum probabilities.
pub fn check_structure(trials: usize, rng: &mut ChaCha8Rng) -> OracleReport {
    let mut rep = OracleReport::new("structure", TOL_ALGEBRAIC);
    for case in 0..trials {
        let k = [1, 2, 3, 6][case % 4];
        let vi = random_unit_embedding(k, rng);
        let vj = random_unit_embedding(k, rng);
        let lam: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        let mut bad = None;
        let mut agg = (0.0, 0.0);
        for l in 0..k {
            let s = subspace_score(&vi, &vj, l).expect("same k");
            let t = subspace_score(&vj, &vi, l).expect("same k");
            if s.abs() > 1.0 {
                bad = Some(format!("|s_{l}| = {} > 1", s.abs()));
            }
            if s != -t {
                bad = Some(format!("antisymmetry off by {:e} on axis {l}", s + t));
            }
            agg.0 += lam[l] * s;
            agg.1 += lam[l] * t;
        }
        let total = preference_probability(agg.0) + preference_probability(agg.1);
        let err = (total - 1.0).abs();
        if err > TOL_ALGEBRAIC {
            bad = Some(format!("probabilities sum to {total}"));
        }
        rep.case_count += 1;
        rep.record(case, err, 0.0, bad.is_some(), || bad.clone().unwrap_or_default());
    }
    rep
}

/// A random policy state whose ratios stay at least `margin` away from both
/// clip edges.
pub struct GradientCase {
    pub policy: SoftmaxPolicy,
    pub reference: SoftmaxPolicy,
    pub group: RolloutGroup,
    pub advantages: Vec<f64>,
    pub clip_epsilon: f64,
    pub beta: f64,
}

/// Draw a random gradient-check state.
pub fn random_gradient_case(rng: &mut ChaCha8Rng, margin: f64) -> GradientCase {
    let clip_epsilon = 0.2;
    loop {
        let m = rng.random_range(3..12);
        let g = rng.random_range(2..9);
        let temperature = rng.random_range(0.5..2.0);
        let old = SoftmaxPolicy { logits: (0..m).map(|_| rng.random_range(-1.5..1.5)).collect(), temperature };
        let mut group = crate::policy_sim::sample_group(&old, g, rng).expect("g >= 2");
        let policy = SoftmaxPolicy {
            logits: old.logits.iter().map(|z| z + rng.random_range(-0.4..0.4)).collect(),
            temperature,
        };
        let reference = SoftmaxPolicy { logits: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(), temperature };
        group.refresh_ratios(&policy);
        let clear = group
            .ratios
            .iter()
            .all(|r| (r - (1.0 - clip_epsilon)).abs() > margin && (r - (1.0 + clip_epsilon)).abs() > margin);
        if !clear {
            continue;
        }
        let advantages = (0..g).map(|_| rng.sample(StandardNormal)).collect();
        let beta = if rng.random_bool(0.5) { rng.random_range(0.0..0.5) } else { 0.0 };
        return GradientCase { policy, reference, group, advantages, clip_epsilon, beta };
    }
}

/// Relative error between two vectors, guarded against tiny norms.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff / scale.max(1e-8)
}

/// Analytic surrogate gradient vs central differences.
pub fn check_gradient(trials: usize, rng: &mut ChaCha8Rng) -> OracleReport {
    let mut rep = OracleReport::new("gradient", TOL_GRADIENT);
    for case in 0..trials {
        let c = random_gradient_case(rng, 1e-4);
        let analytic =
            surrogate_gradient(&c.policy, &c.reference, &c.group, &c.advantages, c.clip_epsilon, c.beta)
                .expect("consistent case");
        let loss = |z: &[f64]| {
            let p = SoftmaxPolicy { logits: z.to_vec(), temperature: c.policy.temperature };
            surrogate_loss(&p, &c.reference, &c.group, &c.advantages, c.clip_epsilon, c.beta)
                .expect("consistent case")
        };
        let numeric = fd_gradient(loss, &c.policy.logits, 1e-6).expect("finite loss");
        let rel = relative_error(&analytic, &numeric);
        let abs = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rep.case_count += 1;
        rep.record(case, abs, rel, rel > TOL_GRADIENT, || format!("relative error {rel:e}"));
    }
    rep
}

/// Every check in the suite, seeded deterministically.
pub fn run_suite(seed: u64, trials: usize, fault: Fault) -> Vec<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        check_scores(trials, &mut rng, fault),
        check_pipeline(trials, &mut rng),
        check_zero_mean(trials, &mut rng),
        check_single_axis_reduction(trials, &mut rng),
        check_rank_order(trials, &mut rng),
        check_structure(trials, &mut rng),
        check_gradient(trials.min(100).max(1), &mut rng),
    ];
    for k in [2, 3, 6] {
        out.push(prop2_search(trials, k, &mut rng));
    }
    out
}
