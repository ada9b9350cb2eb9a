//! Desk-scale online RL: a softmax policy over a fixed catalog of synthetic
//! responses, trained with the per-dimension objective or the scalar
//! baseline, with the drift controller optionally in the loop.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`. Draw order: catalog qualities first (response-major,
//! one standard normal per axis for every typical response), then, for each
//! step, `groups_per_step * g` uniforms for group sampling, group-major.
//! Categorical draws use the inverse CDF of the policy probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::advantage::{
    aggregate_advantage, grpo_advantage, normalize_global, normalize_per_dimension, population_scores,
    PopulationScores, DEFAULT_EPSILON,
};
use crate::drift::{controller_step, drift_metric, variance_profile, ControllerConfig, DriftState, VarianceProfile};
use crate::error::{invalid, GprlError, Result};
use crate::preference_core::{phase_embed, score_tensor, PreferenceEmbedding, SubspaceWeights};

/// Weight on the exploited axis in the hacked and corrected scenarios when
/// no explicit `lambdas` are given.
pub const HACKED_AXIS_WEIGHT: f64 = 5.0;

/// Number of trailing steps averaged by [`terminal_drift`].
pub const TERMINAL_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Healthy,
    Hacked,
    Corrected,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Healthy => "healthy",
            Self::Hacked => "hacked",
            Self::Corrected => "corrected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    PerDim,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Gprl,
    GrpoScalar,
}

/// Reward fed to the scalar baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarReward {
    /// `R = w . q` on latent qualities.
    Quality,
    /// `R = sum_l lambda_l * s_hat_l`, the preference model's own score.
    Gpm,
}

/// One catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub id: String,
    pub quality: Vec<f64>,
    /// Grows with the exploited-axis quality; a stand-in for response length.
    pub length_proxy: f64,
    pub exploit: bool,
}

/// Shape of the exploit block: qualities on the exploited axis are spaced
/// evenly over `[exploit_low, exploit_high]`, every other axis is set to
/// `exploit_penalty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExploitShape {
    pub exploit_low: f64,
    pub exploit_high: f64,
    pub exploit_penalty: f64,
}

impl Default for ExploitShape {
    fn default() -> Self {
        Self { exploit_low: 2.5, exploit_high: 3.5, exploit_penalty: -0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub responses: Vec<Response>,
    pub embeddings: Vec<PreferenceEmbedding>,
    pub angle_scale: f64,
}

impl Catalog {
    /// Build a catalog from explicit quality vectors.
    pub fn from_qualities(qualities: Vec<(Vec<f64>, bool)>, angle_scale: f64, exploit_axis: usize) -> Result<Self> {
        if qualities.len() < 2 {
            return invalid("catalog needs at least 2 responses");
        }
        let k = qualities[0].0.len();
        if exploit_axis >= k || qualities.iter().any(|(q, _)| q.len() != k) {
            return invalid("catalog qualities must share k and contain the exploit axis");
        }
        let mut responses = Vec::with_capacity(qualities.len());
        let mut embeddings = Vec::with_capacity(qualities.len());
        let (mut n_typ, mut n_ex) = (0, 0);
        for (quality, exploit) in qualities {
            embeddings.push(phase_embed(&quality, angle_scale)?);
            let id = if exploit {
                n_ex += 1;
                format!("exploit-{:03}", n_ex - 1)
            } else {
                n_typ += 1;
                format!("typical-{:03}", n_typ - 1)
            };
            let length_proxy = (0.5 * quality[exploit_axis]).exp();
            responses.push(Response { id, quality, length_proxy, exploit });
        }
        Ok(Self { responses, embeddings, angle_scale })
    }

    /// The scenario catalog. Healthy runs have only typical responses; the
    /// other kinds replace the last `ceil(m / 8)` entries with the exploit block.
    pub fn synthetic(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let n_ex = match cfg.kind {
            ScenarioKind::Healthy => 0,
            _ => cfg.m.div_ceil(8),
        };
        let mut qualities = Vec::with_capacity(cfg.m);
        for _ in 0..cfg.m - n_ex {
            let q: Vec<f64> = (0..cfg.k).map(|_| rng.sample(StandardNormal)).collect();
            qualities.push((q, false));
        }
        let shape = cfg.exploit;
        for j in 0..n_ex {
            let frac = if n_ex > 1 { j as f64 / (n_ex - 1) as f64 } else { 0.0 };
            let mut q = vec![shape.exploit_penalty; cfg.k];
            q[cfg.exploit_axis] = shape.exploit_low + frac * (shape.exploit_high - shape.exploit_low);
            qualities.push((q, true));
        }
        Self::from_qualities(qualities, cfg.angle_scale, cfg.exploit_axis)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn k(&self) -> usize {
        self.embeddings[0].k()
    }
}

/// Softmax distribution over catalog entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    pub logits: Vec<f64>,
    pub temperature: f64,
}

impl SoftmaxPolicy {
    pub fn uniform(m: usize, temperature: f64) -> Self {
        Self { logits: vec![0.0; m], temperature }
    }

    pub fn probs(&self) -> Vec<f64> {
        let t = self.temperature;
        let max = self.logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let e: Vec<f64> = self.logits.iter().map(|z| ((z - max) / t).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|x| x / total).collect()
    }
}

/// A sampled group with the behaviour probabilities at sampling time.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub indices: Vec<usize>,
    pub old_probs: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl RolloutGroup {
    /// Recompute `ratios` against the given policy.
    pub fn refresh_ratios(&mut self, policy: &SoftmaxPolicy) {
        let p = policy.probs();
        self.ratios = self.indices.iter().zip(&self.old_probs).map(|(&a, &o)| p[a] / o).collect();
    }
}

fn draw(probs: &[f64], g: usize, rng: &mut ChaCha8Rng) -> RolloutGroup {
    let mut indices = Vec::with_capacity(g);
    for _ in 0..g {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut pick = probs.len() - 1;
        for (a, p) in probs.iter().enumerate() {
            cum += p;
            if u < cum {
                pick = a;
                break;
            }
        }
        indices.push(pick);
    }
    let old_probs = indices.iter().map(|&a| probs[a]).collect();
    RolloutGroup { indices, old_probs, ratios: vec![1.0; g] }
}

/// Draw `g` responses i.i.d. from the policy.
pub fn sample_group(policy: &SoftmaxPolicy, g: usize, rng: &mut ChaCha8Rng) -> Result<RolloutGroup> {
    if g < 2 {
        return invalid(format!("group size must be at least 2, got {g}"));
    }
    Ok(draw(&policy.probs(), g, rng))
}

fn kl_probs(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Exact categorical `KL(policy || reference)`.
pub fn policy_kl(policy: &SoftmaxPolicy, reference: &SoftmaxPolicy) -> Result<f64> {
    if policy.logits.len() != reference.logits.len() {
        return invalid("policy and reference differ in size");
    }
    Ok(kl_probs(&policy.probs(), &reference.probs()).max(0.0))
}

fn check_group(policy: &SoftmaxPolicy, reference: &SoftmaxPolicy, group: &RolloutGroup, adv: &[f64]) -> Result<()> {
    let m = policy.logits.len();
    if reference.logits.len() != m
        || group.indices.len() != adv.len()
        || group.old_probs.len() != adv.len()
        || group.indices.iter().any(|&a| a >= m)
    {
        return invalid("surrogate inputs have inconsistent dimensions");
    }
    Ok(())
}

/// Clipped surrogate loss of one group as a function of the current logits.
pub fn surrogate_loss(
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    group: &RolloutGroup,
    advantages: &[f64],
    clip_epsilon: f64,
    beta: f64,
) -> Result<f64> {
    check_group(policy, reference, group, advantages)?;
    let p = policy.probs();
    let (lo, hi) = (1.0 - clip_epsilon, 1.0 + clip_epsilon);
    let mut total = 0.0;
    for ((&a, &old), &adv) in group.indices.iter().zip(&group.old_probs).zip(advantages) {
        let r = p[a] / old;
        total += (r * adv).min(r.clamp(lo, hi) * adv);
    }
    let kl = kl_probs(&p, &reference.probs());
    Ok(-(total / advantages.len() as f64 - beta * kl))
}

/// Gradient of [`surrogate_loss`] with respect to the logits, taking the
/// derivative of whichever branch of the `min` is active.
pub fn surrogate_gradient(
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    group: &RolloutGroup,
    advantages: &[f64],
    clip_epsilon: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    check_group(policy, reference, group, advantages)?;
    let p = policy.probs();
    let t = policy.temperature;
    let g = advantages.len() as f64;
    let (lo, hi) = (1.0 - clip_epsilon, 1.0 + clip_epsilon);
    let mut grad = vec![0.0; p.len()];
    let mut spread = 0.0;
    for ((&a, &old), &adv) in group.indices.iter().zip(&group.old_probs).zip(advantages) {
        let r = p[a] / old;
        let active = (lo..=hi).contains(&r) || r * adv < r.clamp(lo, hi) * adv;
        if active {
            let c = adv * r / (g * t);
            grad[a] -= c;
            spread += c;
        }
    }
    let rho = reference.probs();
    let kl = kl_probs(&p, &rho);
    for b in 0..p.len() {
        grad[b] += p[b] * spread;
        if beta != 0.0 && p[b] > 0.0 {
            grad[b] += beta * p[b] * ((p[b] / rho[b]).ln() - kl) / t;
        }
    }
    Ok(grad)
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub k: usize,
    pub g: usize,
    pub m: usize,
    pub steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub temperature: f64,
    pub angle_scale: f64,
    pub controller: ControllerConfig,
    pub controller_enabled: bool,
    pub normalization: Normalization,
    pub baseline: Baseline,
    pub scalar_reward: ScalarReward,
    /// Weights for [`ScalarReward::Quality`]; `None` means the unit vector
    /// on the exploit axis.
    pub scalar_weights: Option<Vec<f64>>,
    /// `None` picks the scenario default, see [`ScenarioConfig::resolved_lambdas`].
    pub lambdas: Option<Vec<f64>>,
    /// 0-based.
    pub exploit_axis: usize,
    pub exploit: ExploitShape,
    pub groups_per_step: usize,
    pub ref_window: usize,
    pub advantage_epsilon: f64,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            k: 3,
            g: 8,
            m: 64,
            steps: 500,
            seed: 1,
            learning_rate: 0.03,
            clip_epsilon: 0.2,
            temperature: 1.0,
            angle_scale: 0.4,
            controller: ControllerConfig::default(),
            controller_enabled: kind == ScenarioKind::Corrected,
            normalization: Normalization::PerDim,
            baseline: Baseline::Gprl,
            scalar_reward: ScalarReward::Quality,
            scalar_weights: None,
            lambdas: None,
            exploit_axis: 0,
            exploit: ExploitShape::default(),
            groups_per_step: 8,
            ref_window: 1,
            advantage_epsilon: DEFAULT_EPSILON,
        }
    }

    /// Explicit `lambdas`, or all ones for healthy runs and all ones with
    /// [`HACKED_AXIS_WEIGHT`] on the exploit axis otherwise.
    pub fn resolved_lambdas(&self) -> Vec<f64> {
        match &self.lambdas {
            Some(l) => l.clone(),
            None => {
                let mut l = vec![1.0; self.k];
                if self.kind != ScenarioKind::Healthy && self.exploit_axis < self.k {
                    l[self.exploit_axis] = HACKED_AXIS_WEIGHT;
                }
                l
            }
        }
    }

    pub fn resolved_scalar_weights(&self) -> Vec<f64> {
        match &self.scalar_weights {
            Some(w) => w.clone(),
            None => {
                let mut w = vec![0.0; self.k];
                if self.exploit_axis < self.k {
                    w[self.exploit_axis] = 1.0;
                }
                w
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(GprlError::InvalidConfig { field, reason: reason.into() })
        }
        if self.k == 0 {
            return bad("k", "must be positive");
        }
        if self.g < 2 {
            return bad("g", "must be at least 2");
        }
        if self.m < 2 {
            return bad("m", "must be at least 2");
        }
        if self.kind != ScenarioKind::Healthy && self.m < 9 {
            return bad("m", "must be at least 9 when the catalog carries an exploit block");
        }
        if self.steps == 0 {
            return bad("steps", "must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be finite and nonnegative");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon", "must lie in (0, 1)");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature", "must be positive");
        }
        if !(self.angle_scale > 0.0 && self.angle_scale.is_finite()) {
            return bad("angle_scale", "must be positive");
        }
        if self.exploit_axis >= self.k {
            return bad("exploit_axis", format!("must be between 1 and k={}", self.k));
        }
        if self.groups_per_step == 0 {
            return bad("groups_per_step", "must be positive");
        }
        if self.ref_window == 0 || self.ref_window > self.steps {
            return bad("ref_window", "must lie in 1..=steps");
        }
        if !(self.advantage_epsilon >= 0.0 && self.advantage_epsilon.is_finite()) {
            return bad("advantage_epsilon", "must be finite and nonnegative");
        }
        let lambdas = self.resolved_lambdas();
        if lambdas.len() != self.k || SubspaceWeights::new(lambdas).is_err() {
            return bad("lambdas", format!("need {} finite nonnegative values", self.k));
        }
        if self.resolved_scalar_weights().len() != self.k {
            return bad("scalar_weights", format!("need {} values", self.k));
        }
        match (self.kind, self.controller_enabled) {
            (ScenarioKind::Hacked, true) => return bad("controller", "hacked runs keep the controller off"),
            (ScenarioKind::Corrected, false) => return bad("controller", "corrected runs need the controller on"),
            _ => {}
        }
        self.controller.validate()
    }
}

/// Per-step output; one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub drift: f64,
    /// KL coefficient after this step's controller update.
    pub beta: f64,
    pub engaged: bool,
    pub multipliers: Vec<f64>,
    pub alpha: Vec<f64>,
    pub exploit_mass: f64,
    pub mean_quality: Vec<f64>,
    pub kl_to_ref: f64,
    pub loss: f64,
    pub mean_aggregate_advantage: f64,
}

/// Full training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: ScenarioConfig,
    catalog: Catalog,
    policy: SoftmaxPolicy,
    reference: SoftmaxPolicy,
    lambdas: SubspaceWeights,
    scalar_weights: Vec<f64>,
    drift: Option<DriftState>,
    warmup: Vec<VarianceProfile>,
    rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let catalog = Catalog::synthetic(&cfg, &mut rng)?;
        let policy = SoftmaxPolicy::uniform(cfg.m, cfg.temperature);
        let lambdas = SubspaceWeights::new(cfg.resolved_lambdas())?;
        let scalar_weights = cfg.resolved_scalar_weights();
        Ok(Self {
            reference: policy.clone(),
            policy,
            catalog,
            lambdas,
            scalar_weights,
            drift: None,
            warmup: Vec::new(),
            rng,
            step: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn policy(&self) -> &SoftmaxPolicy {
        &self.policy
    }

    pub fn drift_state(&self) -> Option<&DriftState> {
        self.drift.as_ref()
    }

    fn group_advantages(&self, s_hat: &PopulationScores, indices: &[usize], w: &[f64]) -> Result<Vec<f64>> {
        let eps = self.cfg.advantage_epsilon;
        match self.cfg.baseline {
            Baseline::Gprl => {
                let prof = match self.cfg.normalization {
                    Normalization::PerDim => normalize_per_dimension(s_hat, eps)?,
                    Normalization::Global => normalize_global(s_hat, eps)?,
                };
                Ok(aggregate_advantage(&prof, w)?.aggregate)
            }
            Baseline::GrpoScalar => {
                let lam = self.lambdas.as_slice();
                let rewards: Vec<f64> = match self.cfg.scalar_reward {
                    ScalarReward::Quality => indices
                        .iter()
                        .map(|&a| {
                            let q = &self.catalog.responses[a].quality;
                            (0..q.len()).fold(0.0, |acc, l| acc + self.scalar_weights[l] * q[l])
                        })
                        .collect(),
                    ScalarReward::Gpm => (0..s_hat.g())
                        .map(|i| (0..s_hat.k()).fold(0.0, |acc, l| acc + lam[l] * s_hat.get(i, l)))
                        .collect(),
                };
                // match the step size of an aggregate whose axes all agree
                let scale = lam.iter().fold(0.0, |acc, l| acc + l);
                Ok(grpo_advantage(&rewards, eps)?.into_iter().map(|a| 0.0 + scale * a).collect())
            }
        }
    }

    /// Sample, score, update the logits, then update the drift monitor.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let cfg = &self.cfg;
        let probs = self.policy.probs();
        let groups: Vec<RolloutGroup> =
            (0..cfg.groups_per_step).map(|_| draw(&probs, cfg.g, &mut self.rng)).collect();

        let mut batch = Vec::with_capacity(groups.len());
        for grp in &groups {
            let members: Vec<PreferenceEmbedding> =
                grp.indices.iter().map(|&a| self.catalog.embeddings[a].clone()).collect();
            batch.push(population_scores(&score_tensor(&members)?)?);
        }

        let multipliers = match &self.drift {
            Some(d) => d.multipliers.clone(),
            None => vec![1.0; cfg.k],
        };
        let w: Vec<f64> = multipliers.iter().zip(self.lambdas.as_slice()).map(|(m, l)| m * l).collect();
        let beta = self.drift.as_ref().map_or(cfg.controller.beta_0, |d| d.beta);

        let b = groups.len() as f64;
        let mut grad = vec![0.0; cfg.m];
        let mut loss = 0.0;
        let mut adv_sum = 0.0;
        for (grp, s_hat) in groups.iter().zip(&batch) {
            let adv = self.group_advantages(s_hat, &grp.indices, &w)?;
            adv_sum += adv.iter().sum::<f64>();
            loss += surrogate_loss(&self.policy, &self.reference, grp, &adv, cfg.clip_epsilon, beta)? / b;
            let g = surrogate_gradient(&self.policy, &self.reference, grp, &adv, cfg.clip_epsilon, beta)?;
            for (acc, x) in grad.iter_mut().zip(g) {
                *acc += x / b;
            }
        }
        for (z, gz) in self.policy.logits.iter_mut().zip(&grad) {
            *z -= cfg.learning_rate * gz;
        }

        let alpha = variance_profile(&batch)?;
        let (drift, beta_after, engaged) = if self.step < cfg.ref_window {
            self.warmup.push(alpha.clone());
            if self.warmup.len() == cfg.ref_window {
                let reference = VarianceProfile::average(&self.warmup)?;
                self.drift = Some(DriftState::new(reference, cfg.controller)?);
            }
            (0.0, beta, false)
        } else {
            let state = self.drift.as_mut().expect("reference profile is set after the warmup window");
            if cfg.controller_enabled {
                *state = controller_step(state, &alpha)?;
            } else {
                state.last_drift = drift_metric(&alpha, &state.alpha_ref, cfg.controller.eps_profile)?;
                state.step += 1;
            }
            (state.last_drift, state.beta, state.engaged)
        };

        let p = self.policy.probs();
        let exploit_mass = self.catalog.responses.iter().zip(&p).filter(|(r, _)| r.exploit).map(|(_, q)| q).sum();
        let mean_quality = (0..cfg.k)
            .map(|l| self.catalog.responses.iter().zip(&p).map(|(r, q)| q * r.quality[l]).sum())
            .collect();
        let record = StepRecord {
            step: self.step,
            drift,
            beta: beta_after,
            engaged,
            multipliers: self.drift.as_ref().map_or_else(|| vec![1.0; cfg.k], |d| d.multipliers.clone()),
            alpha: alpha.as_slice().to_vec(),
            exploit_mass,
            mean_quality,
            kl_to_ref: kl_probs(&p, &self.reference.probs()).max(0.0),
            loss,
            mean_aggregate_advantage: adv_sum / (b * cfg.g as f64),
        };
        self.step += 1;
        Ok(record)
    }
}

/// Run a scenario for `cfg.steps` steps.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<StepRecord>> {
    let mut trainer = Trainer::new(cfg.clone())?;
    (0..cfg.steps).map(|_| trainer.train_step()).collect()
}

/// Mean drift over the last [`TERMINAL_WINDOW`] steps (or all of them for
/// shorter runs).
pub fn terminal_drift(records: &[StepRecord]) -> f64 {
    let n = records.len().min(TERMINAL_WINDOW).max(1);
    records.iter().rev().take(n).map(|r| r.drift).sum::<f64>() / n as f64
}
