//! Drift monitor and closed-loop weight controller.
//!
//! The variance profile is the share of between-response score variance
//! carried by each subspace. Drift is the KL divergence of the current
//! profile from the one recorded at the start of training. While drift is
//! above `tau` the controller shifts weight away from over-grown axes and
//! raises the KL coefficient; otherwise both decay back toward baseline.

use crate::advantage::PopulationScores;
use crate::error::{invalid, GprlError, Result};
use crate::preference_core::SubspaceWeights;

/// A point on the `k`-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    alpha: Vec<f64>,
}

impl VarianceProfile {
    /// Accepts nonnegative entries summing to 1 within `1e-12`.
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return invalid("profile must be nonempty");
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return invalid("profile entries must be finite and nonnegative");
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("profile sums to {total}, not 1"));
        }
        Ok(Self { alpha })
    }

    pub fn uniform(k: usize) -> Self {
        Self { alpha: vec![1.0 / k as f64; k] }
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    /// Entrywise mean of several profiles, renormalized.
    pub fn average(profiles: &[VarianceProfile]) -> Result<Self> {
        let first = profiles.first().ok_or_else(|| GprlError::InvalidArgument("no profiles to average".into()))?;
        let k = first.k();
        if profiles.iter().any(|p| p.k() != k) {
            return invalid("profiles differ in k");
        }
        let mut acc = vec![0.0; k];
        for p in profiles {
            for (a, x) in acc.iter_mut().zip(&p.alpha) {
                *a += x;
            }
        }
        let total: f64 = acc.iter().sum();
        Ok(Self { alpha: acc.into_iter().map(|a| a / total).collect() })
    }
}

/// Controller hyperparameters. `Default` gives the standard settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub tau: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub beta_max: f64,
    pub delta: f64,
    pub beta_0: f64,
    pub eps_profile: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { tau: 0.20, gamma: 0.5, kappa: 1.5, beta_max: 0.20, delta: 0.99, beta_0: 0.01, eps_profile: 1e-6 }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: &str| {
            Err(GprlError::InvalidConfig { field, reason: reason.to_string() })
        };
        if !(self.tau > 0.0) {
            return bad("tau", "must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(self.kappa > 1.0 && self.kappa.is_finite()) {
            return bad("kappa", "must be greater than 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", "must lie in (0, 1)");
        }
        if !(self.beta_0 > 0.0 && self.beta_0.is_finite()) {
            return bad("beta0", "must be positive");
        }
        if !(self.beta_max >= self.beta_0 && self.beta_max.is_finite()) {
            return bad("beta_max", "must be finite and at least beta0");
        }
        if !(self.eps_profile > 0.0 && self.eps_profile.is_finite()) {
            return bad("eps_profile", "must be positive");
        }
        Ok(())
    }
}

/// Controller state carried across training steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftState {
    pub alpha_ref: VarianceProfile,
    pub multipliers: Vec<f64>,
    pub beta: f64,
    pub config: ControllerConfig,
    /// Whether the last step tightened.
    pub engaged: bool,
    pub step: u64,
    /// Drift measured at the last step.
    pub last_drift: f64,
}

impl DriftState {
    /// Fresh state: unit multipliers, `beta = beta_0`.
    pub fn new(alpha_ref: VarianceProfile, config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        let k = alpha_ref.k();
        Ok(Self {
            alpha_ref,
            multipliers: vec![1.0; k],
            beta: config.beta_0,
            config,
            engaged: false,
            step: 0,
            last_drift: 0.0,
        })
    }
}

/// Pooled variance profile of a batch of groups.
///
/// Per dimension, the population variance of `s_hat` is taken within each
/// group and summed across the batch, then the sums are normalized. An
/// all-zero total gives the uniform profile.
pub fn variance_profile(batch: &[PopulationScores]) -> Result<VarianceProfile> {
    let first = batch.first().ok_or_else(|| GprlError::InvalidArgument("empty batch".into()))?;
    let k = first.k();
    if batch.iter().any(|p| p.k() != k) {
        return invalid("batch mixes different k");
    }
    let mut var = vec![0.0; k];
    for p in batch {
        let n = p.g() as f64;
        for (l, v) in var.iter_mut().enumerate() {
            let col = p.column(l);
            let mu = col.iter().sum::<f64>() / n;
            *v += col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
        }
    }
    let total: f64 = var.iter().sum();
    if total == 0.0 {
        return Ok(VarianceProfile::uniform(k));
    }
    Ok(VarianceProfile { alpha: var.into_iter().map(|v| v / total).collect() })
}

fn smooth(alpha: &[f64], eps: f64) -> Vec<f64> {
    let total: f64 = alpha.iter().map(|a| a + eps).sum();
    alpha.iter().map(|a| (a + eps) / total).collect()
}

/// `KL(current || reference)` on `eps`-smoothed, renormalized profiles.
pub fn drift_metric(current: &VarianceProfile, reference: &VarianceProfile, eps: f64) -> Result<f64> {
    if current.k() != reference.k() {
        return invalid(format!("k mismatch: {} vs {}", current.k(), reference.k()));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return invalid("eps must be finite and nonnegative");
    }
    let p = smooth(&current.alpha, eps);
    let q = smooth(&reference.alpha, eps);
    let d = p
        .iter()
        .zip(&q)
        .filter(|(pl, _)| **pl > 0.0)
        .map(|(pl, ql)| pl * (pl / ql).ln())
        .sum::<f64>();
    // a sum of terms that cancel exactly can land a hair below zero
    Ok(d.max(0.0))
}

/// Raw tighten factors `(alpha_ref_l / (alpha_l + eps))^gamma`, before the
/// mean-one renormalization.
pub fn tighten_factors(alpha_ref: &VarianceProfile, current: &VarianceProfile, gamma: f64, eps: f64) -> Vec<f64> {
    alpha_ref
        .alpha
        .iter()
        .zip(&current.alpha)
        .map(|(a0, a)| (a0 / (a + eps)).powf(gamma))
        .collect()
}

/// One controller update against the current profile.
pub fn controller_step(state: &DriftState, current: &VarianceProfile) -> Result<DriftState> {
    let cfg = state.config;
    let d = drift_metric(current, &state.alpha_ref, cfg.eps_profile)?;
    let mut next = state.clone();
    if d > cfg.tau {
        let f = tighten_factors(&state.alpha_ref, current, cfg.gamma, cfg.eps_profile);
        let raw: Vec<f64> = state.multipliers.iter().zip(&f).map(|(m, f)| m * f).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        next.multipliers = if mean > 0.0 && mean.is_finite() {
            raw.iter().map(|m| m / mean).collect()
        } else {
            vec![1.0; raw.len()]
        };
        next.beta = (cfg.kappa * state.beta).min(cfg.beta_max);
        next.engaged = true;
    } else {
        next.multipliers = state.multipliers.iter().map(|m| cfg.delta * m + (1.0 - cfg.delta)).collect();
        next.beta = cfg.beta_0.max(state.beta * cfg.delta);
        next.engaged = false;
    }
    next.step += 1;
    next.last_drift = d;
    Ok(next)
}

/// `m_l * lambda_l`.
pub fn effective_weights(state: &DriftState, lambdas: &SubspaceWeights) -> Result<Vec<f64>> {
    if lambdas.k() != state.multipliers.len() {
        return invalid(format!("expected {} weights, got {}", state.multipliers.len(), lambdas.k()));
    }
    Ok(state.multipliers.iter().zip(lambdas.as_slice()).map(|(m, l)| m * l).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vp(a: &[f64]) -> VarianceProfile {
        VarianceProfile::new(a.to_vec()).unwrap()
    }

    #[test]
    fn profile_from_variances() {
        // column variances 3 and 1
        let s = 3f64.sqrt();
        let p = PopulationScores::from_rows(2, 2, vec![-s, -1.0, s, 1.0]).unwrap();
        let a = variance_profile(&[p]).unwrap();
        assert!((a.as_slice()[0] - 0.75).abs() < 1e-15);
        assert!((a.as_slice()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_groups_give_uniform() {
        let p = PopulationScores::from_rows(3, 3, vec![0.2; 9]).unwrap();
        assert_eq!(variance_profile(&[p.clone(), p]).unwrap(), VarianceProfile::uniform(3));
        assert!(variance_profile(&[]).is_err());
    }

    #[test]
    fn drift_against_uniform() {
        let d = drift_metric(&vp(&[0.8, 0.1, 0.1]), &VarianceProfile::uniform(3), 0.0).unwrap();
        let expect = 0.8 * 2.4f64.ln() + 0.2 * 0.3f64.ln();
        assert!((d - expect).abs() < 1e-12);
        assert!((d - 0.4596).abs() < 1e-4);
        let back = drift_metric(&VarianceProfile::uniform(3), &vp(&[0.8, 0.1, 0.1]), 0.0).unwrap();
        assert!((back - d).abs() > 1e-3);
        assert_eq!(drift_metric(&vp(&[0.2, 0.8]), &vp(&[0.2, 0.8]), 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn tighten_example() {
        let cfg = ControllerConfig { eps_profile: 1e-300, ..Default::default() };
        let s = DriftState::new(VarianceProfile::uniform(3), cfg).unwrap();
        let n = controller_step(&s, &vp(&[0.8, 0.1, 0.1])).unwrap();
        assert!(n.engaged);
        let m = &n.multipliers;
        assert!((m[0] - 0.4507).abs() < 1e-4 && (m[1] - 1.2747).abs() < 1e-4 && m[1] == m[2]);
        assert!((n.beta - 0.015).abs() < 1e-15);
    }

    #[test]
    fn relax_example() {
        let mut s = DriftState::new(VarianceProfile::uniform(3), ControllerConfig::default()).unwrap();
        s.multipliers = vec![0.5, 1.5, 1.0];
        s.beta = 0.05;
        let n = controller_step(&s, &VarianceProfile::uniform(3)).unwrap();
        assert!(!n.engaged);
        for (got, want) in n.multipliers.iter().zip([0.505, 1.495, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((n.beta - 0.0495).abs() < 1e-15);
        assert_eq!(n.step, 1);
    }

    #[test]
    fn effective_weight_example() {
        let mut s = DriftState::new(VarianceProfile::uniform(2), ControllerConfig::default()).unwrap();
        s.multipliers = vec![0.5, 1.5];
        let w = SubspaceWeights::new(vec![2.0, 2.0]).unwrap();
        assert_eq!(effective_weights(&s, &w).unwrap(), vec![1.0, 3.0]);
        assert!(effective_weights(&s, &SubspaceWeights::uniform(3)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let c = ControllerConfig { kappa: 1.0, ..Default::default() };
        assert!(matches!(c.validate(), Err(GprlError::InvalidConfig { field: "kappa", .. })));
        let c = ControllerConfig { tau: f64::INFINITY, ..Default::default() };
        assert!(c.validate().is_ok());
    }
}
