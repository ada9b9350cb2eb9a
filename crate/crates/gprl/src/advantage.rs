//! Group-relative advantages: the scalar baseline, the per-dimension variant,
//! the clipped surrogate loss, and the single-axis hacking test.

use crate::error::{invalid, GprlError, Result};
use crate::preference_core::{ScoreTensor, SubspaceWeights};

/// Default denominator guard for both normalizations.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Mean score of each response against the rest of its group, per subspace.
/// Stored row-major as `G x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationScores {
    s_hat: Vec<f64>,
    g: usize,
    k: usize,
}

impl PopulationScores {
    /// Wrap a row-major `G x k` matrix.
    pub fn from_rows(g: usize, k: usize, s_hat: Vec<f64>) -> Result<Self> {
        if g < 2 || k == 0 || s_hat.len() != g * k {
            return invalid(format!("need G>=2, k>=1 and G*k entries (G={g}, k={k}, len={})", s_hat.len()));
        }
        Ok(Self { s_hat, g, k })
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.s_hat[i * self.k + l]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.g).map(|i| self.get(i, l)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s_hat
    }
}

/// Per-dimension and aggregate advantages for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageProfile {
    /// Row-major `G x k`.
    pub per_dim: Vec<f64>,
    /// Length `G`; empty until [`aggregate_advantage`] fills it.
    pub aggregate: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub epsilon: f64,
    pub g: usize,
    pub k: usize,
}

impl AdvantageProfile {
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.per_dim[i * self.k + l]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.g).map(|i| self.get(i, l)).collect()
    }
}

/// `s_hat[i][l] = sum_{j != i} s_l(i, j) / (G - 1)`.
pub fn population_scores(tensor: &ScoreTensor) -> Result<PopulationScores> {
    let (g, k) = (tensor.g(), tensor.k());
    if g < 2 {
        return invalid("population scores need G >= 2");
    }
    let denom = (g - 1) as f64;
    let mut s_hat = vec![0.0; g * k];
    for l in 0..k {
        let m = tensor.matrix(l);
        for i in 0..g {
            let mut acc = 0.0;
            for j in 0..g {
                if j != i {
                    acc += m[i * g + j];
                }
            }
            s_hat[i * k + l] = acc / denom;
        }
    }
    Ok(PopulationScores { s_hat, g, k })
}

/// Mean and population standard deviation.
fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return invalid(format!("epsilon must be finite and nonnegative, got {epsilon}"));
    }
    Ok(())
}

/// Standardize every column separately. A column whose standard deviation
/// is exactly zero maps to zeros.
pub fn normalize_per_dimension(p: &PopulationScores, epsilon: f64) -> Result<AdvantageProfile> {
    check_epsilon(epsilon)?;
    let (g, k) = (p.g, p.k);
    let mut per_dim = vec![0.0; g * k];
    let mut mu = vec![0.0; k];
    let mut sigma = vec![0.0; k];
    for l in 0..k {
        let col = p.column(l);
        let (m, s) = moments(&col);
        mu[l] = m;
        sigma[l] = s;
        if s != 0.0 {
            for (i, x) in col.iter().enumerate() {
                per_dim[i * k + l] = (x - m) / (s + epsilon);
            }
        }
    }
    Ok(AdvantageProfile { per_dim, aggregate: Vec::new(), mu, sigma, epsilon, g, k })
}

/// Ablation: one shared mean and standard deviation pooled over all `G * k`
/// entries. `mu` and `sigma` repeat the shared value per dimension.
pub fn normalize_global(p: &PopulationScores, epsilon: f64) -> Result<AdvantageProfile> {
    check_epsilon(epsilon)?;
    let (g, k) = (p.g, p.k);
    let (m, s) = moments(&p.s_hat);
    let per_dim = if s != 0.0 {
        p.s_hat.iter().map(|x| (x - m) / (s + epsilon)).collect()
    } else {
        vec![0.0; g * k]
    };
    Ok(AdvantageProfile { per_dim, aggregate: Vec::new(), mu: vec![m; k], sigma: vec![s; k], epsilon, g, k })
}

/// `aggregate[i] = sum_l w_l * per_dim[i][l]`. Weights may be negative.
pub fn aggregate_advantage(profile: &AdvantageProfile, w: &[f64]) -> Result<AdvantageProfile> {
    if w.len() != profile.k {
        return invalid(format!("expected {} weights, got {}", profile.k, w.len()));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return invalid("weights must be finite");
    }
    let aggregate = (0..profile.g)
        .map(|i| (0..profile.k).fold(0.0, |acc, l| acc + w[l] * profile.get(i, l)))
        .collect();
    Ok(AdvantageProfile { aggregate, ..profile.clone() })
}

/// Scalar group-relative advantage `(R_i - mean) / (std + epsilon)`.
///
/// Unlike [`normalize_per_dimension`] there is no zero-spread special case;
/// constant rewards still give zeros because the numerator vanishes.
pub fn grpo_advantage(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return invalid("grpo_advantage needs at least 2 rewards");
    }
    check_epsilon(epsilon)?;
    let (m, s) = moments(rewards);
    Ok(rewards.iter().map(|x| (x - m) / (s + epsilon)).collect())
}

/// Inputs to the clipped surrogate loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateInputs {
    pub ratios: Vec<f64>,
    pub advantages: Vec<f64>,
    pub clip_epsilon: f64,
    pub beta: f64,
    pub kl_value: f64,
}

/// `-[mean_i min(r_i A_i, clip(r_i) A_i) - beta * KL]`.
pub fn clipped_surrogate(inputs: &SurrogateInputs) -> Result<f64> {
    let SurrogateInputs { ratios, advantages, clip_epsilon, beta, kl_value } = inputs;
    if ratios.is_empty() || ratios.len() != advantages.len() {
        return invalid("ratios and advantages must be nonempty and equal length");
    }
    if let Some(i) = ratios.iter().position(|r| !(*r > 0.0)) {
        return invalid(format!("ratio {i} is not positive"));
    }
    if !(*clip_epsilon > 0.0 && *clip_epsilon < 1.0) {
        return invalid(format!("clip_epsilon must lie in (0, 1), got {clip_epsilon}"));
    }
    let (lo, hi) = (1.0 - clip_epsilon, 1.0 + clip_epsilon);
    let total: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(r.clamp(lo, hi) * a))
        .sum();
    Ok(-(total / ratios.len() as f64 - beta * kl_value))
}

/// Outcome of [`hacking_verdict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HackingVerdict {
    /// Weighted loss on the degraded axes exceeds the weighted gain on the
    /// inflated one.
    pub condition_holds: bool,
    pub aggregate_star: f64,
    pub aggregate_dagger: f64,
}

/// Decide whether a response `a_dagger` that inflates axis `l_star` while
/// degrading every other axis is ranked below `a_star` by the aggregate.
///
/// Inputs that do not follow that up/down pattern are rejected with the
/// offending axis.
pub fn hacking_verdict(
    a_star: &[f64],
    a_dagger: &[f64],
    w: &SubspaceWeights,
    l_star: usize,
) -> Result<HackingVerdict> {
    let k = w.k();
    if a_star.len() != k || a_dagger.len() != k {
        return invalid(format!("expected vectors of length {k}"));
    }
    if l_star >= k {
        return invalid(format!("l_star {l_star} out of range for k={k}"));
    }
    if !(a_dagger[l_star] > a_star[l_star]) {
        return Err(GprlError::PreconditionFailed {
            axis: l_star,
            reason: "exploited axis is not inflated".into(),
        });
    }
    if let Some(l) = (0..k).find(|&l| l != l_star && !(a_dagger[l] < a_star[l])) {
        return Err(GprlError::PreconditionFailed { axis: l, reason: "axis is not degraded".into() });
    }
    let lam = w.as_slice();
    let gain = lam[l_star] * (a_dagger[l_star] - a_star[l_star]);
    let loss = (0..k)
        .filter(|&l| l != l_star)
        .fold(0.0, |acc, l| acc + lam[l] * (a_star[l] - a_dagger[l]));
    let condition_holds = loss > gain;
    let dot = |a: &[f64]| (0..k).fold(0.0, |acc, l| acc + lam[l] * a[l]);
    let (aggregate_star, aggregate_dagger) = (dot(a_star), dot(a_dagger));
    if condition_holds {
        // the two sides are computed in different orders, so allow rounding
        let slack = 8.0 * f64::EPSILON * (0..k).map(|l| lam[l] * (a_star[l].abs() + a_dagger[l].abs())).sum::<f64>();
        assert!(
            aggregate_dagger < aggregate_star + slack,
            "aggregate ordering violated: {aggregate_dagger} >= {aggregate_star}"
        );
    }
    Ok(HackingVerdict { condition_holds, aggregate_star, aggregate_dagger })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(g: usize, k: usize, v: &[f64]) -> PopulationScores {
        PopulationScores::from_rows(g, k, v.to_vec()).unwrap()
    }

    #[test]
    fn column_one_two_three() {
        let p = normalize_per_dimension(&ps(3, 1, &[1.0, 2.0, 3.0]), 0.0).unwrap();
        let z = 1.224_744_871_391_589; // sqrt(3/2)
        assert!((p.per_dim[0] + z).abs() < 1e-12);
        assert_eq!(p.per_dim[1], 0.0);
        assert!((p.per_dim[2] - z).abs() < 1e-12);
        assert_eq!(p.mu[0], 2.0);
        assert!((p.sigma[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_zero() {
        let p = normalize_per_dimension(&ps(3, 2, &[0.3, 1.0, 0.3, 2.0, 0.3, 4.0]), 1e-8).unwrap();
        assert_eq!(p.column(0), vec![0.0; 3]);
        assert!(p.column(1).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn two_member_group() {
        let p = ps(2, 1, &[-1.0, 1.0]);
        assert_eq!(p.column(0), vec![-1.0, 1.0]);
        assert_eq!(grpo_advantage(&[0.0, 1.0], 0.0).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(grpo_advantage(&[2.0, 2.0, 2.0], 1e-4).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn aggregate_edge_cases() {
        let p = normalize_per_dimension(&ps(3, 2, &[0.1, 0.5, -0.2, 0.0, 0.4, -0.3]), 1e-8).unwrap();
        let zero = aggregate_advantage(&p, &[0.0, 0.0]).unwrap();
        assert!(zero.aggregate.iter().all(|&x| x == 0.0));
        assert!(aggregate_advantage(&p, &[1.0]).is_err());
        let p1 = normalize_per_dimension(&ps(3, 1, &[0.1, -0.2, 0.4]), 1e-8).unwrap();
        let a1 = aggregate_advantage(&p1, &[1.0]).unwrap();
        assert_eq!(a1.aggregate, p1.per_dim);
    }

    #[test]
    fn clip_branches() {
        let loss = |r: f64, a: f64| {
            clipped_surrogate(&SurrogateInputs {
                ratios: vec![r],
                advantages: vec![a],
                clip_epsilon: 0.2,
                beta: 0.0,
                kl_value: 0.0,
            })
            .unwrap()
        };
        assert!((loss(2.0, 1.0) + 1.2).abs() < 1e-15);
        assert!((loss(0.5, -1.0) - 0.8).abs() < 1e-15);
        let at_one = clipped_surrogate(&SurrogateInputs {
            ratios: vec![1.0; 3],
            advantages: vec![-1.0, 0.5, 0.5],
            clip_epsilon: 0.2,
            beta: 0.1,
            kl_value: 0.3,
        })
        .unwrap();
        assert!((at_one - 0.03).abs() < 1e-15);
    }

    #[test]
    fn surrogate_rejects_nonpositive_ratio() {
        let r = clipped_surrogate(&SurrogateInputs {
            ratios: vec![1.0, 0.0],
            advantages: vec![1.0, -1.0],
            clip_epsilon: 0.2,
            beta: 0.0,
            kl_value: 0.0,
        });
        assert!(r.is_err());
    }

    #[test]
    fn verdict_examples() {
        let w = SubspaceWeights::new(vec![1.0, 1.0]).unwrap();
        let v = hacking_verdict(&[0.5, 0.5], &[1.0, -0.5], &w, 0).unwrap();
        assert!(v.condition_holds);
        assert_eq!((v.aggregate_star, v.aggregate_dagger), (1.0, 0.5));

        let w = SubspaceWeights::new(vec![1.0, 0.0]).unwrap();
        let v = hacking_verdict(&[0.5, 0.5], &[1.0, -0.5], &w, 0).unwrap();
        assert!(!v.condition_holds);
    }

    #[test]
    fn verdict_rejects_bad_pattern() {
        let w = SubspaceWeights::uniform(3);
        let err = hacking_verdict(&[0.0, 0.0, 0.0], &[1.0, -1.0, 0.0], &w, 0).unwrap_err();
        assert_eq!(err, GprlError::PreconditionFailed { axis: 2, reason: "axis is not degraded".into() });
        let err = hacking_verdict(&[0.0, 0.0, 0.0], &[0.0, -1.0, -1.0], &w, 0).unwrap_err();
        assert!(matches!(err, GprlError::PreconditionFailed { axis: 0, .. }));
    }
}
