//! Preference embeddings and block skew-symmetric scoring.
//!
//! An embedding lives on the unit sphere in `R^{2k}`. Block `l` (0-based)
//! occupies components `2l` and `2l + 1`; in the usual 1-based notation these
//! are `v^(2l-1)` and `v^(2l)`. The subspace score of a pair is the signed
//! area spanned by the two blocks:
//!
//! ```text
//! s_l(i, j) = v_i[2l+1] * v_j[2l] - v_i[2l] * v_j[2l+1]
//! ```

use crate::error::{invalid, GprlError, Result};

/// Tolerance on the L2 norm of a stored embedding.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Inputs whose norm is off by less than this are renormalized; larger
/// deviations are rejected.
pub const RENORMALIZE_LIMIT: f64 = 1e-6;

/// A unit-norm vector in `R^{2k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceEmbedding {
    components: Vec<f64>,
    k: usize,
}

impl PreferenceEmbedding {
    /// Build an embedding from raw components.
    ///
    /// The length must be a positive even number and every component finite.
    /// A norm within `RENORMALIZE_LIMIT` of 1 is snapped to exactly unit norm.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() % 2 != 0 {
            return invalid(format!(
                "embedding length must be a positive even number, got {}",
                components.len()
            ));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return invalid("embedding has a non-finite component");
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        let dev = (norm - 1.0).abs();
        if dev > RENORMALIZE_LIMIT {
            return invalid(format!("embedding norm {norm} is not close to 1"));
        }
        let components = if dev > 0.0 {
            components.into_iter().map(|c| c / norm).collect()
        } else {
            components
        };
        let k = components.len() / 2;
        Ok(Self { components, k })
    }

    /// Number of 2-D subspaces.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    /// The `(v^(2l-1), v^(2l))` pair of block `l` (0-based).
    pub fn block(&self, l: usize) -> (f64, f64) {
        (self.components[2 * l], self.components[2 * l + 1])
    }
}

/// Nonnegative per-subspace aggregation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceWeights {
    lambdas: Vec<f64>,
}

impl SubspaceWeights {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return invalid("weights must be nonempty");
        }
        if let Some(l) = lambdas.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid(format!("weight {l} is negative or non-finite"));
        }
        Ok(Self { lambdas })
    }

    /// All-ones weights.
    pub fn uniform(k: usize) -> Self {
        Self { lambdas: vec![1.0; k] }
    }

    pub fn k(&self) -> usize {
        self.lambdas.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambdas
    }
}

/// `k` antisymmetric `G x G` score matrices, stored row-major per subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTensor {
    scores: Vec<f64>,
    g: usize,
    k: usize,
}

impl ScoreTensor {
    /// Assemble a tensor from `k` row-major `G x G` matrices, checking the
    /// antisymmetry and bound invariants.
    pub fn from_matrices(k: usize, g: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != k * g * g {
            return invalid(format!("expected {} scores, got {}", k * g * g, scores.len()));
        }
        let t = Self { scores, g, k };
        for l in 0..k {
            for i in 0..g {
                if t.get(l, i, i) != 0.0 {
                    return invalid(format!("nonzero diagonal in subspace {l}"));
                }
                for j in 0..g {
                    let s = t.get(l, i, j);
                    if !(s.abs() <= 1.0) || s != -t.get(l, j, i) {
                        return invalid(format!("entry ({l},{i},{j}) breaks antisymmetry or bound"));
                    }
                }
            }
        }
        Ok(t)
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `s_l(i, j)` with 0-based `l`.
    pub fn get(&self, l: usize, i: usize, j: usize) -> f64 {
        self.scores[(l * self.g + i) * self.g + j]
    }

    /// Row-major `G x G` matrix for subspace `l`.
    pub fn matrix(&self, l: usize) -> &[f64] {
        let n = self.g * self.g;
        &self.scores[l * n..(l + 1) * n]
    }
}

#[inline]
fn block_score(vi: &PreferenceEmbedding, vj: &PreferenceEmbedding, l: usize) -> f64 {
    let (ai, bi) = vi.block(l);
    let (aj, bj) = vj.block(l);
    bi * aj - ai * bj
}

/// Score of `v_i` over `v_j` in subspace `l` (0-based).
pub fn subspace_score(vi: &PreferenceEmbedding, vj: &PreferenceEmbedding, l: usize) -> Result<f64> {
    if vi.k != vj.k {
        return invalid(format!("subspace count mismatch: {} vs {}", vi.k, vj.k));
    }
    if l >= vi.k {
        return invalid(format!("subspace index {l} out of range for k={}", vi.k));
    }
    Ok(block_score(vi, vj, l))
}

/// All pairwise subspace scores of a group.
pub fn score_tensor(group: &[PreferenceEmbedding]) -> Result<ScoreTensor> {
    let g = group.len();
    if g < 2 {
        return invalid(format!("group needs at least 2 members, got {g}"));
    }
    let k = group[0].k;
    if group.iter().any(|v| v.k != k) {
        return invalid("group mixes embeddings with different k");
    }
    let mut scores = vec![0.0; k * g * g];
    for l in 0..k {
        let base = l * g * g;
        for i in 0..g {
            for j in (i + 1)..g {
                let s = block_score(&group[i], &group[j], l);
                scores[base + i * g + j] = s;
                scores[base + j * g + i] = -s;
            }
        }
    }
    Ok(ScoreTensor { scores, g, k })
}

/// `sum_l lambda_l * s_l(i, j)`.
pub fn aggregate_score(
    vi: &PreferenceEmbedding,
    vj: &PreferenceEmbedding,
    w: &SubspaceWeights,
) -> Result<f64> {
    if vi.k != vj.k || w.k() != vi.k {
        return invalid(format!(
            "dimension mismatch: k_i={}, k_j={}, weights={}",
            vi.k,
            vj.k,
            w.k()
        ));
    }
    Ok((0..vi.k).fold(0.0, |acc, l| acc + w.lambdas[l] * block_score(vi, vj, l)))
}

/// Logistic link from an aggregate score to `P(i beats j)`.
pub fn preference_probability(score: f64) -> f64 {
    if score >= 0.0 {
        1.0 / (1.0 + (-score).exp())
    } else {
        let e = score.exp();
        e / (1.0 + e)
    }
}

/// Bradley-Terry score `c * (r_i - r_j)`.
///
/// With raw two-component embeddings laid out as `(c, r)` the subspace score
/// reproduces this value exactly. The pair is not unit norm, so this lives
/// outside [`PreferenceEmbedding`].
pub fn bt_score(r_i: f64, r_j: f64, c: f64) -> Result<f64> {
    if c == 0.0 {
        return invalid("bt_score needs c != 0");
    }
    Ok(c * (r_i - r_j))
}

/// Synthetic embedding with block `l` equal to `(cos t, sin t) / sqrt(k)`,
/// `t = angle_scale * q[l]`.
///
/// The induced score is `sin(t_i - t_j) / k`, which increases with the
/// quality gap as long as the phase gap stays below `pi / 2`.
pub fn phase_embed(q: &[f64], angle_scale: f64) -> Result<PreferenceEmbedding> {
    if q.is_empty() {
        return invalid("quality vector must be nonempty");
    }
    if !(angle_scale.is_finite() && angle_scale > 0.0) {
        return invalid(format!("angle_scale must be positive, got {angle_scale}"));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return invalid("quality vector has a non-finite entry");
    }
    let scale = 1.0 / (q.len() as f64).sqrt();
    let mut components = Vec::with_capacity(2 * q.len());
    for &ql in q {
        let (s, c) = (angle_scale * ql).sin_cos();
        components.push(c * scale);
        components.push(s * scale);
    }
    PreferenceEmbedding::new(components).map_err(|e| match e {
        GprlError::InvalidArgument(m) => GprlError::InvalidArgument(format!("phase_embed: {m}")),
        other => other,
    })
}
