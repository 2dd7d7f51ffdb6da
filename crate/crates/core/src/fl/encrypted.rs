//! The encrypted half of a training round.
//!
//! The provider holds a pooled data shard it can read only through the
//! simulated cipher: features and labels are encrypted once up front,
//! and each round the gradient is computed homomorphically against the
//! freshly encrypted model. The multiplication chain per round is
//!
//! ```text
//! P = F·Υ          (depth 1)
//! R = P − L        (depth 1, subtraction is free)
//! S = Fᵀ·R         (depth 2)
//! ```
//!
//! so a round consumes two of the four depth levels; re-encrypting the
//! model each round resets the chain, which is what keeps an arbitrarily
//! long training run inside the budget.
//!
//! Aggregation works on *sum-form* gradients: user means get weighted by
//! their sample counts, the shard contributes `S` directly, and one
//! plaintext scalar multiply by `1/total` at the end produces the global
//! mean gradient.

use super::FlError;
use crate::data::Dataset;
use crate::he::matrix::CipherMatrix;
use crate::he::{HeError, KeyPair};

/// A dataset frozen into ciphertext: features, their transpose (a free
/// reindexing, precomputed once), and labels, all at depth 0.
#[derive(Debug, Clone)]
pub struct EncryptedShard {
    features: CipherMatrix,
    features_t: CipherMatrix,
    labels: CipherMatrix,
    n_samples: usize,
}

impl EncryptedShard {
    /// Encrypts a dataset under `key` at the given fixed-point scale.
    pub fn enc(ds: &Dataset, key: &KeyPair, scale: u64) -> Result<Self, HeError> {
        let features = CipherMatrix::enc(ds.features(), key, scale)?;
        let features_t = features.transpose();
        let labels = CipherMatrix::enc(ds.labels(), key, scale)?;
        Ok(Self {
            features,
            features_t,
            labels,
            n_samples: ds.n_samples(),
        })
    }

    /// Number of samples in the shard.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Feature dimension of the shard.
    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Label dimension of the shard.
    pub fn label_dim(&self) -> usize {
        self.labels.ncols()
    }

    /// Homomorphic sum-form gradient `Fᵀ(F·Υ − L)` against an encrypted
    /// model. Output depth = model depth + 2.
    pub fn gradient_sum(&self, model: &CipherMatrix) -> Result<CipherMatrix, HeError> {
        let predictions = self.features.matmul(model)?;
        let residuals = predictions.hsub(&self.labels)?;
        self.features_t.matmul(&residuals)
    }
}

/// Weighted sum of encrypted matrices: `Σ wᵢ·Mᵢ`, accumulated in the
/// given order via plaintext scalar multiplies and exact additions.
/// Returns the all-zero matrix when `terms` is empty.
pub fn weighted_sum(
    terms: &[(f64, &CipherMatrix)],
    rows: usize,
    cols: usize,
    key: &KeyPair,
    scale: u64,
) -> Result<CipherMatrix, HeError> {
    let mut acc = CipherMatrix::zeros(rows, cols, key, scale)?;
    for (w, m) in terms {
        acc = acc.hadd(&m.hmul_plain(*w)?)?;
    }
    Ok(acc)
}

/// Merges user gradients with the shard gradient into the global mean.
///
/// `user_terms` pairs each reporting user's *mean* gradient (encrypted)
/// with its sample count; `shard_sum` is the shard's sum-form gradient
/// with `shard_samples` samples. The result is
/// `(Σ wₙ·gₙ + S) / (Σ wₙ + shard_samples)` — exactly the pooled mean
/// gradient when every holder reports.
pub fn merge_global_gradient(
    user_terms: &[(usize, &CipherMatrix)],
    shard_sum: Option<(&CipherMatrix, usize)>,
    rows: usize,
    cols: usize,
    key: &KeyPair,
    scale: u64,
) -> Result<CipherMatrix, FlError> {
    let weighted: Vec<(f64, &CipherMatrix)> = user_terms
        .iter()
        .map(|&(w, m)| (w as f64, m))
        .collect();
    let mut total = user_terms.iter().map(|&(w, _)| w).sum::<usize>();
    let mut acc = weighted_sum(&weighted, rows, cols, key, scale)?;
    if let Some((sum, samples)) = shard_sum {
        acc = acc.hadd(sum)?;
        total += samples;
    }
    if total == 0 {
        return Err(FlError::NoTrainingData);
    }
    Ok(acc.hmul_plain(1.0 / total as f64)?)
}

/// Worst-case entry-wise error of [`EncryptedShard::gradient_sum`]
/// against plaintext arithmetic, given magnitude bounds on the decoded
/// inputs. Composes the per-product bounds: the prediction step
/// accumulates `feature_dim` terms, the residual adds one encoding step,
/// and the final product accumulates `n_samples` terms whose residual
/// factor carries the upstream error.
pub fn gradient_sum_error_bound(
    n_samples: usize,
    feature_dim: usize,
    scale: u64,
    max_abs_feature: f64,
    max_abs_model: f64,
    max_abs_residual: f64,
) -> f64 {
    let e0 = 1.0 / scale as f64; // encoding error of any fresh input
    let q = 2.0 / scale as f64; // post-rescale quantization per term
    let err_pred = feature_dim as f64 * (q + (max_abs_feature + max_abs_model) * e0);
    let err_resid = err_pred + e0;
    n_samples as f64
        * (q + max_abs_feature * err_resid + (max_abs_residual + err_resid) * e0)
}
