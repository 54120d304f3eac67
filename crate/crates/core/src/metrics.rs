//! Gradient diagnostics: norm distributions, private-vs-nonprivate cosine
//! similarities, and average scaling weights.

use serde::{Deserialize, Serialize};

use crate::scaling::{weight, ScalingRule};
use crate::vector::GradVector;
use crate::{Error, Result};

/// A fixed-edge histogram. When `normalized` is set, `fractions()` sums
/// to 1 over nonempty input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub normalized: bool,
}

impl Histogram {
    /// Uniform bins over [lo, hi]; values outside are clamped into the end
    /// bins so mass is conserved.
    pub fn uniform(values: &[f64], num_bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
        if num_bins == 0 {
            return Err(Error::InvalidArgument("num_bins must be >= 1".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput("histogram over empty values".into()));
        }
        if !(hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "invalid histogram range [{lo}, {hi}]"
            )));
        }
        let edges: Vec<f64> = (0..=num_bins)
            .map(|i| lo + (hi - lo) * i as f64 / num_bins as f64)
            .collect();
        let mut counts = vec![0u64; num_bins];
        for &v in values {
            let t = ((v - lo) / (hi - lo) * num_bins as f64).floor();
            let bin = (t as i64).clamp(0, num_bins as i64 - 1) as usize;
            counts[bin] += 1;
        }
        Ok(Histogram {
            edges,
            counts,
            normalized: false,
        })
    }

    /// Uniform bins spanning the observed value range.
    pub fn spanning(values: &[f64], num_bins: usize) -> Result<Histogram> {
        if values.is_empty() {
            return Err(Error::EmptyInput("histogram over empty values".into()));
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Histogram::uniform(values, num_bins, lo, hi)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn normalize(mut self) -> Histogram {
        self.normalized = true;
        self
    }

    /// Counts as fractions of the total.
    pub fn fractions(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// Per-epoch (or per-step) metrics persisted by the harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    pub mean_grad_norm: f64,
    pub mean_scaling_weight: f64,
    pub noise_to_signal_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity_histogram: Option<Histogram>,
}

/// <a, b> / (||a|| ||b||). Errors on zero vectors.
pub fn cosine_similarity(a: &GradVector, b: &GradVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Histogram of per-batch cosine similarities between the private gradients
/// and the matching non-private batch means, over uniform bins from the
/// observed minimum up to 1.
pub fn similarity_histogram(
    private_grads: &[GradVector],
    nonprivate_batch_means: &[GradVector],
    num_bins: usize,
) -> Result<Histogram> {
    if private_grads.len() != nonprivate_batch_means.len() {
        return Err(Error::DimensionMismatch {
            expected: private_grads.len(),
            got: nonprivate_batch_means.len(),
        });
    }
    let sims: Vec<f64> = private_grads
        .iter()
        .zip(nonprivate_batch_means)
        .map(|(p, np)| cosine_similarity(p, np))
        .collect::<Result<_>>()?;
    let mut lo = sims.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lo < 1.0 - 1e-9) {
        lo = 0.0; // every pair aligned: mass lands in the top bin over [0, 1]
    }
    Histogram::uniform(&sims, num_bins, lo, 1.0)
}

/// Histogram of collected per-sample gradient norms.
pub fn norm_distribution(per_sample_norms: &[f64], num_bins: usize) -> Result<Histogram> {
    Histogram::spanning(per_sample_norms, num_bins)
}

/// Arithmetic mean of `weight(rule, norm)` over the list.
pub fn mean_scaling_weight(rule: &ScalingRule, per_sample_norms: &[f64]) -> Result<f64> {
    if per_sample_norms.is_empty() {
        return Err(Error::EmptyInput("mean_scaling_weight over empty list".into()));
    }
    let mut total = 0.0;
    for &n in per_sample_norms {
        total += weight(rule, n)?;
    }
    Ok(total / per_sample_norms.len() as f64)
}
