//! Kullback–Leibler divergence between label distributions, additive
//! smoothing, and the total quantization objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_model::LabelDistribution;
use crate::quantizer::Partition;
use crate::scalar::Scalar;

/// Smoothing constant used when none is given.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Additive smoothing applied to subset label distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig<F> {
    pub epsilon: F,
}

impl<F: Scalar> Default for SmoothingConfig<F> {
    fn default() -> Self {
        SmoothingConfig {
            epsilon: F::of(DEFAULT_EPSILON),
        }
    }
}

impl<F: Scalar> SmoothingConfig<F> {
    pub fn new(epsilon: F) -> Result<Self> {
        let config = SmoothingConfig { epsilon };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < F::zero() {
            return Err(Error::parameter(format!(
                "smoothing epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// KL(p || q) in nats over raw probability slices. Terms with p = 0 vanish.
#[inline]
pub(crate) fn kl_slices<F: Scalar>(p: &[F], q: &[F]) -> Result<F> {
    let mut total = F::zero();
    for (c, (&pc, &qc)) in p.iter().zip(q).enumerate() {
        if pc > F::zero() {
            if qc <= F::zero() {
                return Err(Error::domain(format!(
                    "unsmoothed zero in reference distribution at class {c}"
                )));
            }
            total = total + pc * (pc / qc).ln();
        }
    }
    Ok(total)
}

/// Σ_c p[c] · ln(p[c] / q[c]), with 0 · ln(0 / q) = 0.
pub fn kl_divergence<F: Scalar>(p: &LabelDistribution<F>, q: &LabelDistribution<F>) -> Result<F> {
    if p.len() != q.len() {
        return Err(Error::parameter(format!(
            "distributions have {} and {} classes",
            p.len(),
            q.len()
        )));
    }
    kl_slices(p.probs(), q.probs())
}

/// `(count_c + ε) / (total + ε·C)`.
pub fn smooth<F: Scalar>(
    raw_counts: &[usize],
    config: &SmoothingConfig<F>,
) -> Result<LabelDistribution<F>> {
    if raw_counts.is_empty() {
        return Err(Error::parameter("count vector needs at least one class"));
    }
    let total: usize = raw_counts.iter().sum();
    let eps = config.epsilon;
    if total == 0 && eps <= F::zero() {
        return Err(Error::domain("empty subset with no smoothing"));
    }
    let denom = F::of_usize(total) + eps * F::of_usize(raw_counts.len());
    Ok(LabelDistribution::from_probs_unchecked(
        raw_counts
            .iter()
            .map(|&c| (F::of_usize(c) + eps) / denom)
            .collect(),
    ))
}

/// Smooths an already-normalized distribution: `(p_c + ε) / (1 + ε·C)`.
pub(crate) fn smooth_probs<F: Scalar>(
    probs: &[F],
    config: &SmoothingConfig<F>,
) -> LabelDistribution<F> {
    let eps = config.epsilon;
    let denom = F::one() + eps * F::of_usize(probs.len());
    LabelDistribution::from_probs_unchecked(probs.iter().map(|&p| (p + eps) / denom).collect())
}

/// Total divergence Σ_m Σ_{i ∈ S_m} KL(point_dists[i] || subset_dists[m]).
pub fn objective<F: Scalar>(
    point_dists: &[LabelDistribution<F>],
    partition: &Partition,
    subset_dists: &[LabelDistribution<F>],
) -> Result<F> {
    if point_dists.len() != partition.len() {
        return Err(Error::parameter(format!(
            "{} point distributions for a partition of {} points",
            point_dists.len(),
            partition.len()
        )));
    }
    if subset_dists.len() != partition.subsets() {
        return Err(Error::parameter(format!(
            "{} subset distributions for {} subsets",
            subset_dists.len(),
            partition.subsets()
        )));
    }
    point_dists
        .iter()
        .zip(partition.assignment())
        .try_fold(F::zero(), |acc, (p, &m)| {
            Ok(acc + kl_divergence(p, &subset_dists[m])?)
        })
}
