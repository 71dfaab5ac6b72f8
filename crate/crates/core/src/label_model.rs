//! Class-label distributions over input vectors, estimated by k-nearest-neighbor
//! voting with exact brute-force search.

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{squared_distance, Scalar};

/// Neighbor count used when none is given.
pub const DEFAULT_K: usize = 10;

/// N labeled feature vectors of dimension d over C classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset<F> {
    features: Matrix<F>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl<F: Scalar> LabeledDataset<F> {
    pub fn new(features: Matrix<F>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let dataset = LabeledDataset {
            features,
            labels,
            class_names,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Checks every structural invariant; used after deserialization too.
    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if n == 0 {
            return Err(Error::parameter("dataset must contain at least one vector"));
        }
        if self.features.cols() == 0 {
            return Err(Error::parameter("feature dimension must be at least 1"));
        }
        if self.class_names.is_empty() {
            return Err(Error::parameter("dataset must declare at least one class"));
        }
        if self.labels.len() != n {
            return Err(Error::parameter(format!(
                "{} labels for {n} feature rows",
                self.labels.len()
            )));
        }
        let classes = self.class_names.len();
        if let Some((i, &bad)) = self.labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::parameter(format!(
                "label {bad} at row {i} is outside [0, {classes})"
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.class_names.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::parameter(format!("duplicate class name {dup:?}")));
        }
        if !self.features.is_finite() {
            return Err(Error::parameter(
                "feature matrix contains non-finite entries",
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &Matrix<F> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Global label frequency vector.
    pub fn label_frequencies(&self) -> LabelDistribution<F> {
        let mut counts = vec![0usize; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        LabelDistribution::from_counts(&counts)
    }

    /// Same dataset with every feature multiplied by `factor`.
    pub fn scaled(&self, factor: F) -> Self {
        LabeledDataset {
            features: self.features.scaled(factor),
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Probability vector over the C classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelDistribution<F> {
    probs: Vec<F>,
}

impl<F: Scalar> LabelDistribution<F> {
    /// Validates nonnegativity and unit mass.
    pub fn new(probs: Vec<F>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::parameter(
                "label distribution needs at least one class",
            ));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < F::zero()) {
            return Err(Error::domain(format!("invalid probability {bad}")));
        }
        let total: F = probs.iter().copied().sum();
        if (total - F::one()).abs() > F::sum_tolerance(probs.len()) {
            return Err(Error::domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(LabelDistribution { probs })
    }

    /// Caller guarantees the invariants.
    pub(crate) fn from_probs_unchecked(probs: Vec<F>) -> Self {
        LabelDistribution { probs }
    }

    /// Empirical frequencies of a nonzero count vector.
    pub(crate) fn from_counts(counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        debug_assert!(total > 0);
        let total = F::of_usize(total);
        LabelDistribution {
            probs: counts.iter().map(|&c| F::of_usize(c) / total).collect(),
        }
    }

    pub fn uniform(classes: usize) -> Self {
        let p = F::one() / F::of_usize(classes);
        LabelDistribution {
            probs: vec![p; classes],
        }
    }

    pub fn one_hot(classes: usize, class: usize) -> Self {
        let mut probs = vec![F::zero(); classes];
        probs[class] = F::one();
        LabelDistribution { probs }
    }

    #[inline]
    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// True when every entry is strictly positive.
    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > F::zero())
    }
}

/// Neighborhood size and self-inclusion for label voting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    /// Whether a training vector counts among its own neighbors.
    pub include_self: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: DEFAULT_K,
            include_self: true,
        }
    }
}

impl KnnConfig {
    pub fn new(k: usize, include_self: bool) -> Self {
        KnnConfig { k, include_self }
    }

    /// Largest legal k for a training set of `n` vectors.
    pub fn max_k(n: usize, include_self: bool) -> usize {
        if include_self {
            n
        } else {
            n.saturating_sub(1)
        }
    }

    /// `k` clipped into `[1, max_k(n)]`.
    pub fn clipped(k: usize, include_self: bool, n: usize) -> Self {
        let bound = Self::max_k(n, include_self).max(1);
        KnnConfig {
            k: k.clamp(1, bound),
            include_self,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bound = Self::max_k(n, self.include_self);
        if self.k == 0 || self.k > bound {
            return Err(Error::parameter(format!(
                "k = {} must lie in [1, {bound}] for N = {n} (include_self = {})",
                self.k, self.include_self
            )));
        }
        Ok(())
    }
}

fn by_distance_then_index<F: Scalar>(a: &(F, usize), b: &(F, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

fn check_query<F: Scalar>(dataset: &LabeledDataset<F>, query: &[F]) -> Result<()> {
    if query.len() != dataset.dim() {
        return Err(Error::parameter(format!(
            "query has dimension {}, dataset has dimension {}",
            query.len(),
            dataset.dim()
        )));
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(Error::parameter("query contains non-finite entries"));
    }
    Ok(())
}

/// Indices of the `k` rows nearest to `query` in squared Euclidean distance,
/// sorted by (distance, index). `exclude_index` removes one row from the
/// candidate set.
pub fn knn_indices<F: Scalar>(
    dataset: &LabeledDataset<F>,
    query: &[F],
    config: &KnnConfig,
    exclude_index: Option<usize>,
) -> Result<Vec<usize>> {
    check_query(dataset, query)?;
    let n = dataset.len();
    if let Some(ex) = exclude_index {
        if ex >= n {
            return Err(Error::parameter(format!(
                "exclude_index {ex} out of range for N = {n}"
            )));
        }
    }
    let candidates = n - usize::from(exclude_index.is_some());
    if config.k == 0 || config.k > candidates {
        return Err(Error::parameter(format!(
            "k = {} must lie in [1, {candidates}] (available candidates)",
            config.k
        )));
    }

    let mut scored: Vec<(F, usize)> = dataset
        .features()
        .iter_rows()
        .enumerate()
        .filter(|&(j, _)| Some(j) != exclude_index)
        .map(|(j, row)| (squared_distance(query, row), j))
        .collect();
    let k = config.k;
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_distance_then_index);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_distance_then_index);
    Ok(scored.into_iter().map(|(_, j)| j).collect())
}

/// p(y | query): the label frequencies among the query's k nearest neighbors.
pub fn estimate_label_distribution<F: Scalar>(
    dataset: &LabeledDataset<F>,
    query: &[F],
    config: &KnnConfig,
    exclude_index: Option<usize>,
) -> Result<LabelDistribution<F>> {
    let neighbors = knn_indices(dataset, query, config, exclude_index)?;
    let mut counts = vec![0usize; dataset.num_classes()];
    for j in neighbors {
        counts[dataset.labels()[j]] += 1;
    }
    Ok(LabelDistribution::from_counts(&counts))
}

/// Label distribution of every training vector, in row order.
pub fn estimate_all<F: Scalar>(
    dataset: &LabeledDataset<F>,
    config: &KnnConfig,
) -> Result<Vec<LabelDistribution<F>>> {
    config.validate(dataset.len())?;
    (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let exclude = (!config.include_self).then_some(i);
            estimate_label_distribution(dataset, dataset.features().row(i), config, exclude)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_points() -> LabeledDataset<f64> {
        let features =
            Matrix::from_rows(&[[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.1, 0.0]]).unwrap();
        LabeledDataset::new(features, vec![0, 0, 1, 1], vec!["A".into(), "B".into()]).unwrap()
    }

    #[test]
    fn nearest_two_of_four() {
        let ds = four_points();
        let got = knn_indices(&ds, &[0.0, 0.0], &KnnConfig::new(2, true), None).unwrap();
        assert_eq!(got, vec![0, 1]);
        let all = knn_indices(&ds, &[0.0, 0.0], &KnnConfig::new(4, true), None).unwrap();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn equal_distance_prefers_lower_index() {
        let features = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let ds = LabeledDataset::new(features, vec![0, 0], vec!["a".into()]).unwrap();
        let got = knn_indices(&ds, &[0.0, 0.0], &KnnConfig::new(1, true), None).unwrap();
        assert_eq!(got, vec![0]);
    }

    #[test]
    fn k_above_candidates_names_bound() {
        let ds = four_points();
        let err = knn_indices(&ds, &[0.0, 0.0], &KnnConfig::new(4, false), Some(0)).unwrap_err();
        assert!(
            matches!(err, Error::Parameter(ref m) if m.contains("[1, 3]")),
            "{err}"
        );
    }

    #[test]
    fn distribution_examples() {
        let ds = four_points();
        let p =
            estimate_label_distribution(&ds, &[0.0, 0.0], &KnnConfig::new(2, true), None).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0]);
        let p =
            estimate_label_distribution(&ds, &[0.0, 0.0], &KnnConfig::new(4, true), None).unwrap();
        assert_eq!(p.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn single_class_is_one_hot() {
        let features = Matrix::from_rows(&[[0.0], [3.0], [7.0]]).unwrap();
        let ds = LabeledDataset::new(features, vec![0, 0, 0], vec!["only".into()]).unwrap();
        for k in 1..=3 {
            let p =
                estimate_label_distribution(&ds, &[2.0], &KnnConfig::new(k, true), None).unwrap();
            assert_eq!(p.probs(), &[1.0]);
        }
    }

    #[test]
    fn estimate_all_examples() {
        let ds = four_points();
        let all = estimate_all(&ds, &KnnConfig::new(2, true)).unwrap();
        let probs: Vec<_> = all.iter().map(|d| d.probs().to_vec()).collect();
        assert_eq!(
            probs,
            vec![
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 1.0]
            ]
        );

        let global = ds.label_frequencies();
        for d in estimate_all(&ds, &KnnConfig::new(4, true)).unwrap() {
            assert_eq!(d, global);
        }

        let one = LabeledDataset::new(
            Matrix::from_rows(&[[1.5, -2.0]]).unwrap(),
            vec![0],
            vec!["z".into()],
        )
        .unwrap();
        let all = estimate_all(&one, &KnnConfig::new(1, true)).unwrap();
        assert_eq!(all[0].probs(), &[1.0]);
    }

    #[test]
    fn self_exclusion_uses_other_rows() {
        let ds = four_points();
        let all = estimate_all(&ds, &KnnConfig::new(1, false)).unwrap();
        // nearest other row of 0 is 1, of 2 is 3
        assert_eq!(all[0].probs(), &[1.0, 0.0]);
        assert_eq!(all[2].probs(), &[0.0, 1.0]);
        assert!(estimate_all(&ds, &KnnConfig::new(4, false)).is_err());
    }

    #[test]
    fn dataset_rejects_bad_input() {
        let m = Matrix::from_rows(&[[0.0_f64], [f64::NAN]]).unwrap();
        assert!(LabeledDataset::new(m, vec![0, 0], vec!["a".into()]).is_err());
        let m = Matrix::from_rows(&[[0.0_f64]]).unwrap();
        assert!(LabeledDataset::new(m.clone(), vec![1], vec!["a".into()]).is_err());
        assert!(LabeledDataset::new(m, vec![0], vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn clipped_default_k() {
        assert_eq!(KnnConfig::clipped(10, true, 4).k, 4);
        assert_eq!(KnnConfig::clipped(10, false, 4).k, 3);
        assert_eq!(KnnConfig::clipped(10, true, 50).k, 10);
    }

    #[test]
    fn works_in_single_precision() {
        let features = Matrix::from_rows(&[[0.0_f32, 0.0], [0.1, 0.0], [5.0, 0.0]]).unwrap();
        let ds =
            LabeledDataset::new(features, vec![0, 0, 1], vec!["A".into(), "B".into()]).unwrap();
        let p =
            estimate_label_distribution(&ds, &[4.0, 0.0], &KnnConfig::new(3, true), None).unwrap();
        assert!((p.probs()[0] - 2.0 / 3.0).abs() < 1e-6);
    }
}
