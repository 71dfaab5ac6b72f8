//! Supervised vector quantization: partition labeled vectors into M subsets so
//! that each vector's kNN label distribution is close, in KL divergence, to the
//! label distribution of its subset.
//!
//! Training alternates two steps until the assignment stops changing:
//!
//! 1. with the partition fixed, recompute every subset's label distribution
//!    ([`update_subset_distributions`]);
//! 2. with the distributions fixed, move every vector to the subset whose
//!    distribution has the smallest KL divergence from its own
//!    ([`assign_step`]).
//!
//! A vector outside the training set is quantized the same way, after its
//! label distribution is estimated against the training vectors.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{kl_slices, objective, smooth, smooth_probs, SmoothingConfig};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans_fit, KmeansConfig};
use crate::label_model::{
    estimate_all, estimate_label_distribution, KnnConfig, LabelDistribution, LabeledDataset,
};
use crate::scalar::Scalar;

/// Assignment of N points to M disjoint subsets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    subsets: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>, subsets: usize) -> Result<Self> {
        if subsets == 0 {
            return Err(Error::parameter("a partition needs at least one subset"));
        }
        if let Some((i, &m)) = assignment.iter().enumerate().find(|(_, &m)| m >= subsets) {
            return Err(Error::parameter(format!(
                "point {i} assigned to subset {m}, outside [0, {subsets})"
            )));
        }
        Ok(Partition {
            assignment,
            subsets,
        })
    }

    #[inline]
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn subsets(&self) -> usize {
        self.subsets
    }

    /// Number of points.
    #[inline]
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.subsets];
        for &m in &self.assignment {
            sizes[m] += 1;
        }
        sizes
    }

    /// Point indices belonging to subset `m`, ascending.
    pub fn members(&self, m: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == m).then_some(i))
            .collect()
    }

    pub fn into_assignment(self) -> Vec<usize> {
        self.assignment
    }
}

/// Refills empty subsets in place. Points are taken in order of decreasing
/// `cost` (cost of the point in its current subset; lowest index on ties),
/// one per empty subset, and only from subsets that keep at least one member.
/// Empty subsets are filled in ascending index order.
pub(crate) fn repair_empty_subsets<F: Scalar>(
    assignment: &mut [usize],
    subsets: usize,
    cost: &[F],
) {
    let mut sizes = vec![0usize; subsets];
    for &m in assignment.iter() {
        sizes[m] += 1;
    }
    let empty: Vec<usize> = (0..subsets).filter(|&m| sizes[m] == 0).collect();
    if empty.is_empty() {
        return;
    }
    let mut order: Vec<usize> = (0..assignment.len()).collect();
    order.sort_by(|&a, &b| {
        cost[b]
            .partial_cmp(&cost[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut candidates = order.into_iter();
    for target in empty {
        let Some(i) = candidates.find(|&i| sizes[assignment[i]] >= 2) else {
            break;
        };
        sizes[assignment[i]] -= 1;
        sizes[target] += 1;
        assignment[i] = target;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Uniform random subset per point.
    #[default]
    Random,
    /// k-means partition of the feature vectors with K = M.
    Kmeans,
}

/// How subset label distributions are recomputed from their members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// Empirical label frequency of the members.
    #[default]
    Paper,
    /// Mean of the members' kNN label distributions. This is the KL centroid,
    /// so the objective cannot increase from one iteration to the next.
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig<F> {
    /// Number of quantization subsets M.
    pub subsets: usize,
    pub knn: KnnConfig,
    pub smoothing: SmoothingConfig<F>,
    pub max_iters: usize,
    pub seed: u64,
    pub init: InitMode,
    pub update_mode: UpdateMode,
}

impl<F: Scalar> QuantizerConfig<F> {
    /// Defaults for everything but the subset count.
    pub fn new(subsets: usize) -> Self {
        QuantizerConfig {
            subsets,
            knn: KnnConfig::default(),
            smoothing: SmoothingConfig::default(),
            max_iters: 100,
            seed: 0,
            init: InitMode::default(),
            update_mode: UpdateMode::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.subsets == 0 || self.subsets > n {
            return Err(Error::parameter(format!(
                "subset count M = {} must lie in [1, {n}]",
                self.subsets
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::parameter("max_iters must be at least 1"));
        }
        self.knn.validate(n)?;
        self.smoothing.validate()
    }
}

/// A trained quantizer: subset label distributions plus what is needed to
/// estimate label distributions of new vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerModel<F> {
    pub subset_dists: Vec<LabelDistribution<F>>,
    pub config: QuantizerConfig<F>,
    pub training: LabeledDataset<F>,
    pub final_objective: F,
    pub iterations_run: usize,
    pub converged: bool,
}

impl<F: Scalar> QuantizerModel<F> {
    #[inline]
    pub fn subsets(&self) -> usize {
        self.subset_dists.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.training.dim()
    }

    pub fn class_names(&self) -> &[String] {
        self.training.class_names()
    }

    /// Label distribution of an arbitrary vector against the training set.
    pub fn point_distribution(&self, query: &[F]) -> Result<LabelDistribution<F>> {
        estimate_label_distribution(&self.training, query, &self.config.knn, None)
    }

    /// Subset index for a vector not in the training set.
    pub fn quantize(&self, query: &[F]) -> Result<usize> {
        let p = self.point_distribution(query)?;
        Ok(nearest_subset(p.probs(), &self.subset_dists)?.0)
    }

    /// Checks the structural invariants of a model, e.g. after loading.
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.config.validate(self.training.len())?;
        if self.subset_dists.len() != self.config.subsets {
            return Err(Error::Schema(format!(
                "{} subset distributions for M = {}",
                self.subset_dists.len(),
                self.config.subsets
            )));
        }
        let classes = self.training.num_classes();
        for (m, q) in self.subset_dists.iter().enumerate() {
            if q.len() != classes {
                return Err(Error::Schema(format!(
                    "subset {m} distribution has {} classes, expected {classes}",
                    q.len()
                )));
            }
            LabelDistribution::new(q.probs().to_vec())
                .map_err(|e| Error::Schema(format!("subset {m}: {e}")))?;
        }
        if !self.final_objective.is_finite() || self.final_objective < -F::of(1e-9) {
            return Err(Error::Schema(format!(
                "invalid final objective {}",
                self.final_objective
            )));
        }
        Ok(())
    }
}

/// Free-function form of [`QuantizerModel::quantize`].
pub fn quantize<F: Scalar>(model: &QuantizerModel<F>, query: &[F]) -> Result<usize> {
    model.quantize(query)
}

/// Everything produced by [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerFit<F> {
    pub model: QuantizerModel<F>,
    pub partition: Partition,
    pub point_dists: Vec<LabelDistribution<F>>,
    /// Objective after each iteration; its length equals `iterations_run`.
    pub objective_trace: Vec<F>,
}

/// (argmin_m KL(p || q_m), minimum), lowest index on ties.
fn nearest_subset<F: Scalar>(p: &[F], subset_dists: &[LabelDistribution<F>]) -> Result<(usize, F)> {
    let mut best = (0, F::infinity());
    for (m, q) in subset_dists.iter().enumerate() {
        if q.len() != p.len() {
            return Err(Error::parameter(format!(
                "subset {m} distribution has {} classes, point has {}",
                q.len(),
                p.len()
            )));
        }
        let kl = kl_slices(p, q.probs())?;
        if kl < best.1 {
            best = (m, kl);
        }
    }
    Ok(best)
}

fn assign_with_costs<F: Scalar>(
    point_dists: &[LabelDistribution<F>],
    subset_dists: &[LabelDistribution<F>],
) -> Result<(Vec<usize>, Vec<F>)> {
    if subset_dists.is_empty() {
        return Err(Error::parameter(
            "at least one subset distribution is required",
        ));
    }
    let best: Vec<(usize, F)> = point_dists
        .par_iter()
        .map(|p| nearest_subset(p.probs(), subset_dists))
        .collect::<Result<_>>()?;
    Ok(best.into_iter().unzip())
}

/// Moves every point to the subset whose distribution is nearest in KL
/// divergence (lowest subset index on ties).
pub fn assign_step<F: Scalar>(
    point_dists: &[LabelDistribution<F>],
    subset_dists: &[LabelDistribution<F>],
) -> Result<Partition> {
    let (assignment, _) = assign_with_costs(point_dists, subset_dists)?;
    Partition::new(assignment, subset_dists.len())
}

/// Recomputes the label distribution of every subset of `partition`.
/// Empty subsets get the uniform distribution.
pub fn update_subset_distributions<F: Scalar>(
    partition: &Partition,
    labels: &[usize],
    classes: usize,
    mode: UpdateMode,
    point_dists: &[LabelDistribution<F>],
    smoothing: &SmoothingConfig<F>,
) -> Result<Vec<LabelDistribution<F>>> {
    if classes == 0 {
        return Err(Error::parameter("class count must be at least 1"));
    }
    let n = partition.len();
    let m_count = partition.subsets();
    let sizes = partition.sizes();
    match mode {
        UpdateMode::Paper => {
            if labels.len() != n {
                return Err(Error::parameter(format!(
                    "{} labels for a partition of {n} points",
                    labels.len()
                )));
            }
            let mut counts = vec![vec![0usize; classes]; m_count];
            for (&m, &label) in partition.assignment().iter().zip(labels) {
                if label >= classes {
                    return Err(Error::parameter(format!(
                        "label {label} outside [0, {classes})"
                    )));
                }
                counts[m][label] += 1;
            }
            counts
                .iter()
                .zip(&sizes)
                .map(|(c, &size)| {
                    if size == 0 {
                        Ok(LabelDistribution::uniform(classes))
                    } else {
                        smooth(c, smoothing)
                    }
                })
                .collect()
        }
        UpdateMode::Centroid => {
            if point_dists.len() != n {
                return Err(Error::parameter(format!(
                    "{} point distributions for a partition of {n} points",
                    point_dists.len()
                )));
            }
            let mut sums = vec![vec![F::zero(); classes]; m_count];
            for (&m, p) in partition.assignment().iter().zip(point_dists) {
                if p.len() != classes {
                    return Err(Error::parameter(format!(
                        "point distribution has {} classes, expected {classes}",
                        p.len()
                    )));
                }
                for (acc, &v) in sums[m].iter_mut().zip(p.probs()) {
                    *acc = *acc + v;
                }
            }
            Ok(sums
                .into_iter()
                .zip(&sizes)
                .map(|(mut sum, &size)| {
                    if size == 0 {
                        return LabelDistribution::uniform(classes);
                    }
                    // dividing by the mass both averages and renormalizes
                    let mass: F = sum.iter().copied().sum();
                    for v in &mut sum {
                        *v = *v / mass;
                    }
                    smooth_probs(&sum, smoothing)
                })
                .collect())
        }
    }
}

/// Starting partition for [`fit`].
pub fn init_partition<F: Scalar>(
    n: usize,
    config: &QuantizerConfig<F>,
    dataset: &LabeledDataset<F>,
) -> Result<Partition> {
    if n != dataset.len() {
        return Err(Error::parameter(format!(
            "n = {n} does not match dataset size {}",
            dataset.len()
        )));
    }
    initial_partition(dataset, config, None)
}

fn initial_partition<F: Scalar>(
    dataset: &LabeledDataset<F>,
    config: &QuantizerConfig<F>,
    point_dists: Option<&[LabelDistribution<F>]>,
) -> Result<Partition> {
    let n = dataset.len();
    let m_count = config.subsets;
    if m_count == 0 || m_count > n {
        return Err(Error::parameter(format!(
            "subset count M = {m_count} must lie in [1, {n}]"
        )));
    }
    match config.init {
        InitMode::Kmeans => {
            let kmeans = KmeansConfig {
                clusters: m_count,
                seed: config.seed,
                max_iters: config.max_iters,
            };
            Ok(kmeans_fit(dataset.features(), &kmeans)?.partition)
        }
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..m_count)).collect();
            let draft = Partition::new(assignment.clone(), m_count)?;
            if draft.sizes().iter().all(|&s| s > 0) {
                return Ok(draft);
            }
            let owned;
            let point_dists = match point_dists {
                Some(p) => p,
                None => {
                    owned = estimate_all(dataset, &config.knn)?;
                    &owned
                }
            };
            let subset_dists = update_subset_distributions(
                &draft,
                dataset.labels(),
                dataset.num_classes(),
                config.update_mode,
                point_dists,
                &config.smoothing,
            )?;
            let costs: Vec<F> = point_dists
                .iter()
                .zip(&assignment)
                .map(|(p, &m)| kl_slices(p.probs(), subset_dists[m].probs()))
                .collect::<Result<_>>()?;
            repair_empty_subsets(&mut assignment, m_count, &costs);
            Partition::new(assignment, m_count)
        }
    }
}

/// Trains a quantizer on `dataset`.
///
/// Stops at the first iteration whose assignment step reproduces the current
/// partition (`converged = true`) or after `max_iters` iterations. Subsets
/// left empty by an assignment step are refilled with the points that have
/// the largest divergence from their assigned subset.
pub fn fit<F: Scalar>(
    dataset: &LabeledDataset<F>,
    config: &QuantizerConfig<F>,
) -> Result<QuantizerFit<F>> {
    dataset.validate()?;
    config.validate(dataset.len())?;
    let point_dists = estimate_all(dataset, &config.knn)?;
    let mut partition = initial_partition(dataset, config, Some(&point_dists))?;

    let update = |partition: &Partition| {
        update_subset_distributions(
            partition,
            dataset.labels(),
            dataset.num_classes(),
            config.update_mode,
            &point_dists,
            &config.smoothing,
        )
    };

    let mut subset_dists = update(&partition)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        let (mut assignment, costs) = assign_with_costs(&point_dists, &subset_dists)?;
        if assignment == partition.assignment() {
            converged = true;
            trace.push(objective(&point_dists, &partition, &subset_dists)?);
            break;
        }
        repair_empty_subsets(&mut assignment, config.subsets, &costs);
        partition = Partition::new(assignment, config.subsets)?;
        subset_dists = update(&partition)?;
        trace.push(objective(&point_dists, &partition, &subset_dists)?);
    }

    let model = QuantizerModel {
        subset_dists,
        config: config.clone(),
        training: dataset.clone(),
        final_objective: *trace.last().expect("max_iters >= 1"),
        iterations_run: trace.len(),
        converged,
    };
    Ok(QuantizerFit {
        model,
        partition,
        point_dists,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::kl_divergence;
    use crate::matrix::Matrix;

    fn dist(p: &[f64]) -> LabelDistribution<f64> {
        LabelDistribution::new(p.to_vec()).unwrap()
    }

    fn line_dataset(labels: &[usize], classes: usize) -> LabeledDataset<f64> {
        let rows: Vec<[f64; 1]> = (0..labels.len()).map(|i| [i as f64]).collect();
        let names = (0..classes).map(|c| format!("c{c}")).collect();
        LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), labels.to_vec(), names).unwrap()
    }

    #[test]
    fn repair_moves_costliest_points() {
        let mut a = vec![0, 0, 0, 1];
        repair_empty_subsets(&mut a, 4, &[0.1, 0.9, 0.9, 5.0]);
        // point 3 is alone in subset 1, so 1 and 2 move (tie -> lower index first)
        assert_eq!(a, vec![0, 2, 3, 1]);
    }

    #[test]
    fn init_examples() {
        let ds = line_dataset(&[0, 1, 0, 1], 2);
        let mut config = QuantizerConfig::<f64>::new(4);
        config.knn = KnnConfig::new(2, true);
        for seed in 0..10 {
            config.seed = seed;
            let p = init_partition(4, &config, &ds).unwrap();
            assert_eq!(p.sizes(), vec![1, 1, 1, 1]);
        }

        let ds6 = line_dataset(&[0, 1, 0, 1, 0, 1], 2);
        let single = QuantizerConfig::<f64>::new(1);
        assert_eq!(
            init_partition(6, &single, &ds6).unwrap().assignment(),
            &[0; 6]
        );

        let too_many = QuantizerConfig::<f64>::new(7);
        assert!(init_partition(6, &too_many, &ds6).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let ds = line_dataset(&labels, 3);
        let mut config = QuantizerConfig::<f64>::new(5);
        config.seed = 7;
        let a = init_partition(100, &config, &ds).unwrap();
        let b = init_partition(100, &config, &ds).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paper_update_counts_labels() {
        let partition = Partition::new(vec![0, 0, 0, 1], 3).unwrap();
        let eps0 = SmoothingConfig { epsilon: 0.0 };
        let dists = update_subset_distributions::<f64>(
            &partition,
            &[0, 0, 1, 1],
            2,
            UpdateMode::Paper,
            &[],
            &eps0,
        )
        .unwrap();
        assert_eq!(dists[0].probs(), &[2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(dists[1].probs(), &[0.0, 1.0]);
        assert_eq!(dists[2].probs(), &[0.5, 0.5]);
    }

    #[test]
    fn centroid_update_averages() {
        let partition = Partition::new(vec![0, 0], 2).unwrap();
        let eps0 = SmoothingConfig { epsilon: 0.0 };
        let points = vec![dist(&[1.0, 0.0]), dist(&[0.0, 1.0])];
        let dists = update_subset_distributions(
            &partition,
            &[0, 1],
            2,
            UpdateMode::Centroid,
            &points,
            &eps0,
        )
        .unwrap();
        assert_eq!(dists[0].probs(), &[0.5, 0.5]);
        assert_eq!(dists[1].probs(), &[0.5, 0.5]);
    }

    #[test]
    fn assign_examples() {
        let subsets = vec![dist(&[0.9, 0.1]), dist(&[0.1, 0.9])];
        let p = assign_step(&[dist(&[1.0, 0.0])], &subsets).unwrap();
        assert_eq!(p.assignment(), &[0]);

        let same = vec![dist(&[0.3, 0.7]); 3];
        let points = vec![dist(&[1.0, 0.0]), dist(&[0.2, 0.8])];
        assert_eq!(assign_step(&points, &same).unwrap().assignment(), &[0, 0]);

        let subsets = vec![dist(&[0.5, 0.5]), dist(&[0.25, 0.75]), dist(&[0.9, 0.1])];
        let p = assign_step(&[dist(&[0.25, 0.75])], &subsets).unwrap();
        assert_eq!(p.assignment(), &[1]);
    }

    #[test]
    fn single_subset_converges_immediately() {
        let labels = [0, 0, 1, 0, 1, 1, 1, 0];
        let ds = line_dataset(&labels, 2);
        let mut config = QuantizerConfig::<f64>::new(1);
        config.knn = KnnConfig::new(3, true);
        let fit = fit(&ds, &config).unwrap();
        assert!(fit.model.converged);
        assert_eq!(fit.model.iterations_run, 1);
        assert_eq!(fit.objective_trace.len(), 1);

        let q = smooth(&[4, 4], &config.smoothing).unwrap();
        let expected: f64 = fit
            .point_dists
            .iter()
            .map(|p| kl_divergence(p, &q).unwrap())
            .sum();
        assert!((fit.model.final_objective - expected).abs() < 1e-12);
    }

    #[test]
    fn quantize_rejects_dimension_mismatch() {
        let ds = line_dataset(&[0, 1, 0, 1], 2);
        let mut config = QuantizerConfig::<f64>::new(2);
        config.knn = KnnConfig::new(2, true);
        let fit = fit(&ds, &config).unwrap();
        assert!(matches!(
            fit.model.quantize(&[1.0, 2.0]),
            Err(Error::Parameter(_))
        ));
        assert!(fit.model.quantize(&[1.5]).unwrap() < 2);
    }

    #[test]
    fn identical_subsets_quantize_to_zero() {
        let ds = line_dataset(&[0, 1, 0, 1], 2);
        let model = QuantizerModel {
            subset_dists: vec![dist(&[0.4, 0.6]); 3],
            config: QuantizerConfig {
                knn: KnnConfig::new(2, true),
                ..QuantizerConfig::new(3)
            },
            training: ds,
            final_objective: 0.0,
            iterations_run: 1,
            converged: true,
        };
        for x in [-3.0, 0.0, 1.7, 40.0] {
            assert_eq!(model.quantize(&[x]).unwrap(), 0);
        }
    }

    #[test]
    fn unsmoothed_paper_mode_surfaces_domain_error() {
        let ds = line_dataset(&[0, 0, 1, 1, 0, 1], 2);
        let mut config = QuantizerConfig::<f64>::new(3);
        config.knn = KnnConfig::new(4, true);
        config.smoothing = SmoothingConfig { epsilon: 0.0 };
        config.init = InitMode::Kmeans;
        assert!(matches!(fit(&ds, &config), Err(Error::Domain(_))));
    }
}
