//! Lloyd's k-means with Forgy initialization: the unsupervised baseline quantizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quantizer::{repair_empty_subsets, Partition};
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub clusters: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl KmeansConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        KmeansConfig {
            clusters,
            seed,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansModel<F> {
    pub centroids: Matrix<F>,
    /// Sum of squared distances of the training points to their centroids.
    pub inertia: F,
    pub iterations_run: usize,
    pub converged: bool,
}

impl<F: Scalar> KmeansModel<F> {
    #[inline]
    pub fn clusters(&self) -> usize {
        self.centroids.rows()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters() == 0 || self.dim() == 0 {
            return Err(Error::Schema(
                "k-means model needs K >= 1 and d >= 1".into(),
            ));
        }
        if !self.centroids.is_finite() {
            return Err(Error::Schema("k-means centroids must be finite".into()));
        }
        if !self.inertia.is_finite() || self.inertia < F::zero() {
            return Err(Error::Schema(format!("invalid inertia {}", self.inertia)));
        }
        Ok(())
    }
}

/// Result of a k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit<F> {
    pub model: KmeansModel<F>,
    pub partition: Partition,
    /// Inertia after every iteration.
    pub inertia_trace: Vec<F>,
}

fn nearest_centroid<F: Scalar>(centroids: &Matrix<F>, point: &[F]) -> (usize, F) {
    let mut best = (0, F::infinity());
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn member_means<F: Scalar>(features: &Matrix<F>, partition: &Partition) -> Matrix<F> {
    let mut centroids = Matrix::zeros(partition.subsets(), features.cols());
    let sizes = partition.sizes();
    for (row, &m) in features.iter_rows().zip(partition.assignment()) {
        for (acc, &v) in centroids.row_mut(m).iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    for (m, &size) in sizes.iter().enumerate() {
        // repair guarantees non-empty clusters
        let size = F::of_usize(size.max(1));
        for v in centroids.row_mut(m) {
            *v = *v / size;
        }
    }
    centroids
}

fn inertia<F: Scalar>(features: &Matrix<F>, centroids: &Matrix<F>, partition: &Partition) -> F {
    features
        .iter_rows()
        .zip(partition.assignment())
        .map(|(row, &m)| squared_distance(row, centroids.row(m)))
        .sum()
}

/// Fits K centroids by Lloyd iteration until the assignment reaches a fixpoint
/// or `max_iters` iterations have run.
pub fn kmeans_fit<F: Scalar>(features: &Matrix<F>, config: &KmeansConfig) -> Result<KmeansFit<F>> {
    let n = features.rows();
    let k = config.clusters;
    if k == 0 || k > n {
        return Err(Error::parameter(format!(
            "cluster count K = {k} must lie in [1, {n}]"
        )));
    }
    if features.cols() == 0 {
        return Err(Error::parameter("feature dimension must be at least 1"));
    }
    if config.max_iters == 0 {
        return Err(Error::parameter("max_iters must be at least 1"));
    }
    if !features.is_finite() {
        return Err(Error::parameter("features contain non-finite entries"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let seed_rows: Vec<&[F]> = seeds.iter().map(|&i| features.row(i)).collect();
    let mut centroids = Matrix::from_rows(&seed_rows)?;

    let mut partition: Option<Partition> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        let (mut assignment, costs): (Vec<usize>, Vec<F>) = features
            .iter_rows()
            .map(|row| nearest_centroid(&centroids, row))
            .unzip();
        repair_empty_subsets(&mut assignment, k, &costs);
        if let Some(current) = partition.as_ref().filter(|p| p.assignment() == assignment) {
            converged = true;
            trace.push(inertia(features, &centroids, current));
            break;
        }
        let next = Partition::new(assignment, k)?;
        centroids = member_means(features, &next);
        trace.push(inertia(features, &centroids, &next));
        partition = Some(next);
    }

    let partition = partition.expect("at least one iteration runs");
    let model = KmeansModel {
        inertia: *trace.last().expect("trace is non-empty"),
        iterations_run: trace.len(),
        converged,
        centroids,
    };
    Ok(KmeansFit {
        model,
        partition,
        inertia_trace: trace,
    })
}

/// Index of the centroid nearest to `query`, lowest index on ties.
pub fn kmeans_assign<F: Scalar>(model: &KmeansModel<F>, query: &[F]) -> Result<usize> {
    if query.len() != model.dim() {
        return Err(Error::parameter(format!(
            "query has dimension {}, model has dimension {}",
            query.len(),
            model.dim()
        )));
    }
    Ok(nearest_centroid(&model.centroids, query).0)
}
