//! Supervised vector quantization by KL-divergence minimization.
//!
//! Labeled vectors are split into `M` quantization subsets so that the
//! class-label distribution of each vector (estimated by k-nearest-neighbor
//! voting) is close to the label distribution of its subset. The crate also
//! ships a k-means baseline, a bag-of-features evaluation harness and the
//! file formats used by the `klvq` command-line tool.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI uses.

pub mod bof;
pub mod cli;
pub mod divergence;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod label_model;
pub mod matrix;
pub mod quantizer;
pub mod scalar;

pub use bof::{
    build_histogram, classify_1nn, evaluate, generate_synthetic, BofHistogram, EvalReport,
    FeatureBag, HistogramDistance, SynthConfig, SyntheticBenchmark,
};
pub use divergence::{kl_divergence, objective, smooth, SmoothingConfig};
pub use error::{Error, Result};
pub use kmeans::{kmeans_assign, kmeans_fit, KmeansConfig, KmeansFit, KmeansModel};
pub use label_model::{
    estimate_all, estimate_label_distribution, knn_indices, KnnConfig, LabelDistribution,
    LabeledDataset,
};
pub use matrix::Matrix;
pub use quantizer::{
    assign_step, fit, init_partition, quantize, update_subset_distributions, InitMode, Partition,
    QuantizerConfig, QuantizerFit, QuantizerModel, UpdateMode,
};
pub use scalar::Scalar;

pub type Dataset = LabeledDataset<f64>;
pub type Distribution = LabelDistribution<f64>;
pub type Features = Matrix<f64>;
pub type Model = QuantizerModel<f64>;
pub type Config = QuantizerConfig<f64>;
pub type Baseline = KmeansModel<f64>;
pub type Bag = FeatureBag<f64>;
pub type Histogram = BofHistogram<f64>;

pub type DatasetF32 = LabeledDataset<f32>;
pub type DistributionF32 = LabelDistribution<f32>;
pub type ModelF32 = QuantizerModel<f32>;
pub type ConfigF32 = QuantizerConfig<f32>;
