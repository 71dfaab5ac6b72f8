//! Bag-of-features evaluation: quantize every local descriptor of an item,
//! describe the item by its subset histogram, and classify items by 1-NN
//! over histograms.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_model::LabeledDataset;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// One item: a variable number of local descriptors and an optional class.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBag<F> {
    pub item_id: String,
    pub descriptors: Matrix<F>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BofHistogram<F> {
    pub counts: Vec<usize>,
    /// `counts / P`.
    pub normalized: Vec<F>,
}

impl<F: Scalar> BofHistogram<F> {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramDistance {
    #[default]
    L1,
    L2,
}

impl std::str::FromStr for HistogramDistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(HistogramDistance::L1),
            "l2" => Ok(HistogramDistance::L2),
            other => Err(Error::parameter(format!("unknown distance {other:?}"))),
        }
    }
}

impl HistogramDistance {
    fn between<F: Scalar>(self, a: &[F], b: &[F]) -> F {
        let pairs = a.iter().zip(b);
        match self {
            HistogramDistance::L1 => pairs.map(|(&x, &y)| (x - y).abs()).sum(),
            HistogramDistance::L2 => pairs.map(|(&x, &y)| (x - y) * (x - y)).sum::<F>().sqrt(),
        }
    }
}

/// Tallies the subset index of every descriptor in `bag`.
pub fn build_histogram<F, Q>(
    bag: &FeatureBag<F>,
    quantize_fn: Q,
    subsets: usize,
) -> Result<BofHistogram<F>>
where
    F: Scalar,
    Q: Fn(&[F]) -> Result<usize>,
{
    let p = bag.descriptors.rows();
    if p == 0 {
        return Err(Error::parameter(format!(
            "item {:?} has no descriptors",
            bag.item_id
        )));
    }
    let mut counts = vec![0usize; subsets];
    for row in bag.descriptors.iter_rows() {
        let m = quantize_fn(row)?;
        if m >= subsets {
            return Err(Error::parameter(format!(
                "quantizer returned subset {m}, outside [0, {subsets})"
            )));
        }
        counts[m] += 1;
    }
    let total = F::of_usize(p);
    let normalized = counts.iter().map(|&c| F::of_usize(c) / total).collect();
    Ok(BofHistogram { counts, normalized })
}

/// Label of the nearest training histogram (lowest index on ties).
pub fn classify_1nn<F: Scalar>(
    train: &[(BofHistogram<F>, usize)],
    query: &BofHistogram<F>,
    distance: HistogramDistance,
) -> Result<usize> {
    let mut best: Option<(F, usize)> = None;
    for (i, (hist, label)) in train.iter().enumerate() {
        if hist.normalized.len() != query.normalized.len() {
            return Err(Error::parameter(format!(
                "training histogram {i} has {} bins, query has {}",
                hist.normalized.len(),
                query.normalized.len()
            )));
        }
        let d = distance.between(&hist.normalized, &query.normalized);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, *label));
        }
    }
    best.map(|(_, label)| label)
        .ok_or_else(|| Error::parameter("at least one training histogram is required"))
}

/// Accuracy summary of one quantizer on one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub quantizer_tag: String,
    /// Fraction of test items of each class classified correctly; 0 for
    /// classes without test items.
    pub per_class_accuracy: Vec<f64>,
    pub overall_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn from_predictions(
        quantizer_tag: &str,
        classes: usize,
        truth: &[usize],
        predicted: &[usize],
    ) -> Result<Self> {
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::parameter(format!(
                    "class index outside [0, {classes})"
                )));
            }
            confusion[t][p] += 1;
        }
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[c] as f64 / n as f64
                }
            })
            .collect();
        Ok(EvalReport {
            quantizer_tag: quantizer_tag.to_string(),
            per_class_accuracy,
            overall_accuracy: if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            },
            confusion,
        })
    }

    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    /// Confusion matrix as CSV: header `true\predicted,<names...>`, one row per true class.
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for name in class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.confusion) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Aligned human-readable summary.
    pub fn table(&self, class_names: &[String]) -> String {
        let width = class_names
            .iter()
            .map(String::len)
            .chain(std::iter::once(5))
            .max()
            .unwrap_or(5);
        let mut out = format!("quantizer: {}\n", self.quantizer_tag);
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>6}",
            "class", "accuracy", "items"
        );
        for (c, name) in class_names.iter().enumerate() {
            let n: usize = self.confusion[c].iter().sum();
            let _ = writeln!(
                out,
                "{name:<width$}  {:>8.4}  {n:>6}",
                self.per_class_accuracy[c]
            );
        }
        let _ = writeln!(out, "overall accuracy: {:.16e}", self.overall_accuracy);
        out
    }
}

/// Histograms every bag with `quantize_fn`, classifies each test bag by
/// [`classify_1nn`] against the training histograms and tallies the result.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<F, Q>(
    train_bags: &[FeatureBag<F>],
    test_bags: &[FeatureBag<F>],
    quantizer_tag: &str,
    quantize_fn: Q,
    subsets: usize,
    distance: HistogramDistance,
    classes: usize,
) -> Result<EvalReport>
where
    F: Scalar,
    Q: Fn(&[F]) -> Result<usize> + Sync,
{
    if train_bags.is_empty() || test_bags.is_empty() {
        return Err(Error::parameter(
            "train and test sets must both be non-empty",
        ));
    }
    let labelled = |bag: &FeatureBag<F>| {
        bag.label
            .ok_or_else(|| Error::parameter(format!("item {:?} has no label", bag.item_id)))
    };
    let train: Vec<(BofHistogram<F>, usize)> = train_bags
        .par_iter()
        .map(|bag| Ok((build_histogram(bag, &quantize_fn, subsets)?, labelled(bag)?)))
        .collect::<Result<_>>()?;
    let outcomes: Vec<(usize, usize)> = test_bags
        .par_iter()
        .map(|bag| {
            let hist = build_histogram(bag, &quantize_fn, subsets)?;
            Ok((labelled(bag)?, classify_1nn(&train, &hist, distance)?))
        })
        .collect::<Result<_>>()?;
    let (truth, predicted): (Vec<usize>, Vec<usize>) = outcomes.into_iter().unzip();
    EvalReport::from_predictions(quantizer_tag, classes, &truth, &predicted)
}

/// Parameters of the synthetic bag-of-features benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub classes: usize,
    /// Items per class in each of the train and test splits.
    pub items_per_class: usize,
    pub descriptors_per_item: usize,
    pub dim: usize,
    /// Standard deviation of every mode.
    pub noise: f64,
    /// Pairwise distance between class modes.
    pub mode_distance: f64,
    /// Probability that a descriptor comes from the shared background mode.
    pub background_fraction: f64,
    /// Standard deviation of the background mode as a multiple of `noise`.
    pub background_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            classes: 3,
            items_per_class: 40,
            descriptors_per_item: 50,
            dim: 2,
            noise: 1.0,
            mode_distance: 6.0,
            background_fraction: DEFAULT_BACKGROUND_FRACTION,
            background_scale: DEFAULT_BACKGROUND_SCALE,
        }
    }
}

pub const DEFAULT_BACKGROUND_FRACTION: f64 = 0.75;
pub const DEFAULT_BACKGROUND_SCALE: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark {
    pub class_names: Vec<String>,
    pub train: Vec<FeatureBag<f64>>,
    pub test: Vec<FeatureBag<f64>>,
    /// All training descriptors, each labelled with its item's class.
    pub descriptors: LabeledDataset<f64>,
    /// Class mode centers, one row per class.
    pub class_modes: Matrix<f64>,
    pub background_mode: Vec<f64>,
}

/// Class mode centers: a regular simplex with edge `distance` when it fits in
/// `dim` dimensions, otherwise evenly spaced points on the first axis.
/// Both layouts are centered on the origin.
pub fn class_mode_centers(classes: usize, dim: usize, distance: f64) -> Matrix<f64> {
    let mut centers = Matrix::zeros(classes, dim);
    if classes <= dim + 1 {
        // vertices e_c / sqrt(2) * distance, centered, in an orthonormal basis
        // of the (classes - 1)-dimensional affine hull
        let scale = distance / std::f64::consts::SQRT_2;
        let centroid = 1.0 / classes as f64;
        let vertex = |c: usize| -> Vec<f64> {
            (0..classes)
                .map(|j| scale * (f64::from(u8::from(j == c)) - centroid))
                .collect()
        };
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for c in 1..classes {
            let mut v: Vec<f64> = vertex(c)
                .iter()
                .zip(vertex(0))
                .map(|(a, b)| a - b)
                .collect();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
        for c in 0..classes {
            let p = vertex(c);
            for (axis, b) in basis.iter().enumerate() {
                centers.row_mut(c)[axis] = p.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
    } else {
        let offset = distance * (classes - 1) as f64 / 2.0;
        for c in 0..classes {
            centers.row_mut(c)[0] = distance * c as f64 - offset;
        }
    }
    centers
}

/// Seeded Gaussian-mixture bags: class `c` items draw descriptors from the
/// class-`c` mode or, with probability `background_fraction`, from a
/// background mode at the origin shared by all classes.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticBenchmark> {
    if config.classes == 0
        || config.items_per_class == 0
        || config.descriptors_per_item == 0
        || config.dim == 0
    {
        return Err(Error::parameter(
            "classes, items per class, descriptors per item and dimension must all be >= 1",
        ));
    }
    if !(config.noise.is_finite() && config.noise >= 0.0) {
        return Err(Error::parameter("noise must be finite and >= 0"));
    }
    if !(0.0..=1.0).contains(&config.background_fraction) {
        return Err(Error::parameter("background fraction must lie in [0, 1]"));
    }
    if !(config.background_scale.is_finite() && config.background_scale >= 0.0) {
        return Err(Error::parameter("background scale must be finite and >= 0"));
    }
    if !(config.mode_distance.is_finite() && config.mode_distance >= 0.0) {
        return Err(Error::parameter("mode distance must be finite and >= 0"));
    }

    let class_modes = class_mode_centers(config.classes, config.dim, config.mode_distance);
    let background_mode = vec![0.0; config.dim];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut draw_split = |split: &str| -> Result<Vec<FeatureBag<f64>>> {
        let mut bags = Vec::with_capacity(config.classes * config.items_per_class);
        for class in 0..config.classes {
            for item in 0..config.items_per_class {
                let mut data = Vec::with_capacity(config.descriptors_per_item * config.dim);
                for _ in 0..config.descriptors_per_item {
                    let background = rng.random::<f64>() < config.background_fraction;
                    let (center, spread) = if background {
                        (&background_mode[..], config.noise * config.background_scale)
                    } else {
                        (class_modes.row(class), config.noise)
                    };
                    for &mu in center {
                        let z: f64 = rng.sample(StandardNormal);
                        data.push(mu + spread * z);
                    }
                }
                bags.push(FeatureBag {
                    item_id: format!("{split}_c{class}_{item:04}"),
                    descriptors: Matrix::from_vec(config.descriptors_per_item, config.dim, data)?,
                    label: Some(class),
                });
            }
        }
        Ok(bags)
    };
    let train = draw_split("train")?;
    let test = draw_split("test")?;

    let class_names: Vec<String> = (0..config.classes).map(|c| format!("class{c}")).collect();
    let descriptors = descriptor_dataset(&train, &class_names)?;
    Ok(SyntheticBenchmark {
        class_names,
        train,
        test,
        descriptors,
        class_modes,
        background_mode,
    })
}

/// Pools the descriptors of labelled bags; each descriptor inherits its bag's label.
pub fn descriptor_dataset<F: Scalar>(
    bags: &[FeatureBag<F>],
    class_names: &[String],
) -> Result<LabeledDataset<F>> {
    let dim = bags
        .first()
        .map(|b| b.descriptors.cols())
        .ok_or_else(|| Error::parameter("no bags to pool"))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for bag in bags {
        if bag.descriptors.cols() != dim {
            return Err(Error::parameter(format!(
                "item {:?} has dimension {}, expected {dim}",
                bag.item_id,
                bag.descriptors.cols()
            )));
        }
        let label = bag
            .label
            .ok_or_else(|| Error::parameter(format!("item {:?} has no label", bag.item_id)))?;
        data.extend_from_slice(bag.descriptors.as_slice());
        labels.extend(std::iter::repeat_n(label, bag.descriptors.rows()));
    }
    let rows = labels.len();
    LabeledDataset::new(
        Matrix::from_vec(rows, dim, data)?,
        labels,
        class_names.to_vec(),
    )
}
