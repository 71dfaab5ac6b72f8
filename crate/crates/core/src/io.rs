//! File formats: labelled vector CSVs, bag manifests and JSON model files.
//!
//! Vector CSV files carry a header row `f1,...,fd,label`; the trailing
//! `label` column holds a class name and may be omitted for unlabelled input.
//! A bag directory holds `manifest.csv` (`item_id,path,label`, paths relative
//! to the directory) plus one descriptor CSV per item.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bof::FeatureBag;
use crate::error::{Error, Result};
use crate::kmeans::{KmeansConfig, KmeansModel};
use crate::label_model::LabeledDataset;
use crate::matrix::Matrix;
use crate::quantizer::QuantizerModel;
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u64 = 1;
pub const SUPPORTED_VERSIONS: &[u64] = &[FORMAT_VERSION];

const LABEL_COLUMN: &str = "label";
const MANIFEST: &str = "manifest.csv";

/// Vectors read from a CSV file, with labels when the file has a label column.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub features: Matrix<f64>,
    pub labels: Option<Vec<String>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => parse_err(path, line, format!("{other:?}")),
    }
}

/// Reads a vector CSV. The last column is treated as the label when its
/// header is `label`.
pub fn load_vectors(path: &Path) -> Result<VectorFile> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if text.trim().is_empty() {
        return Err(parse_err(path, 1, "empty file"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let has_label = header.iter().next_back() == Some(LABEL_COLUMN);
    let width = header.len();
    let dim = width - usize::from(has_label);
    if dim == 0 {
        return Err(parse_err(path, 1, "header declares no feature columns"));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("row has {} cells, header has {width}", record.len()),
            ));
        }
        for (col, cell) in record.iter().take(dim).enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("column {}: {cell:?} is not a number", col + 1),
                )
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    path,
                    line,
                    format!("column {}: non-finite value {cell:?}", col + 1),
                ));
            }
            data.push(value);
        }
        if has_label {
            labels.push(record[dim].to_string());
        }
    }
    let rows = data.len() / dim;
    if rows == 0 {
        return Err(parse_err(path, 2, "file has a header but no data rows"));
    }
    Ok(VectorFile {
        features: Matrix::from_vec(rows, dim, data)?,
        labels: has_label.then_some(labels),
    })
}

/// Maps label strings to indices; new names are appended to `class_names`.
fn index_labels(labels: &[String], class_names: &mut Vec<String>) -> Vec<usize> {
    let mut index: HashMap<String, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    labels
        .iter()
        .map(|l| {
            *index.entry(l.clone()).or_insert_with(|| {
                class_names.push(l.clone());
                class_names.len() - 1
            })
        })
        .collect()
}

/// Reads a labelled dataset; class names are ordered by first appearance.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset<f64>> {
    let file = load_vectors(path)?;
    let labels = file
        .labels
        .ok_or_else(|| parse_err(path, 1, "missing trailing \"label\" column"))?;
    let mut class_names = Vec::new();
    let indices = index_labels(&labels, &mut class_names);
    LabeledDataset::new(file.features, indices, class_names)
}

fn feature_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|j| format!("f{j}")).collect()
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        writer.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Writes a labelled dataset in the format read by [`load_dataset`].
pub fn save_dataset(dataset: &LabeledDataset<f64>, path: &Path) -> Result<()> {
    let mut header = feature_header(dataset.dim());
    header.push(LABEL_COLUMN.to_string());
    let rows = dataset
        .features()
        .iter_rows()
        .zip(dataset.labels())
        .map(|(row, &l)| {
            let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            cells.push(dataset.class_names()[l].clone());
            cells
        });
    write_csv(path, &header, rows)
}

/// Writes one descriptor CSV per bag plus `manifest.csv` into `dir`.
pub fn save_bags(bags: &[FeatureBag<f64>], class_names: &[String], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = Vec::with_capacity(bags.len());
    for bag in bags {
        let file = format!("{}.csv", bag.item_id);
        let rows = bag
            .descriptors
            .iter_rows()
            .map(|r| r.iter().map(|v| v.to_string()).collect());
        write_csv(
            &dir.join(&file),
            &feature_header(bag.descriptors.cols()),
            rows,
        )?;
        let label = bag
            .label
            .and_then(|l| class_names.get(l).cloned())
            .unwrap_or_default();
        manifest.push(vec![bag.item_id.clone(), file, label]);
    }
    let header = ["item_id", "path", "label"].map(String::from);
    write_csv(&dir.join(MANIFEST), &header, manifest.into_iter())
}

/// Reads a bag directory. Labels are mapped through `class_names`, which is
/// extended with unseen names in order of appearance.
pub fn load_bags(dir: &Path, class_names: &mut Vec<String>) -> Result<Vec<FeatureBag<f64>>> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| csv_err(&manifest_path, e))?
        .clone();
    let expected = ["item_id", "path", "label"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            &manifest_path,
            1,
            format!("manifest header must be {}", expected.join(",")),
        ));
    }
    let mut bags = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(&manifest_path, e))?;
        let item_path: PathBuf = dir.join(&record[1]);
        let file = load_vectors(&item_path)?;
        let label = match &record[2] {
            "" => None,
            name => Some(index_labels(&[name.to_string()], class_names)[0]),
        };
        bags.push(FeatureBag {
            item_id: record[0].to_string(),
            descriptors: file.features,
            label,
        });
    }
    if bags.is_empty() {
        return Err(parse_err(&manifest_path, 2, "manifest lists no items"));
    }
    Ok(bags)
}

/// Baseline model with the metadata echoed into its model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredKmeans<F> {
    pub model: KmeansModel<F>,
    pub config: KmeansConfig,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StoredModel<F> {
    Klvq(QuantizerModel<F>),
    Kmeans(StoredKmeans<F>),
}

impl<F: Scalar> StoredModel<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            StoredModel::Klvq(_) => "klvq",
            StoredModel::Kmeans(_) => "kmeans",
        }
    }

    /// Number of quantization cells (M or K).
    pub fn cells(&self) -> usize {
        match self {
            StoredModel::Klvq(m) => m.subsets(),
            StoredModel::Kmeans(k) => k.model.clusters(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StoredModel::Klvq(m) => m.dim(),
            StoredModel::Kmeans(k) => k.model.dim(),
        }
    }

    pub fn class_names(&self) -> &[String] {
        match self {
            StoredModel::Klvq(m) => m.class_names(),
            StoredModel::Kmeans(k) => &k.class_names,
        }
    }

    /// Cell index of one vector.
    pub fn quantize(&self, query: &[F]) -> Result<usize> {
        match self {
            StoredModel::Klvq(m) => m.quantize(query),
            StoredModel::Kmeans(k) => crate::kmeans::kmeans_assign(&k.model, query),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StoredModel::Klvq(m) => m.validate(),
            StoredModel::Kmeans(k) => {
                k.model.validate()?;
                if k.config.clusters != k.model.clusters() {
                    return Err(Error::Schema(format!(
                        "config echo says K = {}, model has {} centroids",
                        k.config.clusters,
                        k.model.clusters()
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Serialize)]
struct ModelFileOut<'a, F> {
    format_version: u64,
    #[serde(flatten)]
    model: &'a StoredModel<F>,
}

/// Serializes `model` as JSON into a string.
pub fn model_to_json<F>(model: &StoredModel<F>) -> Result<String>
where
    F: Scalar + Serialize,
{
    let file = ModelFileOut {
        format_version: FORMAT_VERSION,
        model,
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Schema(e.to_string()))
}

/// Parses a model file's JSON text, checking its version and invariants.
pub fn model_from_json<F>(text: &str) -> Result<StoredModel<F>>
where
    F: Scalar + DeserializeOwned,
{
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let object = value
        .as_object_mut()
        .ok_or_else(|| Error::Schema("model file must be a JSON object".into()))?;
    let version = object
        .remove("format_version")
        .ok_or_else(|| Error::Schema("missing format_version".into()))?;
    let version = version
        .as_u64()
        .ok_or_else(|| Error::Schema(format!("format_version {version} is not an integer")))?;
    if !SUPPORTED_VERSIONS.contains(&version) {
        return Err(Error::Version {
            found: version,
            supported: SUPPORTED_VERSIONS.to_vec(),
        });
    }
    let model: StoredModel<F> =
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

pub fn save_model<F>(model: &StoredModel<F>, path: &Path) -> Result<()>
where
    F: Scalar + Serialize,
{
    let mut json = model_to_json(model)?;
    json.push('\n');
    fs::write(path, json).map_err(io_err(path))
}

pub fn load_model<F>(path: &Path) -> Result<StoredModel<F>>
where
    F: Scalar + DeserializeOwned,
{
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    model_from_json(&text)
}
