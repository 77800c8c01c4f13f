//! On-disk formats: model JSON, labeled dataset CSV, indexed matrix CSV.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Activation, Layer, LabeledDataset, LayerKind, Model};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    pub kind: LayerKind,
    pub activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerFile>,
}

impl<T: Scalar> From<&Model<T>> for ModelFile {
    fn from(m: &Model<T>) -> Self {
        ModelFile {
            name: m.name.clone(),
            input_dim: m.input_dim,
            num_classes: m.num_classes,
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    kind: l.kind,
                    activation: l.activation,
                    weights: l.weights.iter_rows().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
                    bias: l.bias.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }
}

impl ModelFile {
    pub fn into_model<T: Scalar>(self) -> Result<Model<T>> {
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut width = self.input_dim;
        for (i, l) in self.layers.into_iter().enumerate() {
            let rows: Vec<Vec<T>> = l.weights.iter().map(|r| r.iter().map(|&v| T::of(v)).collect()).collect();
            let weights = if rows.is_empty() { Matrix::zeros(0, width) } else { Matrix::from_rows(&rows)? };
            width = weights.rows();
            let layer = Layer::dense(weights, l.bias.iter().map(|&v| T::of(v)).collect(), l.activation)
                .map_err(|e| e.context(format!("layer {i}")))?;
            layers.push(layer);
        }
        Model::new(self.name, self.input_dim, self.num_classes, layers)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_text(path, &to_json_string(value)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let file: ModelFile = read_json(path)?;
    file.into_model().map_err(|e| e.context(path.display().to_string()))
}

pub fn save_model<T: Scalar>(path: &Path, model: &Model<T>) -> Result<()> {
    write_json(path, &ModelFile::from(model))
}

/// Dataset CSV: header row, first column `label`, remaining columns features.
pub fn parse_dataset<T: Scalar>(text: &str) -> Result<LabeledDataset<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("label") {
        return Err(Error::Parse("dataset CSV must start with a \"label\" column".into()));
    }
    let width = headers.len() - 1;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != width + 1 {
            return Err(Error::Parse(format!("dataset row {row} has {} fields, expected {}", rec.len(), width + 1)));
        }
        labels.push(parse_field::<usize>(&rec[0], row)?);
        for field in rec.iter().skip(1) {
            values.push(T::of(parse_field::<f64>(field, row)?));
        }
    }
    LabeledDataset::new(Matrix::new(labels.len(), width, values)?, labels)
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<LabeledDataset<T>> {
    parse_dataset(&read_text(path)?).map_err(|e| e.context(path.display().to_string()))
}

pub fn dataset_to_csv<T: Scalar>(data: &LabeledDataset<T>) -> String {
    let mut s = String::from("label");
    for j in 0..data.features.cols() {
        s.push_str(&format!(",x{j}"));
    }
    s.push('\n');
    for (i, row) in data.features.iter_rows().enumerate() {
        s.push_str(&data.labels[i].to_string());
        for v in row {
            s.push(',');
            s.push_str(&fmt_f64(v.as_f64()));
        }
        s.push('\n');
    }
    s
}

/// Matrix whose rows are keyed by dataset input index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedMatrix<T = f64> {
    pub index: Vec<usize>,
    pub values: Matrix<T>,
}

impl<T: Scalar> IndexedMatrix<T> {
    pub fn dense(values: Matrix<T>) -> Self {
        Self { index: (0..values.rows()).collect(), values }
    }

    /// Reorder into a dense matrix covering input indices `0..n`.
    pub fn to_dense(&self, n: usize) -> Result<Matrix<T>> {
        let mut slot = vec![usize::MAX; n];
        for (r, &i) in self.index.iter().enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfBounds { index: i, len: n });
            }
            slot[i] = r;
        }
        if let Some(missing) = slot.iter().position(|&s| s == usize::MAX) {
            return Err(Error::MissingArtifact(format!("no row for input {missing}")));
        }
        self.values.select_rows(&slot)
    }

    /// Rows for the requested input indices, in request order.
    pub fn rows_for(&self, wanted: &[usize]) -> Result<Matrix<T>> {
        let pos: std::collections::HashMap<usize, usize> = self.index.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let mut rows = Vec::with_capacity(wanted.len());
        for &i in wanted {
            let r = *pos.get(&i).ok_or_else(|| Error::MissingArtifact(format!("no row for input {i}")))?;
            rows.push(r);
        }
        self.values.select_rows(&rows)
    }
}

/// Indexed matrix CSV: header `input_index, c0, c1, ...`.
pub fn parse_indexed_matrix<T: Scalar>(text: &str) -> Result<IndexedMatrix<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("input_index") {
        return Err(Error::Parse("matrix CSV must start with an \"input_index\" column".into()));
    }
    let width = headers.len() - 1;
    let mut index = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != width + 1 {
            return Err(Error::Parse(format!("matrix row {row} has {} fields, expected {}", rec.len(), width + 1)));
        }
        index.push(parse_field::<usize>(&rec[0], row)?);
        for field in rec.iter().skip(1) {
            values.push(T::of(parse_field::<f64>(field, row)?));
        }
    }
    let values = Matrix::new(index.len(), width, values)?;
    if !values.all_finite() {
        return Err(Error::NonFinite("matrix CSV"));
    }
    Ok(IndexedMatrix { index, values })
}

pub fn load_indexed_matrix<T: Scalar>(path: &Path) -> Result<IndexedMatrix<T>> {
    parse_indexed_matrix(&read_text(path)?).map_err(|e| e.context(path.display().to_string()))
}

pub fn indexed_matrix_to_csv<T: Scalar>(m: &IndexedMatrix<T>) -> String {
    let mut s = String::from("input_index");
    for j in 0..m.values.cols() {
        s.push_str(&format!(",c{j}"));
    }
    s.push('\n');
    for (r, &i) in m.index.iter().enumerate() {
        s.push_str(&i.to_string());
        for v in m.values.row(r) {
            s.push(',');
            s.push_str(&fmt_f64(v.as_f64()));
        }
        s.push('\n');
    }
    s
}

fn parse_field<F: std::str::FromStr>(field: &str, row: usize) -> Result<F> {
    field.parse().map_err(|_| Error::Parse(format!("row {row}: cannot parse {field:?}")))
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Serde adapter writing non-finite floats as `null` and reading `null` back as NaN.
pub mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
