//! Post-training mutation operators, pool generation with filtering, and the
//! per-input outcome cache that mutation scores are computed from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{variance, Matrix};
use crate::model::{accuracy_of, Activation, Layer, LabeledDataset, Model};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    /// Gaussian fuzzing of a neuron's incoming weights.
    GF,
    /// Shuffle a neuron's incoming weights.
    WS,
    /// Zero a neuron's outgoing weights.
    NEB,
    /// Negate a neuron's pre-activation.
    NAI,
    /// Swap two neurons of one layer.
    NS,
    /// Remove a square layer.
    LR,
    /// Insert an identity layer after a square layer.
    LA,
    /// Duplicate a square layer.
    LD,
}

impl Operator {
    pub const ALL: [Operator; 8] =
        [Operator::GF, Operator::WS, Operator::NEB, Operator::NAI, Operator::NS, Operator::LR, Operator::LA, Operator::LD];

    pub fn is_structural(self) -> bool {
        matches!(self, Operator::LR | Operator::LA | Operator::LD)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Everything needed to rebuild a mutant from the original model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutantSpec {
    pub operator: Operator,
    pub layer: usize,
    /// Target neurons of `layer`. Ignored by the structural operators; for NS,
    /// consecutive pairs are swapped.
    #[serde(default)]
    pub neurons: Vec<usize>,
    /// GF standard deviation. `None` means half the standard deviation of the
    /// target layer's weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mutant<T = f64> {
    pub id: usize,
    pub model: Model<T>,
    pub spec: MutantSpec,
}

fn check_layer<T: Scalar>(model: &Model<T>, spec: &MutantSpec) -> Result<()> {
    if spec.layer >= model.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets layer {} but the model has {} layers",
            spec.operator,
            spec.layer,
            model.layers.len()
        )));
    }
    Ok(())
}

fn check_neurons<T: Scalar>(model: &Model<T>, spec: &MutantSpec) -> Result<()> {
    if spec.neurons.is_empty() {
        return Err(Error::EmptyTargets(spec.operator.to_string()));
    }
    let width = model.layers[spec.layer].out_dim();
    if let Some(&bad) = spec.neurons.iter().find(|&&n| n >= width) {
        return Err(Error::InvalidArgument(format!("neuron {bad} out of range for layer {} (width {width})", spec.layer)));
    }
    Ok(())
}

fn check_square<T: Scalar>(model: &Model<T>, spec: &MutantSpec) -> Result<()> {
    let layer = &model.layers[spec.layer];
    if !layer.is_square() {
        return Err(Error::Structural(format!(
            "{} needs a layer with equal input and output width; layer {} is {}x{}",
            spec.operator,
            spec.layer,
            layer.out_dim(),
            layer.in_dim()
        )));
    }
    if spec.layer + 1 == model.layers.len() {
        return Err(Error::Structural(format!("{} cannot target the output layer", spec.operator)));
    }
    Ok(())
}

/// Apply one operator to a copy of `model`. The original is never touched.
pub fn apply_operator<T: Scalar>(model: &Model<T>, spec: &MutantSpec) -> Result<Model<T>> {
    check_layer(model, spec)?;
    let mut m = model.clone();
    let mut rng = seed::rng(spec.seed);
    let l = spec.layer;
    match spec.operator {
        Operator::GF => {
            check_neurons(model, spec)?;
            let sigma = match spec.sigma {
                Some(s) if s < 0.0 || !s.is_finite() => {
                    return Err(Error::InvalidArgument(format!("GF sigma must be finite and >= 0, got {s}")))
                }
                Some(s) => s,
                None => 0.5 * variance(m.layers[l].weights.as_slice()).as_f64().sqrt(),
            };
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for &n in &spec.neurons {
                    for w in m.layers[l].weights.row_mut(n) {
                        *w += T::of(normal.sample(&mut rng));
                    }
                }
            }
        }
        Operator::WS => {
            check_neurons(model, spec)?;
            for &n in &spec.neurons {
                m.layers[l].weights.row_mut(n).shuffle(&mut rng);
            }
        }
        Operator::NEB => {
            check_neurons(model, spec)?;
            if l + 1 >= m.layers.len() {
                return Err(Error::Structural("NEB needs a following layer to block the neuron's output".into()));
            }
            let next = &mut m.layers[l + 1].weights;
            for &n in &spec.neurons {
                for r in 0..next.rows() {
                    next[(r, n)] = T::zero();
                }
            }
        }
        Operator::NAI => {
            check_neurons(model, spec)?;
            let layer = &mut m.layers[l];
            for &n in &spec.neurons {
                layer.weights.row_mut(n).iter_mut().for_each(|w| *w = -*w);
                layer.bias[n] = -layer.bias[n];
            }
        }
        Operator::NS => {
            check_neurons(model, spec)?;
            if spec.neurons.len() % 2 != 0 {
                return Err(Error::InvalidArgument("NS needs neuron pairs".into()));
            }
            let layer = &mut m.layers[l];
            for pair in spec.neurons.chunks(2) {
                let (a, b) = (pair[0], pair[1]);
                if a == b {
                    continue;
                }
                let cols = layer.weights.cols();
                let w = layer.weights.as_mut_slice();
                for k in 0..cols {
                    w.swap(a * cols + k, b * cols + k);
                }
                layer.bias.swap(a, b);
            }
        }
        Operator::LR => {
            check_square(model, spec)?;
            m.layers.remove(l);
        }
        Operator::LA => {
            check_square(model, spec)?;
            let width = m.layers[l].out_dim();
            let added = Layer::dense(Matrix::identity(width), vec![T::zero(); width], Activation::Identity)?;
            m.layers.insert(l + 1, added);
        }
        Operator::LD => {
            check_square(model, spec)?;
            let copy = m.layers[l].clone();
            m.layers.insert(l + 1, copy);
        }
    }
    m.validate().map_err(|e| Error::Structural(format!("{} produced an invalid model: {e}", spec.operator)))?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    /// Fraction of all neurons targeted by neuron-level operators.
    pub neuron_ratio: f64,
    /// Maximum number of generated mutants before filtering.
    pub cap: usize,
    /// Mutants below `accuracy_ratio * accuracy(original)` are dropped.
    pub accuracy_ratio: f64,
    /// Mutants mispredicting more than this fraction of the inputs the original
    /// gets right are dropped.
    pub max_error_rate: f64,
    pub gf_sigma: Option<f64>,
    pub operators: Vec<Operator>,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self {
            neuron_ratio: 0.01,
            cap: 50,
            accuracy_ratio: 0.9,
            max_error_rate: 0.2,
            gf_sigma: None,
            operators: Operator::ALL.to_vec(),
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.neuron_ratio > 0.0 && self.neuron_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!("neuron_ratio must be in (0, 1], got {}", self.neuron_ratio)));
        }
        if let Some(s) = self.gf_sigma {
            if !(s >= 0.0) {
                return Err(Error::InvalidArgument(format!("gf_sigma must be >= 0, got {s}")));
            }
        }
        if self.operators.is_empty() {
            return Err(Error::InvalidArgument("no mutation operators configured".into()));
        }
        Ok(())
    }
}

fn eligible_layers<T: Scalar>(model: &Model<T>, op: Operator) -> Vec<usize> {
    let n = model.layers.len();
    (0..n)
        .filter(|&l| match op {
            Operator::GF | Operator::WS | Operator::NAI => true,
            Operator::NS => model.layers[l].out_dim() >= 2,
            Operator::NEB => l + 1 < n,
            Operator::LR | Operator::LA | Operator::LD => l + 1 < n && model.layers[l].is_square(),
        })
        .collect()
}

/// Specs for the pool: the cap is filled round-robin over the applicable
/// operators; each neuron-level mutant targets `ceil(ratio * total neurons)`
/// neurons of one randomly chosen layer.
pub fn plan_pool<T: Scalar>(model: &Model<T>, config: &MutationConfig, root_seed: u64) -> Result<Vec<MutantSpec>> {
    config.validate()?;
    let applicable: Vec<(Operator, Vec<usize>)> = config
        .operators
        .iter()
        .map(|&op| (op, eligible_layers(model, op)))
        .filter(|(_, layers)| !layers.is_empty())
        .collect();
    if applicable.is_empty() {
        return Err(Error::InvalidArgument("no configured operator applies to this model".into()));
    }
    let per_mutant = ((config.neuron_ratio * model.neuron_count() as f64).ceil() as usize).max(1);
    let mut specs = Vec::with_capacity(config.cap);
    for i in 0..config.cap {
        let (op, layers) = &applicable[i % applicable.len()];
        let mut rng = seed::stream_rng(root_seed, "mutation.plan", i as u64);
        let layer = layers[rng.random_range(0..layers.len())];
        let width = model.layers[layer].out_dim();
        let neurons = match op {
            Operator::LR | Operator::LA | Operator::LD => Vec::new(),
            Operator::NS => {
                let pairs = per_mutant.min(width / 2).max(1);
                index::sample(&mut rng, width, 2 * pairs).into_vec()
            }
            _ => {
                let mut v = index::sample(&mut rng, width, per_mutant.min(width)).into_vec();
                v.sort_unstable();
                v
            }
        };
        specs.push(MutantSpec {
            operator: *op,
            layer,
            neurons,
            sigma: if *op == Operator::GF { config.gf_sigma } else { None },
            seed: seed::derive(root_seed, "mutation.apply", i as u64),
        });
    }
    Ok(specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    Retained,
    LowAccuracy,
    HighErrorRate,
    Equivalent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub original_accuracy: f64,
    pub min_accuracy: f64,
    pub max_error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEntry {
    pub id: usize,
    #[serde(flatten)]
    pub spec: MutantSpec,
    pub status: FilterStatus,
    pub accuracy: f64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub thresholds: Thresholds,
    pub mutants: Vec<FilterEntry>,
}

impl FilterReport {
    pub fn retained(&self) -> impl Iterator<Item = &FilterEntry> {
        self.mutants.iter().filter(|e| e.status == FilterStatus::Retained)
    }

    pub fn count(&self, status: FilterStatus) -> usize {
        self.mutants.iter().filter(|e| e.status == status).count()
    }
}

/// Filter decision for one mutant given its predictions on the training set.
///
/// Returns the status with the mutant's accuracy and its error rate on the
/// inputs the original model classifies correctly.
pub fn classify_mutant(
    original: &[usize],
    mutant: &[usize],
    labels: &[usize],
    thresholds: &Thresholds,
) -> (FilterStatus, f64, f64) {
    let acc = accuracy_of(mutant, labels);
    let mut n_correct = 0usize;
    let mut broken = 0usize;
    for ((&o, &m), &y) in original.iter().zip(mutant).zip(labels) {
        if o == y {
            n_correct += 1;
            if m != y {
                broken += 1;
            }
        }
    }
    let error_rate = if n_correct == 0 { 0.0 } else { broken as f64 / n_correct as f64 };
    let status = if acc < thresholds.min_accuracy {
        FilterStatus::LowAccuracy
    } else if error_rate > thresholds.max_error_rate {
        FilterStatus::HighErrorRate
    } else if broken == 0 {
        FilterStatus::Equivalent
    } else {
        FilterStatus::Retained
    };
    (status, acc, error_rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutantPool<T = f64> {
    pub mutants: Vec<Mutant<T>>,
}

impl<T: Scalar> MutantPool<T> {
    pub fn len(&self) -> usize {
        self.mutants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mutants.is_empty()
    }
}

/// Generate up to `config.cap` mutants and drop the unusable ones.
pub fn generate_and_filter_pool<T: Scalar>(
    model: &Model<T>,
    train: &LabeledDataset<T>,
    config: &MutationConfig,
    root_seed: u64,
) -> Result<(MutantPool<T>, FilterReport)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("mutant filtering needs training inputs"));
    }
    train.check_labels(model.num_classes)?;
    let specs = plan_pool(model, config, root_seed)?;
    let mutants: Vec<Mutant<T>> = specs
        .into_iter()
        .enumerate()
        .map(|(id, spec)| Ok(Mutant { id, model: apply_operator(model, &spec)?, spec }))
        .collect::<Result<_>>()?;

    let original = model.predict_all(&train.features)?;
    let original_accuracy = accuracy_of(&original, &train.labels);
    let thresholds = Thresholds {
        original_accuracy,
        min_accuracy: config.accuracy_ratio * original_accuracy,
        max_error_rate: config.max_error_rate,
    };
    let verdicts: Vec<(FilterStatus, f64, f64)> = mutants
        .par_iter()
        .map(|m| {
            let preds = m.model.predict_all(&train.features)?;
            Ok(classify_mutant(&original, &preds, &train.labels, &thresholds))
        })
        .collect::<Result<_>>()?;

    let entries: Vec<FilterEntry> = mutants
        .iter()
        .zip(&verdicts)
        .map(|(m, &(status, accuracy, error_rate))| FilterEntry {
            id: m.id,
            spec: m.spec.clone(),
            status,
            accuracy,
            error_rate,
        })
        .collect();
    let retained: Vec<Mutant<T>> = mutants
        .into_iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.0 == FilterStatus::Retained)
        .map(|(m, _)| m)
        .collect();
    if retained.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok((MutantPool { mutants: retained }, FilterReport { thresholds, mutants: entries }))
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn mutant_file_name(id: usize) -> String {
    format!("mutant_{id:03}.json")
}

/// Write one model JSON per retained mutant plus `manifest.json`.
pub fn save_pool<T: Scalar>(dir: &Path, pool: &MutantPool<T>, report: &FilterReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for m in &pool.mutants {
        io::save_model(&dir.join(mutant_file_name(m.id)), &m.model)?;
    }
    io::write_json(&dir.join(MANIFEST_FILE), report)
}

pub fn load_pool<T: Scalar>(dir: &Path) -> Result<(MutantPool<T>, FilterReport)> {
    let report: FilterReport = io::read_json(&dir.join(MANIFEST_FILE))?;
    let mut mutants = Vec::new();
    for e in report.retained() {
        let path = dir.join(mutant_file_name(e.id));
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        mutants.push(Mutant { id: e.id, model: io::load_model(&path)?, spec: e.spec.clone() });
    }
    if mutants.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok((MutantPool { mutants }, report))
}

/// Content digest over the manifest and every retained mutant file. A missing
/// file is folded into the digest, so it still yields a mismatch.
pub fn pool_digest(dir: &Path) -> Result<String> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let report: FilterReport =
        serde_json::from_slice(&manifest).map_err(|e| Error::Parse(format!("{}: {e}", manifest_path.display())))?;
    let files = report
        .retained()
        .map(|e| {
            let name = mutant_file_name(e.id);
            let digest = match std::fs::read(dir.join(&name)) {
                Ok(bytes) => io::sha256_hex(&bytes),
                Err(_) => "missing".to_string(),
            };
            (name, digest)
        })
        .collect();
    combine_digest(&manifest, files)
}

/// Digest [`save_pool`] would produce on disk, computed without writing.
pub fn pool_digest_of<T: Scalar>(pool: &MutantPool<T>, report: &FilterReport) -> Result<String> {
    let manifest = io::to_json_string(report)?;
    let files = pool
        .mutants
        .iter()
        .map(|m| Ok((mutant_file_name(m.id), io::sha256_hex(io::to_json_string(&io::ModelFile::from(&m.model))?.as_bytes()))))
        .collect::<Result<_>>()?;
    combine_digest(manifest.as_bytes(), files)
}

fn combine_digest(manifest: &[u8], files: BTreeMap<String, String>) -> Result<String> {
    let mut parts = files;
    parts.insert("manifest".to_string(), io::sha256_hex(manifest));
    Ok(io::sha256_hex(serde_json::to_string(&parts)?.as_bytes()))
}

/// Predicted class of the original model and every mutant, per input.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMatrix {
    n_inputs: usize,
    n_mutants: usize,
    /// `n_inputs x (n_mutants + 1)`, column 0 is the original model.
    predictions: Vec<u32>,
    true_labels: Option<Vec<usize>>,
    /// Inputs eligible to kill mutants: those the original classifies
    /// correctly, or every input when no labels are known.
    correct: Vec<bool>,
    mutant_ids: Vec<usize>,
}

impl OutcomeMatrix {
    pub fn from_parts(
        original: Vec<usize>,
        mutants: Vec<Vec<usize>>,
        true_labels: Option<Vec<usize>>,
        mutant_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = original.len();
        if mutants.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("mutant prediction columns differ in length".into()));
        }
        if mutant_ids.len() != mutants.len() {
            return Err(Error::Shape("mutant id list does not match the column count".into()));
        }
        if let Some(labels) = &true_labels {
            if labels.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} inputs", labels.len())));
            }
        }
        let cols = mutants.len() + 1;
        let mut predictions = vec![0u32; n * cols];
        for t in 0..n {
            predictions[t * cols] = original[t] as u32;
            for (i, col) in mutants.iter().enumerate() {
                predictions[t * cols + i + 1] = col[t] as u32;
            }
        }
        let correct = match &true_labels {
            Some(labels) => original.iter().zip(labels).map(|(o, l)| o == l).collect(),
            None => vec![true; n],
        };
        Ok(Self { n_inputs: n, n_mutants: mutants.len(), predictions, true_labels, correct, mutant_ids })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_mutants(&self) -> usize {
        self.n_mutants
    }

    pub fn mutant_ids(&self) -> &[usize] {
        &self.mutant_ids
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    #[inline]
    pub fn original(&self, t: usize) -> usize {
        self.predictions[t * (self.n_mutants + 1)] as usize
    }

    /// Prediction of mutant column `i` (0-based, excluding the original).
    #[inline]
    pub fn mutant(&self, t: usize, i: usize) -> usize {
        self.predictions[t * (self.n_mutants + 1) + i + 1] as usize
    }

    #[inline]
    pub fn is_correct(&self, t: usize) -> bool {
        self.correct[t]
    }

    pub fn correct(&self) -> &[bool] {
        &self.correct
    }

    /// Same predictions with labels removed, so every input may kill.
    pub fn without_labels(&self) -> Self {
        Self { true_labels: None, correct: vec![true; self.n_inputs], ..self.clone() }
    }

    /// CSV with columns `input_index, true_label, original_label, m_0, ...`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("input_index,true_label,original_label");
        for i in 0..self.n_mutants {
            s.push_str(&format!(",m_{i}"));
        }
        s.push('\n');
        for t in 0..self.n_inputs {
            s.push_str(&t.to_string());
            s.push(',');
            if let Some(labels) = &self.true_labels {
                s.push_str(&labels[t].to_string());
            }
            s.push(',');
            s.push_str(&self.original(t).to_string());
            for i in 0..self.n_mutants {
                s.push(',');
                s.push_str(&self.mutant(t, i).to_string());
            }
            s.push('\n');
        }
        s
    }
}

/// Run the original model and every mutant over `inputs`.
pub fn precompute_outcomes<T: Scalar>(
    model: &Model<T>,
    pool: &MutantPool<T>,
    inputs: &Matrix<T>,
    labels: Option<&[usize]>,
) -> Result<OutcomeMatrix> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let original = model.predict_all(inputs)?;
    let columns: Vec<Vec<usize>> =
        pool.mutants.par_iter().map(|m| m.model.predict_all(inputs)).collect::<Result<_>>()?;
    OutcomeMatrix::from_parts(original, columns, labels.map(<[usize]>::to_vec), pool.mutants.iter().map(|m| m.id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let l0 = Layer::dense(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap(),
            vec![0.1, 0.2, 0.3],
            Activation::Relu,
        )
        .unwrap();
        let l1 = Layer::dense(
            Matrix::from_rows(&[vec![1.0, 0.5, -1.0], vec![0.2, 0.3, 0.4], vec![-1.0, 1.0, 0.0]]).unwrap(),
            vec![0.0, 0.1, 0.0],
            Activation::Relu,
        )
        .unwrap();
        let l2 = Layer::dense(
            Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, -1.0]]).unwrap(),
            vec![0.0, 0.0],
            Activation::Softmax,
        )
        .unwrap();
        Model::new("m", 2, 2, vec![l0, l1, l2]).unwrap()
    }

    fn spec(operator: Operator, layer: usize, neurons: Vec<usize>) -> MutantSpec {
        MutantSpec { operator, layer, neurons, sigma: None, seed: 9 }
    }

    #[test]
    fn gf_with_zero_sigma_is_identity() {
        let m = model();
        let s = MutantSpec { sigma: Some(0.0), ..spec(Operator::GF, 0, vec![0, 2]) };
        assert_eq!(apply_operator(&m, &s).unwrap(), m);
    }

    #[test]
    fn gf_only_touches_target_rows() {
        let m = model();
        let mutant = apply_operator(&m, &spec(Operator::GF, 1, vec![1])).unwrap();
        assert_eq!(mutant.layers[1].weights.row(0), m.layers[1].weights.row(0));
        assert_ne!(mutant.layers[1].weights.row(1), m.layers[1].weights.row(1));
        assert_eq!(mutant.layers[0], m.layers[0]);
    }

    #[test]
    fn ns_twice_restores_original() {
        let m = model();
        let s = spec(Operator::NS, 0, vec![0, 2]);
        let once = apply_operator(&m, &s).unwrap();
        assert_ne!(once, m);
        assert_eq!(apply_operator(&once, &s).unwrap(), m);
    }

    #[test]
    fn neb_zeroes_exactly_one_outgoing_column() {
        let m = model();
        let mutant = apply_operator(&m, &spec(Operator::NEB, 0, vec![1])).unwrap();
        let (orig, mutated) = (&m.layers[1].weights, &mutant.layers[1].weights);
        for r in 0..orig.rows() {
            for c in 0..orig.cols() {
                if c == 1 {
                    assert_eq!(mutated[(r, c)], 0.0);
                } else {
                    assert_eq!(mutated[(r, c)], orig[(r, c)]);
                }
            }
        }
        assert_eq!(mutant.layers[0], m.layers[0]);
        assert_eq!(mutant.layers[2], m.layers[2]);
    }

    #[test]
    fn nai_negates_pre_activation() {
        let m = model();
        let mutant = apply_operator(&m, &spec(Operator::NAI, 0, vec![2])).unwrap();
        assert_eq!(mutant.layers[0].weights.row(2), &[-5.0, -6.0]);
        assert_eq!(mutant.layers[0].bias[2], -0.3);
    }

    #[test]
    fn ws_permutes_incoming_weights() {
        let m = model();
        let mutant = apply_operator(&m, &spec(Operator::WS, 1, vec![0])).unwrap();
        let mut a = mutant.layers[1].weights.row(0).to_vec();
        let mut b = m.layers[1].weights.row(0).to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn structural_operators() {
        let m = model();
        let lr = apply_operator(&m, &spec(Operator::LR, 1, vec![])).unwrap();
        assert_eq!(lr.layers.len(), 2);
        let la = apply_operator(&m, &spec(Operator::LA, 1, vec![])).unwrap();
        assert_eq!(la.layers.len(), 4);
        assert_eq!(la.layers[2].weights, Matrix::identity(3));
        // identity layer after relu changes nothing
        assert_eq!(la.predict(&[0.3, -0.2]).unwrap(), m.predict(&[0.3, -0.2]).unwrap());
        let ld = apply_operator(&m, &spec(Operator::LD, 1, vec![])).unwrap();
        assert_eq!(ld.layers[1], ld.layers[2]);

        for op in [Operator::LR, Operator::LA, Operator::LD] {
            assert!(matches!(apply_operator(&m, &spec(op, 0, vec![])), Err(Error::Structural(_))));
        }
    }

    #[test]
    fn empty_targets_rejected() {
        let m = model();
        for op in [Operator::GF, Operator::WS, Operator::NEB, Operator::NAI, Operator::NS] {
            assert!(matches!(apply_operator(&m, &spec(op, 0, vec![])), Err(Error::EmptyTargets(_))));
        }
    }

    #[test]
    fn same_spec_same_mutant() {
        let m = model();
        let s = spec(Operator::GF, 0, vec![0, 1]);
        assert_eq!(apply_operator(&m, &s).unwrap(), apply_operator(&m, &s).unwrap());
    }

    #[test]
    fn filter_statuses() {
        let t = Thresholds { original_accuracy: 1.0, min_accuracy: 0.9, max_error_rate: 0.2 };
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let original = labels.clone();
        // clone of the original: never killed
        assert_eq!(classify_mutant(&original, &original, &labels, &t).0, FilterStatus::Equivalent);
        // half accuracy
        let mut half = labels.clone();
        for p in half.iter_mut().take(5) {
            *p = 1 - *p;
        }
        assert_eq!(classify_mutant(&original, &half, &labels, &t).0, FilterStatus::LowAccuracy);

        // 100 inputs, original gets all right, mutant breaks exactly 20
        let labels: Vec<usize> = vec![0; 100];
        let mut m = labels.clone();
        for p in m.iter_mut().take(20) {
            *p = 1;
        }
        let t = Thresholds { original_accuracy: 1.0, min_accuracy: 0.5, max_error_rate: 0.2 };
        let (status, _, rate) = classify_mutant(&labels, &m, &labels, &t);
        assert_eq!(rate, 0.2);
        assert_eq!(status, FilterStatus::Retained);
        m[20] = 1;
        assert_eq!(classify_mutant(&labels, &m, &labels, &t).0, FilterStatus::HighErrorRate);
    }

    #[test]
    fn outcome_matrix_shape_and_csv() {
        let o = OutcomeMatrix::from_parts(vec![0, 1, 1, 0], vec![vec![0, 1, 0, 0], vec![1, 1, 1, 0]], Some(vec![0, 1, 0, 0]), vec![3, 7])
            .unwrap();
        assert_eq!((o.n_inputs(), o.n_mutants()), (4, 2));
        assert_eq!(o.correct(), &[true, true, false, true]);
        let csv = o.to_csv();
        assert!(csv.starts_with("input_index,true_label,original_label,m_0,m_1\n0,0,0,0,1\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
