//! Adequacy scores for input subsets: mutation scores, surprise coverage and
//! pairwise latent-partition coverage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::mutation::OutcomeMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetMode {
    Random,
    Uniform,
}

impl fmt::Display for SubsetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubsetMode::Random => "random",
            SubsetMode::Uniform => "uniform",
        })
    }
}

/// Input indices of one sampled subset. Duplicates are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetRef {
    pub indices: Vec<usize>,
    pub mode: SubsetMode,
}

impl SubsetRef {
    pub fn check_bounds(&self, len: usize) -> Result<()> {
        check_indices(&self.indices, len)
    }
}

pub(crate) fn check_indices(indices: &[usize], len: usize) -> Result<()> {
    match indices.iter().find(|&&i| i >= len) {
        Some(&index) => Err(Error::IndexOutOfBounds { index, len }),
        None => Ok(()),
    }
}

/// Adequacy metric names as they appear in configs and file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MsStandard,
    MsDeepmutation,
    MsKs,
    Dsc,
    Lsc,
    Idc,
}

impl Metric {
    pub const ALL: [Metric; 6] =
        [Metric::MsStandard, Metric::MsDeepmutation, Metric::MsKs, Metric::Dsc, Metric::Lsc, Metric::Idc];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::MsStandard => "ms_standard",
            Metric::MsDeepmutation => "ms_deepmutation",
            Metric::MsKs => "ms_ks",
            Metric::Dsc => "dsc",
            Metric::Lsc => "lsc",
            Metric::Idc => "idc",
        }
    }

    pub fn ms_variant(self) -> Option<MsVariant> {
        match self {
            Metric::MsStandard => Some(MsVariant::Standard),
            Metric::MsDeepmutation => Some(MsVariant::DeepMutation),
            Metric::MsKs => Some(MsVariant::KsBased),
            _ => None,
        }
    }

    pub fn sa_kind(self) -> Option<SaKind> {
        match self {
            Metric::Dsc => Some(SaKind::Dsa),
            Metric::Lsc => Some(SaKind::Lsa),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsVariant {
    /// Fraction of mutants killed by at least one input.
    Standard,
    /// Fraction of (mutant, class) pairs killed.
    DeepMutation,
    /// Mean per-input fraction of mutants disagreeing with the original.
    KsBased,
}

fn distinct(indices: &[usize], len: usize) -> Vec<usize> {
    let mut seen = vec![false; len];
    indices.iter().copied().filter(|&i| !std::mem::replace(&mut seen[i], true)).collect()
}

/// Mutation score of a subset.
///
/// An input kills a mutant when the original classifies it correctly (or no
/// labels are known) and the mutant predicts a different class. Duplicates
/// count once for kill decisions; the KS-based variant averages over the
/// multiset.
pub fn mutation_score(outcomes: &OutcomeMatrix, indices: &[usize], variant: MsVariant, num_classes: usize) -> Result<f64> {
    let m = outcomes.n_mutants();
    if m == 0 {
        return Err(Error::EmptyPool);
    }
    if indices.is_empty() {
        return Err(Error::InvalidArgument("mutation score of an empty subset".into()));
    }
    check_indices(indices, outcomes.n_inputs())?;
    match variant {
        MsVariant::Standard => {
            let mut killed = vec![false; m];
            for t in distinct(indices, outcomes.n_inputs()) {
                if !outcomes.is_correct(t) {
                    continue;
                }
                let o = outcomes.original(t);
                for (i, k) in killed.iter_mut().enumerate() {
                    if outcomes.mutant(t, i) != o {
                        *k = true;
                    }
                }
            }
            Ok(killed.iter().filter(|&&k| k).count() as f64 / m as f64)
        }
        MsVariant::DeepMutation => {
            if num_classes == 0 {
                return Err(Error::InvalidArgument("num_classes must be positive".into()));
            }
            let mut killed = vec![false; m * num_classes];
            for t in distinct(indices, outcomes.n_inputs()) {
                if !outcomes.is_correct(t) {
                    continue;
                }
                let c = outcomes.original(t);
                if c >= num_classes {
                    return Err(Error::LabelOutOfRange { row: t, label: c, num_classes });
                }
                for i in 0..m {
                    if outcomes.mutant(t, i) != c {
                        killed[i * num_classes + c] = true;
                    }
                }
            }
            Ok(killed.iter().filter(|&&k| k).count() as f64 / (m * num_classes) as f64)
        }
        MsVariant::KsBased => {
            let total: f64 = indices.iter().map(|&t| killing_score(outcomes, t)).sum();
            Ok(total / indices.len() as f64)
        }
    }
}

/// Fraction of mutants whose prediction on input `t` differs from the original.
pub fn killing_score(outcomes: &OutcomeMatrix, t: usize) -> f64 {
    let o = outcomes.original(t);
    let m = outcomes.n_mutants();
    (0..m).filter(|&i| outcomes.mutant(t, i) != o).count() as f64 / m as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SaKind {
    Dsa,
    Lsa,
}

/// Trace dimensions with variance below this are dropped before the KDE.
pub const LSA_VARIANCE_FLOOR: f64 = 1e-5;

/// Gaussian product-kernel density estimate with per-dimension Scott bandwidths.
#[derive(Debug, Clone)]
pub struct Kde<T> {
    points: Matrix<T>,
    kept: Vec<usize>,
    inv_bandwidth: Vec<T>,
    log_norm: T,
}

impl<T: Scalar> Kde<T> {
    pub fn fit(train: &Matrix<T>) -> Result<Self> {
        let n = train.rows();
        if n == 0 {
            return Err(Error::NoTrainingTraces);
        }
        let d = train.cols();
        let kept: Vec<usize> = (0..d)
            .filter(|&j| {
                let col = train.column(j);
                crate::linalg::variance(&col).as_f64() >= LSA_VARIANCE_FLOOR
            })
            .collect();
        if kept.is_empty() || n < 2 {
            return Err(Error::NoRetainedDimensions);
        }
        let points = train.select_columns(&kept);
        let dk = kept.len();
        let factor = (n as f64).powf(-1.0 / (dk as f64 + 4.0));
        let mut inv_bandwidth = Vec::with_capacity(dk);
        let mut log_norm = 0.0;
        for j in 0..dk {
            let col = points.column(j);
            // sample standard deviation
            let var = crate::linalg::variance(&col).as_f64() * n as f64 / (n as f64 - 1.0);
            let h = var.sqrt() * factor;
            inv_bandwidth.push(T::of(1.0 / h));
            log_norm += (h * (2.0 * std::f64::consts::PI).sqrt()).ln();
        }
        Ok(Self { points, kept, inv_bandwidth, log_norm: T::of(log_norm) })
    }

    pub fn dims(&self) -> usize {
        self.kept.len()
    }

    /// `log f(x)`, optionally leaving training row `exclude` out of the sum.
    pub fn log_density(&self, x: &[T], exclude: Option<usize>) -> Result<T> {
        let n = self.points.rows() - usize::from(exclude.is_some());
        if n == 0 {
            return Err(Error::NoTrainingTraces);
        }
        let half = T::of(0.5);
        let mut exps = Vec::with_capacity(n);
        for (i, p) in self.points.iter_rows().enumerate() {
            if Some(i) == exclude {
                continue;
            }
            let mut q = T::zero();
            for (k, &j) in self.kept.iter().enumerate() {
                let z = (x[j] - p[k]) * self.inv_bandwidth[k];
                q += z * z;
            }
            exps.push(-half * q);
        }
        let max = exps.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = exps.iter().map(|&e| (e - max).exp()).sum();
        Ok(max + sum.ln() - T::count(n).ln() - self.log_norm)
    }
}

/// Training-side state for computing surprise adequacy.
#[derive(Debug, Clone)]
pub enum SurpriseModel<T> {
    Dsa { train: Matrix<T> },
    Lsa { kde: Kde<T>, width: usize },
}

impl<T: Scalar> SurpriseModel<T> {
    pub fn fit(train: &Matrix<T>, kind: SaKind) -> Result<Self> {
        if train.rows() == 0 {
            return Err(Error::NoTrainingTraces);
        }
        Ok(match kind {
            SaKind::Dsa => SurpriseModel::Dsa { train: train.clone() },
            SaKind::Lsa => SurpriseModel::Lsa { kde: Kde::fit(train)?, width: train.cols() },
        })
    }

    fn width(&self) -> usize {
        match self {
            SurpriseModel::Dsa { train } => train.cols(),
            SurpriseModel::Lsa { width, .. } => *width,
        }
    }

    /// SA of one trace; `exclude` drops that training row first.
    pub fn score(&self, trace: &[T], exclude: Option<usize>) -> Result<T> {
        if trace.len() != self.width() {
            return Err(Error::Shape(format!("trace width {} != training width {}", trace.len(), self.width())));
        }
        match self {
            SurpriseModel::Dsa { train } => {
                let mut best: Option<T> = None;
                for (i, row) in train.iter_rows().enumerate() {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d = squared_distance(trace, row);
                    if best.is_none_or(|b| d < b) {
                        best = Some(d);
                    }
                }
                best.map(T::sqrt).ok_or(Error::NoTrainingTraces)
            }
            SurpriseModel::Lsa { kde, .. } => Ok(-kde.log_density(trace, exclude)?),
        }
    }

    pub fn score_all(&self, traces: &Matrix<T>, leave_one_out: bool) -> Result<Vec<T>> {
        use rayon::prelude::*;
        (0..traces.rows())
            .into_par_iter()
            .map(|i| self.score(traces.row(i), leave_one_out.then_some(i)))
            .collect()
    }
}

/// SA value per row of `traces` relative to `train`.
///
/// With `leave_one_out`, `traces` must be the training traces themselves and
/// row `i` is excluded when scoring input `i`.
pub fn surprise_adequacy<T: Scalar>(traces: &Matrix<T>, train: &Matrix<T>, kind: SaKind, leave_one_out: bool) -> Result<Vec<T>> {
    if traces.cols() != train.cols() {
        return Err(Error::Shape(format!("trace width {} != training width {}", traces.cols(), train.cols())));
    }
    if leave_one_out {
        if train.rows() < 2 {
            return Err(Error::NoTrainingTraces);
        }
        if traces.rows() != train.rows() {
            return Err(Error::Shape("leave-one-out scoring needs the training traces themselves".into()));
        }
    }
    SurpriseModel::fit(train, kind)?.score_all(traces, leave_one_out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScConfig {
    pub sa_kind: SaKind,
    pub layer_index: usize,
    pub n_buckets: usize,
    pub lower: f64,
    pub upper: f64,
}

impl ScConfig {
    /// Bounds taken from the SA values observed on the training set.
    pub fn from_training<T: Scalar>(sa_kind: SaKind, layer_index: usize, n_buckets: usize, train_sa: &[T]) -> Result<Self> {
        if train_sa.is_empty() {
            return Err(Error::NoTrainingTraces);
        }
        let lower = train_sa.iter().map(|v| v.as_f64()).fold(f64::INFINITY, f64::min);
        let upper = train_sa.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let c = Self { sa_kind, layer_index, n_buckets, lower, upper };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_buckets == 0 {
            return Err(Error::InvalidArgument("n_buckets must be >= 1".into()));
        }
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "surprise bounds must satisfy lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Equal-width bucket of `v`; out-of-range values clamp to the end buckets.
    pub fn bucket(&self, v: f64) -> usize {
        let w = (self.upper - self.lower) / self.n_buckets as f64;
        let b = ((v - self.lower) / w).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(self.n_buckets - 1)
        }
    }
}

/// Fraction of SA buckets hit by at least one value.
pub fn surprise_coverage<T: Scalar>(sa_values: &[T], config: &ScConfig) -> Result<f64> {
    config.validate()?;
    if sa_values.is_empty() {
        return Err(Error::InvalidArgument("surprise coverage of an empty set".into()));
    }
    let mut hit = vec![false; config.n_buckets];
    for v in sa_values {
        hit[config.bucket(v.as_f64())] = true;
    }
    Ok(hit.iter().filter(|&&h| h).count() as f64 / config.n_buckets as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    pub dims: usize,
    pub bins_per_dim: usize,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl LatentConfig {
    pub fn from_training<T: Scalar>(latents: &Matrix<T>, bins_per_dim: usize) -> Result<Self> {
        if latents.rows() == 0 {
            return Err(Error::EmptyDataset("latent codes"));
        }
        let dims = latents.cols();
        let mut mins = vec![f64::INFINITY; dims];
        let mut maxs = vec![f64::NEG_INFINITY; dims];
        for r in latents.iter_rows() {
            for (j, v) in r.iter().enumerate() {
                mins[j] = mins[j].min(v.as_f64());
                maxs[j] = maxs[j].max(v.as_f64());
            }
        }
        let c = Self { dims, bins_per_dim, mins, maxs };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims < 2 {
            return Err(Error::InvalidArgument(format!("pairwise coverage needs at least 2 latent dims, got {}", self.dims)));
        }
        if self.bins_per_dim == 0 {
            return Err(Error::InvalidArgument("bins_per_dim must be >= 1".into()));
        }
        if self.mins.len() != self.dims || self.maxs.len() != self.dims {
            return Err(Error::Shape("latent bounds do not match dims".into()));
        }
        Ok(())
    }

    pub fn bin(&self, dim: usize, v: f64) -> usize {
        let (lo, hi) = (self.mins[dim], self.maxs[dim]);
        if !(hi > lo) {
            return 0;
        }
        let b = ((v - lo) / (hi - lo) * self.bins_per_dim as f64).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(self.bins_per_dim - 1)
        }
    }

    pub fn bins_of<T: Scalar>(&self, row: &[T]) -> Vec<u16> {
        row.iter().enumerate().map(|(j, v)| self.bin(j, v.as_f64()) as u16).collect()
    }

    pub fn combinations(&self) -> usize {
        self.dims * (self.dims - 1) / 2 * self.bins_per_dim * self.bins_per_dim
    }
}

fn idc_from_bins<'a>(rows: impl Iterator<Item = &'a [u16]>, config: &LatentConfig) -> f64 {
    let (d, b) = (config.dims, config.bins_per_dim);
    let mut covered = vec![false; config.combinations()];
    for bins in rows {
        let mut pair = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                covered[(pair * b + bins[i] as usize) * b + bins[j] as usize] = true;
                pair += 1;
            }
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64
}

/// Fraction of (dimension pair, bin pair) combinations covered by `latents`.
pub fn idc_coverage<T: Scalar>(latents: &Matrix<T>, config: &LatentConfig) -> Result<f64> {
    config.validate()?;
    if latents.rows() == 0 {
        return Err(Error::InvalidArgument("latent coverage of an empty set".into()));
    }
    if latents.cols() != config.dims {
        return Err(Error::Shape(format!("latent width {} != configured dims {}", latents.cols(), config.dims)));
    }
    let bins: Vec<Vec<u16>> = latents.iter_rows().map(|r| config.bins_of(r)).collect();
    Ok(idc_from_bins(bins.iter().map(Vec::as_slice), config))
}

/// Scores subsets of one fixed input pool.
pub trait AdequacyScorer: Send + Sync {
    fn metric(&self) -> Metric;
    fn pool_size(&self) -> usize;
    fn score(&self, indices: &[usize]) -> Result<f64>;
}

/// Mutation score over a precomputed outcome matrix, with per-input kill lists.
#[derive(Debug, Clone)]
pub struct MutationScorer {
    metric: Metric,
    variant: MsVariant,
    num_classes: usize,
    n_mutants: usize,
    /// Mutant columns killed by each input (empty for ineligible inputs).
    kills: Vec<Vec<u32>>,
    class: Vec<usize>,
    killing: Vec<f64>,
}

impl MutationScorer {
    pub fn new(outcomes: &OutcomeMatrix, metric: Metric, num_classes: usize) -> Result<Self> {
        let variant = metric
            .ms_variant()
            .ok_or_else(|| Error::InvalidArgument(format!("{metric} is not a mutation score")))?;
        if outcomes.n_mutants() == 0 {
            return Err(Error::EmptyPool);
        }
        let n = outcomes.n_inputs();
        let mut kills = Vec::with_capacity(n);
        let mut class = Vec::with_capacity(n);
        let mut killing = Vec::with_capacity(n);
        for t in 0..n {
            let o = outcomes.original(t);
            if o >= num_classes {
                return Err(Error::LabelOutOfRange { row: t, label: o, num_classes });
            }
            let differs: Vec<u32> = (0..outcomes.n_mutants()).filter(|&i| outcomes.mutant(t, i) != o).map(|i| i as u32).collect();
            killing.push(differs.len() as f64 / outcomes.n_mutants() as f64);
            kills.push(if outcomes.is_correct(t) { differs } else { Vec::new() });
            class.push(o);
        }
        Ok(Self { metric, variant, num_classes, n_mutants: outcomes.n_mutants(), kills, class, killing })
    }
}

impl AdequacyScorer for MutationScorer {
    fn metric(&self) -> Metric {
        self.metric
    }

    fn pool_size(&self) -> usize {
        self.kills.len()
    }

    fn score(&self, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("mutation score of an empty subset".into()));
        }
        check_indices(indices, self.kills.len())?;
        let m = self.n_mutants;
        Ok(match self.variant {
            MsVariant::Standard => {
                let mut killed = vec![false; m];
                for &t in indices {
                    for &i in &self.kills[t] {
                        killed[i as usize] = true;
                    }
                }
                killed.iter().filter(|&&k| k).count() as f64 / m as f64
            }
            MsVariant::DeepMutation => {
                let c = self.num_classes;
                let mut killed = vec![false; m * c];
                for &t in indices {
                    for &i in &self.kills[t] {
                        killed[i as usize * c + self.class[t]] = true;
                    }
                }
                killed.iter().filter(|&&k| k).count() as f64 / (m * c) as f64
            }
            MsVariant::KsBased => indices.iter().map(|&t| self.killing[t]).sum::<f64>() / indices.len() as f64,
        })
    }
}

/// Surprise coverage with the bucket of every pool input precomputed.
#[derive(Debug, Clone)]
pub struct SurpriseCoverageScorer {
    metric: Metric,
    n_buckets: usize,
    buckets: Vec<usize>,
}

impl SurpriseCoverageScorer {
    pub fn new<T: Scalar>(sa_values: &[T], config: &ScConfig) -> Result<Self> {
        config.validate()?;
        let metric = match config.sa_kind {
            SaKind::Dsa => Metric::Dsc,
            SaKind::Lsa => Metric::Lsc,
        };
        Ok(Self { metric, n_buckets: config.n_buckets, buckets: sa_values.iter().map(|v| config.bucket(v.as_f64())).collect() })
    }
}

impl AdequacyScorer for SurpriseCoverageScorer {
    fn metric(&self) -> Metric {
        self.metric
    }

    fn pool_size(&self) -> usize {
        self.buckets.len()
    }

    fn score(&self, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("surprise coverage of an empty subset".into()));
        }
        check_indices(indices, self.buckets.len())?;
        let mut hit = vec![false; self.n_buckets];
        for &t in indices {
            hit[self.buckets[t]] = true;
        }
        Ok(hit.iter().filter(|&&h| h).count() as f64 / self.n_buckets as f64)
    }
}

/// Latent-partition coverage with every pool input's bins precomputed.
#[derive(Debug, Clone)]
pub struct IdcScorer {
    config: LatentConfig,
    bins: Vec<Vec<u16>>,
}

impl IdcScorer {
    pub fn new<T: Scalar>(latents: &Matrix<T>, config: &LatentConfig) -> Result<Self> {
        config.validate()?;
        if latents.cols() != config.dims {
            return Err(Error::Shape(format!("latent width {} != configured dims {}", latents.cols(), config.dims)));
        }
        Ok(Self { config: config.clone(), bins: latents.iter_rows().map(|r| config.bins_of(r)).collect() })
    }
}

impl AdequacyScorer for IdcScorer {
    fn metric(&self) -> Metric {
        Metric::Idc
    }

    fn pool_size(&self) -> usize {
        self.bins.len()
    }

    fn score(&self, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("latent coverage of an empty subset".into()));
        }
        check_indices(indices, self.bins.len())?;
        Ok(idc_from_bins(indices.iter().map(|&t| self.bins[t].as_slice()), &self.config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Labels {3, 5, 3, 7}, all correct; M1 breaks the first two inputs, M2 all four.
    fn worked_example() -> OutcomeMatrix {
        let labels = vec![3, 5, 3, 7];
        let m1 = vec![0, 0, 3, 7];
        let m2 = vec![0, 0, 0, 0];
        OutcomeMatrix::from_parts(labels.clone(), vec![m1, m2], Some(labels), vec![0, 1]).unwrap()
    }

    #[test]
    fn worked_example_scores() {
        let o = worked_example();
        let all = [0, 1, 2, 3];
        assert_eq!(mutation_score(&o, &all, MsVariant::DeepMutation, 10).unwrap(), 0.25);
        assert_eq!(mutation_score(&o, &all, MsVariant::Standard, 10).unwrap(), 1.0);
        assert_eq!(mutation_score(&o, &all, MsVariant::KsBased, 10).unwrap(), 0.75);
        for metric in [Metric::MsStandard, Metric::MsDeepmutation, Metric::MsKs] {
            let s = MutationScorer::new(&o, metric, 10).unwrap();
            assert_eq!(s.score(&all).unwrap(), mutation_score(&o, &all, metric.ms_variant().unwrap(), 10).unwrap());
        }
    }

    #[test]
    fn nothing_killed_scores_zero() {
        let labels = vec![1, 2, 0];
        let o = OutcomeMatrix::from_parts(labels.clone(), vec![labels.clone(), labels.clone()], Some(labels), vec![0, 1]).unwrap();
        for v in [MsVariant::Standard, MsVariant::DeepMutation, MsVariant::KsBased] {
            assert_eq!(mutation_score(&o, &[0, 1, 2], v, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn mispredicted_inputs_do_not_kill_but_count_for_ks() {
        // input 0 is mispredicted by the original (label 1, predicted 0)
        let o = OutcomeMatrix::from_parts(vec![0], vec![vec![1]], Some(vec![1]), vec![0]).unwrap();
        assert_eq!(mutation_score(&o, &[0], MsVariant::Standard, 2).unwrap(), 0.0);
        assert_eq!(mutation_score(&o, &[0], MsVariant::KsBased, 2).unwrap(), 1.0);
        // without labels every input may kill
        assert_eq!(mutation_score(&o.without_labels(), &[0], MsVariant::Standard, 2).unwrap(), 1.0);
    }

    #[test]
    fn duplicates_count_once_except_ks() {
        let o = worked_example();
        assert_eq!(mutation_score(&o, &[0, 0], MsVariant::DeepMutation, 10).unwrap(), 2.0 / 20.0);
        assert_eq!(mutation_score(&o, &[0, 2, 2], MsVariant::KsBased, 10).unwrap(), (1.0 + 0.5 + 0.5) / 3.0);
    }

    #[test]
    fn ms_errors() {
        let o = OutcomeMatrix::from_parts(vec![0, 1], vec![], Some(vec![0, 1]), vec![]).unwrap();
        assert!(matches!(mutation_score(&o, &[0], MsVariant::Standard, 2), Err(Error::EmptyPool)));
        let o = worked_example();
        assert!(mutation_score(&o, &[], MsVariant::Standard, 10).is_err());
        assert!(matches!(mutation_score(&o, &[9], MsVariant::Standard, 10), Err(Error::IndexOutOfBounds { .. })));
    }

    #[test]
    fn dsa_examples() {
        let train = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let test: Matrix = Matrix::from_rows(&[vec![0.4], vec![1.0]]).unwrap();
        let sa = surprise_adequacy(&test, &train, SaKind::Dsa, false).unwrap();
        assert!((sa[0] - 0.4).abs() < 1e-15);
        assert_eq!(sa[1], 0.0);
        // leave-one-out: each training point's neighbour is the other one
        let loo = surprise_adequacy(&train, &train, SaKind::Dsa, true).unwrap();
        assert_eq!(loo, vec![1.0, 1.0]);
    }

    #[test]
    fn lsa_density_ordering() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin() * 0.5, (i as f64 * 0.91).cos() * 0.5]).collect();
        let train = Matrix::from_rows(&rows).unwrap();
        let centroid = vec![
            rows.iter().map(|r| r[0]).sum::<f64>() / 50.0,
            rows.iter().map(|r| r[1]).sum::<f64>() / 50.0,
        ];
        let test = Matrix::from_rows(&[centroid, vec![5.0, -5.0]]).unwrap();
        let sa = surprise_adequacy(&test, &train, SaKind::Lsa, false).unwrap();
        assert!(sa[0] < sa[1]);
    }

    #[test]
    fn lsa_ignores_constant_dimension() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()]).collect();
        let padded: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1], 2.5]).collect();
        let a = surprise_adequacy(&Matrix::from_rows(&rows).unwrap(), &Matrix::from_rows(&rows).unwrap(), SaKind::Lsa, true).unwrap();
        let b = surprise_adequacy(&Matrix::from_rows(&padded).unwrap(), &Matrix::from_rows(&padded).unwrap(), SaKind::Lsa, true)
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lsa_errors() {
        let constant = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(surprise_adequacy(&constant, &constant, SaKind::Lsa, false), Err(Error::NoRetainedDimensions)));
        let empty = Matrix::<f64>::zeros(0, 2);
        assert!(matches!(SurpriseModel::fit(&empty, SaKind::Dsa), Err(Error::NoTrainingTraces)));
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(surprise_adequacy(&one, &one, SaKind::Dsa, true), Err(Error::NoTrainingTraces)));
    }

    #[test]
    fn coverage_examples() {
        let cfg = ScConfig { sa_kind: SaKind::Dsa, layer_index: 0, n_buckets: 10, lower: 0.0, upper: 1.0 };
        assert_eq!(surprise_coverage(&[0.1, 0.5], &cfg).unwrap(), 0.2);
        assert_eq!(cfg.bucket(0.1), 1);
        assert_eq!(cfg.bucket(0.5), 5);
        assert_eq!(surprise_coverage(&[0.3], &cfg).unwrap(), 0.1);
        let all: Vec<f64> = (0..10).map(|i| i as f64 / 10.0 + 0.05).collect();
        assert_eq!(surprise_coverage(&all, &cfg).unwrap(), 1.0);
        // out of range clamps, upper edge belongs to the last bucket
        assert_eq!(cfg.bucket(-3.0), 0);
        assert_eq!(cfg.bucket(1.0), 9);
        assert_eq!(cfg.bucket(7.0), 9);
    }

    #[test]
    fn idc_examples() {
        let cfg = LatentConfig { dims: 2, bins_per_dim: 2, mins: vec![0.0, 0.0], maxs: vec![1.0, 1.0] };
        let one = Matrix::from_rows(&[vec![0.2, 0.2]]).unwrap();
        assert_eq!(idc_coverage(&one, &cfg).unwrap(), 0.25);
        let diag = Matrix::from_rows(&[vec![0.1, 0.2], vec![0.9, 0.8]]).unwrap();
        assert_eq!(idc_coverage(&diag, &cfg).unwrap(), 0.5);
        let full = Matrix::from_rows(&[vec![0.1, 0.1], vec![0.1, 0.9], vec![0.9, 0.1], vec![0.9, 0.9]]).unwrap();
        assert_eq!(idc_coverage(&full, &cfg).unwrap(), 1.0);
        let bad = LatentConfig { dims: 1, bins_per_dim: 2, mins: vec![0.0], maxs: vec![1.0] };
        assert!(idc_coverage(&Matrix::from_rows(&[vec![0.5]]).unwrap(), &bad).is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("msx".parse::<Metric>().is_err());
    }
}
