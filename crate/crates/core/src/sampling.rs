//! Subset sampling with adaptive size, producing the (AS, FDR) archive.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adequacy::{AdequacyScorer, SubsetMode, SubsetRef};
use crate::error::{Error, Result};
use crate::io;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub theta: f64,
    pub sn: usize,
    /// Overrides the default `max(25, ceil(0.001 n))` first size.
    pub initial_size: Option<usize>,
    pub growth: f64,
    pub shrink: f64,
    pub max_iterations: usize,
    pub mode: SubsetMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { theta: 0.05, sn: 300, initial_size: None, growth: 1.5, shrink: 0.5, max_iterations: 20, mode: SubsetMode::Random }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidArgument(format!("sampling.{field}: {msg}")));
        if !(self.theta > 0.0 && self.theta < 0.5) {
            return bad("theta", format!("must be in (0, 0.5), got {}", self.theta));
        }
        if self.sn < 2 {
            return bad("sn", format!("must be >= 2, got {}", self.sn));
        }
        if !(self.growth > 1.0) {
            return bad("growth", format!("must be > 1, got {}", self.growth));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink", format!("must be in (0, 1), got {}", self.shrink));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be >= 1".into());
        }
        if self.initial_size == Some(0) {
            return bad("initial_size", "must be >= 1".into());
        }
        Ok(())
    }
}

/// Size-search bookkeeping across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub config: SamplerConfig,
    pub dataset_size: usize,
    /// Smallest size the mode can draw (1, or |C| for uniform).
    pub min_size: usize,
    pub visited: BTreeSet<usize>,
    pub iterations: usize,
}

impl SamplerState {
    pub fn new(config: SamplerConfig, dataset_size: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        if dataset_size == 0 {
            return Err(Error::EmptyDataset("sampling pool"));
        }
        let min_size = match config.mode {
            SubsetMode::Random => 1,
            SubsetMode::Uniform => num_classes.max(1),
        };
        Ok(Self { config, dataset_size, min_size, visited: BTreeSet::new(), iterations: 0 })
    }

    pub fn initial_size(&self) -> usize {
        let default = 25usize.max((0.001 * self.dataset_size as f64).ceil() as usize);
        self.config.initial_size.unwrap_or(default).clamp(self.min_size, self.dataset_size.max(self.min_size))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Both `minFDR < theta` and `maxFDR > 1 - theta` hold.
    Covered,
    IterationCap,
    /// The needed direction has no unvisited size left.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeUpdate {
    Next(usize),
    Done(StopReason),
}

/// Decide the next subset size from the archive so far.
///
/// Growth is tried first; when it is exhausted the shrink condition is still
/// checked before stopping.
pub fn update_sampling_size(archive: &[ArchiveRecord], state: &mut SamplerState) -> SizeUpdate {
    if state.iterations >= state.config.max_iterations {
        return SizeUpdate::Done(StopReason::IterationCap);
    }
    let next = if archive.is_empty() {
        Some(state.initial_size())
    } else {
        let max_fdr = archive.iter().map(|r| r.fdr).fold(f64::NEG_INFINITY, f64::max);
        let min_fdr = archive.iter().map(|r| r.fdr).fold(f64::INFINITY, f64::min);
        let theta = state.config.theta;
        let need_up = 1.0 - max_fdr >= theta;
        let need_down = min_fdr >= theta;
        if !need_up && !need_down {
            return SizeUpdate::Done(StopReason::Covered);
        }
        let mut next = None;
        if need_up {
            next = grow(state);
        }
        if next.is_none() && need_down {
            next = shrink(state);
        }
        if next.is_none() {
            return SizeUpdate::Done(StopReason::Exhausted);
        }
        next
    };
    match next {
        Some(size) => {
            state.visited.insert(size);
            state.iterations += 1;
            SizeUpdate::Next(size)
        }
        None => SizeUpdate::Done(StopReason::Exhausted),
    }
}

fn grow(state: &SamplerState) -> Option<usize> {
    let top = *state.visited.last()?;
    let cap = state.dataset_size.max(state.min_size);
    let mut size = top;
    loop {
        let bigger = ((size as f64 * state.config.growth).ceil() as usize).max(size + 1).min(cap);
        if bigger <= size {
            return None;
        }
        if !state.visited.contains(&bigger) {
            return Some(bigger);
        }
        size = bigger;
    }
}

fn shrink(state: &SamplerState) -> Option<usize> {
    let bottom = *state.visited.first()?;
    let mut size = bottom;
    loop {
        let smaller = ((size as f64 * state.config.shrink).floor() as usize).min(size.saturating_sub(1)).max(state.min_size);
        if smaller >= size {
            return None;
        }
        if !state.visited.contains(&smaller) {
            return Some(smaller);
        }
        size = smaller;
    }
}

/// Draw `sn` subsets with replacement. Uniform mode draws `floor(size / |C|)`
/// inputs from every class.
pub fn sample_subsets(
    labels: &[usize],
    num_classes: usize,
    size: usize,
    sn: usize,
    mode: SubsetMode,
    seed_value: u64,
) -> Result<Vec<SubsetRef>> {
    let n = labels.len();
    let stream = match mode {
        SubsetMode::Random => "sampling.random",
        SubsetMode::Uniform => "sampling.uniform",
    };
    let mut rng = seed::stream_rng(seed_value, stream, size as u64);
    match mode {
        SubsetMode::Random => {
            if size == 0 || size > n {
                return Err(Error::InvalidArgument(format!("random subset size {size} outside 1..={n}")));
            }
            Ok((0..sn)
                .map(|_| SubsetRef { indices: (0..size).map(|_| rng.random_range(0..n)).collect(), mode })
                .collect())
        }
        SubsetMode::Uniform => {
            let per_class = if num_classes == 0 { 0 } else { size / num_classes };
            if per_class == 0 {
                return Err(Error::InvalidArgument(format!(
                    "uniform subset size {size} gives zero inputs per class ({num_classes} classes)"
                )));
            }
            let mut members = vec![Vec::new(); num_classes];
            for (i, &l) in labels.iter().enumerate() {
                if l >= num_classes {
                    return Err(Error::LabelOutOfRange { row: i, label: l, num_classes });
                }
                members[l].push(i);
            }
            if let Some(c) = members.iter().position(Vec::is_empty) {
                return Err(Error::InvalidArgument(format!("uniform sampling: class {c} has no inputs")));
            }
            Ok((0..sn)
                .map(|_| {
                    let indices = members
                        .iter()
                        .flat_map(|m| (0..per_class).map(|_| m[rng.random_range(0..m.len())]).collect::<Vec<_>>())
                        .collect();
                    SubsetRef { indices, mode }
                })
                .collect())
        }
    }
}

/// One sampled subset with its adequacy scores and FDR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub size: usize,
    pub sample: usize,
    pub mode: SubsetMode,
    pub indices: Vec<usize>,
    pub scores: BTreeMap<String, f64>,
    pub fdr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub records: Vec<ArchiveRecord>,
    /// Sizes in the order they were sampled.
    pub sizes: Vec<usize>,
    pub stop: StopReason,
}

impl Archive {
    pub fn to_jsonl(&self) -> Result<String> {
        records_to_jsonl(&self.records)
    }

    /// `(score, fdr)` pairs for one metric.
    pub fn points(&self, metric: &str) -> Result<Vec<(f64, f64)>> {
        archive_points(&self.records, metric)
    }
}

pub fn archive_points(records: &[ArchiveRecord], metric: &str) -> Result<Vec<(f64, f64)>> {
    records
        .iter()
        .map(|r| {
            r.scores
                .get(metric)
                .map(|&s| (s, r.fdr))
                .ok_or_else(|| Error::MissingArtifact(format!("archive record has no {metric} score")))
        })
        .collect()
}

pub fn records_to_jsonl(records: &[ArchiveRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_archive(text: &str) -> Result<Vec<ArchiveRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse(format!("archive line {}: {e}", i + 1))))
        .collect()
}

pub fn load_archive(path: &Path) -> Result<Vec<ArchiveRecord>> {
    parse_archive(&io::read_text(path)?).map_err(|e| e.context(path.display().to_string()))
}

/// Run the sampling loop until the size update reports done.
pub fn build_archive<F>(
    labels: &[usize],
    num_classes: usize,
    scorers: &[&dyn AdequacyScorer],
    fdr_fn: F,
    state: &mut SamplerState,
    seed_value: u64,
) -> Result<Archive>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if scorers.is_empty() {
        return Err(Error::InvalidArgument("build_archive needs at least one scorer".into()));
    }
    if let Some(s) = scorers.iter().find(|s| s.pool_size() != labels.len()) {
        return Err(Error::Shape(format!("{} scorer covers {} inputs, dataset has {}", s.metric(), s.pool_size(), labels.len())));
    }
    let mut records: Vec<ArchiveRecord> = Vec::new();
    let mut sizes = Vec::new();
    let stop = loop {
        let size = match update_sampling_size(&records, state) {
            SizeUpdate::Next(size) => size,
            SizeUpdate::Done(reason) => break reason,
        };
        sizes.push(size);
        let subsets = sample_subsets(labels, num_classes, size, state.config.sn, state.config.mode, seed_value)?;
        let batch: Vec<ArchiveRecord> = subsets
            .into_par_iter()
            .enumerate()
            .map(|(sample, subset)| {
                let mut scores = BTreeMap::new();
                for s in scorers {
                    let v = s
                        .score(&subset.indices)
                        .map_err(|e| e.context(format!("scoring {} on subset {sample} of size {size}", s.metric())))?;
                    scores.insert(s.metric().as_str().to_string(), v);
                }
                let fdr = fdr_fn(&subset.indices).map_err(|e| e.context(format!("fdr of subset {sample} of size {size}")))?;
                Ok(ArchiveRecord { size, sample, mode: subset.mode, indices: subset.indices, scores, fdr })
            })
            .collect::<Result<_>>()?;
        records.extend(batch);
    };
    Ok(Archive { records, sizes, stop })
}
