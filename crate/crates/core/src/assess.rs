//! Build a per-model FDR predictor from the training set, assess unlabeled
//! test sets with it, and evaluate it against labeled test data.

use serde::{Deserialize, Serialize};

use crate::adequacy::{
    AdequacyScorer, IdcScorer, LatentConfig, Metric, MutationScorer, SaKind, ScConfig, SubsetMode, SurpriseCoverageScorer,
    SurpriseModel,
};
use crate::error::{Error, Result};
use crate::faults::{estimate_faults, ClusteringConfig, FaultClusters, FdrCounter};
use crate::io::{self, IndexedMatrix, ModelFile};
use crate::linalg::Matrix;
use crate::model::{LabeledDataset, Model};
use crate::mutation::{self, FilterReport, MutantPool, MutationConfig, OutcomeMatrix};
use crate::regression::{
    self, cross_validate, fit_regression, select_best, BootstrapConfig, CvReport, Family, Fitted, IntervalEngine,
    IntervalMethod, PredictionInterval, ResidualStats, ScoreMetrics, TreeParams,
};
use crate::sampling::{self, Archive, ArchiveRecord, SamplerConfig, SamplerState, StopReason};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub k: usize,
    pub bootstrap_resamples: usize,
    pub level: f64,
    pub tree: TreeParams,
    pub families: Vec<Family>,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self { k: 5, bootstrap_resamples: 1000, level: 0.95, tree: TreeParams::default(), families: Family::ALL.to_vec() }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidArgument(format!("regression.{field}: {msg}")));
        if self.k < 2 {
            return bad("k", format!("must be >= 2, got {}", self.k));
        }
        if self.bootstrap_resamples == 0 {
            return bad("bootstrap_resamples", "must be >= 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level", format!("must be in (0, 1), got {}", self.level));
        }
        if self.families.is_empty() {
            return bad("families", "must name at least one family".into());
        }
        if self.tree.max_depth == 0 || self.tree.min_leaf == 0 {
            return bad("tree", "max_depth and min_leaf must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurpriseSettings {
    /// Trace layer; defaults to the deepest hidden layer.
    pub layer: Option<usize>,
    pub n_buckets: usize,
    pub leave_one_out: bool,
}

impl Default for SurpriseSettings {
    fn default() -> Self {
        Self { layer: None, n_buckets: 1000, leave_one_out: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdcSettings {
    pub bins_per_dim: usize,
}

impl Default for IdcSettings {
    fn default() -> Self {
        Self { bins_per_dim: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub metric: Metric,
    pub seed: u64,
    #[serde(default)]
    pub mutation: MutationConfig,
    #[serde(default)]
    pub sampling: SamplerConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub regression: RegressionConfig,
    #[serde(default)]
    pub surprise: SurpriseSettings,
    #[serde(default)]
    pub idc: IdcSettings,
}

impl BuildConfig {
    pub fn new(metric: Metric, seed: u64) -> Self {
        Self {
            metric,
            seed,
            mutation: MutationConfig::default(),
            sampling: SamplerConfig::default(),
            clustering: ClusteringConfig::default(),
            regression: RegressionConfig::default(),
            surprise: SurpriseSettings::default(),
            idc: IdcSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mutation.validate()?;
        self.sampling.validate()?;
        self.clustering.validate()?;
        self.regression.validate()?;
        if self.surprise.n_buckets == 0 {
            return Err(Error::InvalidArgument("surprise.n_buckets: must be >= 1".into()));
        }
        if self.idc.bins_per_dim == 0 {
            return Err(Error::InvalidArgument("idc.bins_per_dim: must be >= 1".into()));
        }
        Ok(())
    }
}

/// Adequacy configuration frozen at build time. Its digest guards assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AsConfig {
    Mutation { num_classes: usize, n_mutants: usize, pool_digest: String },
    Surprise { sc: ScConfig, leave_one_out: bool, train_traces_digest: String },
    Latent { latent: LatentConfig },
}

impl AsConfig {
    pub fn digest(&self) -> Result<String> {
        Ok(io::sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSeeds {
    pub root: u64,
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiSpec {
    pub method: IntervalMethod,
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_seeds: Option<BootstrapSeeds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_stats: Option<ResidualStats>,
}

/// Persisted predictor for one model and one adequacy metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrPredictor {
    pub metric: Metric,
    #[serde(flatten)]
    pub fitted: Fitted<f64>,
    pub training_points_digest: String,
    pub pi: PiSpec,
    pub tree: TreeParams,
    pub model_digest: String,
    pub as_config: AsConfig,
    pub as_digest: String,
    /// Archive file name, relative to the predictor.
    pub archive: String,
    pub archive_sizes: Vec<usize>,
    pub archive_mode: SubsetMode,
    pub archive_stop: StopReason,
    /// Observed `[min, max]` adequacy score in the archive.
    pub as_range: [f64; 2],
    pub cv: CvReport,
}

pub const PREDICTOR_FILE: &str = "predictor.json";
pub const ARCHIVE_FILE: &str = "archive.jsonl";

pub fn model_digest<T: Scalar>(model: &Model<T>) -> Result<String> {
    Ok(io::sha256_hex(io::to_json_string(&ModelFile::from(model))?.as_bytes()))
}

pub fn matrix_digest<T: Scalar>(m: &Matrix<T>) -> String {
    io::sha256_hex(io::indexed_matrix_to_csv(&IndexedMatrix::dense(m.clone())).as_bytes())
}

pub fn points_digest(points: &[(f64, f64)]) -> Result<String> {
    let pairs: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
    Ok(io::sha256_hex(serde_json::to_string(&pairs)?.as_bytes()))
}

/// Training-side artifacts. Missing traces are computed from the model.
pub struct TrainingInputs<'a, T> {
    pub model: &'a Model<T>,
    pub train: &'a LabeledDataset<T>,
    /// Feature vectors for fault clustering, one row per training input.
    pub features: &'a Matrix<T>,
    pub traces: Option<&'a Matrix<T>>,
    pub latents: Option<&'a Matrix<T>>,
    /// Previously generated mutant pool; generated from the config when absent.
    pub pool: Option<(MutantPool<T>, FilterReport)>,
}

/// Everything a build produces, kept in memory.
pub struct BuildOutput<T> {
    pub predictor: FdrPredictor,
    pub archive: Archive,
    pub faults: FaultClusters<T>,
    pub misprediction_map: Vec<Option<usize>>,
    pub pool: Option<(MutantPool<T>, FilterReport)>,
    pub outcomes: Option<OutcomeMatrix>,
}

pub fn trace_layer<T: Scalar>(model: &Model<T>, settings: &SurpriseSettings) -> Result<usize> {
    let layer = settings.layer.unwrap_or_else(|| model.deepest_hidden_layer());
    if model.layers.len() < 2 && settings.layer.is_none() {
        return Err(Error::InvalidArgument("surprise metrics need a hidden layer".into()));
    }
    if layer >= model.layers.len() {
        return Err(Error::InvalidArgument(format!("surprise.layer {layer} but model has {} layers", model.layers.len())));
    }
    Ok(layer)
}

fn traces_or_compute<T: Scalar>(model: &Model<T>, inputs: &Matrix<T>, given: Option<&Matrix<T>>, layer: usize) -> Result<Matrix<T>> {
    match given {
        Some(t) if t.rows() != inputs.rows() => {
            Err(Error::Shape(format!("{} trace rows for {} inputs", t.rows(), inputs.rows())))
        }
        Some(t) => Ok(t.clone()),
        None => model.layer_traces(inputs, layer),
    }
}

/// Mispredicted training inputs clustered into faults, plus the input→cluster map.
pub fn training_faults<T: Scalar>(
    model: &Model<T>,
    train: &LabeledDataset<T>,
    features: &Matrix<T>,
    config: &ClusteringConfig,
) -> Result<(FaultClusters<T>, Vec<Option<usize>>)> {
    if features.rows() != train.len() {
        return Err(Error::Shape(format!("{} feature rows for {} training inputs", features.rows(), train.len())));
    }
    let pred = model.predict_all(&train.features)?;
    let ids: Vec<usize> = (0..train.len()).filter(|&i| pred[i] != train.labels[i]).collect();
    let faults = estimate_faults(&features.select_rows(&ids)?, &ids, config)?;
    let map = faults.training_map(train.len())?;
    Ok((faults, map))
}

/// Build: adequacy setup, fault estimation, archive, CV, selection.
pub fn build_prediction_model<T: Scalar>(inputs: TrainingInputs<'_, T>, config: &BuildConfig) -> Result<BuildOutput<T>> {
    config.validate()?;
    let TrainingInputs { model, train, features, traces, latents, pool } = inputs;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    train.check_labels(model.num_classes)?;
    let root = config.seed;
    let metric = config.metric;

    let clustering = ClusteringConfig { seed: seed::derive(root, "clustering", 0), ..config.clustering.clone() };
    let (faults, map) = training_faults(model, train, features, &clustering).map_err(|e| e.context("fault estimation"))?;
    let counter = FdrCounter::new(map.clone(), faults.len(), false)?;

    let mut pool_out = None;
    let mut outcomes_out = None;
    let (scorer, as_config): (Box<dyn AdequacyScorer>, AsConfig) = match metric {
        Metric::MsStandard | Metric::MsDeepmutation | Metric::MsKs => {
            let (pool, report) = match pool {
                Some(p) => p,
                None => mutation::generate_and_filter_pool(model, train, &config.mutation, root)?,
            };
            let outcomes = mutation::precompute_outcomes(model, &pool, &train.features, Some(&train.labels))?;
            let scorer = MutationScorer::new(&outcomes, metric, model.num_classes)?;
            let as_config = AsConfig::Mutation {
                num_classes: model.num_classes,
                n_mutants: pool.len(),
                pool_digest: mutation::pool_digest_of(&pool, &report)?,
            };
            pool_out = Some((pool, report));
            outcomes_out = Some(outcomes);
            (Box::new(scorer), as_config)
        }
        Metric::Dsc | Metric::Lsc => {
            let kind = if metric == Metric::Dsc { SaKind::Dsa } else { SaKind::Lsa };
            let layer = trace_layer(model, &config.surprise)?;
            let train_traces = traces_or_compute(model, &train.features, traces, layer)?;
            let sa = SurpriseModel::fit(&train_traces, kind)?.score_all(&train_traces, config.surprise.leave_one_out)?;
            let sc = ScConfig::from_training(kind, layer, config.surprise.n_buckets, &sa)?;
            let scorer = SurpriseCoverageScorer::new(&sa, &sc)?;
            let as_config = AsConfig::Surprise {
                sc,
                leave_one_out: config.surprise.leave_one_out,
                train_traces_digest: matrix_digest(&train_traces),
            };
            (Box::new(scorer), as_config)
        }
        Metric::Idc => {
            let latents = latents.ok_or_else(|| Error::MissingArtifact("idc needs training latents".into()))?;
            if latents.rows() != train.len() {
                return Err(Error::Shape(format!("{} latent rows for {} training inputs", latents.rows(), train.len())));
            }
            let latent = LatentConfig::from_training(latents, config.idc.bins_per_dim)?;
            let scorer = IdcScorer::new(latents, &latent)?;
            (Box::new(scorer), AsConfig::Latent { latent })
        }
    };

    let mut state = SamplerState::new(config.sampling.clone(), train.len(), model.num_classes)?;
    let archive = sampling::build_archive(
        &train.labels,
        model.num_classes,
        &[scorer.as_ref()],
        |idx| counter.fdr(idx),
        &mut state,
        seed::derive(root, "sampling", 0),
    )?;
    let points = archive.points(metric.as_str())?;
    let predictor = fit_predictor(&points, metric, &config.regression, root, model_digest(model)?, as_config, &archive)?;
    Ok(BuildOutput { predictor, archive, faults, misprediction_map: map, pool: pool_out, outcomes: outcomes_out })
}

/// Cross-validate, select, refit on all points, and attach interval data.
pub fn fit_predictor(
    points: &[(f64, f64)],
    metric: Metric,
    config: &RegressionConfig,
    root: u64,
    model_digest: String,
    as_config: AsConfig,
    archive: &Archive,
) -> Result<FdrPredictor> {
    let first = points.first().map(|p| p.1).ok_or(Error::FlatArchive)?;
    if points.iter().all(|p| p.1 == first) {
        return Err(Error::FlatArchive);
    }
    let cv = cross_validate(points, &config.families, config.k, seed::derive(root, "cv", 0), &config.tree)?;
    let family = select_best(&cv)?;
    let fitted = fit_regression(points, family, &config.tree)?;
    let pi = match family {
        Family::Tree => PiSpec {
            method: IntervalMethod::BootstrapPercentile,
            level: config.level,
            bootstrap_seeds: Some(BootstrapSeeds { root: seed::derive(root, "bootstrap", 0), resamples: config.bootstrap_resamples }),
            residual_stats: None,
        },
        _ => PiSpec {
            method: IntervalMethod::ParametricT,
            level: config.level,
            bootstrap_seeds: None,
            residual_stats: Some(ResidualStats::compute(&fitted, points)?),
        },
    };
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(FdrPredictor {
        metric,
        fitted,
        training_points_digest: points_digest(points)?,
        pi,
        tree: config.tree,
        model_digest,
        as_digest: as_config.digest()?,
        as_config,
        archive: ARCHIVE_FILE.to_string(),
        archive_sizes: archive.sizes.clone(),
        archive_mode: archive.records.first().map_or(SubsetMode::Random, |r| r.mode),
        archive_stop: archive.stop,
        as_range: [lo, hi],
        cv,
    })
}

/// Predictor with its interval machinery ready.
pub struct LoadedPredictor {
    pub predictor: FdrPredictor,
    engine: IntervalEngine<f64>,
}

impl LoadedPredictor {
    /// Check the archive against the stored digest and prepare intervals.
    pub fn new(predictor: FdrPredictor, records: &[ArchiveRecord]) -> Result<Self> {
        let found = predictor.as_config.digest()?;
        if found != predictor.as_digest {
            return Err(Error::DigestMismatch { what: "adequacy configuration".into(), expected: predictor.as_digest.clone(), found });
        }
        let points = sampling::archive_points(records, predictor.metric.as_str())?;
        let found = points_digest(&points)?;
        if found != predictor.training_points_digest {
            return Err(Error::DigestMismatch {
                what: "training archive".into(),
                expected: predictor.training_points_digest.clone(),
                found,
            });
        }
        let engine = match (&predictor.fitted, &predictor.pi) {
            (Fitted::Tree(_), PiSpec { bootstrap_seeds: Some(b), .. }) => IntervalEngine::prepare(
                &predictor.fitted,
                &points,
                &predictor.tree,
                &BootstrapConfig { resamples: b.resamples, seed: b.root },
            )?,
            (Fitted::Tree(_), _) => return Err(Error::Parse("tree predictor without bootstrap_seeds".into())),
            (_, PiSpec { residual_stats: Some(r), .. }) => IntervalEngine::Parametric(r.clone()),
            _ => return Err(Error::Parse("parametric predictor without residual_stats".into())),
        };
        Ok(Self { predictor, engine })
    }

    pub fn interval(&self, as_value: f64) -> Result<PredictionInterval> {
        self.engine.interval(&self.predictor.fitted, as_value, self.predictor.pi.level)
    }

    pub fn assess_value(&self, as_value: f64) -> Result<Assessment> {
        let pi = self.interval(as_value)?;
        let [lo, hi] = self.predictor.as_range;
        Ok(Assessment {
            metric: self.predictor.metric,
            as_value,
            fdr_hat: pi.center,
            pi_low: pi.low.min(pi.center),
            pi_high: pi.high.max(pi.center),
            level: pi.level,
            method: pi.method,
            extrapolated: as_value < lo || as_value > hi,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub metric: Metric,
    #[serde(rename = "as")]
    pub as_value: f64,
    pub fdr_hat: f64,
    pub pi_low: f64,
    pub pi_high: f64,
    pub level: f64,
    pub method: IntervalMethod,
    /// The score lies outside the archive's observed range.
    pub extrapolated: bool,
}

/// What the stored adequacy configuration needs at assessment time.
pub struct AssessContext<'a, T> {
    pub model: &'a Model<T>,
    /// Mutant pool and its digest as found now (mutation metrics).
    pub pool: Option<(&'a MutantPool<T>, String)>,
    /// Training traces as found now (surprise metrics).
    pub train_traces: Option<&'a Matrix<T>>,
}

/// Unlabeled test-side artifacts. Missing traces are computed from the model.
pub struct TestInputs<'a, T> {
    pub inputs: &'a Matrix<T>,
    pub traces: Option<&'a Matrix<T>>,
    pub latents: Option<&'a Matrix<T>>,
}

/// Scorer over a test pool under the stored configuration, after digest checks.
pub fn test_scorer<T: Scalar>(
    predictor: &FdrPredictor,
    ctx: &AssessContext<'_, T>,
    test: &TestInputs<'_, T>,
) -> Result<Box<dyn AdequacyScorer>> {
    let found = model_digest(ctx.model)?;
    if found != predictor.model_digest {
        return Err(Error::DigestMismatch { what: "model".into(), expected: predictor.model_digest.clone(), found });
    }
    if test.inputs.rows() == 0 {
        return Err(Error::EmptyDataset("test set"));
    }
    Ok(match &predictor.as_config {
        AsConfig::Mutation { num_classes, n_mutants, pool_digest } => {
            let (pool, found) = ctx.pool.as_ref().ok_or_else(|| Error::MissingArtifact("mutant pool".into()))?;
            if found != pool_digest {
                return Err(Error::DigestMismatch { what: "mutant pool".into(), expected: pool_digest.clone(), found: found.clone() });
            }
            if pool.len() != *n_mutants {
                return Err(Error::DigestMismatch {
                    what: "mutant count".into(),
                    expected: n_mutants.to_string(),
                    found: pool.len().to_string(),
                });
            }
            let outcomes = mutation::precompute_outcomes(ctx.model, pool, test.inputs, None)?;
            Box::new(MutationScorer::new(&outcomes, predictor.metric, *num_classes)?)
        }
        AsConfig::Surprise { sc, train_traces_digest, .. } => {
            let train_traces = ctx.train_traces.ok_or_else(|| Error::MissingArtifact("training traces".into()))?;
            let found = matrix_digest(train_traces);
            if &found != train_traces_digest {
                return Err(Error::DigestMismatch { what: "training traces".into(), expected: train_traces_digest.clone(), found });
            }
            let traces = traces_or_compute(ctx.model, test.inputs, test.traces, sc.layer_index)?;
            let sa = SurpriseModel::fit(train_traces, sc.sa_kind)?.score_all(&traces, false)?;
            Box::new(SurpriseCoverageScorer::new(&sa, sc)?)
        }
        AsConfig::Latent { latent } => {
            let latents = test.latents.ok_or_else(|| Error::MissingArtifact("idc needs test latents".into()))?;
            if latents.rows() != test.inputs.rows() {
                return Err(Error::Shape(format!("{} latent rows for {} test inputs", latents.rows(), test.inputs.rows())));
            }
            Box::new(IdcScorer::new(latents, latent)?)
        }
    })
}

/// Assess: score the whole test set and predict its FDR. Labels are never read.
pub fn assess_test_set<T: Scalar>(
    predictor: &LoadedPredictor,
    ctx: &AssessContext<'_, T>,
    test: &TestInputs<'_, T>,
) -> Result<Assessment> {
    let scorer = test_scorer(&predictor.predictor, ctx, test)?;
    let all: Vec<usize> = (0..test.inputs.rows()).collect();
    predictor.assess_value(scorer.score(&all)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub subset_id: usize,
    pub size: usize,
    #[serde(rename = "as")]
    pub as_value: f64,
    pub fdr_hat: f64,
    pub pi_low: f64,
    pub pi_high: f64,
    pub actual_fdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub metric: Metric,
    pub family: Family,
    pub subsets: usize,
    pub detectable_clusters: usize,
    pub through_origin_slope: f64,
    /// Squared correlation between predicted and actual FDR.
    pub r2: f64,
    pub rmse: f64,
    #[serde(with = "crate::io::nan_null")]
    pub spearman: f64,
    /// Fraction of subsets whose actual FDR lies inside the interval.
    pub pi_coverage: f64,
    pub metrics: ScoreMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<EvaluationRow>,
    pub summary: EvaluationSummary,
}

impl EvaluationReport {
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("subset_id,size,as,fdr_hat,pi_low,pi_high,actual_fdr\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.subset_id,
                r.size,
                io::fmt_f64(r.as_value),
                io::fmt_f64(r.fdr_hat),
                io::fmt_f64(r.pi_low),
                io::fmt_f64(r.pi_high),
                io::fmt_f64(r.actual_fdr)
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub sn: usize,
    /// Subset sizes; the archive's sizes (capped at the test size) when empty.
    pub sizes: Vec<usize>,
    /// Subset mode; the archive's mode when unset.
    pub mode: Option<SubsetMode>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { sn: 100, sizes: Vec::new(), mode: None }
    }
}

/// Labeled test side for evaluation.
pub struct LabeledTest<'a, T> {
    pub data: &'a LabeledDataset<T>,
    pub features: &'a Matrix<T>,
    pub traces: Option<&'a Matrix<T>>,
    pub latents: Option<&'a Matrix<T>>,
}

/// Predicted versus actual FDR over sampled test subsets. Actual FDR assigns
/// mispredicted test inputs to the training clusters and counts only clusters
/// the test pool can reach.
pub fn evaluate_predictor<T: Scalar>(
    predictor: &LoadedPredictor,
    ctx: &AssessContext<'_, T>,
    faults: &FaultClusters<T>,
    test: &LabeledTest<'_, T>,
    config: &EvaluateConfig,
    root: u64,
) -> Result<EvaluationReport> {
    let data = test.data;
    if data.is_empty() {
        return Err(Error::EmptyDataset("test set"));
    }
    if test.features.rows() != data.len() {
        return Err(Error::Shape(format!("{} feature rows for {} test inputs", test.features.rows(), data.len())));
    }
    let num_classes = ctx.model.num_classes;
    data.check_labels(num_classes)?;
    let pred = ctx.model.predict_all(&data.features)?;
    let mispredicted: Vec<usize> = (0..data.len()).filter(|&i| pred[i] != data.labels[i]).collect();
    let map = faults.assignment_map(data.len(), &mispredicted, &test.features.select_rows(&mispredicted)?)?;
    let counter = FdrCounter::new(map, faults.len(), true)?;

    let scorer = test_scorer(
        &predictor.predictor,
        ctx,
        &TestInputs { inputs: &data.features, traces: test.traces, latents: test.latents },
    )?;
    let mut sizes: Vec<usize> = if config.sizes.is_empty() {
        predictor.predictor.archive_sizes.iter().map(|&s| s.min(data.len())).collect()
    } else {
        config.sizes.clone()
    };
    sizes.sort_unstable();
    sizes.dedup();

    let mode = config.mode.unwrap_or(predictor.predictor.archive_mode);
    let eval_seed = seed::derive(root, "evaluate", 0);
    let mut rows = Vec::new();
    for &size in &sizes {
        for subset in sampling::sample_subsets(&data.labels, num_classes, size, config.sn, mode, eval_seed)? {
            let a = predictor.assess_value(scorer.score(&subset.indices)?)?;
            rows.push(EvaluationRow {
                subset_id: rows.len(),
                size,
                as_value: a.as_value,
                fdr_hat: a.fdr_hat,
                pi_low: a.pi_low,
                pi_high: a.pi_high,
                actual_fdr: counter.fdr(&subset.indices)?,
            });
        }
    }
    let actual: Vec<f64> = rows.iter().map(|r| r.actual_fdr).collect();
    let predicted: Vec<f64> = rows.iter().map(|r| r.fdr_hat).collect();
    let metrics = regression::score_metrics(&actual, &predicted)?;
    let inside = rows.iter().filter(|r| r.pi_low <= r.actual_fdr && r.actual_fdr <= r.pi_high).count();
    let summary = EvaluationSummary {
        metric: predictor.predictor.metric,
        family: predictor.predictor.fitted.family(),
        subsets: rows.len(),
        detectable_clusters: counter.denominator(),
        through_origin_slope: metrics.through_origin_slope,
        r2: metrics.linear_r2,
        rmse: metrics.rmse,
        spearman: regression::spearman(&predicted, &actual).unwrap_or(f64::NAN),
        pi_coverage: inside as f64 / rows.len() as f64,
        metrics,
    };
    Ok(EvaluationReport { rows, summary })
}
