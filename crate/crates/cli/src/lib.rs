//! Command-line driver: one TOML config, one root seed, artifacts under one
//! output directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fdrcast_core::assess::{
    self, AsConfig, AssessContext, BuildConfig, EvaluateConfig, FdrPredictor, IdcSettings, LabeledTest, LoadedPredictor,
    RegressionConfig, SurpriseSettings, TestInputs, TrainingInputs,
};
use fdrcast_core::faults::{ClusteringConfig, FaultClusters};
use fdrcast_core::io::{self, IndexedMatrix};
use fdrcast_core::mutation::{self, MutantPool, MutationConfig};
use fdrcast_core::sampling::{self, SamplerConfig};
use fdrcast_core::synth::{self, SynthConfig};
use fdrcast_core::{seed, Dataset64, Error, Matrix64, Metric, Model64};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config { .. } => "config",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        let mut body = serde_json::Map::new();
        body.insert("kind".into(), self.kind().into());
        body.insert("message".into(), self.to_string().into());
        if let CliError::Config { field, .. } = self {
            body.insert("field".into(), field.clone().into());
        }
        serde_json::json!({ "error": body }).to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(field: &str, message: impl ToString) -> CliError {
    CliError::Config { field: field.to_string(), message: message.to_string() }
}

/// Turn a core validation error of the form `"section.field: message"` into a
/// named-field config error.
fn validation(section: &str, e: Error) -> CliError {
    let text = match &e {
        Error::InvalidArgument(m) => m.clone(),
        other => return config_err(section, other),
    };
    match text.split_once(": ") {
        Some((field, message)) if !field.contains(' ') => {
            let field = if field.contains('.') { field.to_string() } else { format!("{section}.{field}") };
            config_err(&field, message)
        }
        _ => config_err(section, text),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub model: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Unlabeled test inputs (`input_index, c0, ...`); used by `assess` instead of `test`.
    pub test_inputs: Option<PathBuf>,
    pub train_features: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub train_traces: Option<PathBuf>,
    pub test_traces: Option<PathBuf>,
    pub train_latents: Option<PathBuf>,
    pub test_latents: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.model,
            &mut self.train,
            &mut self.test,
            &mut self.test_inputs,
            &mut self.train_features,
            &mut self.test_features,
            &mut self.train_traces,
            &mut self.test_traces,
            &mut self.train_latents,
            &mut self.test_latents,
            &mut self.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub metric: Option<Metric>,
    pub threads: Option<usize>,
    pub paths: Paths,
    pub mutation: MutationConfig,
    pub sampling: SamplerConfig,
    pub clustering: ClusteringConfig,
    pub regression: RegressionConfig,
    pub surprise: SurpriseSettings,
    pub idc: IdcSettings,
    pub evaluate: EvaluateConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Parse a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = io::read_text(path)?;
        let file = path.display().to_string();
        let de = toml::Deserializer::parse(&text).map_err(|e| config_err(&file, e.message()))?;
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let field = if field == "." { file.clone() } else { field };
            config_err(&field, e.inner().message())
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.paths.resolve(&base);
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        self.mutation.validate().map_err(|e| validation("mutation", e))?;
        self.sampling.validate().map_err(|e| validation("sampling", e))?;
        self.clustering.validate().map_err(|e| validation("clustering", e))?;
        self.regression.validate().map_err(|e| validation("regression", e))?;
        if self.surprise.n_buckets == 0 {
            return Err(config_err("surprise.n_buckets", "must be >= 1"));
        }
        if self.idc.bins_per_dim == 0 {
            return Err(config_err("idc.bins_per_dim", "must be >= 1"));
        }
        if self.evaluate.sn == 0 {
            return Err(config_err("evaluate.sn", "must be >= 1"));
        }
        Ok(())
    }
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse::<Metric>().map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "fdrcast", version, about = "Predict the fault detection rate of unlabeled test sets from adequacy scores")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Adequacy metric; overrides the config.
    #[arg(long, global = true, value_name = "NAME", value_parser = parse_metric)]
    metric: Option<Metric>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate and filter the mutant pool.
    Mutate,
    /// Predictions of the original model and every mutant.
    Outcomes,
    /// Cluster mispredicted training inputs into faults.
    Faults,
    /// Build the FDR predictor for one metric.
    Build,
    /// Predict the FDR of the test set.
    Assess,
    /// Compare predicted and actual FDR on sampled test subsets.
    Evaluate,
    /// Human-readable summary plus scatter data.
    Report,
    /// Write a synthetic subject (model and datasets).
    Synth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Mutate => "mutate",
            Command::Outcomes => "outcomes",
            Command::Faults => "faults",
            Command::Build => "build",
            Command::Assess => "assess",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
            Command::Synth => "synth",
        }
    }
}

/// Parse `argv`, run, print a JSON summary on stdout or a JSON error on stderr.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

/// Library entry point without printing; returns the written files.
pub fn run<I, S>(argv: I) -> CliResult<Vec<PathBuf>>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string().trim().to_string()))?;
    Ok(dispatch(&cli)?.written)
}

fn execute(cli: &Cli) -> CliResult<String> {
    let out = dispatch(cli)?;
    let written: Vec<String> = out.written.iter().map(|p| p.display().to_string()).collect();
    let mut summary = serde_json::json!({ "command": cli.command.name(), "written": written });
    if let Some(extra) = out.summary {
        summary["summary"] = extra;
    }
    Ok(summary.to_string())
}

struct Outcome {
    written: Vec<PathBuf>,
    summary: Option<serde_json::Value>,
}

fn dispatch(cli: &Cli) -> CliResult<Outcome> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.metric.is_some() {
        cfg.metric = cli.metric;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads.filter(|&n| n > 0) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| config_err("threads", e))?;
    let ctx = Ctx::new(cfg)?;
    pool.install(|| match cli.command {
        Command::Mutate => ctx.mutate(),
        Command::Outcomes => ctx.outcomes(),
        Command::Faults => ctx.faults(),
        Command::Build => ctx.build(),
        Command::Assess => ctx.assess(),
        Command::Evaluate => ctx.evaluate(),
        Command::Report => ctx.report(),
        Command::Synth => ctx.synth(),
    })
}

const POOL_DIR: &str = "pool";
const FAULTS_FILE: &str = "faults.json";
const MAP_FILE: &str = "misprediction_map.csv";

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    written: Vec<PathBuf>,
}

impl Ctx {
    fn new(cfg: RunConfig) -> CliResult<Self> {
        let out = cfg.paths.out_dir.clone().ok_or_else(|| config_err("paths.out_dir", "required"))?;
        Ok(Self { cfg, out, written: Vec::new() })
    }

    fn seed(&self) -> CliResult<u64> {
        self.cfg.seed.ok_or_else(|| config_err("seed", "a root seed is required (config `seed` or --seed)"))
    }

    fn metric(&self) -> CliResult<Metric> {
        self.cfg.metric.ok_or_else(|| config_err("metric", "required (config `metric` or --metric)"))
    }

    fn path(&self, field: &str, p: &Option<PathBuf>) -> CliResult<PathBuf> {
        let p = p.clone().ok_or_else(|| config_err(&format!("paths.{field}"), "required by this command"))?;
        if !p.exists() {
            return Err(config_err(&format!("paths.{field}"), format!("{} does not exist", p.display())));
        }
        Ok(p)
    }

    fn model(&self) -> CliResult<Model64> {
        Ok(io::load_model(&self.path("model", &self.cfg.paths.model)?)?)
    }

    fn train(&self) -> CliResult<Dataset64> {
        Ok(io::load_dataset(&self.path("train", &self.cfg.paths.train)?)?)
    }

    fn test(&self) -> CliResult<Dataset64> {
        Ok(io::load_dataset(&self.path("test", &self.cfg.paths.test)?)?)
    }

    /// Optional per-input matrix, reordered to dataset order.
    fn matrix(&self, field: &str, p: &Option<PathBuf>, n: usize) -> CliResult<Option<Matrix64>> {
        match p {
            None => Ok(None),
            Some(_) => {
                let m: IndexedMatrix = io::load_indexed_matrix(&self.path(field, p)?)?;
                Ok(Some(m.to_dense(n).map_err(|e| e.context(format!("paths.{field}")))?))
            }
        }
    }

    fn metric_dir(&self, metric: Metric) -> PathBuf {
        self.out.join(metric.as_str())
    }

    fn write_text(&mut self, rel: impl AsRef<Path>, text: &str) -> CliResult<()> {
        let rel = rel.as_ref();
        io::write_text(&self.out.join(rel), text)?;
        self.written.push(rel.to_path_buf());
        Ok(())
    }

    fn write_json<S: Serialize>(&mut self, rel: impl AsRef<Path>, value: &S) -> CliResult<()> {
        self.write_text(rel, &io::to_json_string(value)?)
    }

    fn done(self, summary: Option<serde_json::Value>) -> CliResult<Outcome> {
        Ok(Outcome { written: self.written, summary })
    }

    fn build_config(&self, metric: Metric) -> CliResult<BuildConfig> {
        Ok(BuildConfig {
            metric,
            seed: self.seed()?,
            mutation: self.cfg.mutation.clone(),
            sampling: self.cfg.sampling.clone(),
            clustering: self.cfg.clustering.clone(),
            regression: self.cfg.regression.clone(),
            surprise: self.cfg.surprise.clone(),
            idc: self.cfg.idc.clone(),
        })
    }

    fn save_pool(&mut self, pool: &MutantPool<f64>, report: &mutation::FilterReport) -> CliResult<()> {
        mutation::save_pool(&self.out.join(POOL_DIR), pool, report)?;
        self.written.push(PathBuf::from(POOL_DIR).join(mutation::MANIFEST_FILE));
        for m in &pool.mutants {
            self.written.push(PathBuf::from(POOL_DIR).join(mutation::mutant_file_name(m.id)));
        }
        Ok(())
    }

    fn existing_pool(&self) -> CliResult<Option<(MutantPool<f64>, mutation::FilterReport)>> {
        let dir = self.out.join(POOL_DIR);
        if dir.join(mutation::MANIFEST_FILE).exists() {
            Ok(Some(mutation::load_pool(&dir)?))
        } else {
            Ok(None)
        }
    }

    fn mutate(mut self) -> CliResult<Outcome> {
        let (model, train) = (self.model()?, self.train()?);
        let (pool, report) = mutation::generate_and_filter_pool(&model, &train, &self.cfg.mutation, self.seed()?)?;
        self.save_pool(&pool, &report)?;
        let summary = serde_json::json!({ "generated": report.mutants.len(), "retained": pool.len() });
        self.done(Some(summary))
    }

    fn outcomes(mut self) -> CliResult<Outcome> {
        let (model, train) = (self.model()?, self.train()?);
        let (pool, _) = mutation::load_pool::<f64>(&self.out.join(POOL_DIR))?;
        let m = mutation::precompute_outcomes(&model, &pool, &train.features, Some(&train.labels))?;
        self.write_text("outcomes_train.csv", &m.to_csv())?;
        if self.cfg.paths.test.is_some() {
            let test = self.test()?;
            let m = mutation::precompute_outcomes(&model, &pool, &test.features, None)?;
            self.write_text("outcomes_test.csv", &m.to_csv())?;
        }
        self.done(None)
    }

    fn train_features(&self, train: &Dataset64) -> CliResult<Matrix64> {
        Ok(self.matrix("train_features", &self.cfg.paths.train_features, train.len())?.unwrap_or_else(|| train.features.clone()))
    }

    fn write_faults(&mut self, faults: &FaultClusters<f64>, map: &[Option<usize>], mispredicted: &[bool]) -> CliResult<()> {
        self.write_json(FAULTS_FILE, faults)?;
        let mut csv = String::from("input_index,cluster_id\n");
        for (i, c) in map.iter().enumerate() {
            if mispredicted[i] {
                let _ = writeln!(csv, "{i},{}", c.map(|c| c.to_string()).unwrap_or_default());
            }
        }
        self.write_text(MAP_FILE, &csv)
    }

    fn faults(mut self) -> CliResult<Outcome> {
        let (model, train) = (self.model()?, self.train()?);
        let features = self.train_features(&train)?;
        let clustering = ClusteringConfig { seed: seed::derive(self.seed()?, "clustering", 0), ..self.cfg.clustering.clone() };
        let (faults, map) = assess::training_faults(&model, &train, &features, &clustering)?;
        let mispredicted = mispredicted_mask(&model, &train)?;
        self.write_faults(&faults, &map, &mispredicted)?;
        let summary = serde_json::json!({ "clusters": faults.len(), "silhouette": faults.silhouette });
        self.done(Some(summary))
    }

    fn build(mut self) -> CliResult<Outcome> {
        let metric = self.metric()?;
        let config = self.build_config(metric)?;
        let (model, train) = (self.model()?, self.train()?);
        let features = self.train_features(&train)?;
        let traces = self.matrix("train_traces", &self.cfg.paths.train_traces, train.len())?;
        let latents = self.matrix("train_latents", &self.cfg.paths.train_latents, train.len())?;
        let is_ms = metric.ms_variant().is_some();
        let existing = if is_ms { self.existing_pool()? } else { None };
        let reused = existing.is_some();
        let out = assess::build_prediction_model(
            TrainingInputs {
                model: &model,
                train: &train,
                features: &features,
                traces: traces.as_ref(),
                latents: latents.as_ref(),
                pool: existing,
            },
            &config,
        )?;
        if let (Some((pool, report)), false) = (&out.pool, reused) {
            self.save_pool(pool, report)?;
        }
        let mispredicted = mispredicted_mask(&model, &train)?;
        self.write_faults(&out.faults, &out.misprediction_map, &mispredicted)?;
        let dir = PathBuf::from(metric.as_str());
        self.write_text(dir.join(assess::ARCHIVE_FILE), &out.archive.to_jsonl()?)?;
        self.write_text(dir.join("cv_report.csv"), &out.predictor.cv.to_csv())?;
        self.write_json(dir.join(assess::PREDICTOR_FILE), &out.predictor)?;
        let summary = serde_json::json!({
            "family": out.predictor.fitted.family(),
            "records": out.archive.records.len(),
            "sizes": out.archive.sizes,
            "clusters": out.faults.len(),
        });
        self.done(Some(summary))
    }

    fn load_predictor(&self, metric: Metric) -> CliResult<LoadedPredictor> {
        let dir = self.metric_dir(metric);
        let predictor: FdrPredictor = io::read_json(&dir.join(assess::PREDICTOR_FILE))?;
        if predictor.metric != metric {
            return Err(config_err("metric", format!("predictor in {} was built for {}", dir.display(), predictor.metric)));
        }
        let records = sampling::load_archive(&dir.join(&predictor.archive))?;
        Ok(LoadedPredictor::new(predictor, &records)?)
    }

    /// Pool and train traces the stored configuration needs, digest-checked.
    fn assess_artifacts(&self, predictor: &FdrPredictor, model: &Model64) -> CliResult<(Option<(MutantPool<f64>, String)>, Option<Matrix64>)> {
        match &predictor.as_config {
            AsConfig::Mutation { pool_digest, .. } => {
                let dir = self.out.join(POOL_DIR);
                let found = mutation::pool_digest(&dir)?;
                if &found != pool_digest {
                    return Err(Error::DigestMismatch { what: "mutant pool".into(), expected: pool_digest.clone(), found }.into());
                }
                let (pool, _) = mutation::load_pool(&dir)?;
                Ok((Some((pool, found)), None))
            }
            AsConfig::Surprise { sc, .. } => {
                let train = self.train()?;
                let traces = match self.matrix("train_traces", &self.cfg.paths.train_traces, train.len())? {
                    Some(t) => t,
                    None => model.layer_traces(&train.features, sc.layer_index)?,
                };
                Ok((None, Some(traces)))
            }
            AsConfig::Latent { .. } => Ok((None, None)),
        }
    }

    fn assess(mut self) -> CliResult<Outcome> {
        let metric = self.metric()?;
        let loaded = self.load_predictor(metric)?;
        let model = self.model()?;
        let (pool, train_traces) = self.assess_artifacts(&loaded.predictor, &model)?;
        let inputs: Matrix64 = match &self.cfg.paths.test_inputs {
            Some(_) => io::load_indexed_matrix::<f64>(&self.path("test_inputs", &self.cfg.paths.test_inputs)?)?.values,
            // labels are dropped here; assessment never sees them
            None => self.test()?.features,
        };
        let n = inputs.rows();
        let traces = self.matrix("test_traces", &self.cfg.paths.test_traces, n)?;
        let latents = self.matrix("test_latents", &self.cfg.paths.test_latents, n)?;
        let ctx = AssessContext { model: &model, pool: pool.as_ref().map(|(p, d)| (p, d.clone())), train_traces: train_traces.as_ref() };
        let a = assess::assess_test_set(
            &loaded,
            &ctx,
            &TestInputs { inputs: &inputs, traces: traces.as_ref(), latents: latents.as_ref() },
        )?;
        self.write_json(PathBuf::from(metric.as_str()).join("assessment.json"), &a)?;
        self.done(Some(serde_json::to_value(a).map_err(Error::from)?))
    }

    fn evaluate(mut self) -> CliResult<Outcome> {
        let metric = self.metric()?;
        let loaded = self.load_predictor(metric)?;
        let model = self.model()?;
        let (pool, train_traces) = self.assess_artifacts(&loaded.predictor, &model)?;
        let faults: FaultClusters<f64> = io::read_json(&self.out.join(FAULTS_FILE))?;
        let test = self.test()?;
        let n = test.len();
        let features = self.matrix("test_features", &self.cfg.paths.test_features, n)?.unwrap_or_else(|| test.features.clone());
        let traces = self.matrix("test_traces", &self.cfg.paths.test_traces, n)?;
        let latents = self.matrix("test_latents", &self.cfg.paths.test_latents, n)?;
        let ctx = AssessContext { model: &model, pool: pool.as_ref().map(|(p, d)| (p, d.clone())), train_traces: train_traces.as_ref() };
        let report = assess::evaluate_predictor(
            &loaded,
            &ctx,
            &faults,
            &LabeledTest { data: &test, features: &features, traces: traces.as_ref(), latents: latents.as_ref() },
            &self.cfg.evaluate,
            self.seed()?,
        )?;
        let dir = PathBuf::from(metric.as_str());
        self.write_text(dir.join("evaluation.csv"), &report.rows_csv())?;
        self.write_json(dir.join("evaluation_summary.json"), &report.summary)?;
        self.done(Some(serde_json::to_value(&report.summary).map_err(Error::from)?))
    }

    fn report(mut self) -> CliResult<Outcome> {
        let metric = self.metric()?;
        let dir = self.metric_dir(metric);
        let predictor: FdrPredictor = io::read_json(&dir.join(assess::PREDICTOR_FILE))?;
        let records = sampling::load_archive(&dir.join(&predictor.archive))?;
        let points = sampling::archive_points(&records, metric.as_str())?;
        let rel = PathBuf::from(metric.as_str());

        let mut scatter = String::from("size,as,fdr,fitted\n");
        for (r, &(x, y)) in records.iter().zip(&points) {
            let _ = writeln!(
                scatter,
                "{},{},{},{}",
                r.size,
                io::fmt_f64(x),
                io::fmt_f64(y),
                io::fmt_f64(predictor.fitted.predict_clamped(x))
            );
        }
        self.write_text(rel.join("scatter_archive.csv"), &scatter)?;

        let mut text = String::new();
        let _ = writeln!(text, "metric: {metric}");
        let _ = writeln!(text, "selected family: {}", predictor.fitted.family());
        let _ = writeln!(text, "interval: {:?} at level {}", predictor.pi.method, predictor.pi.level);
        let _ = writeln!(
            text,
            "archive: {} records, sizes {:?}, stop {:?}",
            records.len(),
            predictor.archive_sizes,
            predictor.archive_stop
        );
        let fdr_lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let fdr_hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(text, "archive FDR range: [{fdr_lo:.4}, {fdr_hi:.4}]");
        let _ = writeln!(text, "archive AS range: [{:.4}, {:.4}]", predictor.as_range[0], predictor.as_range[1]);
        let _ = writeln!(text, "\ncross-validation (k = {}, n = {}):", predictor.cv.k, predictor.cv.n);
        let _ = writeln!(text, "  {:<12} {:>8} {:>8} {:>8}", "family", "R2", "MMRE", "RMSE");
        for f in &predictor.cv.families {
            let _ = writeln!(
                text,
                "  {:<12} {:>8.4} {:>8.4} {:>8.4}{}",
                f.family.as_str(),
                f.mean_r2,
                f.mean_mmre,
                f.mean_rmse,
                f.error.as_ref().map(|e| format!("  ({e})")).unwrap_or_default()
            );
        }
        let eval_csv = dir.join("evaluation.csv");
        let summary_path = dir.join("evaluation_summary.json");
        if eval_csv.exists() && summary_path.exists() {
            let summary: assess::EvaluationSummary = io::read_json(&summary_path)?;
            let _ = writeln!(text, "\nevaluation over {} test subsets ({} detectable clusters):", summary.subsets, summary.detectable_clusters);
            let _ = writeln!(text, "  through-origin slope {:.4}", summary.through_origin_slope);
            let _ = writeln!(text, "  R2 {:.4}", summary.r2);
            let _ = writeln!(text, "  RMSE {:.4}", summary.rmse);
            let _ = writeln!(text, "  Spearman {:.4}", summary.spearman);
            let _ = writeln!(text, "  PI coverage {:.4}", summary.pi_coverage);
            let mut scatter = String::from("fdr_hat,actual_fdr\n");
            let rows = io::read_text(&eval_csv)?;
            for line in rows.lines().skip(1) {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() == 7 {
                    let _ = writeln!(scatter, "{},{}", cols[3], cols[6]);
                }
            }
            self.write_text(rel.join("scatter_evaluation.csv"), &scatter)?;
        }
        self.write_text(rel.join("report.txt"), &text)?;
        self.done(None)
    }

    fn synth(mut self) -> CliResult<Outcome> {
        let mut config = self.cfg.synth.clone();
        if let Some(s) = self.cfg.seed {
            config.seed = s;
        }
        let subject = synth::generate(&config)?;
        self.write_json("model.json", &io::ModelFile::from(&subject.model))?;
        self.write_text("train.csv", &io::dataset_to_csv(&subject.train))?;
        self.write_text("test.csv", &io::dataset_to_csv(&subject.test))?;
        for (name, clusters) in [("planted_train.csv", &subject.train_cluster), ("planted_test.csv", &subject.test_cluster)] {
            let mut csv = String::from("input_index,cluster_id\n");
            for (i, c) in clusters.iter().enumerate() {
                if let Some(c) = c {
                    let _ = writeln!(csv, "{i},{c}");
                }
            }
            self.write_text(name, &csv)?;
        }
        let summary = serde_json::json!({ "clusters": subject.centres.len(), "train": subject.train.len(), "test": subject.test.len() });
        self.done(Some(summary))
    }
}

fn mispredicted_mask(model: &Model64, data: &Dataset64) -> CliResult<Vec<bool>> {
    let pred = model.predict_all(&data.features)?;
    Ok(pred.iter().zip(&data.labels).map(|(p, l)| p != l).collect())
}
