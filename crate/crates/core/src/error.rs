use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One grid cell of the density-clustering search that produced no usable labeling.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CellDiagnostic {
    pub eps: f64,
    pub min_pts: usize,
    pub clusters: usize,
    pub noise: usize,
}

impl std::fmt::Display for CellDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "eps={:.6} min_pts={}: {} clusters, {} noise",
            self.eps, self.min_pts, self.clusters, self.noise
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: expected width {expected}, found {found}")]
    DimensionMismatch { layer: usize, expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("label {label} at row {row} is outside [0, {num_classes})")]
    LabelOutOfRange { row: usize, label: usize, num_classes: usize },

    #[error("structural mutation not applicable: {0}")]
    Structural(String),

    #[error("mutation operator {0} was given an empty target set")]
    EmptyTargets(String),

    #[error("empty mutant pool: every generated mutant was filtered out")]
    EmptyPool,

    #[error("index {index} out of bounds for {len} inputs")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no usable training traces")]
    NoTrainingTraces,

    #[error("no trace dimension survives the variance filter")]
    NoRetainedDimensions,

    #[error("clustering failed: no grid cell produced at least two clusters ({})", fmt_cells(.0))]
    Clustering(Vec<CellDiagnostic>),

    #[error("need at least {need} points, have {have}")]
    InsufficientPoints { need: usize, have: usize },

    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),

    #[error("adequacy score {0} outside [0, 1]")]
    OutOfDomain(f64),

    #[error("zero variance in ranks")]
    ZeroRankVariance,

    #[error("through-origin slope undefined: all predictions are zero")]
    SlopeUndefined,

    #[error("no detectable fault clusters in the input pool")]
    NoDetectableClusters,

    #[error("zero FDR variance in the archive; regression is undefined")]
    FlatArchive,

    #[error("digest mismatch for {what}: expected {expected}, found {found}")]
    DigestMismatch { what: String, expected: String, found: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("{context}: {source}")]
    Context { context: String, #[source] source: Box<Error> },

    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, #[source] source: std::io::Error },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

fn fmt_cells(cells: &[CellDiagnostic]) -> String {
    cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Shape(_) => "shape",
            Error::InvalidModel(_) => "invalid_model",
            Error::NonFinite(_) => "non_finite",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::Structural(_) => "structural",
            Error::EmptyTargets(_) => "empty_targets",
            Error::EmptyPool => "empty_pool",
            Error::IndexOutOfBounds { .. } => "index_out_of_bounds",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NoTrainingTraces => "no_training_traces",
            Error::NoRetainedDimensions => "no_retained_dimensions",
            Error::Clustering(_) => "clustering",
            Error::InsufficientPoints { .. } => "insufficient_points",
            Error::DegenerateDesign(_) => "degenerate_design",
            Error::OutOfDomain(_) => "out_of_domain",
            Error::ZeroRankVariance => "zero_rank_variance",
            Error::SlopeUndefined => "slope_undefined",
            Error::NoDetectableClusters => "no_detectable_clusters",
            Error::FlatArchive => "flat_archive",
            Error::DigestMismatch { .. } => "digest_mismatch",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Context { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Parse(_) => "parse",
        }
    }
}
