use std::path::PathBuf;

/// Errors raised by model handling, tree design, filtering and simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid clustering: {0}")]
    Clustering(String),

    #[error("mode {mode} out of range 1..={n_modes}")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("singular inner matrix at depth {depth}, node {node}, mode {mode}")]
    SingularInnerMatrix {
        depth: usize,
        node: usize,
        mode: usize,
    },

    #[error(
        "memory budget exceeded: tree needs {required} scalars but the cap is {budget} \
         (gain slots grow as N*(N_C^(s+1)-1)/(N_C-1))"
    )]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("unreachable path/mode: path {path} with mode {mode} has zero probability")]
    Unreachable { path: String, mode: usize },

    #[error("horizon exceeded: time {k} is beyond horizon {horizon}")]
    HorizonExceeded { k: usize, horizon: usize },

    #[error("gain policy has no entry for path {path}, mode {mode}")]
    MissingGain { path: String, mode: usize },

    #[error("zero probability: conditional covariance undefined for mode {mode}")]
    ZeroProbability { mode: usize },

    #[error("too many modes for partition enumeration: {0} (at most 12)")]
    TooManyModes(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("tree file: {0}")]
    TreeFormat(String),

    #[error("model fails validation: {0}")]
    InvalidModel(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error kind, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Clustering(_) => "clustering",
            Error::ModeOutOfRange { .. } => "mode-range",
            Error::Parse { .. } => "parse",
            Error::SingularInnerMatrix { .. } => "singular",
            Error::BudgetExceeded { .. } => "budget",
            Error::Unreachable { .. } => "unreachable",
            Error::HorizonExceeded { .. } => "horizon",
            Error::MissingGain { .. } => "missing-gain",
            Error::ZeroProbability { .. } => "zero-probability",
            Error::TooManyModes(_) => "too-many-modes",
            Error::InvalidArgument(_) => "argument",
            Error::TreeFormat(_) => "tree-format",
            Error::InvalidModel(_) => "invalid-model",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
