use std::path::PathBuf;

/// Errors produced anywhere in the normality-testing pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate sample: zero variance")]
    DegenerateSample,

    #[error("too few observations: need at least {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class too small: {0}")]
    ClassTooSmall(String),

    #[error("metric training diverged at iteration {iteration}")]
    TrainingDiverged { iteration: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("sample size mismatch: model was trained for n = {expected}, got {got} observations")]
    SampleSizeMismatch { expected: usize, got: usize },

    #[error("model format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("unsupported model version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown method `{name}`; valid methods: {valid}")]
    UnknownMethod { name: String, valid: String },

    #[error("malformed data at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("method {method} failed{}: {source}", case.map(|c| format!(" on case {c}")).unwrap_or_default())]
    Method {
        method: String,
        case: Option<u32>,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    /// The innermost error, looking through [`Error::Method`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Method { source, .. } => source.root(),
            other => other,
        }
    }
}
