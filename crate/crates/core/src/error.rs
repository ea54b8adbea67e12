use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch between {left} and {right}: {detail}")]
    DimensionMismatch {
        left: &'static str,
        right: &'static str,
        detail: String,
    },

    #[error("{what} is not stable (spectral radius {radius:.12})")]
    Unstable { what: &'static str, radius: f64 },

    #[error("horizon p = {p} requires more than {p} samples, dataset has {len}")]
    Horizon { p: usize, len: usize },

    #[error("only {rows} usable equations, at least {min_rows} required")]
    InsufficientData { rows: usize, min_rows: usize },

    #[error("Hankel blocks need alpha + beta <= p (alpha = {alpha}, beta = {beta}, p = {p})")]
    InsufficientHorizon { alpha: usize, beta: usize, p: usize },

    #[error("requested order {requested} but only {available} singular values are usable")]
    Order { requested: usize, available: usize },

    #[error("degenerate realization: {0}")]
    DegenerateRealization(String),

    #[error("frequency {hz} Hz lies on an eigenvalue of A")]
    SingularFrequency { hz: f64 },

    #[error("frequency {hz} Hz is outside [0, {nyquist}] Hz")]
    FrequencyOutOfRange { hz: f64, nyquist: f64 },

    #[error("frequency grids differ: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn dims(left: &'static str, right: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            left,
            right,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Innermost error beneath any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
