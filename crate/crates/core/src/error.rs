use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// Variants fall into two broad classes that callers (notably the CLI) map to
/// different exit codes: input/domain problems and numerical failures. See
/// [`Error::is_numeric`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ordering error on line {line}: week {week} does not follow {previous}")]
    Ordering {
        line: usize,
        week: String,
        previous: String,
    },

    #[error("missing weeks between {after} and {before}")]
    Gap { after: String, before: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("fitting error: {0}")]
    Fitting(String),

    #[error("optimization error: {message} (evaluations: {evaluations}, best objective: {best})")]
    Optimization {
        message: String,
        evaluations: usize,
        best: f64,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of numerical machinery (quadrature, optimizers,
    /// iterative calibrations) as opposed to bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Calibration(_)
                | Error::Fitting(_)
                | Error::Optimization { .. }
                | Error::Numeric(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
