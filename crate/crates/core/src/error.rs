use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Structural(String),

    #[error("SVD did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    Convergence { sweeps: usize, off_norm: f64 },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular recurrence: denominator {denominator:e} vanishes")]
    SingularRecurrence { denominator: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training diverged at step {step} (loss {loss:e})")]
    Divergence { step: usize, loss: f64 },

    #[error("learning-rate sweep failed: every run diverged")]
    SweepFailure,

    #[error("degenerate feature column {column}: {reason}")]
    DegenerateFeature { column: usize, reason: &'static str },

    #[error("sampling failed: {degenerate} of {total} draws were degenerate")]
    Sampling { degenerate: usize, total: usize },

    #[error("degenerate sample range: all samples equal {value}")]
    DegenerateRange { value: f64 },

    #[error("unsupported composition: {0}")]
    UnsupportedComposition(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("IDX format error in {file}: unexpected magic number 0x{observed:08x}")]
    Format { file: PathBuf, observed: u32 },

    #[error("IDX file {file} truncated: expected {expected} bytes, found {found}")]
    Length {
        file: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("inconsistent dataset: {0}")]
    Consistency(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("in experiment `{experiment}`: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::Length { .. } | Error::Consistency(_) => 4,
            Error::Experiment { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
