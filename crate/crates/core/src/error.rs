use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants are grouped by the process exit code the
/// CLI maps them to: configuration problems (2), data/file problems (3), and
/// numerical/algorithmic failures (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read `{path}`: {source}")]
    FileRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write `{path}`: {source}")]
    FileWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format in `{path}`: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("corrupt image `{path}`: {detail}")]
    CorruptImage { path: PathBuf, detail: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("patch size {patch} does not divide image {axis} {size}")]
    TileMismatch {
        axis: &'static str,
        size: u32,
        patch: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix not symmetric (max |a_ij - a_ji| = {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("{context}: no convergence after {iterations} iterations (residual optimality gap {gap:.3e})")]
    NoConvergence {
        context: &'static str,
        iterations: usize,
        /// Worst first-order optimality violation at the last iterate.
        gap: f64,
        /// Last iterate, so callers can inspect or salvage it.
        last_iterate: Vec<f64>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 0 is success, 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::FileRead { .. }
            | Error::FileWrite { .. }
            | Error::UnsupportedFormat { .. }
            | Error::CorruptImage { .. }
            | Error::Data(_) => 3,
            Error::DimensionMismatch { .. }
            | Error::TileMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::NotSymmetric { .. }
            | Error::NoConvergence { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Data("x".into()).exit_code(), 3);
        assert_eq!(
            Error::FileRead {
                path: "p".into(),
                source: std::io::Error::other("nope"),
            }
            .exit_code(),
            3
        );
        assert_eq!(Error::InvalidArgument("x".into()).exit_code(), 4);
        assert_eq!(
            Error::NoConvergence {
                context: "solver",
                iterations: 7,
                gap: 1.0,
                last_iterate: vec![],
            }
            .exit_code(),
            4
        );
    }

    #[test]
    fn stage_wrapping_preserves_code_and_prefixes_message() {
        let err = Error::Data("bad label".into()).in_stage("ingest");
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().starts_with("ingest:"));
    }
}
