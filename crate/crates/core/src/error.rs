//! Crate-wide error type.
//!
//! Errors fall into two broad families: *validation* errors (bad inputs,
//! mismatched dimensions, malformed files) and *numerical* errors (non-finite
//! intermediate values, failed factorizations, diverging iterations). The CLI
//! maps the former to exit code 1 and the latter to exit code 2.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched vector/matrix dimensions.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    /// A quantity that must be finite was not.
    #[error("non-finite value in {context}{}", fmt_row(.row))]
    NonFinite { context: String, row: Option<usize> },

    /// Division by zero inside a user-supplied model function.
    #[error("division by zero: {function} evaluated to zero at {at}")]
    DivisionByZero { function: String, at: f64 },

    /// A parameter or configuration value is outside its valid range.
    #[error("invalid value for {name}: {reason}")]
    InvalidValue { name: String, reason: String },

    /// A column required for standardization has zero variance.
    #[error("zero-variance column {index} ({name}) cannot be standardized")]
    ZeroVariance { index: usize, name: String },

    /// Malformed or inconsistent input file.
    #[error("invalid input in {path}: {reason}")]
    InvalidInput { path: String, reason: String },

    /// Cluster artifact cannot be read or fails validation.
    #[error("invalid cluster artifact {path}: {reason}")]
    InvalidArtifact { path: String, reason: String },

    /// A subsample index landed in the exact stratum.
    #[error("subsample row {row} belongs to the exact stratum")]
    SubsampleInExactStratum { row: usize },

    /// Too few draws for a time-series diagnostic.
    #[error("chain too short for {context}: need at least {min} draws, got {got}")]
    ChainTooShort {
        context: String,
        min: usize,
        got: usize,
    },

    /// A chain or column with zero variance where positive variance is required.
    #[error("zero variance in {context}")]
    DegenerateVariance { context: String },

    /// Cholesky factorization failed (matrix not positive definite).
    #[error("matrix is not positive definite in {context}")]
    NotPositiveDefinite { context: String },

    /// The mode finder failed to converge.
    #[error("mode finding did not converge after {iters} iterations (|grad| = {grad_norm:.3e}); consider rescaling the covariates")]
    ModeNotConverged { iters: usize, grad_norm: f64 },

    /// The variance-targeting augmentation loop failed to terminate.
    #[error("subsample augmentation did not reach the variance target after {rounds} rounds (sigma2 = {sigma2:.3e})")]
    AugmentationStalled { rounds: usize, sigma2: f64 },

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn fmt_row(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" (row {r})"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a data row index to a non-finite error, if not already present.
    pub fn with_row(self, r: usize) -> Self {
        match self {
            Error::NonFinite { context, row: None } => Error::NonFinite {
                context,
                row: Some(r),
            },
            other => other,
        }
    }

    /// Process exit code the CLI should use for this error:
    /// 1 for validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. }
            | Error::DivisionByZero { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::ModeNotConverged { .. }
            | Error::AugmentationStalled { .. }
            | Error::DegenerateVariance { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
