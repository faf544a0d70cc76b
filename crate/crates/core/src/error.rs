//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SrgError>;

/// Everything that can go wrong while building or applying a model.
#[derive(Debug, Error)]
pub enum SrgError {
    /// A class that must have training samples has none.
    #[error("class {0} has no samples")]
    EmptyClass(usize),

    /// Two objects that must agree on a dimension do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    /// Embedding spaces disagree on which class each column belongs to.
    #[error("embedding spaces disagree on class count or order")]
    ClassOrderMismatch,

    /// A prototype column has zero norm and cannot be normalized.
    #[error("class {class} in space '{space}' has a zero-norm column")]
    ZeroColumn { class: usize, space: String },

    /// A parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The coordinate-descent solver exhausted its sweep budget. Carries the
    /// best iterate so callers can inspect or reuse it.
    #[error(
        "solver did not converge{} within {iterations} sweeps (kkt residual {kkt_residual:.3e})",
        class.map(|c| format!(" for class {c}")).unwrap_or_default()
    )]
    NotConverged {
        class: Option<usize>,
        iterations: usize,
        kkt_residual: f64,
        best: Vec<f64>,
    },

    /// A NaN or infinity appeared mid-computation.
    #[error("numerical failure: non-finite value in {0}")]
    NumericalFailure(String),

    /// The unseen block of I - A is singular or too ill-conditioned to invert.
    #[error("unseen coefficient block is singular (condition estimate {condition:.3e})")]
    SingularBlock { condition: f64 },

    /// The symmetric eigensolver failed to converge.
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    /// Fewer classes than a partitioning operation needs.
    #[error("too few classes: need at least {needed}, have {available}")]
    TooFewClasses { needed: usize, available: usize },

    /// A test label has no prototype column to compare against.
    #[error("no prototype available for class {0}")]
    MissingPrototype(usize),

    /// Classification was asked to choose among zero candidates.
    #[error("empty candidate set")]
    EmptyCandidateSet,

    /// A model's class manifest does not match the dataset split.
    #[error("class manifest mismatch: {0}")]
    ManifestMismatch(String),

    /// A square matrix was expected.
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    /// The synthetic generator could not find a well-conditioned instance.
    #[error("conditioning failure after {attempts} resampling attempts")]
    ConditioningFailure { attempts: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file does not match its documented format.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SrgError {
    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        SrgError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        SrgError::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }
}
