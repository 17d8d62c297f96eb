//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar input violated a positivity/range requirement.
    #[error("domain error: {field} must be {requirement}, got {value}")]
    InvalidScalar {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },

    /// The market failed structural validation; the report lists every violation.
    #[error("invalid market:\n{0}")]
    InvalidMarket(crate::market::ValidationReport),

    #[error("dimension mismatch: {context} (expected {expected}, got {actual})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("covariance matrix is not symmetric: |Q[{row},{col}] - Q[{col},{row}]| = {deviation:e} exceeds tolerance")]
    AsymmetricCovariance {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("impact matrix entry [{row},{col}] = {value} lies outside [0, 1]")]
    ImpactOutOfRange { row: usize, col: usize, value: f64 },

    #[error("economic value vector sums to {sum}, expected 1 within {tolerance:e}")]
    ValueNotNormalized { sum: f64, tolerance: f64 },

    #[error("seed set is empty")]
    EmptySeedSet,

    #[error("seed index {index} out of range for {n_banks} banks")]
    SeedOutOfRange { index: usize, n_banks: usize },

    /// The baseline allocation of a QCQP instance does not satisfy its own
    /// constraints; the instance is corrupt.
    #[error("infeasible baseline: {family} residual {residual:e} exceeds tolerance {tolerance:e}")]
    InfeasibleBaseline {
        family: &'static str,
        residual: f64,
        tolerance: f64,
    },

    /// A candidate allocation handed to `apply_solution` violates the constraints.
    #[error("infeasible allocation: {family} residual {residual:e} exceeds tolerance {tolerance:e}")]
    InfeasibleAllocation {
        family: &'static str,
        residual: f64,
        tolerance: f64,
    },

    /// The brute-force oracle only enumerates instances with at most two
    /// equality-system degrees of freedom.
    #[error("brute-force oracle refused: instance has {dof} degrees of freedom (max 2)")]
    OracleTooLarge { dof: usize },

    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("referential integrity: {file} references unknown {kind} id '{id}'")]
    DanglingId {
        file: String,
        kind: &'static str,
        id: String,
    },

    #[error("duplicate {kind} id '{id}' in {file}")]
    DuplicateId {
        file: String,
        kind: &'static str,
        id: String,
    },

    #[error("empty market: {0}")]
    EmptyMarket(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 input error, 2 solver failure, 3 i/o error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleBaseline { .. }
            | Error::InfeasibleAllocation { .. }
            | Error::OracleTooLarge { .. } => 2,
            Error::Io { .. } | Error::Json(_) | Error::Csv(_) => 3,
            _ => 1,
        }
    }
}
