use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BnmeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("covariate matrix is rank deficient (singular value ratio {0:e})")]
    RankDeficient(f64),

    #[error("genotype `{0}` is constant and cannot be standardized")]
    ConstantGenotype(String),

    #[error("non-finite value in `{parameter}` at iteration {iteration}")]
    NumericalAbort { parameter: String, iteration: usize },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("results schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl BnmeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BnmeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag used by the CLI error payload.
    /// Process exit code: 1 usage, 2 data, 3 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            BnmeError::InvalidParameter(_) => 1,
            BnmeError::NumericalAbort { .. } => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BnmeError::DimensionMismatch(_) => "dimension_mismatch",
            BnmeError::InvalidParameter(_) => "invalid_parameter",
            BnmeError::IndexOutOfRange { .. } => "index_out_of_range",
            BnmeError::NotSymmetric(_) => "not_symmetric",
            BnmeError::NotPsd(_) => "not_psd",
            BnmeError::RankDeficient(_) => "rank_deficient",
            BnmeError::ConstantGenotype(_) => "constant_genotype",
            BnmeError::NumericalAbort { .. } => "numerical_abort",
            BnmeError::Parse { .. } => "parse",
            BnmeError::Data(_) => "data",
            BnmeError::SchemaVersion { .. } => "schema_version",
            BnmeError::Io { .. } => "io",
            BnmeError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, BnmeError>;
