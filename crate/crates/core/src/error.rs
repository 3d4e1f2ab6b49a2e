use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("external row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("column count mismatch: target has {target}, external has {external}")]
    ColumnCountMismatch { target: usize, external: usize },

    #[error("underdetermined problem: {rows} fitted rows for {cols} coefficients")]
    UnderdeterminedProblem { rows: usize, cols: usize },

    #[error("sampling size {r} out of range for {n} rows")]
    RateOutOfRange { r: f64, n: usize },

    #[error("Gram matrix is singular or not positive definite")]
    SingularGram,

    #[error("fused normal matrix is singular or not positive definite")]
    SingularFusedGram,

    #[error("weighted external Gram matrix is singular or not positive definite")]
    SingularExternalGram,

    #[error("estimator-combining matrix is singular")]
    SingularCombiner,

    #[error("degenerate residual sum of squares (rss = {rss}, m = {m})")]
    DegenerateRss { rss: f64, m: f64 },

    #[error("no grid point produced a converged fit")]
    NoConvergedFit,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("config error in `{key}`: {message}")]
    ConfigParse { key: String, message: String },

    #[error("invalid config value for `{key}`: {message}")]
    ConfigValidation { key: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Csv(err.to_string())
    }
}
