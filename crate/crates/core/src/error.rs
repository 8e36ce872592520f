use thiserror::Error;

/// Errors raised by model construction, analysis, fitting and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rate matrices do not form a generator: row {row} of D0+D1 sums to {sum:e}")]
    NotAGenerator { row: usize, sum: f64 },

    #[error("D0 is not stable (trace {trace:e}, determinant {det:e})")]
    UnstableD0 { trace: f64, det: f64 },

    #[error("negative rate {value:e} in {matrix} at ({row}, {col})")]
    NegativeRate {
        matrix: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("canonical parameters violate constraints: {0}")]
    ConstraintViolated(String),

    #[error("singular system: {0}")]
    SingularSystem(&'static str),

    #[error("embedded chain at loss epochs is reducible")]
    Reducible,

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("negative duration {value} at index {index}")]
    NegativeDuration { index: usize, value: f64 },

    #[error("quantile level {0} outside (0, 1)")]
    OutOfRangeQuantile(f64),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(&'static str),

    #[error("singular correction matrix (e*pi + D) in count moments")]
    SingularCorrection,

    #[error("conditioning event has probability {0:e}")]
    DegenerateConditioning(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),

    #[error("empty trace")]
    EmptyTrace,

    #[error("trace too short: {got} observations, need at least {need}")]
    TooShort { got: usize, need: usize },

    #[error("no feasible starting point")]
    NoFeasiblePoint,

    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),

    #[error("moment of order {order} is infinite (tail index {alpha})")]
    InfiniteMoment { order: f64, alpha: f64 },

    #[error("density argument must be positive, got {0}")]
    NonpositiveX(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: cannot parse {text:?}")]
    Parse { line: usize, text: String },

    #[error("line {line}: negative value {value}")]
    NegativeValue { line: usize, value: f64 },

    #[error("file contains no data")]
    EmptyFile,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for input or model validation failures; false for numerical
    /// breakdowns during a computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SingularSystem(_)
                | Error::SingularCorrection
                | Error::DegenerateConditioning(_)
                | Error::OptimizerFailed(_)
                | Error::NoFeasiblePoint
                | Error::Reducible
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
