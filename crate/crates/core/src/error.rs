use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported space kind `{0}`")]
    UnsupportedKind(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("window too small to contain any point")]
    EmptyWindow,
    #[error("point index {0} out of range")]
    PointOutOfRange(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("scale {eps} is below the grid resolution {resolution}")]
    BelowResolution { eps: f64, resolution: f64 },
    #[error("no {b}-chain between {x} and {y}")]
    NoChain { b: f64, x: usize, y: usize },
    #[error("point {0} is not covered by any net ball")]
    Uncovered(usize),
    #[error("empty annulus around point {0}")]
    EmptyAnnulus(usize),
    #[error("ball around {center} of radius {radius} is empty")]
    EmptyBall { center: usize, radius: f64 },
    #[error("ball around {center} of radius {radius} is not proper (it fills its component)")]
    BallNotProper { center: usize, radius: f64 },
    #[error("ball around {center} of radius {radius} leaves the window")]
    OutsideWindow { center: usize, radius: f64 },
    #[error("support violation: {0}")]
    Support(String),
    #[error("{0} did not converge after {1} iterations")]
    NoConvergence(&'static str, usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("sigma is not 1-Lipschitz between {0} and {1}")]
    NotLipschitz(usize, usize),
    #[error("insufficient admissible samples: {0}")]
    InsufficientSamples(String),
    #[error("overflow guard: n = {0} exceeds 25")]
    Overflow(usize),
    #[error("compute budget of {0} kernel-entry applications exceeded")]
    BudgetExceeded(u64),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
