use thiserror::Error;

/// Errors raised across the optimization stack.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("covariance estimate is not positive definite")]
    DegenerateCovariance,

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("equality constraint matrix does not have full row rank")]
    RankDeficient,

    #[error("problem is infeasible")]
    Infeasible,

    #[error("problem is unbounded")]
    Unbounded,

    #[error("no feasible portfolio has positive excess return; it is not rational to invest")]
    NotRationalToInvest,

    #[error("value function is not positive ({0:e}); scaled regret is undefined")]
    NonpositiveValueFunction(f64),

    #[error("hindsight problem for scenario {0} is infeasible")]
    ScenarioInfeasible(usize),

    #[error("matrix could not be certified by the inner approximation")]
    NotCertified,

    #[error("conic solver failure: {0}")]
    SolverFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<u64>, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: Some(e.line() as u64),
            message: e.to_string(),
        }
    }
}
