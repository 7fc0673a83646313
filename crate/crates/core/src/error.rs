use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("factorization produced non-finite values (relative residual {residual:e})")]
    NumericallySingular { residual: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("eigensolver did not converge after {iterations} restarts (residuals {residuals:?})")]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("energy {energy} meV is below the threshold {threshold} meV of channel {channel}")]
    BelowThreshold {
        energy: f64,
        threshold: f64,
        channel: usize,
    },

    #[error("mode budget {requested} is smaller than the {open} open channels")]
    TooFewModes { requested: usize, open: usize },

    #[error("lineshape fit failed: {0}")]
    FitFailed(String),

    #[error("unknown {family} strategy `{name}` (available: {available})")]
    UnknownStrategy {
        family: &'static str,
        name: String,
        available: String,
    },

    #[error("eigenvalue lost: {0}")]
    EigenvalueLost(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
