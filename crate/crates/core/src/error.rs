use thiserror::Error;

/// Errors raised by the estimators, statistics, simulators and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("no sample points fall within the smoothing window at {at}")]
    DegenerateWindow { at: f64 },

    #[error("degenerate local-linear design at {at}: {reason}")]
    DegenerateDesign { at: f64, reason: &'static str },

    #[error("too many degenerate inner designs at {at}: {dropped} of {window} window points")]
    InnerDegenerate { at: f64, dropped: usize, window: usize },

    #[error("insufficient support: {count} points with positive weight, need at least {required}")]
    InsufficientSupport { count: usize, required: usize },

    #[error("density floor breached at {dropped} of {total} weighted points")]
    FloorBreach { dropped: usize, total: usize },

    #[error("sample has zero spread")]
    ZeroSpread,

    #[error("least-squares AR(1) slope {rho} is outside (0, 1)")]
    NonstationaryFit { rho: f64 },

    #[error("{failed} of {total} replicates failed: {last}")]
    ReplicateFailures {
        failed: usize,
        total: usize,
        last: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("io error: {0}")]
    Io(String),
}

impl MarkovError {
    /// Too few or too concentrated points near one evaluation point.
    pub fn is_local_degeneracy(&self) -> bool {
        matches!(
            self,
            MarkovError::DegenerateWindow { .. }
                | MarkovError::DegenerateDesign { .. }
                | MarkovError::InnerDegenerate { .. }
        )
    }
}

impl From<std::io::Error> for MarkovError {
    fn from(err: std::io::Error) -> Self {
        MarkovError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MarkovError>;
