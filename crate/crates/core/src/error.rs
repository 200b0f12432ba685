use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64 },
    #[error("Newton iteration stalled after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("open loop is H2-optimal when the power noise intensity is zero")]
    OpenLoopOptimal,
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GridError {
    /// True for errors caused by bad input rather than by a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            GridError::Dimension { .. }
                | GridError::InvalidNetwork(_)
                | GridError::InvalidParameter(_)
                | GridError::Scenario(_)
                | GridError::Io(_)
                | GridError::Json(_)
                | GridError::Csv(_)
        )
    }
}

pub type Result<T, E = GridError> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GridError::Dimension {
            context,
            expected,
            got,
        })
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> GridError {
    GridError::InvalidParameter(msg.into())
}
