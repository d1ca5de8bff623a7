use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants line up with the CLI exit codes: configuration-type problems
/// map to 1, numerical divergence to 2 and unconverged statistics to 3.
#[derive(Debug, Error)]
pub enum QgError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("stratification error: rho2 ({rho2}) must exceed rho1 ({rho1})")]
    Stratification { rho1: f64, rho2: f64 },

    #[error("forcing error: {0}")]
    Forcing(String),

    #[error("numerical divergence at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("radius truncation not converged: tail share {tail_share:.3e} over horizon {horizon}; extend the horizon")]
    ExtendHorizon { horizon: f64, tail_share: f64 },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QgError {
    /// Process exit status used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            QgError::Divergence { .. } => 2,
            QgError::Statistics(_) | QgError::ExtendHorizon { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, QgError>;
