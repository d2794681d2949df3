use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero normal vector rejected")]
    ZeroNormal,
    #[error("invalid geometry: {0}")]
    BadGeometry(String),
    #[error("cell too large for superset radius {radius}: {detail}")]
    CellTooLarge { radius: f64, detail: String },
    #[error("singular or ill-conditioned Jacobian at {at:?}")]
    SingularJacobian { at: Vec<f64> },
    #[error("flow escaped (step underflow or state overflow) at t={t}")]
    FlowEscape { t: f64 },
    #[error("second state derivative not available for this system")]
    HessianUnavailable,
    #[error("certificate side condition violated: {0}")]
    ConditionsViolated(String),
    #[error("no admissible grid scale")]
    NoAdmissibleScale,
    #[error("window exceeds built horizon {built}")]
    HorizonExceeded { built: usize },
    #[error("no policy entry for encountered window {0}")]
    PolicyGap(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
