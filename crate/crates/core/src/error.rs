use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("no stationary distribution: p10 = p01 = 0")]
    DegenerateBlockage,

    #[error("mobility estimation needs at least one trajectory")]
    NoTrajectories,

    #[error("beam-training scan set is empty")]
    EmptyScan,

    #[error("impossible observation {observation} under action {action} (belief assigns it zero probability)")]
    ImpossibleObservation { observation: String, action: String },

    #[error("singular policy-evaluation system: {0}")]
    SingularSystem(String),

    #[error("policy file was produced for config hash {found}, current model has {expected}")]
    ConfigHashMismatch { expected: String, found: String },

    #[error("policy file: {0}")]
    PolicyFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
