use crate::models::BellOutcome;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{name} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("cannot normalize a zero-length or non-finite vector")]
    DegenerateVector,

    #[error("no coincidences recorded for setting {setting_id}, outcome {outcome}")]
    EmptyCell {
        setting_id: usize,
        outcome: BellOutcome,
    },

    #[error("the no_result outcome carries no correlation")]
    NoResultOutcome,

    #[error("sinusoid fit is rank deficient: {0}")]
    RankDeficient(String),

    #[error("acceptance region for {outcome} has zero grid mass")]
    EmptyBranch { outcome: BellOutcome },

    #[error("invalid quadrature grid: {0}")]
    InvalidGrid(String),

    #[error("setting {setting_id} is not parallel in the {outcome} frame (|a.Rb| = {overlap})")]
    NotParallel {
        setting_id: usize,
        outcome: BellOutcome,
        overlap: f64,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("oracle fixture: {0}")]
    Fixture(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
