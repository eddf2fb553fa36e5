use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {value} outside the {family} domain")]
    Domain { family: &'static str, value: f64 },

    #[error("point ({u}, {v}) is not strictly inside the unit square")]
    Boundary { u: f64, v: f64 },

    #[error("need at least {required} observations, got {got}")]
    InsufficientData { required: usize, got: usize },

    #[error("likelihood fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("regression error: {0}")]
    Regression(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("ingestion error at row {row}: {msg}")]
    Ingestion { row: usize, msg: String },

    #[error("no data: {0}")]
    NoData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
