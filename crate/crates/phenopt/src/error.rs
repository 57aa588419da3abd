//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("climate data error: {0}")]
    Climate(String),

    #[error("invalid phenotype: trait {trait_name} = {value} outside [{min}, {max}]")]
    PhenotypeOutOfBounds {
        trait_name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dissimilarity error: {0}")]
    Dissim(String),

    #[error("clustering error: {0}")]
    Cluster(String),

    #[error("reconstruction error: {0}")]
    Reconstruct(String),

    #[error("indicator error: {0}")]
    Indicator(String),
}

pub type Result<T> = std::result::Result<T, Error>;
