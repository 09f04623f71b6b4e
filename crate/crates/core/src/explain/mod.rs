//! Embedding-neighbourhood analyses of gap-filling predictions.

mod density;
mod error_model;
mod facts;
mod forest;
mod similarity;
mod stats;

use thiserror::Error;

use crate::kg::KgError;

pub use density::{
    density_map, depth_density, radius_density, write_density_csv, DensityCell, DensityPartition,
    DensityScale,
};
pub use error_model::{
    distance_inputs, fit_error_model, ErrorModel, ErrorModelConfig, ErrorModelReport,
    MIN_PREDICTIONS,
};
pub use facts::{
    common_facts, fact_set, write_common_facts_csv, CommonFacts, CommonFactsReport,
    NeighbourhoodSide, SharedFacts,
};
pub use forest::{ForestConfig, RandomForest, RegressionTree};
pub use similarity::{DistanceMetric, SimilarityIndex};
pub use stats::{
    fact_error_correlation, pearson, pearson_test, write_correlation_csv, Correlation,
    CorrelationRow,
};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("entity <{0}> is not in the similarity index")]
    UnknownEntity(String),
    #[error("non-finite feature value for <{0}>")]
    NonFinite(String),
    #[error("need at least {needed} predictions, got {got}")]
    TooFewPredictions { needed: usize, got: usize },
    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExplainError>;
