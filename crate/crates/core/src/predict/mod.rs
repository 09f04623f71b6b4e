//! SVR prediction of pair toxicity with grouped, repeated cross-validation.

mod grid;
mod metrics;
mod protocol;
mod svr;

use thiserror::Error;

use crate::effects::EffectsError;
use crate::grouping::GroupingError;

pub use grid::{
    fit_on_distances, grid_search, grid_search_distances, predict_block, Candidate, GridResult,
    GridSpec, SolverSettings,
};
pub use metrics::{categorical_accuracy, mean_std, r_squared};
pub use protocol::{
    pair_features, read_predictions_csv, run_protocol, sample_groups, write_predictions_csv,
    EvaluationReport, FeatureSource, FoldRecord, GapMode, ProtocolConfig, ProtocolInput,
    SamplePrediction, Standardizer,
};
pub use svr::{
    cross_squared_distances, rbf_kernel, squared_distance, squared_distances, svr_fit,
    DualSolution, DualSolver, SvrModel, SvrParams, DEFAULT_EPSILON, DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite input value")]
    NonFinite,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("SVR did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("targets are constant; R² is undefined")]
    ConstantTarget,
    #[error("toxicity category {0} out of range 0..=3")]
    CategoryOutOfRange(u8),
    #[error("every grid candidate failed")]
    AllCandidatesFailed,
    #[error("repeat {repeat}: no fold plan without empty folds after {attempts} attempts")]
    EmptyFolds { repeat: usize, attempts: usize },
    #[error("no feature vector for {0}")]
    MissingFeature(String),
    #[error("no group label for {0}")]
    MissingGroup(String),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error(transparent)]
    Effects(#[from] EffectsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PredictError>;
