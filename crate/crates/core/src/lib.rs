//! Excess-risk upper bounds for black-box square-loss predictors from
//! subsample refits on sign-randomized residuals.

// `!(a > b)` is used on purpose so NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod metrics;
pub mod model;
pub mod refit;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod theory;
pub mod trainers;

pub use model::{EvaluationConfig, EvaluationError, Predictor, PredictorHandle, RegressionDataset, RhoMode, Trainer};
pub use refit::{evaluate, evaluate_with, RiskBoundReport};
