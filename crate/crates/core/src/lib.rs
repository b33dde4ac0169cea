//! Federated gradient boosting over mergeable quantile sketches.
//!
//! Parties summarize their feature columns as relative-error quantile
//! sketches; the aggregator merges them into per-feature split candidates and
//! then grows trees from gradient/Hessian histograms that parties compute over
//! their own rows. No raw rows or per-row labels leave a party.
//!
//! Module map:
//! - [`sketch`]: the mergeable sketch and per-feature sketch sets.
//! - [`dataset`]: tabular data, holdout splits, and sample-skew partitions.
//! - [`boosting`]: losses, histograms, split search, trees, and the
//!   centralized trainer.
//! - [`federation`]: protocol messages, transports, aggregator, and party.
//! - [`metrics`]: confusion matrices and F1.
//! - [`experiment`]: dataset recipes and the centralized/local/federated grid.

pub mod boosting;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod metrics;
pub mod sketch;

pub use boosting::{
    train_centralized, GradHessHistogram, Hyperparameters, LossFunction, TrainingOutcome, Tree,
    TreeModel, TreeNode,
};
pub use dataset::{DatasetMatrix, PartitionResult, PartitionSpec, Scheme, Task};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Recipe};
pub use federation::FederationMessage;
pub use metrics::{ConfusionMatrix, F1Average};
pub use sketch::{FeatureSketchSet, QuantileSketch};
