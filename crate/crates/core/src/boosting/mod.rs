//! Second-order gradient boosting with histogram split search.

mod histogram;
mod local;
mod loss;
mod model;
mod params;
mod split;
mod trainer;

pub use histogram::{
    bin_index, BinnedMatrix, FeatureHistogram, GradHessHistogram, GradStats, NodeHistogram,
};
pub use local::LocalLearner;
pub use loss::{sigmoid, GradPair, LossFunction, LossKind, HESSIAN_FLOOR};
pub use model::{Direction, Tree, TreeModel, TreeNode, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use params::Hyperparameters;
pub use split::{find_best_split, leaf_weight, split_gain, SplitDecision};
pub use trainer::{
    class_prevalence, grow_tree, null_model, train_centralized, HistogramSource, NodeId, RoundLog,
    TrainingOutcome,
};
