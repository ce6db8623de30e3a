//! Regression-based configuration recommendation for datasets without
//! ground truth.

mod encoding;
mod forest;
mod instances;
mod recommend;

pub use encoding::Encoder;
pub use forest::{fit_forest, mean_squared_error, ForestModel, ForestParams, MaxFeatures, Node, Tree};
pub use instances::{
    dataset_instances, generate_instances, GenerationMode, GenerationOptions, Instance, InstanceSet,
};
pub use recommend::{
    candidate_configs, feature_importances, forest_space, instances_by_dataset, lodo_evaluate, lodo_from_instances,
    recommend, stratified_split, tune_forest, ForestTuning, ForestTuningOptions, LodoOptions, LodoReport,
    Recommender,
};
