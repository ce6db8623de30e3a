//! Sampling-based configuration search.

pub mod gp;
pub mod report;
pub mod sampler;
pub mod sobol;
pub mod space;
pub mod study;
pub mod tpe;

pub use gp::{log_expected_improvement, GpSampler};
pub use sampler::{Observation, QmcSampler, RandomSampler, Sampler, SamplerKind};
pub use space::{Domain, ParamSpace, Point, SearchSpace, Value};
pub use study::{
    f1_ratio, grid_search, optimize, runtime_ratio, subsample_ground_truth, tune, Trial, TrialLog,
    TuneOptions,
};
pub use tpe::TpeSampler;
