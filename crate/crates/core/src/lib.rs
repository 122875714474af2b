//! Decentralized sparse federated learning with reuse-index scheduling and
//! sparsity-informed adaptive pruning.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the
//! single-precision types used by the command-line tool.

pub mod config;
pub mod cost;
pub mod engine;
pub mod error;
pub mod learner;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod sparse;
pub mod topology;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f32;
pub type Model = learner::FlatModel<Real>;
pub type Shard = learner::DataShard<Real>;
pub type Data = learner::Dataset<Real>;
pub type Client = engine::ClientState<Real>;
pub type Run = engine::Experiment<Real>;
