//! One-hidden-layer MLP learner, masked SGD and non-i.i.d. partitioners.

pub mod data;
pub mod mlp;
pub mod model;
pub mod partition;
pub mod train;

pub use data::{holdout_split, synthetic_blobs, DataShard, Dataset, SyntheticSpec};
pub use mlp::{evaluate, loss_and_grad};
pub use model::{mlp_shapes, FlatModel, LayerShape};
pub use partition::{partition_dirichlet, partition_pathological, Partition};
pub use train::{dense_gradient, local_train, lr_at_round, SgdParams};
