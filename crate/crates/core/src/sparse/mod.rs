//! Mask lifecycle: ERK initialisation, RigL prune/regrow, PQ-Index scoring and
//! sparsity-informed further pruning.

mod erk;
mod mask;
mod pqi;
mod rigl;

pub use erk::{erk_counts, erk_init};
pub use mask::{sparsity, LayerMask, MaskSet};
pub use pqi::{layer_name, pq_index, sap_prune, sap_prune_count, PqiParams, PruneEvent};
pub use rigl::{rigl_alpha, rigl_update, rigl_update_with_ratio, RiglReport};
