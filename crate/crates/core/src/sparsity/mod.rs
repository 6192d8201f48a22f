//! Mask machinery: ERK layer-wise allocation, magnitude pruning,
//! gradient-magnitude growth and the cosine readjustment schedule.
//!
//! All rankings break ties by flat index so results never depend on sort
//! stability, platform or thread count.

mod distribution;
mod mask;
mod model;
mod prune_grow;
mod schedule;

pub use distribution::{erk_distribution, SparsityDistribution};
pub use mask::Mask;
pub use model::SparseModel;
pub use prune_grow::{
    grow_gradient_magnitude, prune_layerwise, readjust, top_k_by_magnitude, ReadjustReport,
};
pub use schedule::{cosine_alpha, ReadjustmentSchedule};
