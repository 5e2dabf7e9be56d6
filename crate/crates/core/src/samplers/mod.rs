//! Negative stores and conditional support construction.
//!
//! Supports are rank slices of candidates sorted by similarity to the anchor
//! (ring, ball), or k-means cells (cave, close neighbor sets).

mod kmeans;
mod select;
mod store;

pub use kmeans::{
    assign, cave_select, close_neighbor_set, kmeans, lloyd_step, update_centroids, within_cluster_ss,
    ClusterAssignment,
};
pub use select::{ball_select, rank_ascending, ring_select, ring_slice, sample_negatives, RingSpec};
pub(crate) use select::{fraction_floor, position};
pub use store::{FifoQueue, MemoryBank};
