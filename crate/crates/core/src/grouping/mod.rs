//! Cross-mission grouping of described objects: descriptor clustering,
//! per-class correspondence and relative pose of matched instances.

mod confidence;
mod correspond;
mod kmeans;
mod register;

pub use confidence::{cluster_confidence, ClusterConfidence};
pub use correspond::{
    assign_correspondences, min_cost_pairs, odd_one_out, weighted_distance, weighted_value, Assignment, ChangeKind,
    Correspondence, MatchEntry, MatchMatrix, NormContext, RawDistance, WeightedDistance, Weights, EXACT_CLASS_LIMIT,
};
pub use kmeans::{elbow, kmeans, select_k_elbow, DescriptorClustering};
pub use register::{register_pair, PairParams, PairRegistration};
