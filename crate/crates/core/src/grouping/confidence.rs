use serde::{Deserialize, Serialize};

use super::DescriptorClustering;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfidence {
    /// Mean L2 distance of the members of each cluster to its centroid.
    pub mean_distance: Vec<f64>,
    /// `mean_distance` min-max scaled over the non-empty clusters.
    pub confidence: Vec<f64>,
    /// Set when fewer than two non-empty clusters exist or all mean
    /// distances coincide; every confidence is then 0.
    pub degenerate: bool,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-cluster spread and its min-max normalisation. Empty clusters get a
/// mean distance of 0 and confidence 0 and do not take part in the scaling.
pub fn cluster_confidence<V: AsRef<[f64]>>(data: &[V], clustering: &DescriptorClustering) -> ClusterConfidence {
    let k = clustering.k;
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (v, &c) in data.iter().zip(&clustering.assignments) {
        sum[c] += l2(v.as_ref(), &clustering.centroids[c]);
        count[c] += 1;
    }
    let mean_distance: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
    let live: Vec<f64> = (0..k).filter(|&c| count[c] > 0).map(|c| mean_distance[c]).collect();
    let lo = live.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = live.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = live.len() < 2 || !(hi > lo);
    let confidence = (0..k)
        .map(|c| {
            if degenerate || count[c] == 0 {
                0.0
            } else {
                ((mean_distance[c] - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
        })
        .collect();
    ClusterConfidence {
        mean_distance,
        confidence,
        degenerate,
    }
}
