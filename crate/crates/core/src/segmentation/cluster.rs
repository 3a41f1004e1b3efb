use serde::{Deserialize, Serialize};

use super::Segment;
use crate::alignment::MissionId;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::spatial::HashGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterParams {
    pub tolerance: f64,
    pub min_size: usize,
    /// `None` means unbounded.
    pub max_size: Option<usize>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            tolerance: 0.10,
            min_size: 50,
            max_size: None,
        }
    }
}

/// Connected components of the graph linking points closer than
/// `tolerance`. Components are ordered by their smallest index and hold
/// sorted indices.
pub fn euclidean_cluster_indices(points: &[Point3], tolerance: f64) -> Result<Vec<Vec<usize>>> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("cluster tolerance must be positive, got {tolerance}")));
    }
    let grid = HashGrid::new(points, tolerance);
    let mut seen = vec![false; points.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..points.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            grid.for_each_within(&points[i], tolerance, |j, _| {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            });
        }
        comp.sort_unstable();
        out.push(comp);
    }
    Ok(out)
}

/// Euclidean clustering; components outside `[min_size, max_size]` are
/// dropped. Segment ids count from zero in component order.
pub fn euclidean_cluster(cloud: &PointCloud, params: &ClusterParams, mission: MissionId) -> Result<Vec<Segment>> {
    let max = params.max_size.unwrap_or(usize::MAX);
    euclidean_cluster_indices(&cloud.points, params.tolerance)?
        .into_iter()
        .filter(|c| c.len() >= params.min_size && c.len() <= max)
        .enumerate()
        .map(|(id, idx)| Segment::new(id as u64, mission, cloud.select(&idx)))
        .collect()
}
