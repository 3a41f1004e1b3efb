use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::{euclidean_cluster_indices, ClusterParams, Segment};
use crate::error::{Error, Result};
use crate::geometry::voxel_of;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverlapParams {
    pub voxel: f64,
    pub ratio_thresh: f64,
    /// Used to re-cluster what is left after carving.
    pub cluster: ClusterParams,
}

impl Default for OverlapParams {
    fn default() -> Self {
        Self {
            voxel: 0.05,
            ratio_thresh: 0.3,
            cluster: ClusterParams::default(),
        }
    }
}

fn voxels(s: &Segment, voxel: f64) -> FxHashSet<[i64; 3]> {
    s.cloud.points.iter().map(|p| voxel_of(p, voxel)).collect()
}

/// Shared voxels over the voxel count of the smaller segment.
pub fn overlap_ratio(a: &Segment, b: &Segment, voxel: f64) -> f64 {
    let (va, vb) = (voxels(a, voxel), voxels(b, voxel));
    ratio_of(&va, &vb)
}

fn ratio_of(va: &FxHashSet<[i64; 3]>, vb: &FxHashSet<[i64; 3]>) -> f64 {
    let inter = va.iter().filter(|v| vb.contains(*v)).count();
    let denom = va.len().min(vb.len());
    if denom == 0 {
        0.0
    } else {
        inter as f64 / denom as f64
    }
}

/// Carves shared space out of strongly overlapping cross-mission pairs.
///
/// For every pair whose overlap ratio exceeds the threshold, the shared
/// voxels are removed from both segments and each remainder is re-clustered.
/// Untouched segments keep their ids; pieces of carved segments get fresh
/// ids above the largest input id of their mission.
pub fn merge_or_split(a: &[Segment], b: &[Segment], params: &OverlapParams) -> Result<(Vec<Segment>, Vec<Segment>)> {
    if !(params.voxel > 0.0) {
        return Err(Error::InvalidArgument(format!("overlap voxel must be positive, got {}", params.voxel)));
    }
    let va: Vec<_> = a.iter().map(|s| voxels(s, params.voxel)).collect();
    let vb: Vec<_> = b.iter().map(|s| voxels(s, params.voxel)).collect();
    let mut carve_a: Vec<FxHashSet<[i64; 3]>> = vec![FxHashSet::default(); a.len()];
    let mut carve_b: Vec<FxHashSet<[i64; 3]>> = vec![FxHashSet::default(); b.len()];
    for (i, sa) in va.iter().enumerate() {
        for (j, sb) in vb.iter().enumerate() {
            if ratio_of(sa, sb) > params.ratio_thresh {
                for v in sa.iter().filter(|v| sb.contains(*v)) {
                    carve_a[i].insert(*v);
                    carve_b[j].insert(*v);
                }
            }
        }
    }
    Ok((carve(a, &carve_a, params)?, carve(b, &carve_b, params)?))
}

fn carve(segs: &[Segment], cut: &[FxHashSet<[i64; 3]>], params: &OverlapParams) -> Result<Vec<Segment>> {
    let mut next = segs.iter().map(|s| s.id + 1).max().unwrap_or(0);
    let mut out = Vec::new();
    for (s, cut) in segs.iter().zip(cut) {
        if cut.is_empty() {
            out.push(s.clone());
            continue;
        }
        let rest = s.cloud.filter(|_, p| !cut.contains(&voxel_of(p, params.voxel)));
        let max = params.cluster.max_size.unwrap_or(usize::MAX);
        for idx in euclidean_cluster_indices(&rest.points, params.cluster.tolerance)? {
            if idx.len() >= params.cluster.min_size && idx.len() <= max {
                out.push(Segment::new(next, s.mission, rest.select(&idx))?);
                next += 1;
            }
        }
    }
    Ok(out)
}
