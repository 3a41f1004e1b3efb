use std::collections::VecDeque;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Segment;
use crate::error::{Error, Result};
use crate::geometry::{Pca, Point3};
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionGrowParams {
    /// Neighbours used for normal estimation and growth.
    pub normal_k: usize,
    pub angle_thresh_deg: f64,
    /// Points above this surface variation join regions but do not extend them.
    pub curvature_thresh: f64,
    /// Regions smaller than this are absorbed by their nearest larger region.
    pub min_region: usize,
}

impl Default for RegionGrowParams {
    fn default() -> Self {
        Self {
            normal_k: 20,
            angle_thresh_deg: 25.0,
            curvature_thresh: 0.1,
            min_region: 50,
        }
    }
}

/// Splits a segment into smooth surface patches.
///
/// Seeds are taken in order of increasing curvature. A neighbour joins the
/// region when its normal deviates from the current point's by less than
/// the angle threshold (orientation ignored), and becomes a growth front
/// when its own curvature is below the curvature threshold. Every input
/// point ends up in exactly one output segment; ids are `0..`.
pub fn region_grow_refine(segment: &Segment, params: &RegionGrowParams) -> Result<Vec<Segment>> {
    let pts = &segment.cloud.points;
    let n = pts.len();
    let k = params.normal_k.max(3);
    if n < k {
        return Err(Error::SegmentTooSmall { got: n, need: k });
    }
    let whole = Pca::of(pts).expect("non-empty");
    if whole.eigenvalues[1] <= 1e-12 * whole.eigenvalues[2].max(f64::MIN_POSITIVE) {
        return Ok(vec![Segment::new(0, segment.mission, segment.cloud.clone())?]);
    }
    let tree = KdTree::new(pts);
    let neighbours: Vec<Vec<usize>> = pts.par_iter().map(|p| tree.knn(p, k).into_iter().map(|x| x.0).collect()).collect();
    let (normals, curvature): (Vec<Vector3<f64>>, Vec<f64>) = neighbours
        .par_iter()
        .map(|nb| {
            let pca = Pca::of(nb.iter().map(|&i| &pts[i])).expect("k >= 3");
            (pca.normal(), pca.curvature())
        })
        .unzip();
    let cos_thresh = params.angle_thresh_deg.to_radians().cos();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| curvature[a].total_cmp(&curvature[b]).then(a.cmp(&b)));

    let mut region = vec![usize::MAX; n];
    let mut regions: Vec<Vec<usize>> = Vec::new();
    for &seed in &order {
        if region[seed] != usize::MAX {
            continue;
        }
        let r = regions.len();
        let mut members = vec![seed];
        region[seed] = r;
        let mut front = VecDeque::from([seed]);
        while let Some(cur) = front.pop_front() {
            for &nb in &neighbours[cur] {
                if region[nb] != usize::MAX {
                    continue;
                }
                if normals[cur].dot(&normals[nb]).abs() < cos_thresh {
                    continue;
                }
                region[nb] = r;
                members.push(nb);
                if curvature[nb] < params.curvature_thresh {
                    front.push_back(nb);
                }
            }
        }
        regions.push(members);
    }

    absorb_small_regions(pts, &mut region, &regions, params.min_region);

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut remap = vec![usize::MAX; regions.len()];
    for i in 0..n {
        let r = region[i];
        if remap[r] == usize::MAX {
            remap[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[remap[r]].push(i);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(id, idx)| Segment::new(id as u64, segment.mission, segment.cloud.select(&idx)))
        .collect()
}

/// Reassigns points of regions below `min_region` to the region of their
/// nearest point in a large region. With no large region everything is
/// merged into one.
fn absorb_small_regions(pts: &[Point3], region: &mut [usize], regions: &[Vec<usize>], min_region: usize) {
    let large: Vec<bool> = regions.iter().map(|r| r.len() >= min_region).collect();
    let anchors: Vec<usize> = (0..pts.len()).filter(|&i| large[region[i]]).collect();
    if anchors.is_empty() {
        region.iter_mut().for_each(|r| *r = 0);
        return;
    }
    let anchor_pts: Vec<Point3> = anchors.iter().map(|&i| pts[i]).collect();
    let tree = KdTree::new(&anchor_pts);
    for i in 0..pts.len() {
        if !large[region[i]] {
            let (j, _) = tree.nearest(&pts[i]).expect("non-empty");
            region[i] = region[anchors[j]];
        }
    }
}
