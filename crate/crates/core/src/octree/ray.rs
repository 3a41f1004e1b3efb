//! Voxel traversal along a ray (Amanatidis & Woo stepping).

use super::{KeyFrame, VoxelKey};
use crate::geometry::Point3;

/// Voxels crossed by the segment `from -> to`.
///
/// `free` holds every voxel the segment passes through before the one that
/// contains `to`, starting with the voxel of `from`. `end` is the voxel that
/// contains `to`. Both ends must lie inside the addressable extent.
pub fn trace_segment(frame: &KeyFrame, from: &Point3, to: &Point3, free: &mut Vec<VoxelKey>) -> VoxelKey {
    trace_segment_with(frame, from, to, |k| free.push(k))
}

/// Same traversal as [`trace_segment`], handing each crossed voxel to
/// `visit` instead of collecting them.
#[inline]
pub fn trace_segment_with(frame: &KeyFrame, from: &Point3, to: &Point3, mut visit: impl FnMut(VoxelKey)) -> VoxelKey {
    let res = frame.resolution;
    let start = frame.key_of_unchecked(from);
    let end = frame.key_of_unchecked(to);
    if start == end {
        return end;
    }
    let g0 = [from.x / res, from.y / res, from.z / res];
    let dir = [(to.x - from.x) / res, (to.y - from.y) / res, (to.z - from.z) / res];
    let mut cur = [start.i as i64, start.j as i64, start.k as i64];
    let target = [end.i as i64, end.j as i64, end.k as i64];
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        if dir[a] > 0.0 {
            step[a] = 1;
            t_max[a] = (g0[a].floor() + 1.0 - g0[a]) / dir[a];
            t_delta[a] = 1.0 / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            t_max[a] = (g0[a].floor() - g0[a]) / dir[a];
            t_delta[a] = -1.0 / dir[a];
        }
    }
    // The exact number of boundary crossings bounds the walk even when
    // rounding makes the stepping disagree with the end key.
    let budget: i64 = (0..3).map(|a| (target[a] - cur[a]).abs()).sum();
    for _ in 0..budget {
        visit(VoxelKey::from_signed(cur));
        let a = if t_max[0] < t_max[1] {
            if t_max[0] < t_max[2] {
                0
            } else {
                2
            }
        } else if t_max[1] < t_max[2] {
            1
        } else {
            2
        };
        cur[a] += step[a];
        t_max[a] += t_delta[a];
        if cur == target {
            break;
        }
    }
    end
}
