use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Plane `normal · p + d = 0` with the indices of its inliers.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub d: f64,
    pub inliers: Vec<usize>,
}

impl PlaneModel {
    pub fn distance(&self, p: &Point3) -> f64 {
        (self.normal.dot(&p.coords) + self.d).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacParams {
    pub dist_thresh: f64,
    /// Largest accepted angle between the plane normal and +z.
    pub max_angle_deg: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            dist_thresh: 0.05,
            max_angle_deg: 15.0,
            iterations: 500,
            seed: 0,
        }
    }
}

/// Best near-horizontal plane among `iterations` random three-point
/// hypotheses; returns it with the cloud minus its inliers.
///
/// Hypotheses are drawn sequentially from one seeded stream and scored in
/// parallel; ties go to the earlier hypothesis.
pub fn ransac_ground(cloud: &PointCloud, params: &RansacParams) -> Result<(PlaneModel, PointCloud)> {
    let n = cloud.len();
    if n < 3 {
        return Err(Error::SegmentTooSmall { got: n, need: 3 });
    }
    let cos_max = params.max_angle_deg.to_radians().cos();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let pts = &cloud.points;
    let hypotheses: Vec<(Vector3<f64>, f64)> = (0..params.iterations)
        .filter_map(|_| {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let c = rng.random_range(0..n);
            let nrm = (pts[b] - pts[a]).cross(&(pts[c] - pts[a]));
            let len = nrm.norm();
            if !(len > 0.0) {
                return None;
            }
            let mut nrm = nrm / len;
            if nrm.z < 0.0 {
                nrm = -nrm;
            }
            (nrm.z >= cos_max).then(|| (nrm, -nrm.dot(&pts[a].coords)))
        })
        .collect();
    if hypotheses.is_empty() {
        return Err(Error::NoGroundPlane {
            max_angle_deg: params.max_angle_deg,
        });
    }
    let (best, _) = hypotheses
        .par_iter()
        .enumerate()
        .map(|(h, (nrm, d))| {
            let count = pts.iter().filter(|p| (nrm.dot(&p.coords) + d).abs() <= params.dist_thresh).count();
            (h, count)
        })
        .reduce(|| (usize::MAX, 0), |x, y| if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) { y } else { x });
    let (normal, d) = hypotheses[best];
    let mut plane = PlaneModel {
        normal,
        d,
        inliers: Vec::new(),
    };
    plane.inliers = (0..n).filter(|&i| plane.distance(&pts[i]) <= params.dist_thresh).collect();
    let rest = remove_plane(cloud, &plane, params.dist_thresh);
    Ok((plane, rest))
}

/// Points farther than `dist_thresh` from `plane`.
pub fn remove_plane(cloud: &PointCloud, plane: &PlaneModel, dist_thresh: f64) -> PointCloud {
    cloud.filter(|_, p| plane.distance(p) > dist_thresh)
}
