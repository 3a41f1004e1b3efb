use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::alignment::{icp_coarse_to_fine, icp_register, IcpParams};
use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, Pca, Point3, PointCloud, RigidTransform};
use crate::segmentation::Segment;
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairParams {
    pub max_iter: usize,
    /// Candidates whose RMS is within `rms_slack · best + rms_floor` of the
    /// best are considered equally good, and the smallest rotation among
    /// them wins.
    pub rms_slack: f64,
    pub rms_floor: f64,
    /// Correspondence distances of the refinement run on the chosen start,
    /// which drops parts seen by only one mission.
    pub refine_schedule: [f64; 3],
    /// Restricts the rotation to yaw about the vertical axis, for objects
    /// that rest on the floor.
    pub planar: bool,
}

impl Default for PairParams {
    fn default() -> Self {
        Self {
            max_iter: 50,
            rms_slack: 1.1,
            rms_floor: 0.005,
            refine_schedule: [0.2, 0.1, 0.05],
            planar: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRegistration {
    /// Maps the first instance onto the second.
    pub transform: RigidTransform,
    /// Nearest-neighbour RMS of the aligned first instance.
    pub rms: f64,
    /// Either cloud is (nearly) collinear; only the centroid shift is
    /// recovered.
    pub degenerate: bool,
}

fn centred(seg: &Segment) -> (Vector3<f64>, PointCloud) {
    let c = seg.centroid.coords;
    let pts = seg.cloud.points.iter().map(|p| Point3::from(p.coords - c)).collect();
    (c, PointCloud::new(pts))
}

fn rank_below_two(pca: &Pca) -> bool {
    let top = pca.eigenvalues[2];
    !(top > 0.0) || pca.eigenvalues[1] <= 1e-10 * top
}

fn candidates(a: &PointCloud, b: &PointCloud, pa: &Pca, pb: &Pca) -> Vec<Matrix3<f64>> {
    let mut out = vec![Matrix3::identity()];
    if a.len() == b.len() {
        if let Some(t) = fit_rigid(&a.points, &b.points) {
            out.push(*t.rotation());
        }
    }
    for k in 1..4 {
        let yaw = RigidTransform::from_yaw(k as f64 * std::f64::consts::FRAC_PI_2, Vector3::zeros());
        out.push(*yaw.rotation());
    }
    for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let s = Matrix3::from_diagonal(&Vector3::new(sx, sy, sx * sy));
        let ea = det_fixed(pa.eigenvectors);
        let eb = det_fixed(pb.eigenvectors);
        out.push(eb * s * ea.transpose());
    }
    out
}

fn det_fixed(mut m: Matrix3<f64>) -> Matrix3<f64> {
    if m.determinant() < 0.0 {
        m.column_mut(0).neg_mut();
    }
    m
}

/// Yaw-only part of a rotation, keeping the translation.
fn yaw_part(t: &RigidTransform) -> RigidTransform {
    let r = t.rotation();
    RigidTransform::from_yaw(r[(1, 0)].atan2(r[(0, 0)]), *t.translation())
}

/// Least-squares yaw and translation taking `src` onto `dst`.
fn fit_yaw(src: &[Point3], dst: &[Point3]) -> Option<RigidTransform> {
    if src.len() < 2 || src.len() != dst.len() {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (a, b) = (p.coords - cs, q.coords - cd);
        sxx += a.x * b.x + a.y * b.y;
        sxy += a.x * b.y - a.y * b.x;
    }
    if sxx == 0.0 && sxy == 0.0 {
        return None;
    }
    let yaw = sxy.atan2(sxx);
    let r = RigidTransform::from_yaw(yaw, Vector3::zeros());
    Some(RigidTransform::from_yaw(yaw, cd - r.apply_vector(&cs)))
}

/// Point-to-point ICP restricted to yaw and translation, with the same
/// accept-only-if-not-worse rule as the general solver.
fn planar_icp(source: &PointCloud, target: &PointCloud, init: &RigidTransform, params: &IcpParams) -> Result<(f64, RigidTransform)> {
    let tree = KdTree::new(&target.points);
    let d2max = params.corr_dist * params.corr_dist;
    let matches = |t: &RigidTransform| {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut sum = 0.0;
        for p in &source.points {
            if let Some((j, d2)) = tree.nearest(&t.apply(p)) {
                if d2 <= d2max {
                    src.push(*p);
                    dst.push(target.points[j]);
                    sum += d2;
                }
            }
        }
        let rms = if src.is_empty() { f64::INFINITY } else { (sum / src.len() as f64).sqrt() };
        (src, dst, rms)
    };
    let mut t = *init;
    let (mut src, mut dst, mut rms) = matches(&t);
    if src.len() < 3 {
        return Err(Error::Divergence(format!("{} correspondences within {} m", src.len(), params.corr_dist)));
    }
    for _ in 0..params.max_iter {
        let Some(next) = fit_yaw(&src, &dst) else { break };
        let (s2, d2, r2) = matches(&next);
        if !(r2 <= rms) || s2.len() < 3 {
            break;
        }
        let gain = rms - r2;
        (t, src, dst, rms) = (next, s2, d2, r2);
        if gain < params.convergence_eps {
            break;
        }
    }
    Ok((rms, t))
}

/// Rigid transform taking object instance `a` onto instance `b`.
///
/// Both clouds are centred on their centroids, then ICP with unlimited
/// correspondence distance runs from several starting rotations (identity,
/// quarter turns about z, principal-frame alignments and, for clouds of
/// equal size, the index-order fit). Among near-best results the smallest
/// rotation is kept, which resolves symmetric shapes towards the least
/// motion, and is then refined with shrinking correspondence distances.
pub fn register_pair(a: &Segment, b: &Segment, params: &PairParams) -> Result<PairRegistration> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::SegmentTooSmall {
            got: a.len().min(b.len()),
            need: 3,
        });
    }
    let (ca, ac) = centred(a);
    let (cb, bc) = centred(b);
    let pa = Pca::of(&ac.points).expect("non-empty");
    let pb = Pca::of(&bc.points).expect("non-empty");
    if rank_below_two(&pa) || rank_below_two(&pb) {
        return Ok(PairRegistration {
            transform: RigidTransform::from_translation(cb - ca),
            rms: f64::NAN,
            degenerate: true,
        });
    }
    let reach = ac.points.iter().chain(&bc.points).map(|p| p.coords.norm()).fold(0.0, f64::max);
    let icp = IcpParams {
        max_iter: params.max_iter,
        corr_dist: 4.0 * reach + 1.0,
        convergence_eps: 1e-12,
    };
    let mut results: Vec<(f64, RigidTransform)> = Vec::new();
    for r in candidates(&ac, &bc, &pa, &pb) {
        let init = RigidTransform::from_parts_projected(r, Vector3::zeros());
        let init = if params.planar { yaw_part(&init) } else { init };
        let (fitness, t) = if params.planar {
            planar_icp(&ac, &bc, &init, &icp)?
        } else {
            let res = icp_register(&ac, &bc, &init, &icp)?;
            (res.fitness, res.transform)
        };
        results.push((fitness, t));
    }
    let best = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let limit = params.rms_slack * best + params.rms_floor;
    let (rms, local) = results
        .into_iter()
        .filter(|r| r.0 <= limit)
        .min_by(|x, y| x.1.rotation_angle().total_cmp(&y.1.rotation_angle()).then(x.0.total_cmp(&y.0)))
        .expect("best is within the limit");
    let [s0, s1, last] = params.refine_schedule;
    let fine = IcpParams {
        max_iter: params.max_iter,
        corr_dist: last,
        convergence_eps: 1e-12,
    };
    let local = if params.planar {
        let mut t = local;
        for corr_dist in [s0, s1, last] {
            match planar_icp(&ac, &bc, &t, &IcpParams { corr_dist, ..fine }) {
                Ok((_, next)) => t = next,
                Err(_) => break,
            }
        }
        t
    } else {
        match icp_coarse_to_fine(&ac, &bc, &local, &fine, &[s0, s1]) {
            Ok(r) => r.transform,
            Err(_) => local,
        }
    };
    let transform = RigidTransform::from_translation(cb) * local * RigidTransform::from_translation(-ca);
    Ok(PairRegistration {
        transform,
        rms,
        degenerate: false,
    })
}
