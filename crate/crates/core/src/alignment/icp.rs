use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, Point3, PointCloud, RigidTransform};
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Correspondences farther apart than this are rejected.
    pub corr_dist: f64,
    /// Stop once the inlier RMS improves by less than this.
    pub convergence_eps: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 50,
            corr_dist: 0.5,
            convergence_eps: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source points into the target frame.
    pub transform: RigidTransform,
    /// RMS distance of the inlier correspondences.
    pub fitness: f64,
    /// Fraction of source points with a target neighbour within `corr_dist`.
    pub inlier_fraction: f64,
    /// Inlier RMS after each accepted iterate, starting with the initial guess.
    pub history: Vec<f64>,
}

struct Matches {
    src: Vec<Point3>,
    dst: Vec<Point3>,
    rms: f64,
}

fn correspond(source: &[Point3], tree: &KdTree, target: &[Point3], t: &RigidTransform, corr_dist: f64) -> Matches {
    let d2max = corr_dist * corr_dist;
    let pairs: Vec<(Point3, Point3, f64)> = source
        .par_iter()
        .filter_map(|p| {
            let q = t.apply(p);
            let (j, d2) = tree.nearest(&q)?;
            (d2 <= d2max).then(|| (*p, target[j], d2))
        })
        .collect();
    let n = pairs.len();
    let sum: f64 = pairs.iter().map(|x| x.2).sum();
    let (src, dst) = pairs.into_iter().map(|(a, b, _)| (a, b)).unzip();
    Matches {
        src,
        dst,
        rms: if n == 0 { f64::INFINITY } else { (sum / n as f64).sqrt() },
    }
}

/// Point-to-point ICP.
///
/// An iterate is only accepted if it does not raise the inlier RMS, so the
/// reported history is non-increasing; the first rejected step ends the run.
pub fn icp_register(source: &PointCloud, target: &PointCloud, init: &RigidTransform, params: &IcpParams) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument("ICP needs non-empty source and target".into()));
    }
    if !init.is_valid() {
        return Err(Error::InvalidArgument("ICP initial transform is not a rigid motion".into()));
    }
    if !(params.corr_dist > 0.0) {
        return Err(Error::InvalidArgument(format!("corr_dist must be positive, got {}", params.corr_dist)));
    }
    let tree = KdTree::new(&target.points);
    let mut t = *init;
    let mut m = correspond(&source.points, &tree, &target.points, &t, params.corr_dist);
    if m.src.len() < 3 {
        return Err(Error::Divergence(format!(
            "{} correspondences within {} m at the initial guess",
            m.src.len(),
            params.corr_dist
        )));
    }
    let mut history = vec![m.rms];
    for _ in 0..params.max_iter {
        let Some(step) = fit_rigid(&m.src, &m.dst) else { break };
        let next = correspond(&source.points, &tree, &target.points, &step, params.corr_dist);
        if next.src.len() < 3 || next.rms > m.rms {
            break;
        }
        let gain = m.rms - next.rms;
        t = step;
        m = next;
        history.push(m.rms);
        if gain < params.convergence_eps {
            break;
        }
    }
    Ok(IcpResult {
        transform: t,
        fitness: m.rms,
        inlier_fraction: m.src.len() as f64 / source.len() as f64,
        history,
    })
}

/// Runs ICP repeatedly with shrinking correspondence distances, each stage
/// starting from the previous result.
pub fn icp_coarse_to_fine(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
    schedule: &[f64],
) -> Result<IcpResult> {
    let mut t = *init;
    let mut last = None;
    for &d in schedule.iter().chain(std::iter::once(&params.corr_dist)) {
        let r = icp_register(source, target, &t, &IcpParams { corr_dist: d, ..*params })?;
        t = r.transform;
        last = Some(r);
    }
    Ok(last.expect("schedule always has the final stage"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::transform_cloud;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Three orthogonal, unevenly sized walls: well constrained for ICP.
    fn corner(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|i| {
                let (a, b) = (rng.random_range(0.0..2.0), rng.random_range(0.0..1.5));
                match i % 3 {
                    0 => Point3::new(a, b * 1.3, 0.0),
                    1 => Point3::new(a * 0.8, 0.0, b),
                    _ => Point3::new(0.0, a * 1.1, b * 0.7),
                }
            })
            .collect();
        PointCloud::new(pts)
    }

    #[test]
    fn self_registration_is_identity() {
        let c = corner(3000, 1);
        let r = icp_register(&c, &c, &RigidTransform::identity(), &IcpParams::default()).unwrap();
        let (rot, tr) = r.transform.error_to(&RigidTransform::identity());
        assert!(rot < 1e-9 && tr < 1e-9);
        assert!(r.fitness < 1e-9);
        assert_eq!(r.inlier_fraction, 1.0);
    }

    #[test]
    fn recovers_small_motion() {
        let src = corner(4000, 2);
        let truth = RigidTransform::from_yaw(5f64.to_radians(), Vector3::new(0.1, 0.0, 0.0));
        let dst = transform_cloud(&src, &truth);
        let r = icp_register(&src, &dst, &RigidTransform::identity(), &IcpParams { max_iter: 200, ..Default::default() }).unwrap();
        let (rot, tr) = r.transform.error_to(&truth);
        assert!(rot < 1e-3 && tr < 1e-3, "rot {rot} tr {tr}");
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn far_initial_guess_diverges() {
        let c = corner(500, 3);
        let init = RigidTransform::from_translation(Vector3::new(10.0, 0.0, 0.0));
        let err = icp_register(&c, &c, &init, &IcpParams::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }
}
