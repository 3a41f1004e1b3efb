//! Points, clouds, boxes and rigid transforms shared by every stage.

mod pca;
mod transform;

pub use pca::{sorted_eigen, Pca};
pub use transform::{fit_rigid, project_to_so3, so3_exp, so3_log, RigidTransform, ORTHONORMAL_TOL};

use nalgebra::Vector3;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Per-point object id. `0` is reserved for the ground plane.
pub type Label = u32;

pub fn is_finite(p: &Point3) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

/// Axis-aligned box, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if !(is_finite(&min) && is_finite(&max)) {
            return Err(Error::InvalidArgument("box corners must be finite".into()));
        }
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(Error::InvalidArgument(format!(
                "box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.min.x <= p.x
            && p.x <= self.max.x
            && self.min.y <= p.y
            && p.y <= self.max.y
            && self.min.z <= p.z
            && p.z <= self.max.z
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| {
            (
                Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        });
        Some(Self { min, max })
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }
}

/// Positions with optional per-point labels and an optional sensor origin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub labels: Option<Vec<Label>>,
    pub origin: Option<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            labels: None,
            origin: None,
        }
    }

    pub fn with_labels(points: Vec<Point3>, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            labels: Some(labels),
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: Point3) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<Label> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Checks the finiteness and label-length invariants.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.points.iter().position(|p| !is_finite(p)) {
            return Err(Error::NonFinite {
                location: format!("point {i}"),
            });
        }
        if let Some(o) = &self.origin {
            if !is_finite(o) {
                return Err(Error::NonFinite {
                    location: "origin".into(),
                });
            }
        }
        match &self.labels {
            Some(l) if l.len() != self.points.len() => Err(Error::InvalidArgument(format!(
                "{} labels for {} points",
                l.len(),
                self.points.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Cloud made of the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            origin: self.origin,
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(usize, &Point3) -> bool) -> PointCloud {
        let idx: Vec<usize> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, p)| keep(*i, p))
            .map(|(i, _)| i)
            .collect();
        self.select(&idx)
    }

    /// Appends `other`. Labels survive only if both sides carry them;
    /// the origin of `self` is kept.
    pub fn extend(&mut self, other: &PointCloud) {
        let both_labelled = (self.labels.is_some() || self.points.is_empty()) && other.labels.is_some();
        if both_labelled {
            let labels = self.labels.get_or_insert_with(Vec::new);
            labels.extend_from_slice(other.labels.as_ref().unwrap());
        } else {
            self.labels = None;
        }
        self.points.extend_from_slice(&other.points);
        if self.origin.is_none() {
            self.origin = other.origin;
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        Some(Point3::from(mean_of(&self.points)))
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }
}

/// Compensated (Kahan–Neumaier) mean of point coordinates.
pub fn mean_of(points: &[Point3]) -> Vector3<f64> {
    let mut sum = [KahanSum::default(); 3];
    for p in points {
        for (s, v) in sum.iter_mut().zip(p.coords.iter()) {
            s.add(*v);
        }
    }
    let n = points.len().max(1) as f64;
    Vector3::new(sum[0].value() / n, sum[1].value() / n, sum[2].value() / n)
}

/// Neumaier's variant of compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Maps every point (and the origin) through `t`. Labels are carried over.
pub fn transform_cloud(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
        labels: cloud.labels.clone(),
        origin: cloud.origin.map(|o| t.apply(&o)),
    }
}

/// Points inside `aabb` (inclusive), labels preserved.
pub fn crop_box(cloud: &PointCloud, aabb: &Aabb) -> PointCloud {
    cloud.filter(|_, p| aabb.contains(p))
}

/// Integer cell of `p` on a grid of edge `leaf` anchored at the origin.
#[inline]
pub fn voxel_of(p: &Point3, leaf: f64) -> [i64; 3] {
    [
        (p.x / leaf).floor() as i64,
        (p.y / leaf).floor() as i64,
        (p.z / leaf).floor() as i64,
    ]
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// Output order follows the first occurrence of each voxel in the input. A
/// voxel's label is the most frequent label among its points (smallest id on
/// ties).
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud> {
    if !(leaf > 0.0) || !leaf.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "voxel leaf must be positive, got {leaf}"
        )));
    }
    struct Acc {
        sum: [KahanSum; 3],
        n: usize,
        labels: Vec<Label>,
    }
    let mut order: Vec<[i64; 3]> = Vec::new();
    let mut cells: FxHashMap<[i64; 3], Acc> = FxHashMap::default();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = voxel_of(p, leaf);
        let acc = cells.entry(key).or_insert_with(|| {
            order.push(key);
            Acc {
                sum: [KahanSum::default(); 3],
                n: 0,
                labels: Vec::new(),
            }
        });
        for (s, v) in acc.sum.iter_mut().zip(p.coords.iter()) {
            s.add(*v);
        }
        acc.n += 1;
        if let Some(l) = cloud.label(i) {
            acc.labels.push(l);
        }
    }
    let mut points = Vec::with_capacity(order.len());
    let mut labels = cloud.labels.as_ref().map(|_| Vec::with_capacity(order.len()));
    for key in &order {
        let acc = cells.get_mut(key).unwrap();
        let n = acc.n as f64;
        points.push(Point3::new(
            acc.sum[0].value() / n,
            acc.sum[1].value() / n,
            acc.sum[2].value() / n,
        ));
        if let Some(out) = labels.as_mut() {
            out.push(majority_label(&mut acc.labels));
        }
    }
    Ok(PointCloud {
        points,
        labels,
        origin: cloud.origin,
    })
}

fn majority_label(labels: &mut [Label]) -> Label {
    labels.sort_unstable();
    let mut best = (labels[0], 0usize);
    let mut i = 0;
    while i < labels.len() {
        let j = labels[i..].iter().take_while(|&&l| l == labels[i]).count();
        if j > best.1 {
            best = (labels[i], j);
        }
        i += j;
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect::<Vec<_>>();
        let labels = (0..n).map(|_| rng.random_range(0..5)).collect();
        PointCloud::with_labels(points, labels).unwrap()
    }

    #[test]
    fn identity_transform_is_noop() {
        let c = random_cloud(100, 1).with_origin(Point3::new(1.0, 2.0, 3.0));
        assert_eq!(transform_cloud(&c, &RigidTransform::identity()), c);
    }

    #[test]
    fn translation_moves_point_and_origin() {
        let c = PointCloud::new(vec![Point3::origin()]).with_origin(Point3::origin());
        let t = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let out = transform_cloud(&c, &t);
        assert_eq!(out.points[0], Point3::new(1.0, 0.0, 0.0));
        assert_eq!(out.origin, Some(Point3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn transform_then_inverse_restores() {
        let c = random_cloud(500, 2);
        let t = RigidTransform::from_axis_angle(Vector3::new(1.0, -2.0, 0.3), 2.2, Vector3::new(3.0, -1.0, 7.0));
        let back = transform_cloud(&transform_cloud(&c, &t), &t.inverse());
        for (a, b) in c.points.iter().zip(&back.points) {
            assert!((a - b).norm() < 1e-9);
        }
        assert_eq!(back.labels, c.labels);
    }

    #[test]
    fn crop_box_full_and_degenerate() {
        let c = random_cloud(200, 3);
        let all = Aabb::from_points(&c.points).unwrap();
        assert_eq!(crop_box(&c, &all), c);
        let p = c.points[17];
        let single = crop_box(&c, &Aabb::new(p, p).unwrap());
        assert_eq!(single.points, vec![p]);
        assert_eq!(single.labels, Some(vec![c.labels.as_ref().unwrap()[17]]));
    }

    #[test]
    fn crop_box_matches_predicate_scan() {
        let c = random_cloud(2000, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let b = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let bx = Aabb::new(a.inf(&b), a.sup(&b)).unwrap();
            let out = crop_box(&c, &bx);
            let mut expected = Vec::new();
            for p in &c.points {
                let inside = (0..3).all(|k| bx.min[k] <= p[k] && p[k] <= bx.max[k]);
                if inside {
                    expected.push(*p);
                }
            }
            assert_eq!(out.points, expected);
        }
    }

    #[test]
    fn invalid_box_rejected() {
        assert!(Aabb::new(Point3::new(1.0, 0.0, 0.0), Point3::origin()).is_err());
    }

    #[test]
    fn downsample_two_points_one_voxel() {
        let c = PointCloud::new(vec![Point3::new(0.01, 0.01, 0.01), Point3::new(0.03, 0.05, 0.07)]);
        let out = voxel_downsample(&c, 0.1).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.points[0] - Point3::new(0.02, 0.03, 0.04)).norm() < 1e-12);
    }

    #[test]
    fn downsample_small_leaf_keeps_points() {
        let c = random_cloud(300, 6);
        let out = voxel_downsample(&c, 1e-4).unwrap();
        assert_eq!(out.len(), c.len());
        for (a, b) in c.points.iter().zip(&out.points) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn downsample_counts_match_hash_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Point3> = (0..1000)
            .map(|_| Point3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let c = PointCloud::new(pts.clone());
        let out = voxel_downsample(&c, 0.1).unwrap();
        let cells: HashSet<(i64, i64, i64)> = pts
            .iter()
            .map(|p| ((p.x * 10.0).floor() as i64, (p.y * 10.0).floor() as i64, (p.z * 10.0).floor() as i64))
            .collect();
        assert_eq!(out.len(), cells.len());
    }

    #[test]
    fn downsample_rejects_bad_leaf() {
        let c = random_cloud(10, 8);
        assert!(voxel_downsample(&c, 0.0).is_err());
        assert!(voxel_downsample(&c, -1.0).is_err());
        assert!(voxel_downsample(&c, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn transform_preserves_distances(seed in 0u64..1000, angle in 0.0f64..6.0, tx in -50.0f64..50.0) {
            let c = random_cloud(30, seed);
            let t = RigidTransform::from_axis_angle(Vector3::new(0.2, 0.7, -0.4), angle, Vector3::new(tx, 1.0, -2.0));
            let out = transform_cloud(&c, &t);
            for i in 0..c.len() {
                for j in 0..c.len() {
                    let d0 = (c.points[i] - c.points[j]).norm();
                    let d1 = (out.points[i] - out.points[j]).norm();
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn crop_is_idempotent(seed in 0u64..1000, lo in -5.0f64..0.0, hi in 0.0f64..5.0) {
            let c = random_cloud(200, seed);
            let bx = Aabb::new(Point3::new(lo, lo, lo), Point3::new(hi, hi, hi)).unwrap();
            let once = crop_box(&c, &bx);
            prop_assert_eq!(crop_box(&once, &bx), once);
        }

        #[test]
        fn downsample_one_point_per_voxel(seed in 0u64..1000, leaf in 0.05f64..2.0) {
            let c = random_cloud(300, seed);
            let out = voxel_downsample(&c, leaf).unwrap();
            prop_assert!(out.len() <= c.len());
            let cells: HashSet<[i64; 3]> = out.points.iter().map(|p| voxel_of(p, leaf)).collect();
            prop_assert_eq!(cells.len(), out.len());
        }
    }
}
