#![allow(dead_code)]

use lidar_change::descriptors::{Descriptor, DescribedObject, DESCRIPTOR_DIM};
use lidar_change::geometry::{Point3, PointCloud, RigidTransform};
use lidar_change::octree::{KeyFrame, VoxelKey};
use lidar_change::segmentation::Segment;
use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rigid(rng: &mut impl Rng, t_scale: f64) -> RigidTransform {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let axis = if axis.norm() < 1e-6 { Vector3::z() } else { axis };
    let t = Vector3::new(
        rng.random_range(-t_scale..t_scale),
        rng.random_range(-t_scale..t_scale),
        rng.random_range(-t_scale..t_scale),
    );
    RigidTransform::from_axis_angle(axis, rng.random_range(-3.1..3.1), t)
}

pub fn small_motion(rng: &mut impl Rng, t: f64, r: f64) -> RigidTransform {
    let mut xi = Vector6::zeros();
    for k in 0..3 {
        xi[k] = rng.random_range(-t..t);
        xi[k + 3] = rng.random_range(-r..r);
    }
    RigidTransform::exp(&xi)
}

/// Points on the surface of an axis-aligned box centred at `c`, faces
/// sampled in proportion to their area.
pub fn box_surface(rng: &mut impl Rng, c: Point3, size: [f64; 3], n: usize) -> Vec<Point3> {
    let [sx, sy, sz] = size;
    let areas = [sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy];
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.random_range(0.0..total);
        let mut face = 0;
        while pick > areas[face] && face < 5 {
            pick -= areas[face];
            face += 1;
        }
        let (u, v) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let sign = if face % 2 == 0 { -0.5 } else { 0.5 };
        let p = match face / 2 {
            0 => Vector3::new(sign * sx, u * sy, v * sz),
            1 => Vector3::new(u * sx, sign * sy, v * sz),
            _ => Vector3::new(u * sx, v * sy, sign * sz),
        };
        out.push(c + p);
    }
    out
}

pub fn cylinder_surface(rng: &mut impl Rng, c: Point3, r: f64, h: f64, n: usize) -> Vec<Point3> {
    let side = std::f64::consts::TAU * r * h;
    let cap = std::f64::consts::PI * r * r;
    (0..n)
        .map(|_| {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let pick = rng.random_range(0.0..side + 2.0 * cap);
            if pick < side {
                c + Vector3::new(r * a.cos(), r * a.sin(), rng.random_range(-0.5..0.5) * h)
            } else {
                let rr = r * rng.random_range(0.0f64..1.0).sqrt();
                let z = if pick < side + cap { -0.5 * h } else { 0.5 * h };
                c + Vector3::new(rr * a.cos(), rr * a.sin(), z)
            }
        })
        .collect()
}

pub fn sphere_surface(rng: &mut impl Rng, c: Point3, r: f64, n: usize) -> Vec<Point3> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let v = Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
            c + v.normalize() * r
        })
        .collect()
}

/// Table-like composite: a top slab and four legs.
pub fn table_surface(rng: &mut impl Rng, c: Point3, size: [f64; 3], n: usize) -> Vec<Point3> {
    let [sx, sy, sz] = size;
    let top = 0.05;
    let mut pts = box_surface(rng, c + Vector3::new(0.0, 0.0, 0.5 * sz - 0.5 * top), [sx, sy, top], n * 3 / 5);
    let leg = n / 10;
    for (dx, dy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        let at = c + Vector3::new(dx * (0.5 * sx - 0.05), dy * (0.5 * sy - 0.05), -0.5 * top);
        pts.extend(box_surface(rng, at, [0.05, 0.05, sz - top], leg));
    }
    pts
}

/// Twenty objects of mixed shapes and sizes, each at roughly 5 cm point
/// spacing or finer.
pub fn object_suite(seed: u64) -> Vec<Segment> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for i in 0..20 {
        let s = rng.random_range(0.8..1.3);
        let o = Point3::origin();
        let pts = match i % 5 {
            0 => box_surface(&mut rng, o, [0.6 * s, 0.4 * s, 0.5 * s], 1500),
            1 => box_surface(&mut rng, o, [1.6 * s, 0.3 * s, 0.3 * s], 1500),
            2 => cylinder_surface(&mut rng, o, 0.25 * s, 0.9 * s, 1500),
            3 => sphere_surface(&mut rng, o, 0.35 * s, 1200),
            _ => table_surface(&mut rng, o, [1.2 * s, 0.7 * s, 0.75 * s], 2000),
        };
        out.push(Segment::new(i, 1, PointCloud::new(pts)).unwrap());
    }
    out
}

pub fn transformed(seg: &Segment, t: &RigidTransform) -> Segment {
    let pts = seg.cloud.points.iter().map(|p| t.apply(p)).collect();
    Segment::new(seg.id, seg.mission, PointCloud::new(pts)).unwrap()
}

/// Random unit-free rows around `k` well-separated centres.
pub fn blobs(rng: &mut impl Rng, k: usize, per: usize, dim: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let centres: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
    let noise = Normal::new(0.0, spread).unwrap();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per {
            rows.push(centre.iter().map(|v| v + noise.sample(rng)).collect());
            truth.push(c);
        }
    }
    (rows, truth)
}

/// Object with a one-point segment at `at` and a random descriptor.
pub fn random_object(rng: &mut impl Rng, id: u64, mission: u32, extent: f64) -> DescribedObject {
    let at = Point3::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent), rng.random_range(0.0..1.0));
    let mut v = [0.0; DESCRIPTOR_DIM];
    for x in &mut v {
        *x = rng.random_range(0.0..1.0);
    }
    DescribedObject {
        segment: Segment::new(id, mission, PointCloud::new(vec![at])).unwrap(),
        descriptor: Descriptor::new(v).unwrap(),
    }
}

pub fn random_point(rng: &mut impl Rng, r: f64) -> Point3 {
    Point3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

/// Reference traversal: collect every parameter at which the segment crosses
/// a grid plane, then read off the voxel at the midpoint of each interval.
pub fn reference_traversal(frame: &KeyFrame, from: &Point3, to: &Point3) -> Vec<VoxelKey> {
    let res = frame.resolution;
    let mut ts = vec![0.0, 1.0];
    for a in 0..3 {
        let (g0, g1) = (from[a] / res, to[a] / res);
        let (lo, hi) = (g0.min(g1), g0.max(g1));
        let mut plane = lo.floor() + 1.0;
        while plane <= hi {
            ts.push((plane - g0) / (g1 - g0));
            plane += 1.0;
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut keys: Vec<VoxelKey> = Vec::new();
    for w in ts.windows(2) {
        if w[1] - w[0] < 1e-12 {
            continue;
        }
        let t = 0.5 * (w[0] + w[1]);
        let p = from + (to - from) * t;
        let k = frame.key_of(&p).unwrap();
        if keys.last() != Some(&k) {
            keys.push(k);
        }
    }
    keys
}
