//! Triangle tessellation of the primitive shapes.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use super::Shape;
use crate::geometry::{Aabb, Label, Point3, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v: [Point3; 3],
    pub label: Label,
}

impl Triangle {
    pub fn centroid(&self) -> Point3 {
        Point3::from((self.v[0].coords + self.v[1].coords + self.v[2].coords) / 3.0)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.v).unwrap()
    }

    pub fn normal(&self) -> Vector3<f64> {
        (self.v[1] - self.v[0]).cross(&(self.v[2] - self.v[0])).normalize()
    }

    /// Möller–Trumbore; returns the ray parameter of a hit in `(t_min, t_max)`.
    #[inline]
    pub fn intersect(&self, origin: &Point3, dir: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
        const EPS: f64 = 1e-12;
        let e1 = self.v[1] - self.v[0];
        let e2 = self.v[2] - self.v[0];
        let pvec = dir.cross(&e2);
        let det = e1.dot(&pvec);
        if det.abs() < EPS {
            return None;
        }
        let inv = 1.0 / det;
        let tvec = origin - self.v[0];
        let u = tvec.dot(&pvec) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let qvec = tvec.cross(&e1);
        let v = dir.dot(&qvec) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(&qvec) * inv;
        (t > t_min && t < t_max).then_some(t)
    }
}

/// Number of segments around cylinders and spheres.
pub const ROUND_SEGMENTS: usize = 24;
/// Latitude bands of a sphere.
pub const SPHERE_STACKS: usize = 12;

pub fn tessellate(shape: &Shape, pose: &RigidTransform, label: Label, out: &mut Vec<Triangle>) {
    let mut push = |a: Point3, b: Point3, c: Point3| {
        out.push(Triangle {
            v: [pose.apply(&a), pose.apply(&b), pose.apply(&c)],
            label,
        })
    };
    match shape {
        Shape::Box { size } => {
            let h = Vector3::new(size[0], size[1], size[2]) * 0.5;
            let corner = |sx: f64, sy: f64, sz: f64| Point3::new(sx * h.x, sy * h.y, sz * h.z);
            // Each face as (corner signs) in counter-clockwise order seen from outside.
            let faces: [[(f64, f64, f64); 4]; 6] = [
                [(1., -1., -1.), (1., 1., -1.), (1., 1., 1.), (1., -1., 1.)],
                [(-1., 1., -1.), (-1., -1., -1.), (-1., -1., 1.), (-1., 1., 1.)],
                [(1., 1., -1.), (-1., 1., -1.), (-1., 1., 1.), (1., 1., 1.)],
                [(-1., -1., -1.), (1., -1., -1.), (1., -1., 1.), (-1., -1., 1.)],
                [(-1., -1., 1.), (1., -1., 1.), (1., 1., 1.), (-1., 1., 1.)],
                [(-1., 1., -1.), (1., 1., -1.), (1., -1., -1.), (-1., -1., -1.)],
            ];
            for f in faces {
                let q: Vec<Point3> = f.iter().map(|&(x, y, z)| corner(x, y, z)).collect();
                push(q[0], q[1], q[2]);
                push(q[0], q[2], q[3]);
            }
        }
        Shape::Cylinder { radius, height } => {
            let n = ROUND_SEGMENTS;
            let hz = height * 0.5;
            let ring = |i: usize, z: f64| {
                let a = TAU * (i % n) as f64 / n as f64;
                Point3::new(radius * a.cos(), radius * a.sin(), z)
            };
            let top = Point3::new(0.0, 0.0, hz);
            let bottom = Point3::new(0.0, 0.0, -hz);
            for i in 0..n {
                let (b0, b1, t0, t1) = (ring(i, -hz), ring(i + 1, -hz), ring(i, hz), ring(i + 1, hz));
                push(b0, b1, t1);
                push(b0, t1, t0);
                push(top, t0, t1);
                push(bottom, b1, b0);
            }
        }
        Shape::Sphere { radius } => {
            let (n, m) = (ROUND_SEGMENTS, SPHERE_STACKS);
            let vertex = |i: usize, j: usize| {
                let theta = PI * j as f64 / m as f64;
                let phi = TAU * (i % n) as f64 / n as f64;
                Point3::new(radius * theta.sin() * phi.cos(), radius * theta.sin() * phi.sin(), radius * theta.cos())
            };
            for j in 0..m {
                for i in 0..n {
                    let (a, b, c, d) = (vertex(i, j), vertex(i + 1, j), vertex(i + 1, j + 1), vertex(i, j + 1));
                    if j != 0 {
                        push(a, d, b);
                    }
                    if j != m - 1 {
                        push(b, d, c);
                    }
                }
            }
        }
        Shape::Composite { parts } => {
            for part in parts {
                tessellate(&part.shape, &(*pose * part.pose.to_transform()), label, out);
            }
        }
    }
}

/// Two triangles spanning the footprint of `extent` at its floor height.
pub fn ground_plane(extent: &Aabb, label: Label) -> [Triangle; 2] {
    let z = extent.min.z;
    let (a, b) = (extent.min, extent.max);
    let p = [
        Point3::new(a.x, a.y, z),
        Point3::new(b.x, a.y, z),
        Point3::new(b.x, b.y, z),
        Point3::new(a.x, b.y, z),
    ];
    [
        Triangle { v: [p[0], p[1], p[2]], label },
        Triangle { v: [p[0], p[2], p[3]], label },
    ]
}
