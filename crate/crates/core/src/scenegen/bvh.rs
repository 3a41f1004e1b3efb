//! Bounding volume hierarchy over triangles for first-hit ray queries.

use nalgebra::Vector3;

use super::mesh::Triangle;
use crate::geometry::{Aabb, Point3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: Aabb,
    /// Leaf: `count > 0`, triangles `first..first + count`.
    /// Interior: `count == 0`, children at `first` and `first + 1`.
    first: u32,
    count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Triangles reordered so every leaf owns a contiguous range.
    triangles: Vec<Triangle>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
}

impl Bvh {
    pub fn build(mut triangles: Vec<Triangle>) -> Self {
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            nodes.push(BvhNode {
                bounds: bounds_of(&triangles),
                first: 0,
                count: triangles.len() as u32,
            });
            split(&mut nodes, 0, &mut triangles);
        }
        Self { nodes, triangles }
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Closest intersection with `t` in `(0, t_max)`.
    pub fn first_hit(&self, origin: &Point3, dir: &Vector3<f64>, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !slab(&node.bounds, origin, &inv, limit) {
                continue;
            }
            if node.count > 0 {
                let range = node.first as usize..(node.first + node.count) as usize;
                for i in range {
                    if let Some(t) = self.triangles[i].intersect(origin, dir, 0.0, limit) {
                        limit = t;
                        best = Some(Hit { t, triangle: i });
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.first + 1;
                sp += 2;
            }
        }
        best
    }
}

fn bounds_of(tris: &[Triangle]) -> Aabb {
    Aabb::from_points(tris.iter().flat_map(|t| t.v.iter())).unwrap()
}

fn split(nodes: &mut Vec<BvhNode>, idx: usize, tris: &mut [Triangle]) {
    let (first, count) = (nodes[idx].first as usize, nodes[idx].count as usize);
    if count <= LEAF_SIZE {
        return;
    }
    let slice = &mut tris[first..first + count];
    let centroids = Aabb::from_points(slice.iter().map(|t| t.centroid()).collect::<Vec<_>>().iter()).unwrap();
    let ext = centroids.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    if ext[axis] <= 0.0 {
        return;
    }
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |a, b| a.centroid()[axis].total_cmp(&b.centroid()[axis]));
    let left = BvhNode {
        bounds: bounds_of(&slice[..mid]),
        first: first as u32,
        count: mid as u32,
    };
    let right = BvhNode {
        bounds: bounds_of(&slice[mid..]),
        first: (first + mid) as u32,
        count: (count - mid) as u32,
    };
    let child = nodes.len();
    nodes.push(left);
    nodes.push(right);
    nodes[idx].first = child as u32;
    nodes[idx].count = 0;
    split(nodes, child, tris);
    split(nodes, child + 1, tris);
}

#[inline]
fn slab(b: &Aabb, o: &Point3, inv: &Vector3<f64>, t_max: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for a in 0..3 {
        let mut near = (b.min[a] - o[a]) * inv[a];
        let mut far = (b.max[a] - o[a]) * inv[a];
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        // NaN (0 · ∞ for rays lying in a slab plane) must not reject the box.
        if near > t0 {
            t0 = near;
        }
        if far < t1 {
            t1 = far;
        }
        if t0 > t1 {
            return false;
        }
    }
    true
}
