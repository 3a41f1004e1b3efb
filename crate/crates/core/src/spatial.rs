//! Neighbourhood queries: a uniform hash grid for fixed-radius searches and
//! a static kd-tree for nearest / k-nearest lookups.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use crate::geometry::{voxel_of, Point3};

/// Uniform hash grid whose cell edge equals the query radius, so a radius
/// query only visits the 27 cells around the query point.
pub struct HashGrid<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: FxHashMap<[i64; 3], Vec<u32>>,
}

impl<'a> HashGrid<'a> {
    pub fn new(points: &'a [Point3], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell must be positive");
        let mut cells: FxHashMap<[i64; 3], Vec<u32>> = FxHashMap::default();
        for (i, p) in points.iter().enumerate() {
            cells.entry(voxel_of(p, cell)).or_default().push(i as u32);
        }
        Self { points, cell, cells }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Calls `f(index, squared distance)` for every point within `radius`
    /// (`radius` must not exceed the cell size).
    pub fn for_each_within(&self, q: &Point3, radius: f64, mut f: impl FnMut(usize, f64)) {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12));
        let r2 = radius * radius;
        let c = voxel_of(q, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if let Some(bucket) = self.cells.get(&key) {
                        for &i in bucket {
                            let d2 = (self.points[i as usize] - q).norm_squared();
                            if d2 <= r2 {
                                f(i as usize, d2);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn within(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |i, _| out.push(i));
        out
    }

    pub fn any_within(&self, q: &Point3, radius: f64) -> bool {
        let r2 = radius * radius;
        let c = voxel_of(q, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if bucket
                            .iter()
                            .any(|&i| (self.points[i as usize] - q).norm_squared() <= r2)
                        {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

#[derive(Clone, Copy)]
struct Node {
    /// Index into the permuted point order; the split point of this node.
    point: u32,
    axis: u8,
}

/// Static, balanced kd-tree stored implicitly in an array (median split).
pub struct KdTree<'a> {
    points: &'a [Point3],
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then_with(|| self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let mut idx: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = vec![Node { point: 0, axis: 0 }; points.len()];
        build(points, &mut idx, &mut nodes, 0, 0);
        Self { points, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point and its squared distance.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, self.nodes.len(), q, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, lo: usize, hi: usize, q: &Point3, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let node = self.nodes[mid];
        let p = &self.points[node.point as usize];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && (node.point as usize) < best.0) {
            *best = (node.point as usize, d2);
        }
        let diff = q[node.axis as usize] - p[node.axis as usize];
        let (first, second) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(first.0, first.1, q, best);
        if diff * diff <= best.1 {
            self.nearest_rec(second.0, second.1, q, best);
        }
    }

    /// The `k` nearest points sorted by distance (ties by index).
    pub fn knn(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, self.nodes.len(), q, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|Candidate(d, i)| (i, d)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn knn_rec(&self, lo: usize, hi: usize, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let node = self.nodes[mid];
        let p = &self.points[node.point as usize];
        let cand = Candidate((p - q).norm_squared(), node.point as usize);
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }
        let diff = q[node.axis as usize] - p[node.axis as usize];
        let (first, second) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(first.0, first.1, q, k, heap);
        if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
            self.knn_rec(second.0, second.1, q, k, heap);
        }
    }

    /// All points within `radius`, unsorted.
    pub fn within(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_rec(0, self.nodes.len(), q, radius * radius, &mut out);
        out
    }

    fn within_rec(&self, lo: usize, hi: usize, q: &Point3, r2: f64, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let node = self.nodes[mid];
        let p = &self.points[node.point as usize];
        if (p - q).norm_squared() <= r2 {
            out.push(node.point as usize);
        }
        let diff = q[node.axis as usize] - p[node.axis as usize];
        if diff <= 0.0 || diff * diff <= r2 {
            self.within_rec(lo, mid, q, r2, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.within_rec(mid + 1, hi, q, r2, out);
        }
    }
}

fn build(points: &[Point3], idx: &mut [u32], nodes: &mut [Node], offset: usize, depth: usize) {
    if idx.is_empty() {
        return;
    }
    // Split along the widest axis of this node's points.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in idx.iter() {
        let p = &points[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(depth % 3);
    let mid = idx.len() / 2;
    idx.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis].total_cmp(&points[b as usize][axis])
    });
    nodes[offset + mid] = Node {
        point: idx[mid],
        axis: axis as u8,
    };
    let (left, rest) = idx.split_at_mut(mid);
    build(points, left, nodes, offset, depth + 1);
    build(points, &mut rest[1..], nodes, offset + mid + 1, depth + 1);
}
