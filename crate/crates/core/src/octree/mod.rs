//! Log-odds occupancy octree.
//!
//! Leaves live at a single depth and store the clamped log-odds of
//! occupancy. Scans are integrated by ray casting: every voxel a beam
//! crosses before its endpoint is observed free, the endpoint voxel is
//! observed occupied. Space that no beam ever touched stays unknown.

mod codec;
mod diff;
mod ray;

pub use codec::{read_octree, write_octree};
pub use diff::{diff_octrees, export_changes_ply, project_changes, ChangeSet, ChangeSide, DiffOptions};
pub use ray::{trace_segment, trace_segment_with};

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Integer voxel coordinates at leaf depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl VoxelKey {
    pub fn new(i: u32, j: u32, k: u32) -> Self {
        Self { i, j, k }
    }

    fn from_signed(c: [i64; 3]) -> Self {
        Self {
            i: c[0] as u32,
            j: c[1] as u32,
            k: c[2] as u32,
        }
    }

    /// Bit-interleaved code (i lowest); sorting by it is depth-first tree
    /// order.
    pub fn morton(&self) -> u64 {
        spread(self.i) | (spread(self.j) << 1) | (spread(self.k) << 2)
    }

    pub fn from_morton(m: u64) -> Self {
        Self {
            i: compact(m),
            j: compact(m >> 1),
            k: compact(m >> 2),
        }
    }

    /// Index of the child containing this key below a node at `level`
    /// (0 = root).
    #[inline]
    fn child_index(&self, depth: u8, level: u8) -> usize {
        let shift = depth - 1 - level;
        (((self.i >> shift) & 1) | (((self.j >> shift) & 1) << 1) | (((self.k >> shift) & 1) << 2)) as usize
    }
}

fn spread(v: u32) -> u64 {
    let mut x = v as u64 & 0x1f_ffff;
    x = (x | (x << 32)) & 0x001f_0000_0000_ffff;
    x = (x | (x << 16)) & 0x001f_0000_ff00_00ff;
    x = (x | (x << 8)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x << 4)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x << 2)) & 0x1249_2492_4924_9249;
    x
}

fn compact(m: u64) -> u32 {
    let mut x = m & 0x1249_2492_4924_9249;
    x = (x | (x >> 2)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x >> 4)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x >> 8)) & 0x001f_0000_ff00_00ff;
    x = (x | (x >> 16)) & 0x001f_0000_0000_ffff;
    x = (x | (x >> 32)) & 0x1f_ffff;
    x as u32
}

/// Mapping between metric coordinates and leaf keys. The addressable cube is
/// centred on the world origin with edge `resolution · 2^depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyFrame {
    pub resolution: f64,
    pub depth: u8,
}

impl KeyFrame {
    pub fn new(resolution: f64, depth: u8) -> Self {
        Self { resolution, depth }
    }

    fn half(&self) -> i64 {
        1i64 << (self.depth - 1)
    }

    pub fn half_extent(&self) -> f64 {
        self.resolution * self.half() as f64
    }

    pub fn key_of(&self, p: &Point3) -> Option<VoxelKey> {
        let half = self.half();
        let mut c = [0i64; 3];
        for a in 0..3 {
            let v = (p[a] / self.resolution).floor();
            if !v.is_finite() {
                return None;
            }
            let v = v as i64 + half;
            if v < 0 || v >= 2 * half {
                return None;
            }
            c[a] = v;
        }
        Some(VoxelKey::from_signed(c))
    }

    /// Like [`key_of`](Self::key_of) for points already known to be inside.
    #[inline]
    pub(crate) fn key_of_unchecked(&self, p: &Point3) -> VoxelKey {
        let half = self.half();
        VoxelKey::from_signed([
            (p.x / self.resolution).floor() as i64 + half,
            (p.y / self.resolution).floor() as i64 + half,
            (p.z / self.resolution).floor() as i64 + half,
        ])
    }

    pub fn center_of(&self, key: &VoxelKey) -> Point3 {
        let half = self.half();
        let c = |v: u32| ((v as i64 - half) as f64 + 0.5) * self.resolution;
        Point3::new(c(key.i), c(key.j), c(key.k))
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let h = self.half_extent();
        (0..3).all(|a| p[a] >= -h && p[a] < h)
    }
}

/// Sensor model and tree geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OctreeParams {
    /// Leaf edge length in metres.
    pub resolution: f64,
    /// Leaf depth; the tree addresses `2^depth` voxels per axis.
    pub depth: u8,
    pub prob_hit: f64,
    pub prob_miss: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    /// Beams longer than this are truncated and contribute free space only.
    pub max_range: f64,
}

impl Default for OctreeParams {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            depth: 16,
            prob_hit: 0.7,
            prob_miss: 0.4,
            clamp_min: 0.12,
            clamp_max: 0.97,
            max_range: 120.0,
        }
    }
}

impl OctreeParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("octree: {m}")));
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return bad("resolution must be positive");
        }
        if !(2..=21).contains(&self.depth) {
            return bad("depth must be within 2..=21");
        }
        let open = |p: f64| p > 0.0 && p < 1.0;
        if !(open(self.prob_hit) && open(self.prob_miss) && open(self.clamp_min) && open(self.clamp_max)) {
            return bad("probabilities must lie strictly between 0 and 1");
        }
        if !(self.prob_hit > 0.5 && self.prob_miss < 0.5 && self.clamp_min < self.clamp_max) {
            return bad("need prob_hit > 0.5 > prob_miss and clamp_min < clamp_max");
        }
        if !(self.max_range > 0.0) {
            return bad("max_range must be positive");
        }
        Ok(())
    }
}

const NO_CHILD: u32 = 0;

/// Largest per-scan bounding grid (in voxels) tracked with a dense array.
const DENSE_SCAN_CELLS: usize = 1 << 25;

#[derive(Debug, Clone)]
struct Node {
    children: [u32; 8],
    log_odds: f64,
}

impl Node {
    fn empty() -> Self {
        Self {
            children: [NO_CHILD; 8],
            log_odds: 0.0,
        }
    }
}

/// Occupancy octree with leaves at a fixed depth.
#[derive(Debug, Clone)]
pub struct OccupancyOctree {
    params: OctreeParams,
    frame: KeyFrame,
    l_hit: f64,
    l_miss: f64,
    l_min: f64,
    l_max: f64,
    /// Arena; index 0 is the root. Child slot value 0 means "absent" since
    /// the root is never anyone's child.
    nodes: Vec<Node>,
    leaf_count: usize,
}

impl OccupancyOctree {
    pub fn new(params: OctreeParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            frame: KeyFrame::new(params.resolution, params.depth),
            l_hit: logit(params.prob_hit),
            l_miss: logit(params.prob_miss),
            l_min: logit(params.clamp_min),
            l_max: logit(params.clamp_max),
            nodes: vec![Node::empty()],
            leaf_count: 0,
            params,
        })
    }

    pub fn with_resolution(resolution: f64) -> Result<Self> {
        Self::new(OctreeParams {
            resolution,
            ..OctreeParams::default()
        })
    }

    pub fn params(&self) -> &OctreeParams {
        &self.params
    }

    pub fn frame(&self) -> &KeyFrame {
        &self.frame
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn log_odds_bounds(&self) -> (f64, f64) {
        (self.l_min, self.l_max)
    }

    fn find(&self, key: &VoxelKey) -> Option<usize> {
        let mut n = 0usize;
        for level in 0..self.frame.depth {
            let c = self.nodes[n].children[key.child_index(self.frame.depth, level)];
            if c == NO_CHILD {
                return None;
            }
            n = c as usize;
        }
        Some(n)
    }

    fn find_or_create(&mut self, key: &VoxelKey) -> (usize, bool) {
        let mut n = 0usize;
        let mut created = false;
        for level in 0..self.frame.depth {
            let slot = key.child_index(self.frame.depth, level);
            let c = self.nodes[n].children[slot];
            n = if c == NO_CHILD {
                let id = self.nodes.len();
                self.nodes.push(Node::empty());
                self.nodes[n].children[slot] = id as u32;
                created = true;
                id
            } else {
                c as usize
            };
        }
        if created {
            self.leaf_count += 1;
        }
        (n, created)
    }

    /// Adds `delta` to a leaf's log-odds and clamps.
    pub fn update_key(&mut self, key: &VoxelKey, delta: f64) {
        let (n, _) = self.find_or_create(key);
        let v = &mut self.nodes[n].log_odds;
        *v = (*v + delta).clamp(self.l_min, self.l_max);
    }

    pub fn log_odds(&self, key: &VoxelKey) -> Option<f64> {
        self.find(key).map(|n| self.nodes[n].log_odds)
    }

    pub fn occupancy_of(&self, key: &VoxelKey) -> Option<f64> {
        self.log_odds(key).map(sigmoid)
    }

    /// Occupancy probability at `p`, or `None` where space is unknown.
    pub fn query_occupancy(&self, p: &Point3) -> Option<f64> {
        self.frame.key_of(p).and_then(|k| self.occupancy_of(&k))
    }

    /// Voxels observed by one scan: `(free, occupied)`. A voxel that is the
    /// endpoint of any beam of the scan is only reported as occupied.
    pub fn scan_keys(&self, scan: &PointCloud) -> Result<(FxHashSet<VoxelKey>, FxHashSet<VoxelKey>)> {
        let (free, occupied) = self.scan_key_lists(scan)?;
        Ok((free.into_iter().collect(), occupied.into_iter().collect()))
    }

    /// Deduplicated `(free, occupied)` key lists in unspecified order.
    fn scan_key_lists(&self, scan: &PointCloud) -> Result<(Vec<VoxelKey>, Vec<VoxelKey>)> {
        let origin = scan.origin.ok_or(Error::MissingOrigin)?;
        if !self.frame.contains(&origin) {
            return Err(Error::InvalidArgument(format!(
                "sensor origin {origin} outside the octree extent"
            )));
        }
        let beams: Vec<(Point3, bool)> = scan.points.iter().map(|p| self.clip_beam(&origin, p)).collect();
        let o = self.frame.key_of_unchecked(&origin);
        let (mut lo, mut hi) = ([o.i, o.j, o.k], [o.i, o.j, o.k]);
        for (e, _) in &beams {
            let k = self.frame.key_of_unchecked(e);
            for (a, v) in [k.i, k.j, k.k].into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        if dims.iter().product::<usize>() <= DENSE_SCAN_CELLS {
            Ok(self.scan_keys_dense(&origin, &beams, lo, dims))
        } else {
            Ok(self.scan_keys_sparse(&origin, &beams))
        }
    }

    fn scan_keys_dense(&self, origin: &Point3, beams: &[(Point3, bool)], lo: [u32; 3], dims: [usize; 3]) -> (Vec<VoxelKey>, Vec<VoxelKey>) {
        const FREE: u8 = 1;
        const OCC: u8 = 2;
        let mut state = vec![0u8; dims[0] * dims[1] * dims[2]];
        // Rounding can push the walk one voxel past the box; such cells are
        // tracked sparsely.
        let index = |k: VoxelKey| {
            let (i, j, l) = (k.i.wrapping_sub(lo[0]) as usize, k.j.wrapping_sub(lo[1]) as usize, k.k.wrapping_sub(lo[2]) as usize);
            (i < dims[0] && j < dims[1] && l < dims[2]).then(|| (l * dims[1] + j) * dims[0] + i)
        };
        let mut stray_free = FxHashSet::default();
        let mut stray_occ = FxHashSet::default();
        let mut free = Vec::new();
        let mut occupied = Vec::new();
        for (end, hit) in beams {
            let end_key = trace_segment_with(&self.frame, origin, end, |k| match index(k) {
                Some(x) => {
                    if state[x] == 0 {
                        state[x] = FREE;
                        free.push(k);
                    }
                }
                None => {
                    stray_free.insert(k);
                }
            });
            if *hit {
                match index(end_key) {
                    Some(x) if state[x] != OCC => {
                        state[x] = OCC;
                        occupied.push(end_key);
                    }
                    Some(_) => {}
                    None => {
                        stray_occ.insert(end_key);
                    }
                }
            }
        }
        free.retain(|&k| state[index(k).unwrap()] == FREE);
        free.extend(stray_free.into_iter().filter(|k| !stray_occ.contains(k)));
        occupied.extend(stray_occ);
        (free, occupied)
    }

    fn scan_keys_sparse(&self, origin: &Point3, beams: &[(Point3, bool)]) -> (Vec<VoxelKey>, Vec<VoxelKey>) {
        let mut free = FxHashSet::default();
        let mut occupied = FxHashSet::default();
        for (end, hit) in beams {
            let end_key = trace_segment_with(&self.frame, origin, end, |k| {
                free.insert(k);
            });
            if *hit {
                occupied.insert(end_key);
            }
        }
        free.retain(|k| !occupied.contains(k));
        (free.into_iter().collect(), occupied.into_iter().collect())
    }

    /// Truncates a beam to the maximum range and to the tree extent.
    /// Returns the (possibly shortened) endpoint and whether it is a hit.
    fn clip_beam(&self, origin: &Point3, p: &Point3) -> (Point3, bool) {
        let d = p - origin;
        let len = d.norm();
        let mut t = 1.0f64;
        if len > self.params.max_range {
            t = self.params.max_range / len;
        }
        // Stay half a voxel inside the addressable cube.
        let h = self.frame.half_extent() - 0.5 * self.frame.resolution;
        for a in 0..3 {
            if d[a] > 0.0 {
                t = t.min((h - origin[a]) / d[a]);
            } else if d[a] < 0.0 {
                t = t.min((-h - origin[a]) / d[a]);
            }
        }
        if t >= 1.0 {
            (*p, true)
        } else {
            (origin + d * t.max(0.0), false)
        }
    }

    /// Integrates one scan (points and sensor origin in the tree frame).
    ///
    /// Within a scan every voxel receives at most one update: occupied if it
    /// holds any beam endpoint, otherwise free if any beam crosses it.
    pub fn insert_scan(&mut self, scan: &PointCloud) -> Result<()> {
        let (free, occupied) = self.scan_key_lists(scan)?;
        let (hit, miss) = (self.l_hit, self.l_miss);
        self.update_all(free, miss);
        self.update_all(occupied, hit);
        Ok(())
    }

    /// Applies `delta` once to each distinct key. Keys are visited in
    /// depth-first order so consecutive updates share most of their path.
    fn update_all(&mut self, keys: Vec<VoxelKey>, delta: f64) {
        let mut codes: Vec<u64> = keys.iter().map(VoxelKey::morton).collect();
        codes.sort_unstable();
        codes.dedup();
        let d = self.frame.depth as usize;
        let mut path = vec![0usize; d + 1];
        let mut prev: Option<u64> = None;
        for m in codes {
            let start = match prev {
                None => 0,
                Some(p) => d - 1 - ((63 - (p ^ m).leading_zeros()) / 3) as usize,
            };
            for level in start..d {
                let slot = ((m >> (3 * (d - 1 - level))) & 7) as usize;
                let n = path[level];
                let c = self.nodes[n].children[slot];
                path[level + 1] = if c == NO_CHILD {
                    let id = self.nodes.len();
                    self.nodes.push(Node::empty());
                    self.nodes[n].children[slot] = id as u32;
                    if level + 1 == d {
                        self.leaf_count += 1;
                    }
                    id
                } else {
                    c as usize
                };
            }
            let v = &mut self.nodes[path[d]].log_odds;
            *v = (*v + delta).clamp(self.l_min, self.l_max);
            prev = Some(m);
        }
    }

    /// Visits every leaf in key order (i-bit lowest at each level).
    pub fn for_each_leaf(&self, mut f: impl FnMut(VoxelKey, f64)) {
        self.walk(0, 0, [0, 0, 0], &mut f);
    }

    fn walk(&self, n: usize, level: u8, prefix: [u32; 3], f: &mut impl FnMut(VoxelKey, f64)) {
        if level == self.frame.depth {
            f(VoxelKey::new(prefix[0], prefix[1], prefix[2]), self.nodes[n].log_odds);
            return;
        }
        for (slot, &c) in self.nodes[n].children.iter().enumerate() {
            if c != NO_CHILD {
                let s = slot as u32;
                let next = [
                    (prefix[0] << 1) | (s & 1),
                    (prefix[1] << 1) | ((s >> 1) & 1),
                    (prefix[2] << 1) | ((s >> 2) & 1),
                ];
                self.walk(c as usize, level + 1, next, f);
            }
        }
    }

    pub fn leaves(&self) -> Vec<(VoxelKey, f64)> {
        let mut out = Vec::with_capacity(self.leaf_count);
        self.for_each_leaf(|k, l| out.push((k, l)));
        out
    }

    /// Leaves whose occupancy exceeds `threshold`.
    pub fn occupied_keys(&self, threshold: f64) -> Vec<VoxelKey> {
        let l = logit(threshold);
        let mut out = Vec::new();
        self.for_each_leaf(|k, v| {
            if v > l {
                out.push(k)
            }
        });
        out
    }

    /// Builds a tree from raw leaves, e.g. when decoding.
    pub(crate) fn set_leaf(&mut self, key: &VoxelKey, log_odds: f64) {
        let (n, _) = self.find_or_create(key);
        self.nodes[n].log_odds = log_odds.clamp(self.l_min, self.l_max);
    }

    /// Children of node `n` for simultaneous traversal of two trees.
    fn children(&self, n: usize) -> &[u32; 8] {
        &self.nodes[n].children
    }
}

/// Builds one tree from a sequence of scans.
pub fn build_octree<'a>(params: OctreeParams, scans: impl IntoIterator<Item = &'a PointCloud>) -> Result<OccupancyOctree> {
    let mut tree = OccupancyOctree::new(params)?;
    for s in scans {
        tree.insert_scan(s)?;
    }
    Ok(tree)
}
