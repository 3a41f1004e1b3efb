use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{logit, KeyFrame, OccupancyOctree, VoxelKey, NO_CHILD};
use crate::error::{Error, Result};
use crate::geometry::{Label, PointCloud};
use crate::io::{save_cloud, CloudFormat};

/// Voxels whose occupancy state differs between two missions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub frame: KeyFrame,
    /// Occupied in B, free or unknown in A.
    pub added: BTreeSet<VoxelKey>,
    /// Occupied in A, free or unknown in B.
    pub removed: BTreeSet<VoxelKey>,
}

impl ChangeSet {
    pub fn empty(frame: KeyFrame) -> Self {
        Self {
            frame,
            added: BTreeSet::new(),
            removed: BTreeSet::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }

    pub fn len(&self) -> usize {
        self.added.len() + self.removed.len()
    }

    pub fn side(&self, side: ChangeSide) -> &BTreeSet<VoxelKey> {
        match side {
            ChangeSide::Added => &self.added,
            ChangeSide::Removed => &self.removed,
        }
    }

    /// The change set seen from the other mission.
    pub fn swapped(&self) -> Self {
        Self {
            frame: self.frame,
            added: self.removed.clone(),
            removed: self.added.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeSide {
    Added,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffOptions {
    /// Occupancy probability above which a voxel counts as occupied.
    pub threshold: f64,
    /// When set, a voxel only changes if both missions observed it.
    pub require_observed_both: bool,
    /// A changed voxel is dropped when the other mission holds an occupied
    /// voxel within this many voxels (Chebyshev distance). Absorbs surfaces
    /// that land in neighbouring voxels when seen from different places.
    pub tolerance_voxels: u32,
}

impl Default for DiffOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            require_observed_both: false,
            tolerance_voxels: 0,
        }
    }
}

/// Compares two trees leaf by leaf, visiting only leaves present in at least
/// one of them.
pub fn diff_octrees(a: &OccupancyOctree, b: &OccupancyOctree, opts: &DiffOptions) -> Result<ChangeSet> {
    if a.frame != b.frame {
        return Err(Error::ResolutionMismatch(a.frame.resolution, b.frame.resolution));
    }
    if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "occupancy threshold must lie in (0, 1), got {}",
            opts.threshold
        )));
    }
    let mut out = ChangeSet::empty(a.frame);
    let walker = PairWalk {
        a,
        b,
        depth: a.frame.depth,
        threshold: logit(opts.threshold),
        require_both: opts.require_observed_both,
    };
    walker.walk(Some(0), Some(0), 0, [0; 3], &mut out);
    if opts.tolerance_voxels > 0 {
        let r = opts.tolerance_voxels as i64;
        let near = |t: &OccupancyOctree, key: &VoxelKey| {
            for di in -r..=r {
                for dj in -r..=r {
                    for dk in -r..=r {
                        let n = [key.i as i64 + di, key.j as i64 + dj, key.k as i64 + dk];
                        if n.iter().any(|&c| c < 0 || c > u32::MAX as i64) {
                            continue;
                        }
                        let nk = VoxelKey::new(n[0] as u32, n[1] as u32, n[2] as u32);
                        if t.log_odds(&nk).is_some_and(|l| l > walker.threshold) {
                            return true;
                        }
                    }
                }
            }
            false
        };
        out.added.retain(|k| !near(a, k));
        out.removed.retain(|k| !near(b, k));
    }
    Ok(out)
}

struct PairWalk<'t> {
    a: &'t OccupancyOctree,
    b: &'t OccupancyOctree,
    depth: u8,
    threshold: f64,
    require_both: bool,
}

impl PairWalk<'_> {
    fn walk(&self, na: Option<usize>, nb: Option<usize>, level: u8, prefix: [u32; 3], out: &mut ChangeSet) {
        if level == self.depth {
            let key = VoxelKey::new(prefix[0], prefix[1], prefix[2]);
            let occ = |t: &OccupancyOctree, n: Option<usize>| n.map(|n| t.nodes[n].log_odds > self.threshold);
            let (oa, ob) = (occ(self.a, na), occ(self.b, nb));
            match (oa, ob) {
                (Some(false), Some(true)) => {
                    out.added.insert(key);
                }
                (Some(true), Some(false)) => {
                    out.removed.insert(key);
                }
                (None, Some(true)) if !self.require_both => {
                    out.added.insert(key);
                }
                (Some(true), None) if !self.require_both => {
                    out.removed.insert(key);
                }
                _ => {}
            }
            return;
        }
        let child = |t: &OccupancyOctree, n: Option<usize>, s: usize| {
            n.and_then(|n| {
                let c = t.children(n)[s];
                (c != NO_CHILD).then_some(c as usize)
            })
        };
        for s in 0..8 {
            let (ca, cb) = (child(self.a, na, s), child(self.b, nb, s));
            if ca.is_none() && cb.is_none() {
                continue;
            }
            let s = s as u32;
            let next = [
                (prefix[0] << 1) | (s & 1),
                (prefix[1] << 1) | ((s >> 1) & 1),
                (prefix[2] << 1) | ((s >> 2) & 1),
            ];
            self.walk(ca, cb, level + 1, next, out);
        }
    }
}

/// Points of `cloud` whose voxel belongs to the chosen side of `changes`.
pub fn project_changes(changes: &ChangeSet, cloud: &PointCloud, side: ChangeSide) -> PointCloud {
    let keys = changes.side(side);
    if keys.is_empty() {
        return PointCloud {
            points: Vec::new(),
            labels: cloud.labels.as_ref().map(|_| Vec::new()),
            origin: cloud.origin,
        };
    }
    let set: rustc_hash::FxHashSet<VoxelKey> = keys.iter().copied().collect();
    cloud.filter(|_, p| changes.frame.key_of(p).is_some_and(|k| set.contains(&k)))
}

/// Writes voxel centres as a labelled PLY: label 1 = added, 2 = removed.
pub fn export_changes_ply(changes: &ChangeSet, path: impl AsRef<Path>) -> Result<()> {
    let mut points = Vec::with_capacity(changes.len());
    let mut labels: Vec<Label> = Vec::with_capacity(changes.len());
    for k in &changes.added {
        points.push(changes.frame.center_of(k));
        labels.push(1);
    }
    for k in &changes.removed {
        points.push(changes.frame.center_of(k));
        labels.push(2);
    }
    save_cloud(&PointCloud::with_labels(points, labels)?, path, CloudFormat::Ply)
}
