use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{voxel_of, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face, edge and corner neighbours (3×3×3 structuring element).
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    let m = dx.abs() + dy.abs() + dz.abs();
                    if m == 0 || (self == Connectivity::Six && m > 1) {
                        continue;
                    }
                    out.push([dx, dy, dz]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorphologyParams {
    pub voxel: f64,
    pub erode_n: usize,
    pub dilate_n: usize,
    pub connectivity: Connectivity,
    /// `None` is binary erosion: a voxel survives only if every neighbour is
    /// occupied. `Some(m)` keeps voxels with at least `m` occupied
    /// neighbours, which spares one-voxel-thick surfaces.
    pub erode_min_neighbors: Option<usize>,
}

impl Default for MorphologyParams {
    fn default() -> Self {
        Self {
            voxel: 0.05,
            erode_n: 1,
            dilate_n: 2,
            connectivity: Connectivity::TwentySix,
            erode_min_neighbors: None,
        }
    }
}

/// Occupied voxels of `cloud` after `erode_n` erosions and `dilate_n`
/// dilations.
pub fn morphology_voxels(cloud: &PointCloud, params: &MorphologyParams) -> Result<FxHashSet<[i64; 3]>> {
    if !(params.voxel > 0.0) {
        return Err(Error::InvalidArgument(format!("morphology voxel must be positive, got {}", params.voxel)));
    }
    let offsets = params.connectivity.offsets();
    let need = params.erode_min_neighbors.unwrap_or(offsets.len());
    let mut set: FxHashSet<[i64; 3]> = cloud.points.iter().map(|p| voxel_of(p, params.voxel)).collect();
    let shift = |v: &[i64; 3], o: &[i64; 3]| [v[0] + o[0], v[1] + o[1], v[2] + o[2]];
    for _ in 0..params.erode_n {
        set = set
            .iter()
            .filter(|v| offsets.iter().filter(|o| set.contains(&shift(v, o))).count() >= need)
            .copied()
            .collect();
    }
    for _ in 0..params.dilate_n {
        let mut grown = set.clone();
        for v in &set {
            for o in &offsets {
                grown.insert(shift(v, o));
            }
        }
        set = grown;
    }
    Ok(set)
}

/// Keeps the points whose voxel survives the erosion/dilation sequence.
pub fn denoise_morphological(cloud: &PointCloud, params: &MorphologyParams) -> Result<PointCloud> {
    let keep = morphology_voxels(cloud, params)?;
    Ok(cloud.filter(|_, p| keep.contains(&voxel_of(p, params.voxel))))
}
