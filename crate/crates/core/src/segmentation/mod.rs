//! From a difference cloud to candidate objects: ground removal, smoothing,
//! morphological denoising, clustering, normal-based refinement and
//! cross-mission overlap carving.

mod cluster;
mod mls;
mod morphology;
mod overlap;
mod ransac;
mod region;

pub use cluster::{euclidean_cluster, euclidean_cluster_indices, ClusterParams};
pub use mls::{mls_smooth, MlsParams};
pub use morphology::{denoise_morphological, morphology_voxels, Connectivity, MorphologyParams};
pub use overlap::{merge_or_split, overlap_ratio, OverlapParams};
pub use ransac::{ransac_ground, remove_plane, PlaneModel, RansacParams};
pub use region::{region_grow_refine, RegionGrowParams};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::MissionId;
use crate::error::{Error, Result};
use crate::geometry::{mean_of, Point3, PointCloud};
use crate::io::{load_cloud_auto, save_cloud, CloudFormat};

pub type SegmentId = u64;

/// A candidate object: a non-empty cluster of changed points.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: SegmentId,
    pub mission: MissionId,
    pub cloud: PointCloud,
    pub centroid: Point3,
}

impl Segment {
    pub fn new(id: SegmentId, mission: MissionId, cloud: PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::SegmentTooSmall { got: 0, need: 1 });
        }
        let centroid = Point3::from(mean_of(&cloud.points));
        Ok(Self {
            id,
            mission,
            cloud,
            centroid,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Most frequent per-point label, if the cloud carries labels.
    pub fn majority_label(&self) -> Option<crate::geometry::Label> {
        let labels = self.cloud.labels.as_ref()?;
        let mut counts = std::collections::BTreeMap::new();
        for l in labels {
            *counts.entry(*l).or_insert(0usize) += 1;
        }
        counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(l, _)| l)
    }
}

/// Index row written next to exported segment clouds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub id: SegmentId,
    pub mission: MissionId,
    pub centroid: [f64; 3],
    pub points: usize,
    pub file: String,
}

pub const SEGMENT_INDEX_FILE: &str = "segments.json";

/// Writes one PLY per segment plus `segments.json`.
pub fn export_segments(dir: impl AsRef<Path>, segments: &[Segment]) -> Result<Vec<SegmentRecord>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = Vec::with_capacity(segments.len());
    for s in segments {
        let file = format!("segment_m{}_{:05}.ply", s.mission, s.id);
        save_cloud(&s.cloud, dir.join(&file), CloudFormat::Ply)?;
        index.push(SegmentRecord {
            id: s.id,
            mission: s.mission,
            centroid: [s.centroid.x, s.centroid.y, s.centroid.z],
            points: s.len(),
            file,
        });
    }
    let path = dir.join(SEGMENT_INDEX_FILE);
    let json = serde_json::to_string_pretty(&index).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

/// Reads segments written by [`export_segments`].
pub fn import_segments(dir: impl AsRef<Path>) -> Result<Vec<Segment>> {
    let dir = dir.as_ref();
    let path = dir.join(SEGMENT_INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: Vec<SegmentRecord> = crate::evaluation::parse_json(&text, &path.display().to_string())?;
    index
        .iter()
        .map(|r| Segment::new(r.id, r.mission, load_cloud_auto(dir.join(&r.file))?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_centroid_is_mean() {
        let s = Segment::new(3, 1, PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 4.0, 6.0)])).unwrap();
        assert_eq!(s.centroid, Point3::new(1.0, 2.0, 3.0));
        assert!(Segment::new(0, 1, PointCloud::default()).is_err());
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let segs = vec![
            Segment::new(0, 1, PointCloud::with_labels(vec![Point3::new(1.0, 2.0, 3.0)], vec![4]).unwrap()).unwrap(),
            Segment::new(7, 2, PointCloud::new(vec![Point3::new(-1.0, 0.5, 0.25), Point3::new(0.0, 0.0, 0.0)])).unwrap(),
        ];
        export_segments(dir.path(), &segs).unwrap();
        assert_eq!(import_segments(dir.path()).unwrap(), segs);
    }

    #[test]
    fn majority_label_prefers_smaller_id_on_ties() {
        let s = Segment::new(0, 1, PointCloud::with_labels(vec![Point3::origin(); 4], vec![5, 3, 5, 3]).unwrap()).unwrap();
        assert_eq!(s.majority_label(), Some(3));
    }
}
