//! Posed scan sequences and their on-disk form.
//!
//! A mission directory holds:
//!
//! * `trajectory.txt`: one `timestamp tx ty tz qx qy qz qw` row per scan,
//!   preceded by an optional `# mission <id>` comment;
//! * `scans.txt`: manifest with one scan file name per row, relative to the
//!   mission directory, in trajectory order;
//! * the scan files themselves (sensor frame, origin at the sensor).

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{transform_cloud, PointCloud, RigidTransform};
use crate::io::{load_cloud_auto, save_cloud, CloudFormat};

pub type MissionId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryNode {
    pub timestamp: f64,
    /// Sensor-to-world pose.
    pub pose: RigidTransform,
    /// Scan in the sensor frame.
    pub scan: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionTrajectory {
    pub id: MissionId,
    pub nodes: Vec<TrajectoryNode>,
}

impl MissionTrajectory {
    pub fn new(id: MissionId, nodes: Vec<TrajectoryNode>) -> Result<Self> {
        let m = Self { id, nodes };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument(format!("mission {} has no nodes", self.id)));
        }
        for (k, w) in self.nodes.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::InvalidArgument(format!(
                    "mission {}: timestamps not strictly increasing at node {}",
                    self.id,
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn poses(&self) -> Vec<RigidTransform> {
        self.nodes.iter().map(|n| n.pose).collect()
    }

    /// Left-multiplies every pose by `t` (re-expresses the mission in
    /// another world frame).
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            id: self.id,
            nodes: self
                .nodes
                .iter()
                .map(|n| TrajectoryNode {
                    pose: *t * n.pose,
                    ..n.clone()
                })
                .collect(),
        }
    }

    /// Scans mapped into the world frame by their poses.
    pub fn world_scans(&self) -> Vec<PointCloud> {
        self.nodes.iter().map(|n| transform_cloud(&n.scan, &n.pose)).collect()
    }

    pub fn merged_cloud(&self) -> PointCloud {
        let mut out = PointCloud::default();
        for s in self.world_scans() {
            out.extend(&s);
        }
        out.origin = None;
        out
    }
}

pub fn format_pose_row(timestamp: f64, pose: &RigidTransform) -> String {
    let q = pose.quaternion();
    let t = pose.translation();
    format!("{} {} {} {} {} {} {} {}", timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w)
}

/// Parses `timestamp tx ty tz qx qy qz qw` rows; `#` starts a comment.
pub fn parse_trajectory(text: &str, path: &Path) -> Result<(Option<MissionId>, Vec<(f64, RigidTransform)>)> {
    let mut id = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(c) = line.strip_prefix('#') {
            let mut tok = c.split_whitespace();
            if tok.next() == Some("mission") {
                id = tok.next().and_then(|v| v.parse().ok());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let loc = format!("line {}", i + 1);
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, &loc, "bad number"))?;
        if v.len() != 8 {
            return Err(Error::parse(path, &loc, format!("expected 8 values, got {}", v.len())));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("{} {loc}", path.display()),
            });
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if q.norm() < 1e-9 {
            return Err(Error::parse(path, &loc, "zero quaternion"));
        }
        let pose = RigidTransform::from_quaternion(UnitQuaternion::from_quaternion(q), Vector3::new(v[1], v[2], v[3]));
        rows.push((v[0], pose));
    }
    Ok((id, rows))
}

pub fn write_trajectory_file(path: &Path, id: MissionId, rows: &[(f64, RigidTransform)]) -> Result<()> {
    let mut text = format!("# mission {id}\n# timestamp tx ty tz qx qy qz qw\n");
    for (ts, pose) in rows {
        text.push_str(&format_pose_row(*ts, pose));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const MANIFEST_FILE: &str = "scans.txt";

/// Writes a mission directory (scans as binary PLY under `scans/`).
pub fn write_mission(dir: impl AsRef<Path>, mission: &MissionTrajectory) -> Result<()> {
    let dir = dir.as_ref();
    let scans = dir.join("scans");
    fs::create_dir_all(&scans).map_err(|e| Error::io(&scans, e))?;
    let mut manifest = String::new();
    for (k, node) in mission.nodes.iter().enumerate() {
        let name = format!("scans/scan_{k:04}.ply");
        save_cloud(&node.scan, dir.join(&name), CloudFormat::Ply)?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    let rows: Vec<(f64, RigidTransform)> = mission.nodes.iter().map(|n| (n.timestamp, n.pose)).collect();
    write_trajectory_file(&dir.join(TRAJECTORY_FILE), mission.id, &rows)
}

pub fn read_mission(dir: impl AsRef<Path>, default_id: MissionId) -> Result<MissionTrajectory> {
    let dir = dir.as_ref();
    let tpath = dir.join(TRAJECTORY_FILE);
    let text = fs::read_to_string(&tpath).map_err(|e| Error::io(&tpath, e))?;
    let (id, rows) = parse_trajectory(&text, &tpath)?;
    let mpath = dir.join(MANIFEST_FILE);
    let manifest = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let files: Vec<PathBuf> = manifest
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| dir.join(l))
        .collect();
    if files.len() != rows.len() {
        return Err(Error::parse(
            &mpath,
            "manifest",
            format!("{} scan files for {} trajectory rows", files.len(), rows.len()),
        ));
    }
    let nodes = rows
        .into_iter()
        .zip(files)
        .map(|((timestamp, pose), file)| {
            let mut scan = load_cloud_auto(&file)?;
            scan.origin.get_or_insert_with(crate::geometry::Point3::origin);
            Ok(TrajectoryNode { timestamp, pose, scan })
        })
        .collect::<Result<Vec<_>>>()?;
    MissionTrajectory::new(id.unwrap_or(default_id), nodes)
}
