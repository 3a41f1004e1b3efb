use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::alignment::{MissionId, MissionTrajectory, TrajectoryNode};
use crate::error::{Error, Result};
use crate::geometry::{transform_cloud, Label, Point3, PointCloud, RigidTransform};

/// Spinning multi-beam LiDAR with evenly spaced channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarModel {
    pub channels: u32,
    /// Total vertical field of view, symmetric about the horizon.
    pub vertical_fov_deg: f64,
    pub horizontal_res_deg: f64,
    pub max_range: f64,
    /// Standard deviation of the additive range noise.
    pub range_noise: f64,
}

impl LidarModel {
    /// 128 channels over 90°, 0.35° azimuth steps, 50 m, 1 cm noise.
    pub fn os0_128_like() -> Self {
        Self {
            channels: 128,
            vertical_fov_deg: 90.0,
            horizontal_res_deg: 0.35,
            max_range: 50.0,
            range_noise: 0.01,
        }
    }

    /// 32 channels over 31°, 0.18° azimuth steps, 120 m, 1 cm noise.
    pub fn xt32_like() -> Self {
        Self {
            channels: 32,
            vertical_fov_deg: 31.0,
            horizontal_res_deg: 0.18,
            max_range: 120.0,
            range_noise: 0.01,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "os0-128-like" => Some(Self::os0_128_like()),
            "xt32-like" => Some(Self::xt32_like()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.channels > 0
            && self.vertical_fov_deg > 0.0
            && self.vertical_fov_deg <= 180.0
            && self.horizontal_res_deg > 0.0
            && self.max_range > 0.0
            && self.range_noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid lidar model {self:?}")))
        }
    }

    pub fn azimuth_steps(&self) -> usize {
        (360.0 / self.horizontal_res_deg).round().max(1.0) as usize
    }

    /// Unit beam direction in the sensor frame.
    pub fn beam(&self, channel: u32, step: usize) -> Vector3<f64> {
        let elev = if self.channels == 1 {
            0.0
        } else {
            -0.5 * self.vertical_fov_deg + self.vertical_fov_deg * channel as f64 / (self.channels - 1) as f64
        }
        .to_radians();
        let az = (360.0 * step as f64 / self.azimuth_steps() as f64).to_radians();
        Vector3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn ray_seed(seed: u64, channel: u32, step: usize) -> u64 {
    splitmix64(splitmix64(seed ^ ((channel as u64) << 40)) ^ step as u64)
}

/// Simulated scan in the sensor frame (origin at zero).
fn simulate_local(scene: &Scene, pose: &RigidTransform, lidar: &LidarModel, seed: u64) -> PointCloud {
    let origin = Point3::from(*pose.translation());
    let steps = lidar.azimuth_steps();
    let noise = (lidar.range_noise > 0.0).then(|| Normal::new(0.0, lidar.range_noise).unwrap());
    let per_channel: Vec<(Vec<Point3>, Vec<Label>)> = (0..lidar.channels)
        .into_par_iter()
        .map(|c| {
            let mut pts = Vec::new();
            let mut labels = Vec::new();
            for s in 0..steps {
                let local = lidar.beam(c, s);
                let dir = pose.apply_vector(&local);
                let Some(hit) = scene.bvh().first_hit(&origin, &dir, lidar.max_range) else {
                    continue;
                };
                let mut range = hit.t;
                if let Some(n) = &noise {
                    let mut rng = ChaCha8Rng::seed_from_u64(ray_seed(seed, c, s));
                    range += n.sample(&mut rng);
                }
                if range <= 0.0 {
                    continue;
                }
                pts.push(Point3::from(local * range));
                labels.push(scene.triangles()[hit.triangle].label);
            }
            (pts, labels)
        })
        .collect();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (p, l) in per_channel {
        points.extend(p);
        labels.extend(l);
    }
    PointCloud {
        points,
        labels: Some(labels),
        origin: Some(Point3::origin()),
    }
}

/// One revolution from `sensor_pose`, in the world frame, labelled with the
/// id of the object each beam hit. Beams that hit nothing produce no point.
pub fn simulate_scan(scene: &Scene, sensor_pose: &RigidTransform, lidar: &LidarModel, seed: u64) -> Result<PointCloud> {
    lidar.validate()?;
    let origin = Point3::from(*sensor_pose.translation());
    if !scene.extent.contains(&origin) {
        return Err(Error::InvalidArgument(format!("sensor at {origin} is outside the scene extent")));
    }
    Ok(transform_cloud(&simulate_local(scene, sensor_pose, lidar, seed), sensor_pose))
}

/// Per-step noise on the relative motion between consecutive poses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdometryNoise {
    /// Metres, per axis.
    pub translation_sigma: f64,
    /// Radians, per axis.
    pub rotation_sigma: f64,
}

impl OdometryNoise {
    pub fn is_zero(&self) -> bool {
        self.translation_sigma == 0.0 && self.rotation_sigma == 0.0
    }
}

/// Scans the scene from every pose of `trajectory`. Node poses are the true
/// poses when `noise` is zero, otherwise a dead-reckoned chain of noisy
/// relative motions starting at the first true pose. Scans are stored in the
/// sensor frame and are always simulated from the true pose.
pub fn generate_mission(
    scene: &Scene,
    trajectory: &[RigidTransform],
    lidar: &LidarModel,
    seed: u64,
    noise: &OdometryNoise,
    id: MissionId,
) -> Result<MissionTrajectory> {
    lidar.validate()?;
    if trajectory.is_empty() {
        return Err(Error::InvalidArgument("mission trajectory needs at least one pose".into()));
    }
    let mut odom_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x6f64_6f6d));
    let tn = Normal::new(0.0, noise.translation_sigma.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rn = Normal::new(0.0, noise.rotation_sigma.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut nodes = Vec::with_capacity(trajectory.len());
    let mut estimate = trajectory[0];
    for (k, truth) in trajectory.iter().enumerate() {
        let origin = Point3::from(*truth.translation());
        if !scene.extent.contains(&origin) {
            return Err(Error::InvalidArgument(format!("pose {k} at {origin} is outside the scene extent")));
        }
        if k > 0 && !noise.is_zero() {
            let delta = trajectory[k - 1].inverse() * *truth;
            let xi = Vector6::new(
                tn.sample(&mut odom_rng),
                tn.sample(&mut odom_rng),
                tn.sample(&mut odom_rng),
                rn.sample(&mut odom_rng),
                rn.sample(&mut odom_rng),
                rn.sample(&mut odom_rng),
            );
            estimate = estimate * delta * RigidTransform::exp(&xi);
        } else {
            estimate = *truth;
        }
        let scan = simulate_local(scene, truth, lidar, splitmix64(seed.wrapping_add(k as u64)));
        nodes.push(TrajectoryNode {
            timestamp: k as f64 * 0.1,
            pose: estimate,
            scan,
        });
    }
    MissionTrajectory::new(id, nodes)
}
