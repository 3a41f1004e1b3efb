//! The bundled office scene, its change scripts and an inspection route.

use nalgebra::Vector3;

use super::{ChangeScript, SceneSpec};
use crate::geometry::RigidTransform;

const OFFICE_SCENE: &str = include_str!("../../data/office_scene.json");
const OFFICE_CHANGES: &str = include_str!("../../data/office_changes.json");
const OFFICE_OVERLAP_CHANGES: &str = include_str!("../../data/office_overlap_changes.json");

/// 16 × 12 m room: four walls, a pillar and ten pieces of furniture.
pub fn office_scene() -> SceneSpec {
    serde_json::from_str(OFFICE_SCENE).expect("bundled scene parses")
}

/// Three moved objects, one removed, one added.
pub fn office_changes() -> ChangeScript {
    serde_json::from_str(OFFICE_CHANGES).expect("bundled script parses")
}

/// Two objects shifted by less than their own width.
pub fn office_overlap_changes() -> ChangeScript {
    serde_json::from_str(OFFICE_OVERLAP_CHANGES).expect("bundled script parses")
}

/// `n` poses on an ellipse around the office pillar, heading along the path.
pub fn office_route(n: usize) -> Vec<RigidTransform> {
    ellipse_route(n, 5.5, 3.5, 1.2)
}

pub fn ellipse_route(n: usize, rx: f64, ry: f64, z: f64) -> Vec<RigidTransform> {
    ellipse_route_phase(n, rx, ry, z, 0.0)
}

/// Like [`ellipse_route`] with every pose shifted by `phase` steps.
pub fn ellipse_route_phase(n: usize, rx: f64, ry: f64, z: f64, phase: f64) -> Vec<RigidTransform> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * (k as f64 + phase) / n as f64;
            let heading = (ry * a.cos()).atan2(-rx * a.sin());
            RigidTransform::from_yaw(heading, Vector3::new(rx * a.cos(), ry * a.sin(), z))
        })
        .collect()
}
