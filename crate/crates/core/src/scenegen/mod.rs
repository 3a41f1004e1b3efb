//! Synthetic multi-mission datasets: primitive scenes, scripted changes and
//! a simulated spinning LiDAR.

mod bvh;
pub mod examples;
mod lidar;
pub mod mesh;

pub use bvh::{Bvh, Hit};
pub use lidar::{generate_mission, simulate_scan, LidarModel, OdometryNoise};
pub use mesh::Triangle;

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Label, Point3, RigidTransform};

/// Label of the ground plane triangles.
pub const GROUND_LABEL: Label = 0;

/// Placement of an object: translation plus rotation given either as a yaw
/// angle about +z or as a quaternion `[x, y, z, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePose {
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "is_zero")]
    pub yaw_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl ScenePose {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            translation: [x, y, z],
            yaw_deg: 0.0,
            quaternion: None,
        }
    }

    pub fn with_yaw_deg(mut self, yaw: f64) -> Self {
        self.yaw_deg = yaw;
        self
    }

    pub fn to_transform(&self) -> RigidTransform {
        let t = Vector3::from(self.translation);
        match self.quaternion {
            Some([x, y, z, w]) => RigidTransform::from_quaternion(
                nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)),
                t,
            ),
            None => RigidTransform::from_yaw(self.yaw_deg.to_radians(), t),
        }
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        let q = t.quaternion();
        let tr = t.translation();
        Self {
            translation: [tr.x, tr.y, tr.z],
            yaw_deg: 0.0,
            quaternion: Some([q.i, q.j, q.k, q.w]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    /// Full edge lengths along x, y, z, centred on the pose.
    Box { size: [f64; 3] },
    /// Axis along local +z, centred on the pose.
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
    Composite { parts: Vec<Part> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Part {
    pub shape: Shape,
    pub pose: ScenePose,
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Box { size } => size.iter().all(|&s| s > 0.0 && s.is_finite()),
            Shape::Cylinder { radius, height } => *radius > 0.0 && *height > 0.0,
            Shape::Sphere { radius } => *radius > 0.0,
            Shape::Composite { parts } => {
                for p in parts {
                    p.shape.validate()?;
                }
                !parts.is_empty()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid shape dimensions: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: Label,
    pub shape: Shape,
    pub pose: ScenePose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub extent: Aabb,
    pub objects: Vec<SceneObject>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        Aabb::new(self.extent.min, self.extent.max)?;
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            if o.id == GROUND_LABEL {
                return Err(Error::InvalidArgument(format!("object id {GROUND_LABEL} is reserved for the ground")));
            }
            if !seen.insert(o.id) {
                return Err(Error::InvalidArgument(format!("duplicate object id {}", o.id)));
            }
            o.shape.validate()?;
            let c = Point3::from(o.pose.translation);
            if !self.extent.contains(&c) {
                return Err(Error::InvalidArgument(format!("object {} lies outside the scene extent", o.id)));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: Label) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChangeAction {
    /// World-frame rigid motion applied on top of the current pose.
    Move { id: Label, transform: ScenePose },
    Remove { id: Label },
    Add { object: SceneObject },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeScript {
    pub changes: Vec<ChangeAction>,
}

/// Applies `script` to `spec`, returning the second mission's scene and the
/// ids of every object that moved, appeared or vanished.
pub fn apply_changes(spec: &SceneSpec, script: &ChangeScript) -> Result<(SceneSpec, BTreeSet<Label>)> {
    let mut out = spec.clone();
    let mut changed = BTreeSet::new();
    for action in &script.changes {
        match action {
            ChangeAction::Move { id, transform } => {
                let obj = out.objects.iter_mut().find(|o| o.id == *id).ok_or(Error::UnknownObject(*id))?;
                let moved = transform.to_transform() * obj.pose.to_transform();
                obj.pose = ScenePose::from_transform(&moved);
                changed.insert(*id);
            }
            ChangeAction::Remove { id } => {
                let before = out.objects.len();
                out.objects.retain(|o| o.id != *id);
                if out.objects.len() == before {
                    return Err(Error::UnknownObject(*id));
                }
                changed.insert(*id);
            }
            ChangeAction::Add { object } => {
                if out.objects.iter().any(|o| o.id == object.id) {
                    return Err(Error::InvalidArgument(format!("added object id {} already exists", object.id)));
                }
                out.objects.push(object.clone());
                changed.insert(object.id);
            }
        }
    }
    out.validate()?;
    Ok((out, changed))
}

/// Triangle soup of a scene, ready for ray casting.
#[derive(Debug, Clone)]
pub struct Scene {
    pub extent: Aabb,
    bvh: Bvh,
}

impl Scene {
    pub fn triangles(&self) -> &[Triangle] {
        self.bvh.triangles()
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// A scene from raw triangles; unlike [`build_scene`] no ground is added.
    pub fn from_triangles(extent: Aabb, triangles: Vec<Triangle>) -> Self {
        Self {
            extent,
            bvh: Bvh::build(triangles),
        }
    }
}

/// Tessellates every object plus the ground plane.
pub fn build_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut tris = Vec::new();
    tris.extend(mesh::ground_plane(&spec.extent, GROUND_LABEL));
    let mut boxes: Vec<(Label, Aabb)> = Vec::new();
    for o in &spec.objects {
        let start = tris.len();
        mesh::tessellate(&o.shape, &o.pose.to_transform(), o.id, &mut tris);
        let b = Aabb::from_points(tris[start..].iter().flat_map(|t| t.v.iter())).unwrap();
        for (other, ob) in &boxes {
            if overlaps(&b, ob) {
                log::warn!("objects {} and {} have overlapping bounds", o.id, other);
            }
        }
        boxes.push((o.id, b));
    }
    Ok(Scene {
        extent: spec.extent,
        bvh: Bvh::build(tris),
    })
}

fn overlaps(a: &Aabb, b: &Aabb) -> bool {
    // Touching faces (objects resting on each other) are not overlaps.
    const SLACK: f64 = 1e-6;
    (0..3).all(|k| a.min[k] < b.max[k] - SLACK && b.min[k] < a.max[k] - SLACK)
}
