//! Object-level change detection between co-registered LiDAR missions.
//!
//! The pipeline aligns missions through a joint pose graph, builds one
//! occupancy octree per mission, differences them, segments the changed
//! points into objects, describes every object with a rigid-motion invariant
//! signature, groups objects across missions and recovers the rigid motion of
//! each matched pair.

pub mod alignment;
pub mod descriptors;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod grouping;
pub mod io;
pub mod octree;
pub mod pipeline;
pub mod scenegen;
pub mod segmentation;
pub mod spatial;

pub use error::{Error, Result};
pub use geometry::{Aabb, Label, Point3, PointCloud, RigidTransform};
