//! Pose estimation and suction bin-picking for deformable objects.
//!
//! The crate covers the geometry (quaternion metrics, rigid transform chains,
//! a pinhole camera with a ray-cast renderer), a view-sphere pose codebook
//! queried with a deterministic depth descriptor, and a seeded simulator plus
//! experiment harness for picking and canonical-pose placement.

pub mod binsim;
pub mod camera;
pub mod codebook;
pub mod descriptor;
pub mod geometry;
pub mod harness;
pub mod rotations;
pub mod transforms;

pub use geometry::Vec3;
pub use rotations::{geodesic_distance, pose_loss, UnitQuaternion};
pub use transforms::{FrameId, RigidTransform, TransformTree};
