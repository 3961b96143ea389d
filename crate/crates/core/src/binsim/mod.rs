//! Deterministic bin-picking simulator.
//!
//! Everything is expressed in the overhead camera frame: `+z` points from
//! the camera down into the bin, so "higher" means smaller `z`.

pub mod object;
pub mod placement;
pub mod scene;
pub mod suction;

use thiserror::Error;

use crate::camera::CameraError;
use crate::transforms::TransformError;

pub use object::{DeformableObject, ObjectParams, Protrusion};
pub use placement::{evaluate_placement, PlacementResult};
pub use scene::{generate_scene, BinBounds, BinScene, ClassMix, PoseClass, SceneConfig, SceneObject, SurfaceHit};
pub use suction::{detect_keypoints, execute_pick, simulate_descent, Descent, FailureCause, Keypoint, PickAttempt, SuctionModel, Workcell};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid object: {0}")]
    InvalidObject(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid suction model: {0}")]
    InvalidSuction(String),
    #[error("could not place object {index} after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },
    #[error("no valid keypoint candidates")]
    NoCandidates,
    #[error("scene file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}
