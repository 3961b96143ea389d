//! Experiment harness: pick and place benches, codebook accuracy report,
//! calibration demo and the command-line front end.

pub mod bench;
pub mod cli;
pub mod config;
pub mod report;

use thiserror::Error;

use crate::binsim::SimError;
use crate::camera::CameraError;
use crate::codebook::CodebookError;
use crate::transforms::TransformError;

pub use bench::{
    calib_demo, canonical_pose, estimate_scene, format_estimates, load_or_build_codebook, run_codebook_report,
    run_pick_bench, run_place_bench, CalibrationDemo, CodebookReport, SceneEstimate,
};
pub use config::ExperimentConfig;
pub use report::{ClassTally, ErrorStats, ExperimentReport, SweepPoint, TrialRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration or input file; maps to exit code 1.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Input(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }
}
