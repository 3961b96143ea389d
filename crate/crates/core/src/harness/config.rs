//! Experiment configuration, read from TOML. Every field is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binsim::{BinBounds, ObjectParams, SceneConfig, SuctionModel};
use crate::codebook::{CodebookSetup, ViewSampling};
use crate::descriptor::AugmentationConfig;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Root of all randomness.
    pub seed: u64,
    /// Pick-bench trials per pose class.
    pub pick_trials: usize,
    /// Place-bench trials per pose class.
    pub place_trials: usize,
    /// Random orientations queried by the codebook report.
    pub report_queries: usize,
    /// Random rotations used to measure the coverage radius.
    pub coverage_probes: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 0,
            pick_trials: 25,
            place_trials: 30,
            report_queries: 500,
            coverage_probes: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    /// Objects per pick-bench scene.
    pub objects: usize,
    pub max_tilt_deg: f64,
    /// Allowed interpenetration, meters.
    pub penetration_tolerance: f64,
    pub max_attempts: usize,
    /// Wings, drumsticks, neck and breast bumps on generated birds.
    pub protrusions: bool,
    /// Place-bench objects are centred within this radius of the bin middle, meters.
    pub singulated_radius: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            objects: 3,
            max_tilt_deg: 30.0,
            penetration_tolerance: 0.01,
            max_attempts: 1000,
            protrusions: true,
            singulated_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSection {
    /// Success tolerance on the final orientation, degrees.
    pub tolerance_deg: f64,
    /// Tolerances reported by the sweep, degrees.
    pub sweep_deg: Vec<f64>,
    /// Ranked keypoints tried on one drop of the bird.
    pub max_grasps: usize,
    /// Times a trial's bird is dropped again in a fresh pose of its class
    /// after every grasp on the previous drop failed.
    pub max_drops: usize,
    /// Use the true pose instead of the codebook estimate.
    pub oracle: bool,
}

impl Default for PlacementSection {
    fn default() -> Self {
        Self {
            tolerance_deg: 20.0,
            sweep_deg: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0],
            max_grasps: 20,
            max_drops: 50,
            oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookSection {
    /// Load this codebook file instead of building one. Relative paths are
    /// resolved against the config file.
    pub path: Option<PathBuf>,
    /// Seed of the bird the codebook is rendered from.
    pub object_seed: u64,
    /// Render distance, meters.
    pub view_distance: f64,
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self {
            path: None,
            object_seed: 0,
            view_distance: CodebookSetup::default().view_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub sampling: ViewSampling,
    pub augment: AugmentationConfig,
    pub suction: SuctionModel,
    pub scene: SceneSection,
    pub placement: PlacementSection,
    pub codebook: CodebookSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a config file; relative codebook paths become
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = &cfg.codebook.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.codebook.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let e = &self.experiment;
        if e.pick_trials == 0 || e.place_trials == 0 {
            return bad("trial counts must be at least 1".into());
        }
        if e.report_queries == 0 || e.coverage_probes == 0 {
            return bad("report_queries and coverage_probes must be at least 1".into());
        }
        self.sampling.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.augment.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.suction.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let s = &self.scene;
        if s.objects == 0 || s.max_attempts == 0 {
            return bad("scene.objects and scene.max_attempts must be at least 1".into());
        }
        if !(0.0..=90.0).contains(&s.max_tilt_deg) || !(s.penetration_tolerance >= 0.0) || !(s.singulated_radius >= 0.0) {
            return bad("scene.max_tilt_deg must be in [0, 90]; tolerances and radii non-negative".into());
        }
        let p = &self.placement;
        let deg_ok = |d: f64| d > 0.0 && d <= 180.0;
        if !deg_ok(p.tolerance_deg) || p.sweep_deg.is_empty() || !p.sweep_deg.iter().all(|d| deg_ok(*d)) {
            return bad("placement tolerances must lie in (0, 180] degrees and the sweep must be non-empty".into());
        }
        if p.max_grasps == 0 || p.max_drops == 0 {
            return bad("placement.max_grasps and placement.max_drops must be at least 1".into());
        }
        if !(self.codebook.view_distance > 0.0 && self.codebook.view_distance.is_finite()) {
            return bad("codebook.view_distance must be positive".into());
        }
        Ok(())
    }

    /// Bird template used for scenes.
    pub fn object_template(&self, seed: u64) -> ObjectParams {
        let mut p = ObjectParams::bird(seed);
        if !self.scene.protrusions {
            p.protrusions.clear();
        }
        p
    }

    pub fn scene_config(&self, singulated: bool) -> SceneConfig {
        SceneConfig {
            bin: BinBounds::default(),
            max_tilt: self.scene.max_tilt_deg.to_radians(),
            penetration_tolerance: self.scene.penetration_tolerance,
            max_attempts: self.scene.max_attempts,
            template: self.object_template(0),
            center_radius: singulated.then_some(self.scene.singulated_radius),
        }
    }

    pub fn codebook_setup(&self) -> CodebookSetup {
        CodebookSetup {
            view_distance: self.codebook.view_distance,
            ..CodebookSetup::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = ExperimentConfig::from_toml("[experiment]\nseed = 9\n[suction]\ncup_radius = 0.02\n").unwrap();
        assert_eq!(cfg.experiment.seed, 9);
        assert_eq!(cfg.experiment.pick_trials, 25);
        assert_eq!(cfg.suction.cup_radius, 0.02);
        assert_eq!(cfg.suction.slip_margin, 0.8);
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "[experiment]\npick_trials = 0\n",
            "[sampling]\nn_views = 2\n",
            "[placement]\ntolerance_deg = -1.0\n",
            "[augment]\nscale_range = [1.1, 1.2]\n",
            "[nonsense]\n",
            "[experiment]\nseeds = 1\n",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
