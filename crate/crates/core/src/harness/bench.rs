//! Bench runners. Every trial draws from its own ChaCha stream of the
//! configured seed, so trials are independent of each other's draws.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::binsim::{
    detect_keypoints, evaluate_placement, execute_pick, generate_scene, BinScene, ClassMix, DeformableObject, PoseClass,
    SimError, Workcell,
};
use crate::camera::{crop_object, CameraIntrinsics, SceneRender};
use crate::codebook::{
    coverage_radius, estimate_pose, lookup, render_view, CodebookError, Detection, PoseCodebook,
};
use crate::descriptor::{augment, embed};
use crate::geometry::Vec3;
use crate::rotations::{geodesic_distance, RotationMatrix, UnitQuaternion};
use crate::transforms::{calibrate_camera, format_transform_line, label_object_pose, FrameId, RigidTransform, TransformTree};

use super::config::ExperimentConfig;
use super::report::{ErrorStats, ExperimentReport, SweepPoint, TrialRow};
use super::HarnessError;

const PICK_STREAM: u64 = 1 << 32;
const PLACE_STREAM: u64 = 2 << 32;
const REPORT_STREAM: u64 = 3 << 32;
const CALIB_STREAM: u64 = 4 << 32;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Canonical `T^base_object` for placement: breast facing base `-y`, neck
/// pointing up.
pub fn canonical_pose() -> RigidTransform {
    let r = RotationMatrix::from_columns(Vec3::X, Vec3::Z, -Vec3::Y).expect("proper rotation");
    RigidTransform {
        rotation: UnitQuaternion::from_matrix(&r),
        translation: Vec3::new(0.3, 0.5, 0.4),
    }
}

/// The codebook named in the config, or a fresh one rendered from the
/// configured bird.
pub fn load_or_build_codebook(cfg: &ExperimentConfig) -> Result<PoseCodebook, HarnessError> {
    if let Some(path) = &cfg.codebook.path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read codebook {}: {e}", path.display())))?;
        return PoseCodebook::from_text(&text).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())));
    }
    let object = DeformableObject::new(cfg.object_template(cfg.codebook.object_seed))?;
    Ok(PoseCodebook::build(&object, cfg.sampling, cfg.codebook_setup())?)
}

/// Detection for object `index`: the labelled pixel nearest the centroid of
/// its visible pixels, with that pixel's depth.
fn detect_object(render: &SceneRender, index: usize) -> Option<Detection> {
    let (w, h) = (render.depth.width(), render.depth.height());
    let pixels: Vec<(usize, usize)> = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .filter(|&(u, v)| render.label(u, v) == Some(index))
        .collect();
    if pixels.is_empty() {
        return None;
    }
    let n = pixels.len() as f64;
    let cu = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cv = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let &(u, v) = pixels
        .iter()
        .min_by(|a, b| {
            let da = (a.0 as f64 - cu).powi(2) + (a.1 as f64 - cv).powi(2);
            let db = (b.0 as f64 - cu).powi(2) + (b.1 as f64 - cv).powi(2);
            da.total_cmp(&db)
        })
        .expect("non-empty");
    Some(Detection {
        u: u as f64,
        v: v as f64,
        depth: render.depth.get(u, v),
    })
}

fn class_trials(trials: usize) -> impl Iterator<Item = (usize, PoseClass)> {
    PoseClass::ALL
        .into_iter()
        .enumerate()
        .flat_map(move |(ci, c)| (0..trials).map(move |i| (ci * trials + i, c)))
}

/// Bin-picking success per pose class: each trial is a fresh bin of
/// `scene.objects` birds of one class and a single pick at the top keypoint.
pub fn run_pick_bench(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let k = CameraIntrinsics::bin();
    let scene_cfg = cfg.scene_config(false);
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (trial, class) in class_trials(cfg.experiment.pick_trials) {
        let mut rng = stream_rng(cfg.experiment.seed, PICK_STREAM + trial as u64);
        let mut scene = generate_scene(cfg.scene.objects, &ClassMix::only(class), &scene_cfg, &mut rng)?;
        let render = scene.render(&k);
        let (success, cause) = match detect_keypoints(&render.depth, &k, &cfg.suction) {
            Ok(kps) => {
                let mut cell = Workcell::default();
                let a = execute_pick(&mut scene, &kps, &cfg.suction, &mut cell)?;
                (a.success, a.cause.as_str().to_string())
            }
            Err(SimError::NoCandidates) => (false, "no-keypoint".to_string()),
            Err(e) => return Err(e.into()),
        };
        outcomes.push((class, success));
        rows.push(TrialRow {
            trial,
            class,
            phase: "pick".into(),
            success,
            cause,
            geodesic_error_deg: None,
            estimation_error_deg: None,
        });
    }
    let mut report = ExperimentReport::new("pick", cfg, &outcomes, rows);
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Canonical-pose placement per pose class. Each trial singulates one bird
/// and tries up to `max_grasps` ranked keypoints; when all fail the bird is
/// dropped again in a new pose of its class, up to `max_drops` times. The
/// held bird's pose is estimated from the overhead depth image taken before
/// the pick (or taken from the truth in oracle mode) and the bird is placed
/// using the estimate.
pub fn run_place_bench(cfg: &ExperimentConfig, codebook: Option<&PoseCodebook>) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let owned;
    let codebook = match (cfg.placement.oracle, codebook) {
        (true, _) => None,
        (false, Some(cb)) => Some(cb),
        (false, None) => {
            owned = load_or_build_codebook(cfg)?;
            Some(&owned)
        }
    };
    let k = CameraIntrinsics::bin();
    let scene_cfg = cfg.scene_config(true);
    let canonical = canonical_pose();
    let tolerance = cfg.placement.tolerance_deg.to_radians();
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    let mut placed_errors = Vec::new();
    let mut estimation_errors = Vec::new();

    for (trial, class) in class_trials(cfg.experiment.place_trials) {
        let mut rng = stream_rng(cfg.experiment.seed, PLACE_STREAM + trial as u64);
        let pick_row = |success: bool, cause: &str| TrialRow {
            trial,
            class,
            phase: "pick".into(),
            success,
            cause: cause.into(),
            geodesic_error_deg: None,
            estimation_error_deg: None,
        };
        let mut grasped = None;
        for _ in 0..cfg.placement.max_drops {
            let mut scene = generate_scene(1, &ClassMix::only(class), &scene_cfg, &mut rng)?;
            let render = scene.render(&k);
            let Some(detection) = detect_object(&render, 0) else {
                rows.push(pick_row(false, "not-detected"));
                continue;
            };
            let keypoints = match detect_keypoints(&render.depth, &k, &cfg.suction) {
                Ok(kps) => kps,
                Err(SimError::NoCandidates) => {
                    rows.push(pick_row(false, "no-keypoint"));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let truth = scene.objects[0].pose;
            let mut cell = Workcell::default();
            let mut last = None;
            for kp in keypoints.iter().take(cfg.placement.max_grasps) {
                let a = execute_pick(&mut scene, std::slice::from_ref(kp), &cfg.suction, &mut cell)?;
                let done = a.success;
                last = Some(a);
                if done {
                    break;
                }
            }
            let attempt = last.expect("at least one keypoint");
            rows.push(pick_row(attempt.success, attempt.cause.as_str()));
            if let Some(held) = attempt.picked {
                let estimate = match codebook {
                    None => truth,
                    Some(cb) => estimate_pose(&render.depth, &detection, cb, &k)?,
                };
                grasped = Some((held, cell, estimate));
                break;
            }
        }
        let Some((held, cell, estimate)) = grasped else {
            outcomes.push((class, false));
            continue;
        };
        let truth = held.pose;

        let t_base_camera = cell.t_base_camera();
        let t_wrist_object = cell.lookup("wrist", "object")?;
        let result = evaluate_placement(
            &t_base_camera.compose(&estimate),
            &t_base_camera.compose(&held.pose),
            &t_wrist_object,
            &canonical,
            tolerance,
        );
        let est_err = geodesic_distance(&estimate.rotation, &truth.rotation).to_degrees();
        rows.push(TrialRow {
            trial,
            class,
            phase: "place".into(),
            success: result.success,
            cause: if result.success { "none" } else { "pose-error" }.into(),
            geodesic_error_deg: Some(result.error.to_degrees()),
            estimation_error_deg: Some(est_err),
        });
        outcomes.push((class, result.success));
        placed_errors.push(result.error);
        estimation_errors.push(est_err);
    }

    let mut report = ExperimentReport::new("place", cfg, &outcomes, rows);
    let n = outcomes.len() as f64;
    report.sweep = cfg
        .placement
        .sweep_deg
        .iter()
        .map(|&d| {
            let succeeded = placed_errors.iter().filter(|e| **e <= d.to_radians()).count();
            SweepPoint {
                tolerance_deg: d,
                succeeded,
                rate: succeeded as f64 / n,
            }
        })
        .collect();
    report.estimation_error_deg = ErrorStats::from_values(&estimation_errors);
    report.codebook = codebook.map(|cb| cb.header());
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodebookReport {
    pub codebook: String,
    pub seed: u64,
    pub queries: usize,
    pub coverage_probes: usize,
    /// Coverage radius of the codebook rotations, degrees.
    pub delta_deg: f64,
    pub clean: ErrorStats,
    pub clean_within_delta: usize,
    pub augmented: ErrorStats,
    pub augmented_within_2delta: usize,
    pub clean_errors_deg: Vec<f64>,
    pub augmented_errors_deg: Vec<f64>,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl CodebookReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn summary(&self) -> String {
        let n = self.queries as f64;
        let mut s = self.codebook.clone();
        let _ = writeln!(s, "coverage radius: {:.4} deg over {} probes", self.delta_deg, self.coverage_probes);
        for (name, e, hits, bound) in [
            ("clean", &self.clean, self.clean_within_delta, "delta"),
            ("augmented", &self.augmented, self.augmented_within_2delta, "2 delta"),
        ] {
            let _ = writeln!(
                s,
                "{name:<10} mean {:.3} deg  median {:.3} deg  max {:.3} deg  within {bound}: {}/{} ({:.1}%)",
                e.mean,
                e.median,
                e.max,
                hits,
                self.queries,
                100.0 * hits as f64 / n
            );
        }
        s
    }
}

/// Retrieval accuracy of the codebook on fresh clean and augmented renders
/// of its own object at random orientations.
pub fn run_codebook_report(cfg: &ExperimentConfig, codebook: Option<&PoseCodebook>) -> Result<CodebookReport, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let owned;
    let cb = match codebook {
        Some(cb) => cb,
        None => {
            owned = load_or_build_codebook(cfg)?;
            &owned
        }
    };
    let object = DeformableObject::new(cfg.object_template(cfg.codebook.object_seed))?;
    let seed = cfg.experiment.seed;
    let mut probe_rng = stream_rng(seed, REPORT_STREAM);
    let probes: Vec<UnitQuaternion> = (0..cfg.experiment.coverage_probes)
        .map(|_| UnitQuaternion::sample_uniform(&mut probe_rng))
        .collect();
    let delta = coverage_radius(&cb.rotations(), &probes);

    let setup = &cb.setup;
    let (mut clean, mut augmented) = (Vec::new(), Vec::new());
    for i in 0..cfg.experiment.report_queries {
        let mut rng = stream_rng(seed, REPORT_STREAM + 1 + i as u64);
        let q = UnitQuaternion::sample_uniform(&mut rng);
        let depth = render_view(&object, &q, setup)?;
        let crop = crop_object(&depth, (setup.intrinsics.cx, setup.intrinsics.cy), &setup.crop)?;
        let hit = lookup(&embed(&crop.image).map_err(CodebookError::from)?, cb)?;
        clean.push(geodesic_distance(&hit.rotation, &q));
        let noisy = augment(&crop.image, &cfg.augment, &mut rng);
        let hit = lookup(&embed(&noisy).map_err(CodebookError::from)?, cb)?;
        augmented.push(geodesic_distance(&hit.rotation, &q));
    }
    let deg = |v: &[f64]| v.iter().map(|e| e.to_degrees()).collect::<Vec<_>>();
    let (clean_deg, aug_deg) = (deg(&clean), deg(&augmented));
    Ok(CodebookReport {
        codebook: cb.header(),
        seed,
        queries: clean.len(),
        coverage_probes: probes.len(),
        delta_deg: delta.to_degrees(),
        clean: ErrorStats::from_values(&clean_deg).expect("at least one query"),
        clean_within_delta: clean.iter().filter(|e| **e <= delta).count(),
        augmented: ErrorStats::from_values(&aug_deg).expect("at least one query"),
        augmented_within_2delta: augmented.iter().filter(|e| **e <= 2.0 * delta).count(),
        clean_errors_deg: clean_deg,
        augmented_errors_deg: aug_deg,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneEstimate {
    pub index: usize,
    pub class: PoseClass,
    /// `T^camera_object` from the codebook; `None` when the object is hidden.
    pub estimated: Option<RigidTransform>,
    pub truth: RigidTransform,
    pub error_deg: Option<f64>,
}

/// Codebook pose estimate for every object of a scene seen by the bin camera.
pub fn estimate_scene(scene: &BinScene, cb: &PoseCodebook) -> Result<Vec<SceneEstimate>, HarnessError> {
    let k = CameraIntrinsics::bin();
    let render = scene.render(&k);
    scene
        .objects
        .iter()
        .enumerate()
        .map(|(index, o)| {
            let estimated = match detect_object(&render, index) {
                Some(det) => Some(estimate_pose(&render.depth, &det, cb, &k)?),
                None => None,
            };
            Ok(SceneEstimate {
                index,
                class: o.class,
                estimated,
                truth: o.pose,
                error_deg: estimated.map(|e| geodesic_distance(&e.rotation, &o.pose.rotation).to_degrees()),
            })
        })
        .collect()
}

pub fn format_estimates(estimates: &[SceneEstimate]) -> String {
    let mut s = String::new();
    for e in estimates {
        match (e.estimated, e.error_deg) {
            (Some(est), Some(err)) => {
                let _ = writeln!(s, "object {} class {} estimate {est} truth {} error_deg {err:.6}", e.index, e.class, e.truth);
            }
            _ => {
                let _ = writeln!(s, "object {} class {} hidden truth {}", e.index, e.class, e.truth);
            }
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct CalibrationDemo {
    pub chain: TransformTree,
    /// `T^base_camera` from the tag chain.
    pub t_base_camera: RigidTransform,
    /// `T^camera_object` from the kinematic label chain, when the chain has
    /// an `object` frame under the wrist.
    pub t_camera_object: Option<RigidTransform>,
}

impl CalibrationDemo {
    pub fn to_text(&self) -> String {
        let f = |n: &str| FrameId::new(n).expect("static frame name");
        let mut s = format_transform_line(&f("base"), &f("camera"), &self.t_base_camera);
        s.push('\n');
        if let Some(t) = &self.t_camera_object {
            s.push_str(&format_transform_line(&f("camera"), &f("object"), t));
            s.push('\n');
        }
        s
    }
}

/// Hand-eye calibration and label chains over `base -> wrist -> aruco ->
/// camera` (plus `wrist -> object`). Without a chain, one is drawn from the
/// seed.
pub fn calib_demo(cfg: &ExperimentConfig, chain: Option<TransformTree>) -> Result<CalibrationDemo, HarnessError> {
    cfg.validate()?;
    let f = |n: &str| FrameId::new(n).expect("static frame name");
    let chain = match chain {
        Some(t) => t,
        None => {
            let mut rng = stream_rng(cfg.experiment.seed, CALIB_STREAM);
            let random = |rng: &mut ChaCha8Rng| RigidTransform {
                rotation: UnitQuaternion::sample_uniform(rng),
                translation: Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            };
            let mut t = TransformTree::new();
            for (p, c) in [("base", "wrist"), ("wrist", "aruco"), ("aruco", "camera"), ("wrist", "object")] {
                let x = random(&mut rng);
                t.add_edge(f(p), f(c), x)?;
            }
            t
        }
    };
    let edge = |from: &str, to: &str| chain.lookup(&f(from), &f(to));
    let t_base_wrist = edge("base", "wrist").map_err(|e| HarnessError::Input(e.to_string()))?;
    let t_wrist_aruco = edge("wrist", "aruco").map_err(|e| HarnessError::Input(e.to_string()))?;
    let t_aruco_camera = edge("aruco", "camera").map_err(|e| HarnessError::Input(e.to_string()))?;
    let t_base_camera = calibrate_camera(&t_base_wrist, &t_wrist_aruco, &t_aruco_camera);
    let t_camera_object = if chain.contains(&f("object")) {
        let t_wrist_object = edge("wrist", "object").map_err(|e| HarnessError::Input(e.to_string()))?;
        Some(label_object_pose(&t_base_camera, &t_base_wrist, &t_wrist_object))
    } else {
        None
    };
    Ok(CalibrationDemo {
        chain,
        t_base_camera,
        t_camera_object,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_pose_axes() {
        let c = canonical_pose();
        assert!((c.rotation.rotate(Vec3::Y) - Vec3::Z).norm() < 1e-12);
        assert!((c.rotation.rotate(Vec3::Z) + Vec3::Y).norm() < 1e-12);
    }

    #[test]
    fn streams_differ_per_trial() {
        let a: u64 = stream_rng(1, PICK_STREAM).random();
        let b: u64 = stream_rng(1, PICK_STREAM + 1).random();
        let c: u64 = stream_rng(1, PICK_STREAM).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn identity_chain_calibrates_to_identity() {
        let text = "base wrist 1 0 0 0 0 0 0\nwrist aruco 1 0 0 0 0 0 0\naruco camera 1 0 0 0 0 0 0\n";
        let demo = calib_demo(&ExperimentConfig::default(), Some(TransformTree::parse(text).unwrap())).unwrap();
        assert_eq!(demo.t_base_camera, RigidTransform::IDENTITY);
        assert!(demo.t_camera_object.is_none());
    }

    #[test]
    fn random_chain_is_seeded() {
        let cfg = ExperimentConfig::default();
        let a = calib_demo(&cfg, None).unwrap();
        assert_eq!(a.to_text(), calib_demo(&cfg, None).unwrap().to_text());
        let via_tree = a.chain.lookup(&FrameId::new("camera").unwrap(), &FrameId::new("object").unwrap()).unwrap();
        let lab = a.t_camera_object.unwrap();
        assert!(geodesic_distance(&via_tree.rotation, &lab.rotation) < 1e-9);
        assert!((via_tree.translation - lab.translation).norm() < 1e-12);
    }
}
