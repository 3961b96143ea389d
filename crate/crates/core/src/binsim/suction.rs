//! Suction picking: flatness-scored keypoints, cup descent with a pressure
//! voltage model, and the pick itself.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::{deproject, CameraIntrinsics, DepthImage, DEPTH_DISCONTINUITY};
use crate::geometry::Vec3;
use crate::rotations::UnitQuaternion;
use crate::transforms::{FrameId, RigidTransform, TransformTree};

use super::scene::{BinScene, PoseClass, SceneObject, SurfaceHit};
use super::SimError;

const KEYPOINT_STRIDE: usize = 4;
// Half-angles are rounded to this quantum so exact geometric ties stay ties.
const ANGLE_QUANTUM: f64 = 1e-9;

/// Suction cup and pressure sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuctionModel {
    /// Cup radius, meters.
    pub cup_radius: f64,
    /// Largest contact normal-cone half-angle that still seals, radians.
    pub flatness_threshold: f64,
    /// Voltage at zero gap.
    pub v0: f64,
    /// Gap sensitivity, 1/m: `v = v0 / (1 + k * gap)`.
    pub k: f64,
    pub voltage_threshold: f64,
    /// Descent step, meters.
    pub step: f64,
    /// Height above the keypoint where descent starts, meters.
    pub start_height: f64,
    /// Surface inside the cup footprint rising more than this above the
    /// contact tangent plane blocks the seal, meters.
    pub obstruction_clearance: f64,
    /// The seal survives the lift when the contact half-angle is at most this
    /// fraction of the flatness threshold.
    pub slip_margin: f64,
}

impl Default for SuctionModel {
    fn default() -> Self {
        Self {
            cup_radius: 0.015,
            flatness_threshold: 20f64.to_radians(),
            v0: 1.0,
            k: 200.0,
            voltage_threshold: 0.9,
            step: 0.001,
            start_height: 0.05,
            obstruction_clearance: 0.01,
            slip_margin: 0.8,
        }
    }
}

impl SuctionModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSuction(m.to_string()));
        let all = [
            self.cup_radius,
            self.flatness_threshold,
            self.v0,
            self.k,
            self.voltage_threshold,
            self.step,
            self.start_height,
            self.obstruction_clearance,
            self.slip_margin,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if self.cup_radius <= 0.0 {
            return bad("cup_radius must be positive");
        }
        if self.flatness_threshold < 0.0 {
            return bad("flatness_threshold must be non-negative");
        }
        if self.v0 <= 0.0 || self.k <= 0.0 || self.step <= 0.0 || self.start_height <= 0.0 {
            return bad("v0, k, step and start_height must be positive");
        }
        if self.obstruction_clearance < 0.0 || !(0.0..=1.0).contains(&self.slip_margin) {
            return bad("obstruction_clearance must be >= 0 and slip_margin in [0, 1]");
        }
        let v_start = self.voltage(self.start_height);
        if !(self.voltage_threshold > v_start && self.voltage_threshold <= self.v0) {
            return bad("voltage_threshold must lie between the start voltage and v0");
        }
        Ok(())
    }

    /// Sensor voltage at a cup-to-surface gap (meters); contact reads `v0`.
    pub fn voltage(&self, gap: f64) -> f64 {
        self.v0 / (1.0 + self.k * gap.max(0.0))
    }
}

/// Why a pick did not succeed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureCause {
    None,
    NotFlat,
    Obstructed,
    Slipped,
    /// Nothing under the cup.
    NoContact,
}

impl FailureCause {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCause::None => "none",
            FailureCause::NotFlat => "not-flat",
            FailureCause::Obstructed => "obstructed",
            FailureCause::Slipped => "slipped",
            FailureCause::NoContact => "no-contact",
        }
    }
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureCause {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [
            FailureCause::None,
            FailureCause::NotFlat,
            FailureCause::Obstructed,
            FailureCause::Slipped,
            FailureCause::NoContact,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| format!("unknown failure cause {s:?}"))
    }
}

/// Candidate picking point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub u: usize,
    pub v: usize,
    /// Deprojected surface point, camera frame.
    pub point: Vec3,
    /// Normal-cone half-angle of the neighbourhood, radians.
    pub half_angle: f64,
    /// `1 / (1 + half_angle)`.
    pub score: f64,
}

/// Least-squares plane `z = a x + b y + c`; returns its unit normal facing
/// the camera.
fn fit_plane(points: &[Vec3]) -> Option<Vec3> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return None;
    }
    let c = points.iter().fold(Vec3::ZERO, |acc, p| acc + *p) / n;
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
        sxz += d.x * d.z;
        syz += d.y * d.z;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det.abs() > 1e-30) {
        return None;
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    Some(Vec3::new(a, b, -1.0).normalized())
}

fn quantize(angle: f64) -> f64 {
    (angle / ANGLE_QUANTUM).round() * ANGLE_QUANTUM
}

/// Rank picking points on a scene depth image.
///
/// Candidates lie on a 4-pixel grid. Each candidate's neighbourhood is the
/// image disc covering the cup radius at its depth; it is rejected if it
/// leaves the image, touches background, or contains a depth jump over 2 cm.
/// Per-pixel normals come from central differences of the deprojected
/// points. The score is `1 / (1 + half_angle)`, where `half_angle` is the
/// largest angle between a pixel normal and the fitted plane normal. Ties
/// keep raster order.
pub fn detect_keypoints(depth: &DepthImage, k: &CameraIntrinsics, cup: &SuctionModel) -> Result<Vec<Keypoint>, SimError> {
    cup.validate()?;
    k.validate()?;
    let (w, h) = (depth.width(), depth.height());
    if w != k.width || h != k.height {
        return Err(SimError::InvalidScene(format!(
            "depth image is {w}x{h} but the camera is {}x{}",
            k.width, k.height
        )));
    }
    let d = depth.data();
    let points: Vec<Option<Vec3>> = (0..w * h)
        .map(|i| {
            let z = d[i];
            (z > 0.0).then(|| deproject((i % w) as f64, (i / w) as f64, z, k).expect("in-bounds positive depth"))
        })
        .collect();
    let mut normals: Vec<Option<Vec3>> = vec![None; w * h];
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let i = v * w + u;
            if d[i] <= 0.0 {
                continue;
            }
            let nb = [i - 1, i + 1, i - w, i + w];
            if nb.iter().any(|&j| d[j] <= 0.0 || (d[j] - d[i]).abs() > DEPTH_DISCONTINUITY) {
                continue;
            }
            let p = |j: usize| points[j].expect("checked valid");
            let du = p(i + 1) - p(i - 1);
            let dv = p(i + w) - p(i - w);
            normals[i] = Some(dv.cross(du).normalized());
        }
    }

    let mut out = Vec::new();
    for v in (0..h).step_by(KEYPOINT_STRIDE) {
        for u in (0..w).step_by(KEYPOINT_STRIDE) {
            let i = v * w + u;
            let Some(center) = points[i] else { continue };
            let ru = cup.cup_radius * k.fx / center.z;
            let rv = cup.cup_radius * k.fy / center.z;
            let (su, sv) = (ru.floor() as i64, rv.floor() as i64);
            let mut pts = Vec::new();
            let mut nrm = Vec::new();
            let mut ok = true;
            'disc: for dv in -sv..=sv {
                for du in -su..=su {
                    let (fu, fv) = (du as f64 / ru, dv as f64 / rv);
                    if fu * fu + fv * fv > 1.0 {
                        continue;
                    }
                    let (uu, vv) = (u as i64 + du, v as i64 + dv);
                    if uu < 0 || vv < 0 || uu >= w as i64 || vv >= h as i64 {
                        ok = false;
                        break 'disc;
                    }
                    let j = vv as usize * w + uu as usize;
                    match (points[j], normals[j]) {
                        (Some(p), Some(n)) if (d[j] - d[i]).abs() <= DEPTH_DISCONTINUITY => {
                            pts.push(p);
                            nrm.push(n);
                        }
                        _ => {
                            ok = false;
                            break 'disc;
                        }
                    }
                }
            }
            if !ok {
                continue;
            }
            let Some(plane) = fit_plane(&pts) else { continue };
            let half_angle = quantize(nrm.iter().map(|n| n.angle_to(plane)).fold(0.0, f64::max));
            out.push(Keypoint {
                u,
                v,
                point: center,
                half_angle,
                score: 1.0 / (1.0 + half_angle),
            });
        }
    }
    if out.is_empty() {
        return Err(SimError::NoCandidates);
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

/// Cup contact found during descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    /// Surface point under the cup axis, camera frame.
    pub point: Vec3,
    /// Scene index of the object under the cup axis.
    pub object: usize,
    /// Normal-cone half-angle of the cup footprint, radians.
    pub half_angle: f64,
}

/// Outcome of lowering the cup onto a keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    /// Sensor voltage after each step.
    pub trace: Vec<f64>,
    pub seal: bool,
    pub cause: FailureCause,
    pub contact: Option<Contact>,
}

/// Horizontal offsets of the footprint samples: centre, then rings at half
/// and full radius.
fn footprint(radius: f64) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0)];
    for (r, n) in [(0.5 * radius, 8), (radius, 16)] {
        for i in 0..n {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            out.push((r * a.cos(), r * a.sin()));
        }
    }
    out
}

/// Largest height of a footprint hit above the tangent plane at `center`,
/// measured along the outward normal.
fn intrusion(center: &SurfaceHit, hits: &[Option<SurfaceHit>]) -> f64 {
    let n = if center.normal.z > 0.0 { -center.normal } else { center.normal };
    hits.iter()
        .flatten()
        .map(|h| (h.point - center.point).dot(n))
        .fold(0.0, f64::max)
}

/// Lower the cup along the camera axis above `keypoint` in `step` increments
/// until the voltage reaches the threshold, then judge the seal.
///
/// The gap is measured to the highest surface under the cup footprint. The
/// seal fails as obstructed when some footprint surface rises more than the
/// clearance above the tangent plane at the point under the cup axis, and as
/// not flat when the footprint overhangs empty space or its normal-cone
/// half-angle exceeds the threshold.
pub fn simulate_descent(scene: &BinScene, keypoint: Vec3, cup: &SuctionModel) -> Descent {
    let down = Vec3::Z;
    let hits: Vec<_> = footprint(cup.cup_radius)
        .into_iter()
        .map(|(dx, dy)| scene.cast(Vec3::new(keypoint.x + dx, keypoint.y + dy, 0.0), down))
        .collect();
    let Some(center) = hits[0] else {
        return Descent {
            trace: Vec::new(),
            seal: false,
            cause: FailureCause::NoContact,
            contact: None,
        };
    };
    let highest = hits.iter().flatten().map(|h| h.point.z).fold(f64::INFINITY, f64::min);

    let mut trace = Vec::new();
    let mut cup_z = center.point.z - cup.start_height;
    let crossed = loop {
        let v = cup.voltage(highest - cup_z);
        trace.push(v);
        if v >= cup.voltage_threshold {
            break true;
        }
        if cup_z >= highest {
            break false;
        }
        cup_z += cup.step;
    };

    let points: Vec<Vec3> = hits.iter().flatten().map(|h| h.point).collect();
    let half_angle = match fit_plane(&points) {
        Some(plane) => hits
            .iter()
            .flatten()
            .map(|h| h.normal.angle_to(plane))
            .fold(0.0, f64::max),
        None => std::f64::consts::PI,
    };
    let contact = Some(Contact {
        point: center.point,
        object: center.index,
        half_angle,
    });
    let cause = if !crossed {
        FailureCause::NoContact
    } else if intrusion(&center, &hits) > cup.obstruction_clearance {
        FailureCause::Obstructed
    } else if hits.iter().any(Option::is_none) || half_angle > cup.flatness_threshold {
        FailureCause::NotFlat
    } else {
        FailureCause::None
    };
    Descent {
        trace,
        seal: cause == FailureCause::None,
        cause,
        contact,
    }
}

/// Robot, camera and cup frames. Frames: `base`, `camera` (child of base),
/// `wrist` (child of base), `cup` (child of wrist) and, while an object is
/// held, `object` (child of cup).
#[derive(Debug, Clone)]
pub struct Workcell {
    pub tree: TransformTree,
}

impl Workcell {
    pub fn frame(name: &str) -> FrameId {
        FrameId::new(name).expect("static frame name")
    }

    /// `T^wrist_cup`: the cup sits 15 cm out along the wrist `z` axis.
    pub fn wrist_cup() -> RigidTransform {
        RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.15))
    }

    /// Camera 1.2 m above the robot base plane, looking straight down.
    pub fn standard_camera() -> RigidTransform {
        RigidTransform {
            rotation: UnitQuaternion::from_axis_angle(Vec3::X, std::f64::consts::PI),
            translation: Vec3::new(0.6, 0.0, 1.2),
        }
    }

    pub fn new(t_base_camera: RigidTransform) -> Self {
        let f = Self::frame;
        let mut tree = TransformTree::new();
        tree.add_edge(f("base"), f("camera"), t_base_camera).expect("fresh tree");
        let home = t_base_camera.compose(&RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.3)));
        tree.add_edge(f("base"), f("wrist"), home.compose(&Self::wrist_cup().invert()))
            .expect("fresh tree");
        tree.add_edge(f("wrist"), f("cup"), Self::wrist_cup()).expect("fresh tree");
        Self { tree }
    }

    pub fn t_base_camera(&self) -> RigidTransform {
        self.tree.lookup(&Self::frame("base"), &Self::frame("camera")).expect("camera frame")
    }

    /// Move the wrist so the cup frame sits at `t_camera_cup`.
    pub fn move_cup(&mut self, t_camera_cup: &RigidTransform) {
        let t_base_wrist = self
            .t_base_camera()
            .compose(t_camera_cup)
            .compose(&Self::wrist_cup().invert());
        self.tree
            .replace_edge(&Self::frame("wrist"), t_base_wrist)
            .expect("wrist frame");
    }

    /// Hang an object from the cup, replacing any held one.
    pub fn attach(&mut self, t_cup_object: RigidTransform) {
        let f = Self::frame;
        self.tree.detach(&f("object"));
        self.tree.add_edge(f("cup"), f("object"), t_cup_object).expect("object detached above");
    }

    pub fn release(&mut self) {
        self.tree.detach(&Self::frame("object"));
    }

    pub fn lookup(&self, from: &str, to: &str) -> Result<RigidTransform, SimError> {
        Ok(self.tree.lookup(&Self::frame(from), &Self::frame(to))?)
    }
}

impl Default for Workcell {
    fn default() -> Self {
        Self::new(Self::standard_camera())
    }
}

/// Record of one pick.
#[derive(Debug, Clone, PartialEq)]
pub struct PickAttempt {
    pub keypoint: Keypoint,
    pub seal: bool,
    pub success: bool,
    pub cause: FailureCause,
    pub trace: Vec<f64>,
    /// Contact half-angle, radians.
    pub half_angle: Option<f64>,
    /// Class of the object under the cup.
    pub class: Option<PoseClass>,
    /// The object now hanging from the cup, removed from the scene.
    pub picked: Option<SceneObject>,
}

/// Try the top-ranked keypoint. A sealed object whose contact half-angle
/// exceeds `slip_margin * flatness_threshold` slips off during the lift and
/// stays in the bin. A held object leaves the scene and becomes a child of
/// the cup frame.
pub fn execute_pick(scene: &mut BinScene, keypoints: &[Keypoint], cup: &SuctionModel, cell: &mut Workcell) -> Result<PickAttempt, SimError> {
    let keypoint = *keypoints.first().ok_or(SimError::NoCandidates)?;
    let descent = simulate_descent(scene, keypoint.point, cup);
    let mut attempt = PickAttempt {
        keypoint,
        seal: descent.seal,
        success: false,
        cause: descent.cause,
        trace: descent.trace,
        half_angle: descent.contact.map(|c| c.half_angle),
        class: descent.contact.map(|c| scene.objects[c.object].class),
        picked: None,
    };
    let Some(contact) = descent.contact else {
        return Ok(attempt);
    };
    if !descent.seal {
        return Ok(attempt);
    }
    if contact.half_angle > cup.slip_margin * cup.flatness_threshold {
        attempt.cause = FailureCause::Slipped;
        return Ok(attempt);
    }
    let t_camera_cup = RigidTransform::from_translation(contact.point);
    cell.move_cup(&t_camera_cup);
    let object = scene.objects.remove(contact.object);
    cell.attach(t_camera_cup.invert().compose(&object.pose));
    attempt.success = true;
    attempt.picked = Some(object);
    Ok(attempt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_valid() {
        SuctionModel::default().validate().unwrap();
    }

    #[test]
    fn voltage_rises_as_gap_closes() {
        let m = SuctionModel::default();
        assert_eq!(m.voltage(0.0), m.v0);
        assert!(m.voltage(0.001) > m.voltage(0.002));
        assert_eq!(m.voltage(-1.0), m.v0);
    }

    #[test]
    fn threshold_outside_curve_is_rejected() {
        let mut m = SuctionModel::default();
        m.voltage_threshold = 1.5;
        assert!(m.validate().is_err());
        m.voltage_threshold = 0.01;
        assert!(m.validate().is_err());
    }

    #[test]
    fn plane_fit_recovers_tilt() {
        let pts: Vec<Vec3> = (0..25)
            .map(|i| {
                let (x, y) = ((i % 5) as f64, (i / 5) as f64);
                Vec3::new(x, y, 0.5 * x + 2.0)
            })
            .collect();
        let n = fit_plane(&pts).unwrap();
        assert!(n.angle_to(Vec3::new(0.5, 0.0, -1.0)) < 1e-12);
    }

    #[test]
    fn workcell_cup_lands_on_target() {
        let mut cell = Workcell::default();
        let target = RigidTransform::from_translation(Vec3::new(0.1, -0.2, 1.0));
        cell.move_cup(&target);
        let got = cell.lookup("camera", "cup").unwrap();
        assert!((got.translation - target.translation).norm() < 1e-12);
    }
}
