//! Bins of objects: pose classes, seeded scene generation and scene files.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{render_scene, CameraIntrinsics, SceneRender};
use crate::geometry::{fibonacci_sphere, Vec3};
use crate::rotations::UnitQuaternion;
use crate::transforms::{format_transform_line, FrameId, RigidTransform};

use super::object::{DeformableObject, ObjectParams, Protrusion};
use super::SimError;

const REST_SAMPLES: usize = 1000;
const OVERLAP_SAMPLES: usize = 2000;
// Sampled penetration is held this far below the tolerance so the surface
// between samples stays within it.
const OVERLAP_MARGIN: f64 = 0.002;

/// Coarse resting orientation of a bird in the bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseClass {
    BreastUp,
    BreastDown,
    BreastSide,
}

impl PoseClass {
    pub const ALL: [PoseClass; 3] = [PoseClass::BreastUp, PoseClass::BreastDown, PoseClass::BreastSide];

    pub fn as_str(self) -> &'static str {
        match self {
            PoseClass::BreastUp => "breast-up",
            PoseClass::BreastDown => "breast-down",
            PoseClass::BreastSide => "breast-side",
        }
    }

    /// Table heading.
    pub fn title(self) -> &'static str {
        match self {
            PoseClass::BreastUp => "Breast Up",
            PoseClass::BreastDown => "Breast Down",
            PoseClass::BreastSide => "Breast Side",
        }
    }

    /// `R^camera_object` of the unperturbed class pose. The camera looks down,
    /// so breast up means the object `+z` axis points along camera `-z`.
    pub fn nominal(self) -> UnitQuaternion {
        match self {
            PoseClass::BreastUp => UnitQuaternion::from_axis_angle(Vec3::X, std::f64::consts::PI),
            PoseClass::BreastDown => UnitQuaternion::IDENTITY,
            PoseClass::BreastSide => UnitQuaternion::from_axis_angle(Vec3::Y, std::f64::consts::FRAC_PI_2),
        }
    }

    /// Class of an orientation: breast axis within 45 degrees of up or down,
    /// otherwise side.
    pub fn classify(rotation: &UnitQuaternion) -> PoseClass {
        let breast = rotation.rotate(Vec3::Z);
        let limit = std::f64::consts::FRAC_PI_4;
        if breast.angle_to(-Vec3::Z) <= limit {
            PoseClass::BreastUp
        } else if breast.angle_to(Vec3::Z) <= limit {
            PoseClass::BreastDown
        } else {
            PoseClass::BreastSide
        }
    }

    /// Nominal pose turned by a random yaw about the vertical and tilted by
    /// up to `max_tilt` radians about a random horizontal axis.
    pub fn sample_rotation<R: Rng + ?Sized>(self, max_tilt: f64, rng: &mut R) -> UnitQuaternion {
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let tilt = if max_tilt > 0.0 { rng.random_range(0.0..=max_tilt) } else { 0.0 };
        let tilt_axis = Vec3::new(heading.cos(), heading.sin(), 0.0);
        UnitQuaternion::from_axis_angle(tilt_axis, tilt)
            .multiply(&UnitQuaternion::from_axis_angle(Vec3::Z, yaw))
            .multiply(&self.nominal())
    }
}

impl fmt::Display for PoseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoseClass {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        PoseClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| SimError::InvalidScene(format!("unknown pose class {s:?}")))
    }
}

/// Relative frequency of each pose class in generated scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMix {
    pub weights: [f64; 3],
}

impl ClassMix {
    pub fn uniform() -> Self {
        Self { weights: [1.0; 3] }
    }

    pub fn only(class: PoseClass) -> Self {
        let mut weights = [0.0; 3];
        weights[class as usize] = 1.0;
        Self { weights }
    }

    fn validate(&self) -> Result<(), SimError> {
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || !(total > 0.0) {
            return Err(SimError::InvalidScene("class weights must be non-negative with a positive sum".into()));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PoseClass {
        let total: f64 = self.weights.iter().sum();
        let mut x = rng.random_range(0.0..total);
        for (c, w) in PoseClass::ALL.into_iter().zip(self.weights) {
            if x < w {
                return c;
            }
            x -= w;
        }
        // Rounding can leave x just above the last positive weight.
        PoseClass::ALL
            .into_iter()
            .zip(self.weights)
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(c, _)| c)
            .unwrap_or(PoseClass::BreastUp)
    }
}

/// Axis-aligned bin in the camera frame: XY extent and floor depth (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub floor_z: f64,
}

impl Default for BinBounds {
    fn default() -> Self {
        Self {
            x_min: -0.45,
            x_max: 0.45,
            y_min: -0.35,
            y_max: 0.35,
            floor_z: 1.2,
        }
    }
}

impl BinBounds {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max, self.floor_z].iter().all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
            && self.floor_z > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidScene(format!("bad bin bounds {self:?}")))
        }
    }

    /// Whether a sphere's XY footprint lies inside the bin.
    pub fn holds(&self, center: Vec3, radius: f64) -> bool {
        center.x - radius >= self.x_min
            && center.x + radius <= self.x_max
            && center.y - radius >= self.y_min
            && center.y + radius <= self.y_max
    }
}

/// Scene generation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub bin: BinBounds,
    /// Largest tilt away from the class pose, radians.
    pub max_tilt: f64,
    /// Allowed interpenetration of neighbouring objects, meters.
    pub penetration_tolerance: f64,
    pub max_attempts: usize,
    /// Objects are copies of this template with fresh seeds.
    pub template: ObjectParams,
    /// Restrict centres to this radius around the bin middle (singulated
    /// scenes); `None` uses the whole bin.
    pub center_radius: Option<f64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            bin: BinBounds::default(),
            max_tilt: 30f64.to_radians(),
            penetration_tolerance: 0.01,
            max_attempts: 1000,
            template: ObjectParams::bird(0),
            center_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub object: DeformableObject,
    /// `T^camera_object`.
    pub pose: RigidTransform,
    pub class: PoseClass,
}

/// First surface crossing of a ray through the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub t: f64,
    pub index: usize,
    /// Camera frame.
    pub point: Vec3,
    /// Outward unit normal, camera frame.
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinScene {
    pub bin: BinBounds,
    pub objects: Vec<SceneObject>,
}

impl BinScene {
    pub fn render(&self, k: &CameraIntrinsics) -> SceneRender {
        let pairs: Vec<(&DeformableObject, RigidTransform)> = self.objects.iter().map(|o| (&o.object, o.pose)).collect();
        render_scene(&pairs, k)
    }

    /// Nearest object surface along `origin + t * dir`, `t >= 0`.
    pub fn cast(&self, origin: Vec3, dir: Vec3) -> Option<SurfaceHit> {
        let mut best: Option<SurfaceHit> = None;
        for (index, o) in self.objects.iter().enumerate() {
            let inv = o.pose.invert();
            let local_origin = inv.transform_point(origin);
            let local_dir = inv.rotation.rotate(dir);
            if let Some(t) = o.object.intersect_ray(local_origin, local_dir, crate::camera::RENDER_TOLERANCE) {
                if best.is_none_or(|b| t < b.t) {
                    let local = local_origin + local_dir * t;
                    best = Some(SurfaceHit {
                        t,
                        index,
                        point: origin + dir * t,
                        normal: o.pose.rotation.rotate(o.object.normal(local)),
                    });
                }
            }
        }
        best
    }

    /// Deepest sampled penetration of any object pair (meters, radial
    /// measure), or 0 if nothing overlaps.
    pub fn max_penetration(&self, samples: usize) -> f64 {
        let dirs = fibonacci_sphere(samples);
        let mut worst: f64 = 0.0;
        for i in 0..self.objects.len() {
            for j in 0..self.objects.len() {
                if i != j {
                    worst = worst.max(penetration(&self.objects[i], &self.objects[j], &dirs));
                }
            }
        }
        worst
    }

    /// Scene file text: object parameters, seeds and camera-frame poses.
    pub fn to_text(&self) -> String {
        let b = &self.bin;
        let mut out = format!(
            "SCENE v1\nbin {} {} {} {} {}\n",
            b.x_min, b.x_max, b.y_min, b.y_max, b.floor_z
        );
        let camera = FrameId::new("camera").expect("valid frame");
        for (i, o) in self.objects.iter().enumerate() {
            let p = o.object.params();
            out.push_str(&format!("object {i} class {} seed {}\n", o.class, p.seed));
            out.push_str(&format!(
                "shape {} {} {} {} {}\n",
                p.semi_axes[0], p.semi_axes[1], p.semi_axes[2], p.exponents[0], p.exponents[1]
            ));
            out.push_str(&format!("deform {}\n", p.deformation));
            for pr in &p.protrusions {
                out.push_str(&format!(
                    "protrusion {} {} {} {} {}\n",
                    pr.direction.x, pr.direction.y, pr.direction.z, pr.height, pr.width
                ));
            }
            let child = FrameId::new(format!("object{i}")).expect("valid frame");
            out.push_str("pose ");
            out.push_str(&format_transform_line(&camera, &child, &o.pose));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SimError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, msg: &str| SimError::Parse { line, msg: msg.to_string() };
        match lines.next() {
            Some((_, "SCENE v1")) => {}
            Some((n, _)) => return Err(err(n, "expected `SCENE v1`")),
            None => return Err(err(0, "empty scene file")),
        }
        let (n, bin_line) = lines.next().ok_or_else(|| err(0, "missing bin line"))?;
        let v = numbers(n, bin_line, "bin", 5)?;
        let bin = BinBounds {
            x_min: v[0],
            x_max: v[1],
            y_min: v[2],
            y_max: v[3],
            floor_z: v[4],
        };
        bin.validate()?;

        struct Pending {
            line: usize,
            class: PoseClass,
            params: ObjectParams,
            pose: Option<RigidTransform>,
        }
        let mut pending: Vec<Pending> = Vec::new();
        for (n, line) in lines {
            let mut tok = line.split_whitespace();
            let key = tok.next().unwrap_or_default();
            match key {
                "object" => {
                    let t: Vec<&str> = tok.collect();
                    if t.len() != 5 || t[1] != "class" || t[3] != "seed" {
                        return Err(err(n, "expected `object <i> class <c> seed <s>`"));
                    }
                    if t[0].parse::<usize>().ok() != Some(pending.len()) {
                        return Err(err(n, "objects must be numbered 0, 1, 2, ..."));
                    }
                    let class = t[2].parse().map_err(|e: SimError| err(n, &e.to_string()))?;
                    let seed = t[4].parse().map_err(|_| err(n, "bad seed"))?;
                    let mut params = ObjectParams::sphere(1.0);
                    params.seed = seed;
                    pending.push(Pending { line: n, class, params, pose: None });
                }
                _ => {
                    let cur = pending.last_mut().ok_or_else(|| err(n, "field before any `object` line"))?;
                    match key {
                        "shape" => {
                            let v = numbers(n, line, "shape", 5)?;
                            cur.params.semi_axes = [v[0], v[1], v[2]];
                            cur.params.exponents = [v[3], v[4]];
                        }
                        "deform" => cur.params.deformation = numbers(n, line, "deform", 1)?[0],
                        "protrusion" => {
                            let v = numbers(n, line, "protrusion", 5)?;
                            cur.params.protrusions.push(Protrusion {
                                direction: Vec3::new(v[0], v[1], v[2]),
                                height: v[3],
                                width: v[4],
                            });
                        }
                        "pose" => {
                            let rest = line["pose".len()..].trim();
                            let parsed = crate::transforms::parse_transform_lines(rest).map_err(|e| err(n, &e.to_string()))?;
                            let [(parent, child, t)] = parsed.as_slice() else {
                                return Err(err(n, "expected one transform"));
                            };
                            let want = format!("object{}", pending.len() - 1);
                            if parent.as_str() != "camera" || child.as_str() != want {
                                return Err(err(n, &format!("expected `pose camera {want} ...`")));
                            }
                            let cur = pending.last_mut().expect("checked above");
                            cur.pose = Some(*t);
                        }
                        _ => return Err(err(n, &format!("unknown key {key:?}"))),
                    }
                }
            }
        }
        let objects = pending
            .into_iter()
            .map(|p| {
                let object = DeformableObject::new(p.params).map_err(|e| err(p.line, &e.to_string()))?;
                let pose = p.pose.ok_or_else(|| err(p.line, "object has no pose line"))?;
                Ok(SceneObject { object, pose, class: p.class })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        if objects.is_empty() {
            return Err(err(0, "scene has no objects"));
        }
        Ok(Self { bin, objects })
    }
}

fn numbers(line: usize, text: &str, key: &str, count: usize) -> Result<Vec<f64>, SimError> {
    let vals: Result<Vec<f64>, _> = text.split_whitespace().skip(1).map(str::parse::<f64>).collect();
    match vals {
        Ok(v) if v.len() == count && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(SimError::Parse {
            line,
            msg: format!("`{key}` takes {count} numbers"),
        }),
    }
}

/// Deepest radial penetration of `a`'s sampled surface into `b`.
fn penetration(a: &SceneObject, b: &SceneObject, dirs: &[Vec3]) -> f64 {
    let gap = (a.pose.translation - b.pose.translation).norm();
    if gap >= a.object.bounding_radius() + b.object.bounding_radius() {
        return 0.0;
    }
    let b_inv = b.pose.invert();
    dirs.iter()
        .map(|u| {
            let p = b_inv.transform_point(a.pose.transform_point(a.object.surface_point(*u)));
            (-b.object.inside_outside(p)).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Depth of the object centre that puts its lowest point on the floor.
fn resting_depth(object: &DeformableObject, rotation: &UnitQuaternion, floor_z: f64) -> f64 {
    let lowest = fibonacci_sphere(REST_SAMPLES)
        .into_iter()
        .map(|u| rotation.rotate(object.surface_point(u)).z)
        .fold(f64::NEG_INFINITY, f64::max);
    floor_z - lowest
}

/// Drop `n` objects into the bin one by one, redrawing a pose whenever it
/// leaves the bin or penetrates an earlier object by more than the tolerance.
pub fn generate_scene<R: Rng + ?Sized>(n: usize, mix: &ClassMix, cfg: &SceneConfig, rng: &mut R) -> Result<BinScene, SimError> {
    if n == 0 {
        return Err(SimError::InvalidScene("scene needs at least one object".into()));
    }
    mix.validate()?;
    cfg.bin.validate()?;
    let dirs = fibonacci_sphere(OVERLAP_SAMPLES);
    let limit = (cfg.penetration_tolerance - OVERLAP_MARGIN).max(0.0);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(n);
    for index in 0..n {
        let mut params = cfg.template.clone();
        params.seed = rng.random();
        let object = DeformableObject::new(params)?;
        let class = mix.sample(rng);
        let r = object.bounding_radius();
        let (x_lo, x_hi, y_lo, y_hi) = match cfg.center_radius {
            Some(c) => (
                (-c).max(cfg.bin.x_min + r),
                c.min(cfg.bin.x_max - r),
                (-c).max(cfg.bin.y_min + r),
                c.min(cfg.bin.y_max - r),
            ),
            None => (cfg.bin.x_min + r, cfg.bin.x_max - r, cfg.bin.y_min + r, cfg.bin.y_max - r),
        };
        if x_lo > x_hi || y_lo > y_hi {
            return Err(SimError::PlacementFailed { index, attempts: 0 });
        }
        let mut placed = None;
        for _ in 0..cfg.max_attempts {
            let rotation = class.sample_rotation(cfg.max_tilt, rng);
            let x = if x_lo < x_hi { rng.random_range(x_lo..=x_hi) } else { x_lo };
            let y = if y_lo < y_hi { rng.random_range(y_lo..=y_hi) } else { y_lo };
            let z = resting_depth(&object, &rotation, cfg.bin.floor_z);
            let candidate = SceneObject {
                object: object.clone(),
                pose: RigidTransform {
                    rotation,
                    translation: Vec3::new(x, y, z),
                },
                class,
            };
            let clear = objects
                .iter()
                .all(|o| penetration(&candidate, o, &dirs) <= limit && penetration(o, &candidate, &dirs) <= limit);
            if clear {
                placed = Some(candidate);
                break;
            }
        }
        match placed {
            Some(o) => objects.push(o),
            None => {
                return Err(SimError::PlacementFailed {
                    index,
                    attempts: cfg.max_attempts,
                })
            }
        }
    }
    Ok(BinScene { bin: cfg.bin, objects })
}
