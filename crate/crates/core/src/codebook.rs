//! View-sphere pose codebook: orientations sampled over the sphere of viewing
//! directions (times in-plane rolls), each paired with the embedding of its
//! rendered crop. Pose queries are answered by nearest-neighbour search.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binsim::object::DeformableObject;
use crate::camera::{crop_object, deproject, render_depth, CameraError, CameraIntrinsics, CropRule, DepthImage};
use crate::descriptor::{embed, DescriptorError, Embedding};
use crate::geometry::{fibonacci_sphere, Vec3};
use crate::rotations::{geodesic_distance, RotationMatrix, UnitQuaternion};
use crate::transforms::RigidTransform;

/// Look-at directions closer than this to the up vector are nudged off it.
const POLE_NUDGE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodebookError {
    #[error("invalid sampling: {0}")]
    InvalidSampling(String),
    #[error("entry {index}: {source}")]
    Render { index: usize, source: CameraError },
    #[error("entry {index}: {source}")]
    Embed { index: usize, source: DescriptorError },
    #[error("query has dimension {query}, codebook has {codebook}")]
    DimensionMismatch { query: usize, codebook: usize },
    #[error("codebook is empty")]
    Empty,
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("codebook file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewSampling {
    pub n_views: usize,
    pub n_inplane: usize,
}

impl Default for ViewSampling {
    fn default() -> Self {
        Self {
            n_views: 162,
            n_inplane: 12,
        }
    }
}

impl ViewSampling {
    pub fn total(&self) -> usize {
        self.n_views * self.n_inplane
    }

    /// Codebooks need at least four viewpoints.
    pub fn validate(&self) -> Result<(), CodebookError> {
        if self.n_views < 4 || self.n_inplane < 1 {
            return Err(CodebookError::InvalidSampling(format!(
                "need n_views >= 4 and n_inplane >= 1, got {} x {}",
                self.n_views, self.n_inplane
            )));
        }
        Ok(())
    }
}

/// `R^camera_object` for a camera sitting at unit direction `view` from the
/// object (object frame) and looking at its origin, image-down pointing along
/// object `-y` as far as possible.
pub fn look_at(view: Vec3) -> UnitQuaternion {
    let up = Vec3::Y;
    let mut forward = -view.normalized();
    if forward.cross(up).norm() < POLE_NUDGE.sin() {
        let tilt = UnitQuaternion::from_axis_angle(Vec3::X, POLE_NUDGE);
        forward = tilt.rotate(forward);
    }
    let x = forward.cross(up).normalized();
    let y = forward.cross(x);
    let r_object_camera = RotationMatrix::from_columns(x, y, forward).expect("orthonormal look-at frame");
    UnitQuaternion::from_matrix(&r_object_camera.transpose())
}

/// Fibonacci-lattice viewpoints, each with `n_inplane` evenly spaced rolls
/// about the optical axis; viewpoint-major, roll-minor.
pub fn sample_rotations(s: &ViewSampling) -> Vec<UnitQuaternion> {
    let mut out = Vec::with_capacity(s.total());
    for view in fibonacci_sphere(s.n_views) {
        let base = look_at(view);
        for k in 0..s.n_inplane {
            let roll = std::f64::consts::TAU * k as f64 / s.n_inplane as f64;
            out.push(UnitQuaternion::from_axis_angle(Vec3::Z, roll).multiply(&base));
        }
    }
    out
}

/// Largest distance from any probe to its nearest sample (radians).
pub fn coverage_radius(samples: &[UnitQuaternion], probes: &[UnitQuaternion]) -> f64 {
    probes
        .iter()
        .map(|p| nearest_sample(samples, p).1)
        .fold(0.0, f64::max)
}

/// Index of and distance to the closest sample.
pub fn nearest_sample(samples: &[UnitQuaternion], q: &UnitQuaternion) -> (usize, f64) {
    let (idx, _) = samples
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bd), (i, s)| {
            let d = s.dot(q).abs();
            if d > bd {
                (i, d)
            } else {
                (bi, bd)
            }
        });
    (idx, geodesic_distance(&samples[idx], q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub rotation: UnitQuaternion,
    pub embedding: Embedding,
}

/// Render and embed settings shared by a codebook and its queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodebookSetup {
    pub intrinsics: CameraIntrinsics,
    pub crop: CropRule,
    pub view_distance: f64,
}

impl Default for CodebookSetup {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::desk(),
            crop: CropRule::default(),
            view_distance: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseCodebook {
    pub sampling: ViewSampling,
    pub setup: CodebookSetup,
    entries: Vec<CodebookEntry>,
}

/// Crop and embed an already rendered single-object view.
pub fn embed_view(depth: &DepthImage, seed: (f64, f64), crop: &CropRule) -> Result<Embedding, CodebookError> {
    let c = crop_object(depth, seed, crop)?;
    Ok(embed(&c.image)?)
}

/// Render the object centred at `setup.view_distance` with orientation `q`.
pub fn render_view(object: &DeformableObject, q: &UnitQuaternion, setup: &CodebookSetup) -> Result<DepthImage, CameraError> {
    let pose = RigidTransform::new(*q, Vec3::new(0.0, 0.0, setup.view_distance)).map_err(|_| CameraError::EmptyRender)?;
    render_depth(object, &pose, &setup.intrinsics)
}

/// Embedding of a clean centred render, the codebook's unit of content.
pub fn embed_pose(object: &DeformableObject, q: &UnitQuaternion, setup: &CodebookSetup) -> Result<Embedding, CodebookError> {
    let depth = render_view(object, q, setup)?;
    let k = &setup.intrinsics;
    embed_view(&depth, (k.cx, k.cy), &setup.crop)
}

impl PoseCodebook {
    pub fn build(object: &DeformableObject, sampling: ViewSampling, setup: CodebookSetup) -> Result<Self, CodebookError> {
        sampling.validate()?;
        setup.intrinsics.validate()?;
        let entries = sample_rotations(&sampling)
            .into_iter()
            .enumerate()
            .map(|(index, rotation)| {
                let depth = render_view(object, &rotation, &setup).map_err(|source| CodebookError::Render { index, source })?;
                let k = &setup.intrinsics;
                let c = crop_object(&depth, (k.cx, k.cy), &setup.crop).map_err(|source| CodebookError::Render { index, source })?;
                let embedding = embed(&c.image).map_err(|source| CodebookError::Embed { index, source })?;
                Ok(CodebookEntry { rotation, embedding })
            })
            .collect::<Result<Vec<_>, CodebookError>>()?;
        Ok(Self { sampling, setup, entries })
    }

    pub fn from_entries(sampling: ViewSampling, setup: CodebookSetup, entries: Vec<CodebookEntry>) -> Result<Self, CodebookError> {
        let dim = entries.first().ok_or(CodebookError::Empty)?.embedding.dim();
        if let Some(e) = entries.iter().find(|e| e.embedding.dim() != dim) {
            return Err(CodebookError::DimensionMismatch {
                query: e.embedding.dim(),
                codebook: dim,
            });
        }
        Ok(Self { sampling, setup, entries })
    }

    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.embedding.dim())
    }

    pub fn rotations(&self) -> Vec<UnitQuaternion> {
        self.entries.iter().map(|e| e.rotation).collect()
    }

    /// Header lines (without entries).
    pub fn header(&self) -> String {
        let k = &self.setup.intrinsics;
        format!(
            "CODEBOOK v1\ndim {}\nviews {} inplane {}\ncrop {}\nintrinsics {} {} {} {} {} {}\ndistance {}\n",
            self.dim(),
            self.sampling.n_views,
            self.sampling.n_inplane,
            self.setup.crop.describe(),
            k.fx,
            k.fy,
            k.cx,
            k.cy,
            k.width,
            k.height,
            self.setup.view_distance,
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = self.header();
        for e in &self.entries {
            let _ = write!(s, "{} ", e.rotation);
            for v in e.embedding.values() {
                let _ = write!(s, " {v:.9e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CodebookError> {
        let mut lines = text.lines().enumerate();
        let mut next = |want: &str| -> Result<(usize, Vec<String>), CodebookError> {
            let (i, l) = lines.next().ok_or(CodebookError::Parse {
                line: 0,
                msg: format!("missing `{want}` line"),
            })?;
            let toks: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
            if toks.first().map(String::as_str) != Some(want) {
                return Err(CodebookError::Parse {
                    line: i + 1,
                    msg: format!("expected `{want}`"),
                });
            }
            Ok((i + 1, toks))
        };
        let perr = |line: usize, msg: String| CodebookError::Parse { line, msg };
        let num = |line: usize, t: &str| t.parse::<f64>().map_err(|e| perr(line, format!("{t:?}: {e}")));
        let int = |line: usize, t: &str| t.parse::<usize>().map_err(|e| perr(line, format!("{t:?}: {e}")));

        let (l, t) = next("CODEBOOK")?;
        if t.get(1).map(String::as_str) != Some("v1") {
            return Err(perr(l, "unsupported version".into()));
        }
        let (l, t) = next("dim")?;
        let dim = int(l, t.get(1).ok_or_else(|| perr(l, "missing dim".into()))?)?;
        let (l, t) = next("views")?;
        if t.len() != 4 || t[2] != "inplane" {
            return Err(perr(l, "expected `views <n> inplane <m>`".into()));
        }
        let sampling = ViewSampling {
            n_views: int(l, &t[1])?,
            n_inplane: int(l, &t[3])?,
        };
        let (l, t) = next("crop")?;
        let crop = match t.as_slice() {
            [_, _, s, scale, z, size, _] if s == "scale" && z == "size" => CropRule {
                scale: num(l, scale)?,
                size: int(l, size)?,
            },
            _ => return Err(perr(l, "unrecognized crop rule".into())),
        };
        let (l, t) = next("intrinsics")?;
        if t.len() != 7 {
            return Err(perr(l, "expected 6 intrinsics".into()));
        }
        let intrinsics = CameraIntrinsics::new(
            num(l, &t[1])?,
            num(l, &t[2])?,
            num(l, &t[3])?,
            num(l, &t[4])?,
            int(l, &t[5])?,
            int(l, &t[6])?,
        )?;
        let (l, t) = next("distance")?;
        let view_distance = num(l, t.get(1).ok_or_else(|| perr(l, "missing distance".into()))?)?;

        let mut entries = Vec::with_capacity(sampling.total());
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| num(i + 1, t))
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != 4 + dim {
                return Err(perr(i + 1, format!("expected {} values, got {}", 4 + dim, vals.len())));
            }
            let rotation = UnitQuaternion::from_components([vals[0], vals[1], vals[2], vals[3]]).map_err(|e| perr(i + 1, e.to_string()))?;
            let embedding = Embedding::from_stored(vals[4..].to_vec()).map_err(|e| perr(i + 1, e.to_string()))?;
            entries.push(CodebookEntry { rotation, embedding });
        }
        if entries.len() != sampling.total() {
            return Err(perr(0, format!("{} entries for {} x {} sampling", entries.len(), sampling.n_views, sampling.n_inplane)));
        }
        Self::from_entries(
            sampling,
            CodebookSetup {
                intrinsics,
                crop,
                view_distance,
            },
            entries,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupResult {
    pub rotation: UnitQuaternion,
    pub similarity: f64,
    pub index: usize,
}

/// Highest cosine similarity by linear scan; the lowest index wins ties.
pub fn lookup(query: &Embedding, cb: &PoseCodebook) -> Result<LookupResult, CodebookError> {
    if cb.is_empty() {
        return Err(CodebookError::Empty);
    }
    if query.dim() != cb.dim() {
        return Err(CodebookError::DimensionMismatch {
            query: query.dim(),
            codebook: cb.dim(),
        });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, e) in cb.entries.iter().enumerate() {
        let s = query.dot(&e.embedding);
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(LookupResult {
        rotation: cb.entries[best.0].rotation,
        similarity: best.1.clamp(-1.0, 1.0),
        index: best.0,
    })
}

/// Detected object: image point and its depth (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// `T^camera_object`: orientation from the codebook entry nearest to the
/// embedded crop around the detection, translation from deprojecting the
/// detection point.
pub fn estimate_pose(scene_depth: &DepthImage, detection: &Detection, cb: &PoseCodebook, k: &CameraIntrinsics) -> Result<RigidTransform, CodebookError> {
    let translation = deproject(detection.u, detection.v, detection.depth, k)?;
    let query = embed_view(scene_depth, (detection.u, detection.v), &cb.setup.crop)?;
    let hit = lookup(&query, cb)?;
    Ok(RigidTransform {
        rotation: hit.rotation,
        translation,
    })
}
