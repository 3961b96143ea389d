//! Pinhole camera: projection, deprojection, ray-cast depth rendering of
//! [`DeformableObject`]s, and the object crop fed to the descriptor.
//!
//! Pixel `(u, v)` is sampled by the ray through the point `(u, v)` on the
//! image plane, so integer pixels sit exactly on their rays. Depth is the
//! camera-frame `z` of the hit, not the ray length.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binsim::object::DeformableObject;
use crate::geometry::Vec3;
use crate::rotations::fmt_real;
use crate::transforms::RigidTransform;

/// Bisection tolerance of the ray caster, meters along the ray.
pub const RENDER_TOLERANCE: f64 = 1e-6;

/// Neighbouring depths further apart than this belong to different surfaces.
pub const DEPTH_DISCONTINUITY: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),
    #[error("pixel ({0}, {1}) outside the image")]
    OutOfBounds(f64, f64),
    #[error("point with z = {0} is not in front of the camera")]
    BehindCamera(f64),
    #[error("render produced no surface pixels")]
    EmptyRender,
    #[error("no valid pixels near the requested crop centre")]
    EmptyCrop,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("cannot parse depth image: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, CameraError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(CameraError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(CameraError::InvalidIntrinsics(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    /// 128x128 render/descriptor camera, `fx = fy = 128`.
    pub fn desk() -> Self {
        Self {
            fx: 128.0,
            fy: 128.0,
            cx: 64.0,
            cy: 64.0,
            width: 128,
            height: 128,
        }
    }

    /// Overhead bin camera, 320x240.
    pub fn bin() -> Self {
        Self {
            fx: 320.0,
            fy: 320.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
        }
    }

    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Direction of the ray through `(u, v)` scaled so that `z = 1`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// `((u - cx) d / fx, (v - cy) d / fy, d)`.
pub fn deproject(u: f64, v: f64, depth: f64, k: &CameraIntrinsics) -> Result<Vec3, CameraError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(CameraError::InvalidDepth(depth));
    }
    if !k.in_bounds(u, v) {
        return Err(CameraError::OutOfBounds(u, v));
    }
    Ok(Vec3::new((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth))
}

/// `(fx x / z + cx, fy y / z + cy)`.
pub fn project(p: Vec3, k: &CameraIntrinsics) -> Result<(f64, f64), CameraError> {
    if !(p.z > 0.0) {
        return Err(CameraError::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Row-major depth map in meters; `0` means no return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, CameraError> {
        if data.len() != width * height {
            return Err(CameraError::InvalidImage(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(CameraError::InvalidImage(format!("depth value {bad}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    /// Depth at signed coordinates; `0` outside the image.
    pub fn get_or_zero(&self, u: i64, v: i64) -> f64 {
        if u < 0 || v < 0 || u >= self.width as i64 || v >= self.height as i64 {
            0.0
        } else {
            self.data[v as usize * self.width + u as usize]
        }
    }

    /// Panics on a negative or non-finite depth.
    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        assert!(depth.is_finite() && depth >= 0.0, "invalid depth {depth}");
        self.data[v * self.width + u] = depth;
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }

    /// `DEPTH width height` header, then one row of decimals per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("DEPTH {} {}\n", self.width, self.height);
        for row in self.data.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|d| fmt_real(*d)).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CameraError> {
        let mut tokens = text.split_whitespace();
        if tokens.next() != Some("DEPTH") {
            return Err(CameraError::Parse("missing DEPTH header".into()));
        }
        let mut dim = || -> Result<usize, CameraError> {
            tokens
                .next()
                .ok_or_else(|| CameraError::Parse("missing dimension".into()))?
                .parse()
                .map_err(|e| CameraError::Parse(format!("dimension: {e}")))
        };
        let (w, h) = (dim()?, dim()?);
        let data = tokens
            .map(|t| t.parse::<f64>().map_err(|e| CameraError::Parse(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(w, h, data)
    }
}

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, CameraError> {
        if data.len() != 3 * width * height {
            return Err(CameraError::InvalidImage(format!(
                "{} bytes for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Grey-scale visualization: near surfaces bright, no-return black.
    pub fn from_depth(depth: &DepthImage) -> Self {
        let valid = depth.data().iter().copied().filter(|d| *d > 0.0);
        let (lo, hi) = valid.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let span = (hi - lo).max(1e-9);
        let data = depth
            .data()
            .iter()
            .flat_map(|d| {
                let g = if *d > 0.0 {
                    (255.0 - 200.0 * (d - lo) / span).round() as u8
                } else {
                    0
                };
                [g, g, g]
            })
            .collect();
        Self {
            width: depth.width(),
            height: depth.height(),
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Binary PPM (`P6`).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// Depth render of several objects with a per-pixel object index.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRender {
    pub depth: DepthImage,
    /// Index into the rendered object list, or `None` for background.
    pub labels: Vec<Option<usize>>,
}

impl SceneRender {
    pub fn label(&self, u: usize, v: usize) -> Option<usize> {
        self.labels[v * self.depth.width() + u]
    }
}

/// Conservative pixel rectangle covering a sphere in front of the camera.
fn sphere_pixel_bounds(center: Vec3, radius: f64, k: &CameraIntrinsics) -> Option<(usize, usize, usize, usize)> {
    let near = center.z - radius;
    if near <= 0.0 {
        return Some((0, k.width, 0, k.height));
    }
    let far = center.z + radius;
    let span = |c: f64, f: f64, p: f64| {
        let vals = [(c - radius) / near, (c - radius) / far, (c + radius) / near, (c + radius) / far];
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (f * lo + p, f * hi + p)
    };
    let (u0, u1) = span(center.x, k.fx, k.cx);
    let (v0, v1) = span(center.y, k.fy, k.cy);
    let clamp = |x: f64, n: usize| x.clamp(0.0, n as f64) as usize;
    let (u0, u1) = (clamp(u0.floor(), k.width), clamp(u1.ceil() + 1.0, k.width));
    let (v0, v1) = (clamp(v0.floor(), k.height), clamp(v1.ceil() + 1.0, k.height));
    if u0 >= u1 || v0 >= v1 {
        None
    } else {
        Some((u0, u1, v0, v1))
    }
}

/// Ray-cast every object (pose = `T^camera_object`), keeping the nearest hit.
pub fn render_scene(objects: &[(&DeformableObject, RigidTransform)], k: &CameraIntrinsics) -> SceneRender {
    let mut depth = DepthImage::zeros(k.width, k.height);
    let mut labels = vec![None; k.width * k.height];
    for (idx, (object, pose)) in objects.iter().enumerate() {
        let Some((u0, u1, v0, v1)) = sphere_pixel_bounds(pose.translation, object.bounding_radius(), k) else {
            continue;
        };
        // Rays in the object frame: origin R^T(-t), direction R^T d.
        let r_inv = pose.rotation.inverse().to_matrix();
        let origin = r_inv.apply(-pose.translation);
        let (ax, ay, az) = (r_inv.column(0), r_inv.column(1), r_inv.column(2));
        for v in v0..v1 {
            let dy = (v as f64 - k.cy) / k.fy;
            for u in u0..u1 {
                let dx = (u as f64 - k.cx) / k.fx;
                let dir = ax * dx + ay * dy + az;
                if let Some(t) = object.intersect_ray(origin, dir, RENDER_TOLERANCE) {
                    let i = v * k.width + u;
                    if t > 0.0 && (depth.data[i] == 0.0 || t < depth.data[i]) {
                        depth.data[i] = t;
                        labels[i] = Some(idx);
                    }
                }
            }
        }
    }
    SceneRender { depth, labels }
}

/// Depth render of one object at `pose = T^camera_object`.
pub fn render_depth(object: &DeformableObject, pose: &RigidTransform, k: &CameraIntrinsics) -> Result<DepthImage, CameraError> {
    let front = pose.translation.z - object.bounding_radius();
    if front <= 0.0 {
        return Err(CameraError::BehindCamera(front));
    }
    let render = render_scene(&[(object, *pose)], k);
    if render.depth.valid_count() == 0 {
        return Err(CameraError::EmptyRender);
    }
    Ok(render.depth)
}

/// Square crop around an object silhouette.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRule {
    /// Crop side as a multiple of the silhouette bounding-box max side.
    pub scale: f64,
    /// Output side length in pixels.
    pub size: usize,
}

impl Default for CropRule {
    fn default() -> Self {
        Self { scale: 1.3, size: 128 }
    }
}

impl CropRule {
    /// Header fragment recorded in codebook files.
    pub fn describe(&self) -> String {
        format!("centroid-square scale {} size {} nearest", self.scale, self.size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub image: DepthImage,
    /// Silhouette centroid in source pixels.
    pub centroid: (f64, f64),
    /// Crop side in source pixels.
    pub side: f64,
}

/// Find the surface component containing (or nearest to) `seed`, then cut a
/// square of `rule.scale` times its bounding-box max side centred on its
/// centroid and resample it to `rule.size` by nearest neighbour. Pixels of
/// other components are dropped.
pub fn crop_object(depth: &DepthImage, seed: (f64, f64), rule: &CropRule) -> Result<Crop, CameraError> {
    let (w, h) = (depth.width(), depth.height());
    let start = nearest_valid(depth, seed).ok_or(CameraError::EmptyCrop)?;

    let mut mask = vec![false; w * h];
    let mut stack = vec![start];
    mask[start.1 * w + start.0] = true;
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
    let (mut umin, mut umax, mut vmin, mut vmax) = (usize::MAX, 0, usize::MAX, 0);
    while let Some((u, v)) = stack.pop() {
        su += u as f64;
        sv += v as f64;
        n += 1;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
        let d = depth.get(u, v);
        let neighbours = [
            (u.wrapping_sub(1), v),
            (u + 1, v),
            (u, v.wrapping_sub(1)),
            (u, v + 1),
        ];
        for (nu, nv) in neighbours {
            if nu < w && nv < h && !mask[nv * w + nu] {
                let nd = depth.get(nu, nv);
                if nd > 0.0 && (nd - d).abs() <= DEPTH_DISCONTINUITY {
                    mask[nv * w + nu] = true;
                    stack.push((nu, nv));
                }
            }
        }
    }
    let centroid = (su / n as f64, sv / n as f64);
    let extent = (umax - umin + 1).max(vmax - vmin + 1) as f64;
    let side = rule.scale * extent;
    let left = centroid.0 - 0.5 * side;
    let top = centroid.1 - 0.5 * side;
    let cell = side / rule.size as f64;

    let mut out = DepthImage::zeros(rule.size, rule.size);
    for j in 0..rule.size {
        let sv = (top + (j as f64 + 0.5) * cell).floor();
        if sv < 0.0 || sv >= h as f64 {
            continue;
        }
        for i in 0..rule.size {
            let su = (left + (i as f64 + 0.5) * cell).floor();
            if su < 0.0 || su >= w as f64 {
                continue;
            }
            let (su, sv) = (su as usize, sv as usize);
            if mask[sv * w + su] {
                out.data[j * rule.size + i] = depth.get(su, sv);
            }
        }
    }
    Ok(Crop {
        image: out,
        centroid,
        side,
    })
}

fn nearest_valid(depth: &DepthImage, seed: (f64, f64)) -> Option<(usize, usize)> {
    let (w, h) = (depth.width() as i64, depth.height() as i64);
    let (su, sv) = (seed.0.round() as i64, seed.1.round() as i64);
    let max_r = w.max(h) + su.abs().max(sv.abs());
    for r in 0..=max_r {
        // Scan the square ring at Chebyshev radius r in raster order.
        let mut best: Option<(i64, (usize, usize))> = None;
        for v in (sv - r)..=(sv + r) {
            for u in (su - r)..=(su + r) {
                if (u - su).abs() != r && (v - sv).abs() != r {
                    continue;
                }
                if u < 0 || v < 0 || u >= w || v >= h || depth.get(u as usize, v as usize) <= 0.0 {
                    continue;
                }
                let d2 = (u - su).pow(2) + (v - sv).pow(2);
                if best.is_none_or(|(b, _)| d2 < b) {
                    best = Some((d2, (u as usize, v as usize)));
                }
            }
        }
        if let Some((_, p)) = best {
            return Some(p);
        }
    }
    None
}
