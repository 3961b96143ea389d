//! Star-shaped deformable object: a superellipsoid body whose radius is
//! modulated by a seeded smooth field, plus radial bumps for wings and legs.
//!
//! The surface is `|p| = radius(p / |p|)` in the object frame. The object
//! frame is the canonical frame: `+z` out of the breast, `+y` toward the neck,
//! `+x` toward the left wing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::rotations::UnitQuaternion;

use super::SimError;

const DEFORMATION_BLOBS: usize = 8;
const MAX_DEFORMATION: f64 = 0.3;

/// Radial bump along `direction`: `height` meters at the peak, fading to zero
/// at `width` radians from the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protrusion {
    pub direction: Vec3,
    pub height: f64,
    pub width: f64,
}

impl Protrusion {
    pub fn new(direction: Vec3, height: f64, width: f64) -> Self {
        Self {
            direction: direction.normalized(),
            height,
            width,
        }
    }
}

/// Construction parameters of a [`DeformableObject`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectParams {
    /// Semi-axes `(a, b, c)` along object x, y, z (meters).
    pub semi_axes: [f64; 3],
    /// Superellipsoid exponents `(e1, e2)`; `e1` shapes z, `e2` the xy plane.
    pub exponents: [f64; 2],
    /// Deformation amplitude as a fraction of the local radius, in `[0, 0.3]`.
    pub deformation: f64,
    pub seed: u64,
    pub protrusions: Vec<Protrusion>,
}

impl ObjectParams {
    /// Whole-bird stand-in: an ellipsoidal body with wings, drumsticks and a
    /// neck stub.
    pub fn bird(seed: u64) -> Self {
        Self {
            semi_axes: [0.085, 0.11, 0.05],
            exponents: [1.0, 1.0],
            deformation: 0.15,
            seed,
            protrusions: vec![
                // breast
                Protrusion::new(Vec3::new(0.0, 0.35, 1.0), 0.03, 0.7),
                // neck
                Protrusion::new(Vec3::new(0.0, 1.0, -0.25), 0.06, 0.3),
                // drumsticks
                Protrusion::new(Vec3::new(0.45, -0.6, 0.65), 0.05, 0.35),
                Protrusion::new(Vec3::new(-0.45, -0.6, 0.65), 0.05, 0.35),
                // wings
                Protrusion::new(Vec3::new(1.0, 0.3, -0.3), 0.03, 0.5),
                Protrusion::new(Vec3::new(-1.0, 0.3, -0.3), 0.03, 0.5),
            ],
        }
    }

    pub fn sphere(radius: f64) -> Self {
        Self {
            semi_axes: [radius; 3],
            exponents: [1.0, 1.0],
            deformation: 0.0,
            seed: 0,
            protrusions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Blob {
    direction: Vec3,
    one_minus_cos_width: f64,
    weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bump {
    direction: Vec3,
    height: f64,
    one_minus_cos_width: f64,
}

/// See the module docs. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformableObject {
    params: ObjectParams,
    blobs: Vec<Blob>,
    blob_norm: f64,
    bumps: Vec<Bump>,
    ellipsoidal: bool,
    bound: f64,
}

impl DeformableObject {
    pub fn new(params: ObjectParams) -> Result<Self, SimError> {
        let [a, b, c] = params.semi_axes;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(SimError::InvalidObject("semi-axes must be positive".into()));
        }
        if params.exponents.iter().any(|e| !(0.1..=2.0).contains(e)) {
            return Err(SimError::InvalidObject("exponents must lie in [0.1, 2]".into()));
        }
        if !(0.0..=MAX_DEFORMATION).contains(&params.deformation) {
            return Err(SimError::InvalidObject(format!(
                "deformation amplitude {} outside [0, {MAX_DEFORMATION}]",
                params.deformation
            )));
        }
        for p in &params.protrusions {
            if !(p.height >= 0.0 && p.height.is_finite())
                || !(p.width > 0.0 && p.width <= std::f64::consts::FRAC_PI_2)
                || p.direction.norm() < 0.5
            {
                return Err(SimError::InvalidObject(format!("bad protrusion {p:?}")));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let blobs: Vec<Blob> = (0..DEFORMATION_BLOBS)
            .map(|_| {
                let direction = UnitQuaternion::sample_uniform(&mut rng).rotate(Vec3::Z);
                let width: f64 = rng.random_range(0.6..1.2);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Blob {
                    direction,
                    one_minus_cos_width: 1.0 - width.cos(),
                    weight: sign * rng.random_range(0.5..1.0),
                }
            })
            .collect();
        let blob_norm = blobs.iter().map(|b| b.weight.abs()).sum::<f64>();
        let bumps = params
            .protrusions
            .iter()
            .map(|p| Bump {
                direction: p.direction.normalized(),
                height: p.height,
                one_minus_cos_width: 1.0 - p.width.cos(),
            })
            .collect::<Vec<_>>();

        let [e1, e2] = params.exponents;
        let ellipsoidal = e1 == 1.0 && e2 == 1.0;
        // The body fits in its ellipsoid when both exponents are >= 1 and in
        // its bounding box otherwise.
        let body = if e1 >= 1.0 && e2 >= 1.0 {
            a.max(b).max(c)
        } else {
            (a * a + b * b + c * c).sqrt()
        };
        // A direction inside several bump cones lies inside pairwise
        // overlapping cones, so the tallest such stack bounds the bump sum.
        let cone = |b: &Bump| (1.0 - b.one_minus_cos_width).clamp(-1.0, 1.0).acos();
        let stack = bumps
            .iter()
            .map(|bi| {
                bi.height
                    + bumps
                        .iter()
                        .filter(|bj| !std::ptr::eq(*bj, bi) && bi.direction.angle_to(bj.direction) < cone(bi) + cone(bj))
                        .map(|bj| bj.height)
                        .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let bound = body * (1.0 + params.deformation) + stack;

        Ok(Self {
            params,
            blobs,
            blob_norm,
            bumps,
            ellipsoidal,
            bound,
        })
    }

    pub fn params(&self) -> &ObjectParams {
        &self.params
    }

    /// Radius of a sphere about the origin enclosing the whole surface.
    pub fn bounding_radius(&self) -> f64 {
        self.bound
    }

    fn body_radius(&self, u: Vec3) -> f64 {
        let [a, b, c] = self.params.semi_axes;
        let (x, y, z) = (u.x / a, u.y / b, u.z / c);
        if self.ellipsoidal {
            return 1.0 / (x * x + y * y + z * z).sqrt();
        }
        let [e1, e2] = self.params.exponents;
        let xy = (x.abs().powf(2.0 / e2) + y.abs().powf(2.0 / e2)).powf(e2 / e1);
        let f = xy + z.abs().powf(2.0 / e1);
        f.powf(-0.5 * e1)
    }

    /// Smooth field in `[-1, 1]`: signed seeded blobs with the bump profile.
    fn deformation_field(&self, u: Vec3) -> f64 {
        if self.params.deformation == 0.0 {
            return 0.0;
        }
        let mut f = 0.0;
        for b in &self.blobs {
            let t = (1.0 - b.direction.dot(u)) / b.one_minus_cos_width;
            if t < 1.0 {
                let s = 1.0 - t;
                f += b.weight * s * s;
            }
        }
        f / self.blob_norm
    }

    /// Surface radius along unit direction `u` (object frame).
    pub fn radius(&self, u: Vec3) -> f64 {
        let mut r = self.body_radius(u) * (1.0 + self.params.deformation * self.deformation_field(u));
        for b in &self.bumps {
            let t = (1.0 - b.direction.dot(u)) / b.one_minus_cos_width;
            if t < 1.0 {
                let s = 1.0 - t;
                r += b.height * s * s;
            }
        }
        r
    }

    /// Negative inside, positive outside, zero on the surface (object frame).
    pub fn inside_outside(&self, p: Vec3) -> f64 {
        let n = p.norm();
        if n == 0.0 {
            return -self.radius(Vec3::Z);
        }
        n - self.radius(p / n)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.inside_outside(p) < 0.0
    }

    /// Surface point along unit direction `u`.
    pub fn surface_point(&self, u: Vec3) -> Vec3 {
        u * self.radius(u)
    }

    /// Outward unit normal at (or near) `p`, object frame.
    pub fn normal(&self, p: Vec3) -> Vec3 {
        let h = 1e-5;
        let g = |d: Vec3| self.inside_outside(p + d) - self.inside_outside(p - d);
        Vec3::new(
            g(Vec3::new(h, 0.0, 0.0)),
            g(Vec3::new(0.0, h, 0.0)),
            g(Vec3::new(0.0, 0.0, h)),
        )
        .normalized()
    }

    /// First surface crossing of the ray `origin + t * dir`, `t >= 0`, in the
    /// object frame. The enclosing sphere is marched in 64 equal steps to
    /// bracket the entry, then bisected until the bracket is shorter than
    /// `tol` meters along the ray.
    pub fn intersect_ray(&self, origin: Vec3, dir: Vec3, tol: f64) -> Option<f64> {
        let dd = dir.norm_squared();
        let od = origin.dot(dir);
        let disc = od * od - dd * (origin.norm_squared() - self.bound * self.bound);
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let t_far = (-od + sq) / dd;
        if t_far <= 0.0 {
            return None;
        }
        let t_near = ((-od - sq) / dd).max(0.0);
        let step = (t_far - t_near) / 64.0;
        let at = |t: f64| self.inside_outside(origin + dir * t);
        if at(t_near) < 0.0 {
            return Some(t_near);
        }
        let mut lo = t_near;
        for i in 1..=64 {
            let hi = t_near + step * i as f64;
            if at(hi) < 0.0 {
                let scale = dd.sqrt();
                let mut hi = hi;
                while (hi - lo) * scale > tol {
                    let mid = 0.5 * (lo + hi);
                    if at(mid) < 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            lo = hi;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fibonacci_sphere;

    #[test]
    fn sphere_radius_is_constant() {
        let s = DeformableObject::new(ObjectParams::sphere(0.5)).unwrap();
        for u in fibonacci_sphere(100) {
            assert!((s.radius(u) - 0.5).abs() < 1e-12);
        }
        assert_eq!(s.bounding_radius(), 0.5);
    }

    #[test]
    fn superellipsoid_hits_semi_axes() {
        let mut p = ObjectParams::sphere(1.0);
        p.semi_axes = [0.1, 0.2, 0.3];
        p.exponents = [0.5, 0.7];
        let o = DeformableObject::new(p).unwrap();
        assert!((o.radius(Vec3::X) - 0.1).abs() < 1e-12);
        assert!((o.radius(Vec3::Y) - 0.2).abs() < 1e-12);
        assert!((o.radius(Vec3::Z) - 0.3).abs() < 1e-12);
        // Boxy exponents push the diagonal outward beyond the ellipsoid.
        let d = Vec3::new(1.0, 1.0, 1.0).normalized();
        let mut ell = o.params().clone();
        ell.exponents = [1.0, 1.0];
        let ell = DeformableObject::new(ell).unwrap();
        assert!(o.radius(d) > ell.radius(d));
    }

    #[test]
    fn bird_radius_positive_and_bounded() {
        for seed in 0..5 {
            let o = DeformableObject::new(ObjectParams::bird(seed)).unwrap();
            for u in fibonacci_sphere(2000) {
                let r = o.radius(u);
                assert!(r > 0.0 && r <= o.bounding_radius());
            }
        }
    }

    #[test]
    fn deformation_depends_on_seed_only() {
        let a = DeformableObject::new(ObjectParams::bird(1)).unwrap();
        let b = DeformableObject::new(ObjectParams::bird(1)).unwrap();
        let c = DeformableObject::new(ObjectParams::bird(2)).unwrap();
        let u = Vec3::new(0.3, 0.4, 0.5).normalized();
        assert_eq!(a.radius(u), b.radius(u));
        assert_ne!(a.radius(u), c.radius(u));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = ObjectParams::bird(0);
        p.deformation = 0.31;
        assert!(DeformableObject::new(p).is_err());
        let mut p = ObjectParams::bird(0);
        p.semi_axes[1] = 0.0;
        assert!(DeformableObject::new(p).is_err());
        let mut p = ObjectParams::bird(0);
        p.exponents[0] = 3.0;
        assert!(DeformableObject::new(p).is_err());
    }

    #[test]
    fn ray_hits_sphere_front_surface() {
        let s = DeformableObject::new(ObjectParams::sphere(1.0)).unwrap();
        let t = s.intersect_ray(Vec3::new(0.0, 0.0, -2.0), Vec3::Z, 1e-9).unwrap();
        assert!((t - 1.0).abs() < 1e-9);
        assert!(s.intersect_ray(Vec3::new(0.0, 2.0, -2.0), Vec3::Z, 1e-9).is_none());
        assert!(s.intersect_ray(Vec3::new(0.0, 0.0, 2.0), Vec3::Z, 1e-9).is_none());
    }

    #[test]
    fn sphere_normal_is_radial() {
        let s = DeformableObject::new(ObjectParams::sphere(1.0)).unwrap();
        let p = Vec3::new(0.6, 0.0, 0.8);
        assert!((s.normal(p) - p).norm() < 1e-6);
    }
}
