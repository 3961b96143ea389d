//! Rotation algebra on SO(3).
//!
//! Quaternions are stored w-first with a canonical sign (`w >= 0`), so that
//! equality and serialization are unambiguous under the double cover. The
//! geodesic metric and the log-loss surrogate both ignore the sign.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::Vec3;

/// Default `epsilon` of [`pose_loss`].
pub const DEFAULT_LOSS_EPSILON: f64 = 1e-6;

const ZERO_NORM: f64 = 1e-12;
const MATRIX_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("quaternion norm {0:e} is too small to normalize")]
    ZeroNorm(f64),
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("cannot parse quaternion: {0}")]
    Parse(String),
}

/// A rotation stored as a unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalize a raw `[w, x, y, z]` 4-vector and bring it to canonical sign.
    pub fn normalize(raw: [f64; 4]) -> Result<Self, RotationError> {
        let n = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(n > ZERO_NORM) || !n.is_finite() {
            return Err(RotationError::ZeroNorm(n));
        }
        Ok(Self::canonical([raw[0] / n, raw[1] / n, raw[2] / n, raw[3] / n]))
    }

    /// As [`normalize`](Self::normalize), but components already unit to
    /// within 1e-12 are kept bit-exact, so printed quaternions read back
    /// unchanged.
    pub fn from_components(raw: [f64; 4]) -> Result<Self, RotationError> {
        let n2 = raw.iter().map(|c| c * c).sum::<f64>();
        if (n2 - 1.0).abs() <= 1e-12 {
            Ok(Self::canonical(raw))
        } else {
            Self::normalize(raw)
        }
    }

    fn canonical(c: [f64; 4]) -> Self {
        let flip = if c[0].abs() > ZERO_NORM {
            c[0] < 0.0
        } else {
            c[1..]
                .iter()
                .find(|v| **v != 0.0)
                .is_some_and(|v| *v < 0.0)
        };
        let s = if flip { -1.0 } else { 1.0 };
        UnitQuaternion {
            w: s * c[0],
            x: s * c[1],
            y: s * c[2],
            z: s * c[3],
        }
    }

    fn renormalized(c: [f64; 4]) -> Self {
        // Inputs here are products of unit quaternions; never near zero.
        Self::normalize(c).unwrap_or(Self::IDENTITY)
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalized();
        if a == Vec3::ZERO {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Self::renormalized([c, a.x * s, a.y * s, a.z * s])
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Components in `[w, x, y, z]` order.
    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Hamilton product `self * rhs`: apply `rhs` first, then `self`.
    pub fn multiply(&self, rhs: &UnitQuaternion) -> UnitQuaternion {
        let (a, b) = (self, rhs);
        Self::renormalized([
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        ])
    }

    pub fn inverse(&self) -> UnitQuaternion {
        Self::canonical([self.w, -self.x, -self.y, -self.z])
    }

    /// 4-vector inner product.
    pub fn dot(&self, other: &UnitQuaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        geodesic_distance(&UnitQuaternion::IDENTITY, self)
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(t)
    }

    pub fn to_matrix(&self) -> RotationMatrix {
        let UnitQuaternion { w, x, y, z } = *self;
        RotationMatrix {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    /// Shepperd's method: branch on the largest diagonal term for stability.
    pub fn from_matrix(r: &RotationMatrix) -> UnitQuaternion {
        let m = &r.m;
        let trace = m[0][0] + m[1][1] + m[2][2];
        let raw = if trace > m[0][0] && trace > m[1][1] && trace > m[2][2] {
            let s = 2.0 * (1.0 + trace).sqrt();
            [
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            ]
        } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
            let s = 2.0 * (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt();
            [
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            ]
        } else if m[1][1] >= m[2][2] {
            let s = 2.0 * (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt();
            [
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            ]
        } else {
            let s = 2.0 * (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt();
            [
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            ]
        };
        Self::renormalized(raw)
    }

    /// Z-Y-X intrinsic angles: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn to_euler(&self) -> EulerAngles {
        let m = self.to_matrix().m;
        let pitch = (-m[2][0]).clamp(-1.0, 1.0).asin();
        let cos_pitch = (m[0][0] * m[0][0] + m[1][0] * m[1][0]).sqrt();
        if cos_pitch > 1e-9 {
            EulerAngles {
                yaw: m[1][0].atan2(m[0][0]),
                pitch,
                roll: m[2][1].atan2(m[2][2]),
            }
        } else {
            // Gimbal lock: yaw and roll share an axis; put it all in yaw.
            EulerAngles {
                yaw: (-m[0][1]).atan2(m[1][1]),
                pitch,
                roll: 0.0,
            }
        }
    }

    pub fn from_euler(e: &EulerAngles) -> UnitQuaternion {
        let qz = Self::from_axis_angle(Vec3::Z, e.yaw);
        let qy = Self::from_axis_angle(Vec3::Y, e.pitch);
        let qx = Self::from_axis_angle(Vec3::X, e.roll);
        qz.multiply(&qy).multiply(&qx)
    }

    /// Haar-uniform random rotation: normalize four standard normal draws.
    pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion {
        loop {
            let raw: [f64; 4] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            if let Ok(q) = Self::normalize(raw) {
                return q;
            }
        }
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl std::ops::Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        self.multiply(&rhs)
    }
}

/// Writes `w x y z` with 17 significant digits (round-trips exactly).
impl fmt::Display for UnitQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            fmt_real(self.w),
            fmt_real(self.x),
            fmt_real(self.y),
            fmt_real(self.z)
        )
    }
}

impl FromStr for UnitQuaternion {
    type Err = RotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let vals = s
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| RotationError::Parse(format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let raw: [f64; 4] = vals
            .try_into()
            .map_err(|v: Vec<f64>| RotationError::Parse(format!("expected 4 values, got {}", v.len())))?;
        Self::from_components(raw)
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Geodesic angle between two rotations given as raw `[w, x, y, z]` unit
/// 4-vectors, `2 * acos(|<a, b>|)`, in `[0, pi]`.
///
/// Evaluated through the chord `min(|a - b|, |a + b|) = sqrt(2 - 2|<a, b>|)`,
/// which gives the same angle as `4 * asin(chord / 2)` but keeps full
/// precision for nearly equal rotations where `acos` loses half the digits.
/// The result is exactly invariant to negating either argument.
pub fn geodesic_distance_components(a: [f64; 4], b: [f64; 4]) -> f64 {
    let mut minus = 0.0;
    let mut plus = 0.0;
    for i in 0..4 {
        let d = a[i] - b[i];
        let s = a[i] + b[i];
        minus += d * d;
        plus += s * s;
    }
    let half_chord = 0.5 * minus.min(plus).sqrt();
    4.0 * half_chord.clamp(0.0, 1.0).asin()
}

/// Geodesic distance between two rotations, the pose evaluation metric.
pub fn geodesic_distance(q_pred: &UnitQuaternion, q_gt: &UnitQuaternion) -> f64 {
    geodesic_distance_components(q_pred.to_array(), q_gt.to_array())
}

/// `ln(1 - |<a, b>| + epsilon)` on raw 4-vectors.
pub fn pose_loss_components(a: [f64; 4], b: [f64; 4], epsilon: f64) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    (1.0 - dot.abs().min(1.0) + epsilon).ln()
}

/// Training-style surrogate for the geodesic distance. Strictly increasing
/// in the geodesic angle; never used for reporting.
pub fn pose_loss(q_pred: &UnitQuaternion, q_gt: &UnitQuaternion, epsilon: f64) -> f64 {
    pose_loss_components(q_pred.to_array(), q_gt.to_array(), epsilon)
}

/// Row-major 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    m: [[f64; 3]; 3],
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Validate orthonormality and `det = +1` to 1e-6.
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self, RotationError> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RotationError::NotARotation("non-finite entry".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rows[k][i] * rows[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > MATRIX_CHECK_TOL {
                    return Err(RotationError::NotARotation(format!(
                        "columns {i},{j} have inner product {dot}"
                    )));
                }
            }
        }
        let r = RotationMatrix { m: rows };
        let det = r.determinant();
        if (det - 1.0).abs() > MATRIX_CHECK_TOL {
            return Err(RotationError::NotARotation(format!("determinant {det}")));
        }
        Ok(r)
    }

    /// Matrix whose columns are the given (orthonormal, right-handed) axes.
    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Result<Self, RotationError> {
        Self::new([[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]])
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn transpose(&self) -> RotationMatrix {
        let m = &self.m;
        RotationMatrix {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn multiply(&self, rhs: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * rhs.m[k][j]).sum();
            }
        }
        RotationMatrix { m: out }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }
}

/// Yaw/pitch/roll in radians, Z-Y-X intrinsic. Reporting only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}
