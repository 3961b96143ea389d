//! Canonical-pose placement scoring.

use crate::rotations::geodesic_distance;
use crate::transforms::{canonical_goal, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementResult {
    /// `T^base_object` as estimated.
    pub estimated: RigidTransform,
    /// `T^base_object` in truth.
    pub true_pose: RigidTransform,
    /// Commanded `T^base_wrist`.
    pub wrist_goal: RigidTransform,
    /// Where the object really ends up, `T^base_object`.
    pub final_pose: RigidTransform,
    /// Geodesic distance between the final and canonical orientations, radians.
    pub error: f64,
    pub success: bool,
}

/// Place a held object using its estimated pose and score the outcome.
///
/// The wrist pose at grasp time follows from the truth,
/// `T^base_wrist = true_pose * (T^wrist_object_true)^-1`, so the grasp the
/// robot believes in is `(T^base_wrist)^-1 * estimated`. The wrist goal is
/// derived from that belief; the object then lands at
/// `goal * T^wrist_object_true`. Success means the final orientation is within
/// `tolerance` radians of the canonical one.
pub fn evaluate_placement(
    estimated: &RigidTransform,
    true_pose: &RigidTransform,
    t_wrist_object_true: &RigidTransform,
    canonical: &RigidTransform,
    tolerance: f64,
) -> PlacementResult {
    let t_base_wrist = true_pose.compose(&t_wrist_object_true.invert());
    let t_wrist_object_est = t_base_wrist.invert().compose(estimated);
    let wrist_goal = canonical_goal(&t_wrist_object_est, canonical);
    let final_pose = wrist_goal.compose(t_wrist_object_true);
    let error = geodesic_distance(&final_pose.rotation, &canonical.rotation);
    PlacementResult {
        estimated: *estimated,
        true_pose: *true_pose,
        wrist_goal,
        final_pose,
        error,
        success: error <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::rotations::UnitQuaternion;

    fn pose(axis: Vec3, angle: f64, t: Vec3) -> RigidTransform {
        RigidTransform {
            rotation: UnitQuaternion::from_axis_angle(axis, angle),
            translation: t,
        }
    }

    #[test]
    fn perfect_estimate_lands_on_canonical() {
        let truth = pose(Vec3::new(1.0, 2.0, 3.0), 1.1, Vec3::new(0.4, 0.1, 0.05));
        let grasp = pose(Vec3::Y, 0.3, Vec3::new(0.0, 0.02, 0.2));
        let canonical = pose(Vec3::X, -1.2, Vec3::new(0.3, 0.5, 0.4));
        let r = evaluate_placement(&truth, &truth, &grasp, &canonical, 1e-6);
        assert!(r.error < 1e-7);
        assert!(r.success);
        assert!((r.final_pose.translation - canonical.translation).norm() < 1e-12);
    }

    #[test]
    fn error_just_past_tolerance_fails() {
        let tol = 20f64.to_radians();
        let truth = pose(Vec3::Z, 0.7, Vec3::new(0.5, 0.0, 0.0));
        let est = RigidTransform {
            rotation: truth.rotation.multiply(&UnitQuaternion::from_axis_angle(Vec3::X, tol + 0.01)),
            translation: truth.translation,
        };
        let r = evaluate_placement(&est, &truth, &RigidTransform::IDENTITY, &RigidTransform::IDENTITY, tol);
        assert!(!r.success);
        assert!((r.error - (tol + 0.01)).abs() < 1e-12);
    }
}
