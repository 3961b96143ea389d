#![allow(dead_code)]

use deformpose::rotations::UnitQuaternion;
use deformpose::transforms::RigidTransform;
use deformpose::Vec3;
use nalgebra::{Matrix4, Quaternion, Translation3, UnitQuaternion as NaQuat};
use proptest::prelude::*;

pub fn quat() -> impl Strategy<Value = UnitQuaternion> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("non-degenerate", |a| a.iter().map(|c| c * c).sum::<f64>() > 1e-2)
        .prop_map(|a| UnitQuaternion::normalize(a).unwrap())
}

pub fn vec3(scale: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-scale..scale).prop_map(Vec3::from_array)
}

pub fn transform() -> impl Strategy<Value = RigidTransform> {
    (quat(), vec3(2.0)).prop_map(|(rotation, translation)| RigidTransform { rotation, translation })
}

pub fn to_na(q: &UnitQuaternion) -> NaQuat<f64> {
    let [w, x, y, z] = q.to_array();
    NaQuat::from_quaternion(Quaternion::new(w, x, y, z))
}

/// 4x4 homogeneous matrix built by nalgebra from the quaternion components.
pub fn homogeneous(t: &RigidTransform) -> Matrix4<f64> {
    let p = t.translation;
    Translation3::new(p.x, p.y, p.z).to_homogeneous() * to_na(&t.rotation).to_homogeneous()
}

pub fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn transforms_close(a: &RigidTransform, b: &RigidTransform) -> f64 {
    max_abs_diff(&homogeneous(a), &homogeneous(b))
}
