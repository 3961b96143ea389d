mod common;

use common::quat;
use deformpose::binsim::object::{DeformableObject, ObjectParams};
use deformpose::camera::{
    crop_object, deproject, project, render_depth, render_scene, CameraError, CameraIntrinsics, CropRule, DepthImage,
    RgbImage,
};
use deformpose::rotations::UnitQuaternion;
use deformpose::transforms::RigidTransform;
use deformpose::Vec3;
use proptest::prelude::*;

fn bird() -> DeformableObject {
    DeformableObject::new(ObjectParams::bird(5)).unwrap()
}

fn silhouette_centroid(img: &DepthImage) -> (f64, f64) {
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
    for v in 0..img.height() {
        for u in 0..img.width() {
            if img.get(u, v) > 0.0 {
                su += u as f64;
                sv += v as f64;
                n += 1.0;
            }
        }
    }
    (su / n, sv / n)
}

#[test]
fn deproject_examples() {
    let k = CameraIntrinsics::new(100.0, 100.0, 100.0, 80.0, 200, 160).unwrap();
    assert_eq!(deproject(k.cx, k.cy, 0.7, &k).unwrap(), Vec3::new(0.0, 0.0, 0.7));
    assert_eq!(deproject(k.cx + k.fx / 2.0, k.cy, 2.0, &k).unwrap(), Vec3::new(1.0, 0.0, 2.0));
    assert_eq!(deproject(10.0, 10.0, -1.0, &k), Err(CameraError::InvalidDepth(-1.0)));
    assert!(matches!(deproject(10.0, 10.0, f64::NAN, &k), Err(CameraError::InvalidDepth(_))));
    assert_eq!(deproject(10.0, 160.0, 1.0, &k), Err(CameraError::OutOfBounds(10.0, 160.0)));
}

#[test]
fn every_rendered_pixel_lies_on_the_surface() {
    let k = CameraIntrinsics::desk();
    let object = bird();
    let pose = RigidTransform::new(UnitQuaternion::from_axis_angle(Vec3::new(1.0, 2.0, 0.5).normalized(), 1.1), Vec3::new(0.02, -0.01, 0.5)).unwrap();
    let img = render_depth(&object, &pose, &k).unwrap();
    let to_object = pose.invert();
    assert!(img.valid_count() > 1000);
    let mut worst: f64 = 0.0;
    for v in 0..img.height() {
        for u in 0..img.width() {
            let d = img.get(u, v);
            if d > 0.0 {
                let p = to_object.transform_point(deproject(u as f64, v as f64, d, &k).unwrap());
                worst = worst.max(object.inside_outside(p).abs());
            }
        }
    }
    assert!(worst < 1e-5, "worst surface residual {worst}");
}

#[test]
fn minimum_depth_is_bounded_by_the_enclosing_sphere() {
    let k = CameraIntrinsics::desk();
    let object = bird();
    for (i, q) in [
        UnitQuaternion::IDENTITY,
        UnitQuaternion::from_axis_angle(Vec3::X, 2.0),
        UnitQuaternion::from_axis_angle(Vec3::Y, -0.7),
    ]
    .into_iter()
    .enumerate()
    {
        let z = 0.4 + 0.1 * i as f64;
        let img = render_depth(&object, &RigidTransform::new(q, Vec3::new(0.0, 0.0, z)).unwrap(), &k).unwrap();
        let min = img.data().iter().copied().filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
        assert!(min >= z - object.bounding_radius() - 1e-9);
        assert!(img.data().iter().all(|d| *d == 0.0 || *d <= z + object.bounding_radius()));
    }
}

#[test]
fn sideways_translation_shifts_the_silhouette() {
    let k = CameraIntrinsics::bin();
    let object = bird();
    let q = UnitQuaternion::from_axis_angle(Vec3::Z, 0.4);
    let z = 0.6;
    let base = render_depth(&object, &RigidTransform::new(q, Vec3::new(0.0, 0.0, z)).unwrap(), &k).unwrap();
    let (u0, v0) = silhouette_centroid(&base);
    for (dx, dy) in [(0.02, 0.0), (0.0, -0.015), (0.01, 0.01)] {
        let moved = render_depth(&object, &RigidTransform::new(q, Vec3::new(dx, dy, z)).unwrap(), &k).unwrap();
        let (u1, v1) = silhouette_centroid(&moved);
        assert!((u1 - u0 - k.fx * dx / z).abs() < 0.5, "u shift {} vs {}", u1 - u0, k.fx * dx / z);
        assert!((v1 - v0 - k.fy * dy / z).abs() < 0.5, "v shift {} vs {}", v1 - v0, k.fy * dy / z);
    }
}

#[test]
fn rendering_is_deterministic() {
    let k = CameraIntrinsics::bin();
    let a = bird();
    let b = DeformableObject::new(ObjectParams::bird(6)).unwrap();
    let poses = [
        RigidTransform::new(UnitQuaternion::from_axis_angle(Vec3::X, 0.3), Vec3::new(-0.1, 0.0, 0.7)).unwrap(),
        RigidTransform::new(UnitQuaternion::from_axis_angle(Vec3::Y, 1.3), Vec3::new(0.05, 0.02, 0.65)).unwrap(),
    ];
    let first = render_scene(&[(&a, poses[0]), (&b, poses[1])], &k);
    let second = render_scene(&[(&a, poses[0]), (&b, poses[1])], &k);
    assert_eq!(first, second);
    assert!(first.labels.contains(&Some(0)) && first.labels.contains(&Some(1)));
}

#[test]
fn depth_file_and_ppm() {
    let k = CameraIntrinsics::desk();
    let img = render_depth(&bird(), &RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.5)), &k).unwrap();
    let text = img.to_text();
    assert!(text.starts_with("DEPTH 128 128\n"));
    assert_eq!(DepthImage::from_text(&text).unwrap(), img);
    let ppm = RgbImage::from_depth(&img).to_ppm();
    assert!(ppm.starts_with(b"P6\n128 128\n255\n"));
    assert_eq!(ppm.len(), "P6\n128 128\n255\n".len() + 3 * 128 * 128);
}

#[test]
fn crop_centres_on_the_silhouette() {
    let k = CameraIntrinsics::bin();
    let object = bird();
    let rule = CropRule::default();
    let z = 0.6;
    let img = render_depth(&object, &RigidTransform::from_translation(Vec3::new(0.03, 0.0, z)), &k).unwrap();
    let seed = project(Vec3::new(0.03, 0.0, z), &k).unwrap();
    let a = crop_object(&img, seed, &rule).unwrap();
    assert_eq!(a, crop_object(&img, seed, &rule).unwrap());
    assert_eq!(a.image.width(), rule.size);
    let (cu, cv) = silhouette_centroid(&img);
    assert!((a.centroid.0 - cu).abs() < 1e-9 && (a.centroid.1 - cv).abs() < 1e-9);
    let shifted = crop_object(&img, (seed.0 + 3.0, seed.1 - 2.0), &rule).unwrap();
    assert_eq!(shifted, a);
    assert!(crop_object(&DepthImage::zeros(16, 16), (8.0, 8.0), &rule).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn deproject_then_project_is_identity(u in 0.0f64..320.0, v in 0.0f64..240.0, d in 0.05f64..5.0) {
        let k = CameraIntrinsics::bin();
        let p = deproject(u, v, d, &k).unwrap();
        prop_assert_eq!(p.z, d);
        let (u2, v2) = project(p, &k).unwrap();
        prop_assert!((u2 - u).abs() < 1e-9 && (v2 - v).abs() < 1e-9);
    }

    #[test]
    fn project_then_deproject_is_identity(x in -1.0f64..1.0, y in -1.0f64..1.0, z in 2.0f64..6.0) {
        let k = CameraIntrinsics::bin();
        let p = Vec3::new(x, y, z);
        let (u, v) = project(p, &k).unwrap();
        prop_assume!(k.in_bounds(u, v));
        let back = deproject(u, v, z, &k).unwrap();
        prop_assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn depth_text_round_trips((w, h, data) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        (Just(w), Just(h), prop::collection::vec(prop_oneof![Just(0.0), 1e-4f64..3.0], w * h))
    })) {
        let img = DepthImage::new(w, h, data).unwrap();
        prop_assert_eq!(DepthImage::from_text(&img.to_text()).unwrap(), img);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rendered_depths_respect_bounds(q in quat(), z in 0.35f64..0.9) {
        let object = DeformableObject::new(ObjectParams::bird(1)).unwrap();
        let k = CameraIntrinsics::desk();
        let img = render_depth(&object, &RigidTransform::new(q, Vec3::new(0.0, 0.0, z)).unwrap(), &k).unwrap();
        let r = object.bounding_radius();
        prop_assert!(img.data().iter().all(|d| *d == 0.0 || (*d >= z - r - 1e-9 && *d <= z + r)));
    }
}
