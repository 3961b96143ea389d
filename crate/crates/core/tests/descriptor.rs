mod common;

use common::quat;
use deformpose::binsim::object::{DeformableObject, ObjectParams};
use deformpose::camera::{crop_object, project, render_depth, CameraIntrinsics, CropRule, DepthImage};
use deformpose::descriptor::{augment, embed, AugmentationConfig, BackgroundMode, DescriptorError, CROP_SIZE, EMBEDDING_DIM};
use deformpose::rotations::UnitQuaternion;
use deformpose::transforms::RigidTransform;
use deformpose::Vec3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn crop_for(object: &DeformableObject, q: UnitQuaternion) -> DepthImage {
    let k = CameraIntrinsics::desk();
    let t = Vec3::new(0.0, 0.0, 0.5);
    let img = render_depth(object, &RigidTransform::new(q, t).unwrap(), &k).unwrap();
    crop_object(&img, project(t, &k).unwrap(), &CropRule::default()).unwrap().image
}

fn map_depth(img: &DepthImage, f: impl Fn(f64) -> f64) -> DepthImage {
    let data = img.data().iter().map(|d| if *d > 0.0 { f(*d) } else { 0.0 }).collect();
    DepthImage::new(img.width(), img.height(), data).unwrap()
}

fn bird() -> DeformableObject {
    DeformableObject::new(ObjectParams::bird(3)).unwrap()
}

#[test]
fn embedding_of_rendered_crop_is_unit_and_deterministic() {
    let object = bird();
    let q = UnitQuaternion::from_axis_angle(Vec3::new(0.3, 1.0, 0.2).normalized(), 0.9);
    let crop = crop_for(&object, q);
    assert_eq!(crop.width(), CROP_SIZE);
    let a = embed(&crop).unwrap();
    let b = embed(&crop_for(&object, q)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dim(), EMBEDDING_DIM);
    assert!((a.values().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn depth_scale_and_offset_do_not_change_the_embedding() {
    let crop = crop_for(&bird(), UnitQuaternion::from_axis_angle(Vec3::X, 0.6));
    let base = embed(&crop).unwrap();
    let doubled = embed(&map_depth(&crop, |d| 2.0 * d)).unwrap();
    assert!(base.values().iter().zip(doubled.values()).all(|(a, b)| (a - b).abs() < 1e-12));
    let shifted = embed(&map_depth(&crop, |d| d + 0.37)).unwrap();
    assert!(base.values().iter().zip(shifted.values()).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn distant_views_are_less_similar_than_near_views() {
    let object = bird();
    let q = UnitQuaternion::from_axis_angle(Vec3::new(1.0, -0.5, 0.2).normalized(), 0.8);
    let base = embed(&crop_for(&object, q)).unwrap();
    let near = embed(&crop_for(&object, UnitQuaternion::from_axis_angle(Vec3::Y, 3f64.to_radians()).multiply(&q))).unwrap();
    let far = embed(&crop_for(&object, UnitQuaternion::from_axis_angle(Vec3::Y, 90f64.to_radians()).multiply(&q))).unwrap();
    assert!(base.dot(&far) < 1.0 - 1e-6);
    assert!(base.dot(&near) > base.dot(&far));
}

#[test]
fn empty_and_wrong_size_inputs_are_rejected() {
    assert!(matches!(embed(&DepthImage::zeros(CROP_SIZE, CROP_SIZE)), Err(DescriptorError::EmptyImage(0))));
    assert_eq!(embed(&DepthImage::zeros(64, 128)), Err(DescriptorError::WrongSize(64, 128)));
}

#[test]
fn identity_augmentation_returns_the_input() {
    let crop = crop_for(&bird(), UnitQuaternion::IDENTITY);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(augment(&crop, &AugmentationConfig::none(), &mut rng), crop);
}

#[test]
fn augmentation_is_a_function_of_the_seed() {
    let crop = crop_for(&bird(), UnitQuaternion::from_axis_angle(Vec3::Z, 1.0));
    let cfg = AugmentationConfig {
        background: BackgroundMode::RandomClutter,
        ..AugmentationConfig::default()
    };
    let run = |seed| augment(&crop, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
    assert!(run(9).data().iter().all(|d| d.is_finite() && *d >= 0.0));
}

#[test]
fn occlusion_only_blanks_one_square() {
    let plane = DepthImage::new(CROP_SIZE, CROP_SIZE, vec![0.8; CROP_SIZE * CROP_SIZE]).unwrap();
    let cfg = AugmentationConfig {
        occlusion_patches: 1,
        occlusion_max_side: 16,
        ..AugmentationConfig::none()
    };
    for seed in 0..20 {
        let out = augment(&plane, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let changed: Vec<(usize, usize)> = (0..CROP_SIZE)
            .flat_map(|v| (0..CROP_SIZE).map(move |u| (u, v)))
            .filter(|&(u, v)| out.get(u, v) != plane.get(u, v))
            .collect();
        let (umin, umax) = (changed.iter().map(|p| p.0).min().unwrap(), changed.iter().map(|p| p.0).max().unwrap());
        let (vmin, vmax) = (changed.iter().map(|p| p.1).min().unwrap(), changed.iter().map(|p| p.1).max().unwrap());
        let side = umax - umin + 1;
        assert_eq!(side, vmax - vmin + 1);
        assert!((8..=16).contains(&side));
        assert_eq!(changed.len(), side * side);
        assert!(changed.iter().all(|&(u, v)| out.get(u, v) == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn embeddings_of_random_views_are_unit(q in quat()) {
        let e = embed(&crop_for(&bird(), q)).unwrap();
        prop_assert!((e.dot(&e) - 1.0).abs() < 1e-12);
        prop_assert!(e.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn augmented_crops_still_embed(q in quat(), seed in any::<u64>()) {
        let crop = crop_for(&bird(), q);
        let out = augment(&crop, &AugmentationConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(out.width(), CROP_SIZE);
        let e = embed(&out).unwrap();
        prop_assert!((e.dot(&e) - 1.0).abs() < 1e-12);
    }
}
