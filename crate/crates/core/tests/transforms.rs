mod common;

use std::f64::consts::FRAC_PI_2;

use common::{homogeneous, max_abs_diff, transform, transforms_close};
use deformpose::rotations::{geodesic_distance, UnitQuaternion};
use deformpose::transforms::{
    calibrate_camera, canonical_goal, label_object_pose, parse_transform_lines, FrameId, RigidTransform, TransformError,
    TransformTree,
};
use deformpose::Vec3;
use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f(name: &str) -> FrameId {
    FrameId::new(name).unwrap()
}

fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
    RigidTransform {
        rotation: UnitQuaternion::sample_uniform(rng),
        translation: Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
    }
}

#[test]
fn compose_maps_basis_vectors_like_the_matrix_product() {
    let rot = RigidTransform::from_rotation(UnitQuaternion::from_axis_angle(Vec3::Z, FRAC_PI_2));
    let shift = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 1.0));
    let t = shift.compose(&rot);
    let m = homogeneous(&shift) * homogeneous(&rot);
    for e in [Vec3::X, Vec3::Y, Vec3::Z] {
        let p = t.transform_point(e);
        let q = m * Vector4::new(e.x, e.y, e.z, 1.0);
        assert!((p.x - q[0]).abs() < 1e-15 && (p.y - q[1]).abs() < 1e-15 && (p.z - q[2]).abs() < 1e-15);
    }
    assert!((t.transform_point(Vec3::X) - Vec3::new(0.0, 1.0, 1.0)).norm() < 1e-15);
}

#[test]
fn identity_cases() {
    let t = RigidTransform::new(UnitQuaternion::normalize([0.3, 0.4, -0.5, 0.2]).unwrap(), Vec3::new(1.0, 2.0, 3.0)).unwrap();
    let i = RigidTransform::IDENTITY;
    assert!(transforms_close(&i.compose(&t), &t) < 1e-15);
    assert_eq!(i.invert(), i);
    assert!(transforms_close(&t.compose(&t.invert()), &i) < 1e-10);
    assert!(transforms_close(&t.invert().invert(), &t) < 1e-12);
    assert!(RigidTransform::new(UnitQuaternion::IDENTITY, Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
}

#[test]
fn calibration_fixtures() {
    let i = RigidTransform::IDENTITY;
    assert_eq!(calibrate_camera(&i, &i, &i), i);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = random_transform(&mut rng);
    assert!(transforms_close(&calibrate_camera(&t, &i, &t.invert()), &i) < 1e-10);
}

#[test]
fn label_fixtures() {
    let i = RigidTransform::IDENTITY;
    assert_eq!(label_object_pose(&i, &i, &i), i);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = random_transform(&mut rng);
    assert!(transforms_close(&label_object_pose(&t, &t, &i), &i) < 1e-10);
}

#[test]
fn chains_match_homogeneous_oracle_on_a_thousand_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let [bw, wa, ac, wo] = [0; 4].map(|_| random_transform(&mut rng));
        let bc = calibrate_camera(&bw, &wa, &ac);
        let oracle_bc = homogeneous(&bw) * homogeneous(&wa) * homogeneous(&ac);
        worst = worst.max(max_abs_diff(&homogeneous(&bc), &oracle_bc));
        let co = label_object_pose(&bc, &bw, &wo);
        let oracle_co = homogeneous(&bc).try_inverse().unwrap() * homogeneous(&bw) * homogeneous(&wo);
        worst = worst.max(max_abs_diff(&homogeneous(&co), &oracle_co));
        // Re-expressed in the base frame, the label is the kinematic pose.
        assert!(transforms_close(&bc.compose(&co), &bw.compose(&wo)) < 1e-9);
    }
    assert!(worst < 1e-10, "worst deviation {worst}");
}

#[test]
fn canonical_goal_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let canonical = random_transform(&mut rng);
    assert!(transforms_close(&canonical_goal(&RigidTransform::IDENTITY, &canonical), &canonical) < 1e-15);
    // Canonical equal to the current pose: the goal is the current wrist.
    let wrist = random_transform(&mut rng);
    let grasp = random_transform(&mut rng);
    let now = wrist.compose(&grasp);
    assert!(transforms_close(&canonical_goal(&grasp, &now), &wrist) < 1e-10);
}

#[test]
fn tree_chain_lookup_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let edges: Vec<RigidTransform> = (0..4).map(|_| random_transform(&mut rng)).collect();
    let names = ["base", "wrist", "cup", "object", "marker"];
    let mut tree = TransformTree::new();
    for i in 0..4 {
        tree.add_edge(f(names[i]), f(names[i + 1]), edges[i]).unwrap();
    }
    let oracle3: Matrix4<f64> = edges[..3].iter().map(homogeneous).fold(Matrix4::identity(), |a, b| a * b);
    let t = tree.lookup(&f("base"), &f("object")).unwrap();
    assert!(max_abs_diff(&homogeneous(&t), &oracle3) < 1e-10);
    let oracle4 = oracle3 * homogeneous(&edges[3]);
    let t = tree.lookup(&f("base"), &f("marker")).unwrap();
    assert!(max_abs_diff(&homogeneous(&t), &oracle4) < 1e-10);
    assert_eq!(tree.lookup(&f("cup"), &f("cup")).unwrap(), RigidTransform::IDENTITY);
    let up = tree.lookup(&f("object"), &f("cup")).unwrap();
    assert!(transforms_close(&up, &edges[2].invert()) < 1e-15);
}

#[test]
fn tree_lookup_through_common_ancestor() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (bc, bw, wc) = (random_transform(&mut rng), random_transform(&mut rng), random_transform(&mut rng));
    let mut tree = TransformTree::new();
    tree.add_edge(f("base"), f("camera"), bc).unwrap();
    tree.add_edge(f("base"), f("wrist"), bw).unwrap();
    tree.add_edge(f("wrist"), f("cup"), wc).unwrap();
    let t = tree.lookup(&f("camera"), &f("cup")).unwrap();
    let oracle = homogeneous(&bc).try_inverse().unwrap() * homogeneous(&bw) * homogeneous(&wc);
    assert!(max_abs_diff(&homogeneous(&t), &oracle) < 1e-10);
}

#[test]
fn tree_errors() {
    let i = RigidTransform::IDENTITY;
    let mut tree = TransformTree::new();
    tree.add_edge(f("base"), f("wrist"), i).unwrap();
    tree.add_edge(f("wrist"), f("cup"), i).unwrap();
    tree.add_edge(f("cup"), f("object"), i).unwrap();
    assert!(matches!(tree.add_edge(f("base"), f("wrist"), i), Err(TransformError::DuplicateChild(_))));
    assert!(matches!(tree.add_edge(f("object"), f("base"), i), Err(TransformError::CycleDetected { .. })));
    assert!(matches!(tree.add_edge(f("loose"), f("loose"), i), Err(TransformError::CycleDetected { .. })));
    assert!(matches!(tree.lookup(&f("base"), &f("nowhere")), Err(TransformError::UnknownFrame(_))));
    tree.add_edge(f("table"), f("bin"), i).unwrap();
    assert!(matches!(tree.lookup(&f("base"), &f("bin")), Err(TransformError::Disconnected(..))));
    assert!(matches!(tree.replace_edge(&f("base"), i), Err(TransformError::NoParent(_))));
    assert!(FrameId::new("").is_err());
}

#[test]
fn object_edge_replacement_and_detach() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let (a, b) = (random_transform(&mut rng), random_transform(&mut rng));
    let mut tree = TransformTree::new();
    tree.add_edge(f("cup"), f("object"), a).unwrap();
    tree.replace_edge(&f("object"), b).unwrap();
    assert_eq!(tree.lookup(&f("cup"), &f("object")).unwrap(), b);
    assert_eq!(tree.detach(&f("object")), Some(b));
    assert!(tree.lookup(&f("cup"), &f("object")).is_err());
}

#[test]
fn transform_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut tree = TransformTree::new();
    tree.add_edge(f("base"), f("wrist"), random_transform(&mut rng)).unwrap();
    tree.add_edge(f("wrist"), f("aruco"), random_transform(&mut rng)).unwrap();
    tree.add_edge(f("aruco"), f("camera"), random_transform(&mut rng)).unwrap();
    let text = tree.to_text();
    let back = TransformTree::parse(&text).unwrap();
    assert_eq!(back.to_text(), text);
    for (p, c, t) in tree.edges() {
        assert_eq!(back.edges().into_iter().find(|e| e.0 == p && e.1 == c).unwrap().2, t);
    }
    let lines = parse_transform_lines("# comment\n\nbase wrist 1 0 0 0 0.5 0 0 # trailing\n").unwrap();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0].2.translation, Vec3::new(0.5, 0.0, 0.0));
    assert!(matches!(
        parse_transform_lines("base wrist 1 0 0 0\n"),
        Err(TransformError::Parse { line: 1, .. })
    ));
    assert!(matches!(
        parse_transform_lines("a b 1 0 0 0 0 0 0\nbase wrist 1 0 0 0 0 0 x\n"),
        Err(TransformError::Parse { line: 2, .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn group_laws(a in transform(), b in transform(), c in transform()) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!(transforms_close(&left, &right) < 1e-9);
        prop_assert!(transforms_close(&a.compose(&a.invert()), &RigidTransform::IDENTITY) < 1e-10);
    }

    #[test]
    fn compose_and_invert_match_matrices(a in transform(), b in transform()) {
        prop_assert!(max_abs_diff(&homogeneous(&a.compose(&b)), &(homogeneous(&a) * homogeneous(&b))) < 1e-10);
        prop_assert!(max_abs_diff(&homogeneous(&a.invert()), &homogeneous(&a).try_inverse().unwrap()) < 1e-10);
    }

    #[test]
    fn lookup_is_antisymmetric(e in prop::collection::vec(transform(), 4)) {
        let mut tree = TransformTree::new();
        tree.add_edge(f("base"), f("wrist"), e[0]).unwrap();
        tree.add_edge(f("wrist"), f("cup"), e[1]).unwrap();
        tree.add_edge(f("base"), f("camera"), e[2]).unwrap();
        tree.add_edge(f("cup"), f("object"), e[3]).unwrap();
        let names = ["base", "wrist", "cup", "camera", "object"];
        for a in names {
            for b in names {
                let ab = tree.lookup(&f(a), &f(b)).unwrap();
                let ba = tree.lookup(&f(b), &f(a)).unwrap();
                prop_assert!(transforms_close(&ab, &ba.invert()) < 1e-10);
            }
        }
    }

    #[test]
    fn canonical_goal_reaches_canonical(grasp in transform(), canonical in transform()) {
        let goal = canonical_goal(&grasp, &canonical);
        prop_assert!(transforms_close(&goal.compose(&grasp), &canonical) < 1e-10);
    }

    #[test]
    fn text_round_trip_is_exact(t in transform()) {
        let back: RigidTransform = t.to_string().parse().unwrap();
        prop_assert_eq!(back, t);
        prop_assert!(geodesic_distance(&back.rotation, &t.rotation) == 0.0);
    }
}
