mod common;

use common::*;
use dmi_retarget::kinematics::{forward_kinematics, pose, skin_vertices};
use dmi_retarget::rotation::{axis_angle, canonical_sign, matrix_to_quat, quat_to_matrix};
use dmi_retarget::Rotation6d;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn max_abs(m: impl IntoIterator<Item = f64>) -> f64 {
    m.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[test]
fn six_d_round_trip_over_uniform_rotations() {
    let mut rng = rng(11);
    for _ in 0..1000 {
        let q = random_quat(&mut rng);
        let r = quat_matrix_oracle(&q);
        let six = Rotation6d::from_matrix(&r);
        // storage is the first two columns
        assert_eq!(six.0, [r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]]);
        let back = six.to_matrix().unwrap();
        assert!(max_abs((back - r).iter().copied()) < 1e-9);
        let q2 = six.to_quaternion().unwrap();
        assert!((canonical_sign(q2).coords - canonical_sign(q).coords).norm() < 1e-9);
    }
}

#[test]
fn decode_matches_independent_gram_schmidt() {
    let mut rng = rng(12);
    for _ in 0..200 {
        let v = random_vec(&mut rng, 2.0);
        let w = random_vec(&mut rng, 2.0);
        let six = Rotation6d([v.x, v.y, v.z, w.x, w.y, w.z]);
        let got = six.to_matrix().unwrap();
        assert!(max_abs((got - gram_schmidt_oracle(&six.0)).iter().copied()) < 1e-12);
    }
}

#[test]
fn scaled_columns_decode_to_identity() {
    let m = Rotation6d([2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).to_matrix().unwrap();
    assert_eq!(m, Matrix3::identity());
}

#[test]
fn root_rotation_swings_child() {
    let character = tree_character(vec![None, Some(0)], vec![Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0)]);
    let local = [axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2), Matrix3::identity()];
    let p = pose(&character, &local, &Vector3::zeros());
    assert!((p.positions[1] - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
}

#[test]
fn fk_matches_ancestor_product_on_random_trees() {
    let mut rng = rng(13);
    for _ in 0..200 {
        let (parents, joints) = random_tree(&mut rng, 5);
        let character = tree_character(parents.clone(), joints.clone());
        let local: Vec<Matrix3<f64>> = (0..5).map(|_| quat_matrix_oracle(&random_quat(&mut rng))).collect();
        let root = random_vec(&mut rng, 1.0);

        let world = world_transforms_oracle(&parents, &joints, &local, &root);
        let skin = skinning_oracle(&parents, &joints, &local, &root);
        let p = pose(&character, &local, &root);
        let g = forward_kinematics(&character, &local, &root);
        for j in 0..5 {
            let w = &world[j];
            assert!(max_abs((p.rotations[j] - w.fixed_view::<3, 3>(0, 0)).iter().copied()) < 1e-9);
            assert!(max_abs((p.positions[j] - w.fixed_view::<3, 1>(0, 3)).iter().copied()) < 1e-9);
            let s = &skin[j];
            assert!(max_abs((g[j].linear - s.fixed_view::<3, 3>(0, 0)).iter().copied()) < 1e-9);
            assert!(max_abs((g[j].translation - s.fixed_view::<3, 1>(0, 3)).iter().copied()) < 1e-9);
            // G_n carries the rest joint onto the posed joint
            assert!((g[j].apply(&joints[j]) - p.positions[j]).norm() < 1e-9);
        }
        let skinned = skin_vertices(&character, &g);
        for (v, posed) in skinned.iter().enumerate() {
            let want = apply_dense(&character.skin_weights()[v], &skin, &character.vertices()[v]);
            assert!((posed - want).norm() < 1e-9);
        }
    }
}

#[test]
fn identity_pose_leaves_mesh_at_rest() {
    let mut rng = rng(14);
    let (parents, joints) = random_tree(&mut rng, 6);
    let character = tree_character(parents, joints);
    let g = forward_kinematics(&character, &vec![Matrix3::identity(); 6], &Vector3::zeros());
    assert_eq!(skin_vertices(&character, &g), character.vertices());
}

proptest! {
    #[test]
    fn decode_is_a_proper_rotation(v in prop::array::uniform6(-5.0f64..5.0)) {
        let six = Rotation6d(v);
        let a1 = six.first();
        let a2 = six.second();
        prop_assume!(a1.norm() > 1e-3 && a1.normalize().cross(&a2).norm() > 1e-3);
        let m = six.to_matrix().unwrap();
        prop_assert!(((m.transpose() * m) - Matrix3::identity()).norm() < 1e-9);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        prop_assert!((m.column(0) - a1.normalize()).norm() < 1e-12);
    }

    #[test]
    fn quaternion_round_trip_up_to_sign(seed in any::<u64>()) {
        let q = random_quat(&mut common::rng(seed));
        let back = matrix_to_quat(&quat_to_matrix(&q));
        prop_assert!((canonical_sign(back).coords - canonical_sign(q).coords).norm() < 1e-9);
    }

    #[test]
    fn parallel_columns_are_rejected(v in prop::array::uniform3(-5.0f64..5.0), k in -3.0f64..3.0) {
        prop_assume!(Vector3::from(v).norm() > 1e-3);
        let six = Rotation6d([v[0], v[1], v[2], k * v[0], k * v[1], k * v[2]]);
        prop_assert!(six.to_matrix().is_err());
    }
}
