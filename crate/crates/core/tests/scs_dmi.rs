mod common;

use std::f64::consts::PI;

use common::*;
use dmi_retarget::character::{BodyPart, CharacterParts, SkinnedCharacter};
use dmi_retarget::dmi::*;
use dmi_retarget::motion::MotionSequence;
use dmi_retarget::scs::*;
use dmi_retarget::synthetic::{biped, clap_motion, ShapeSpec};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use proptest::prelude::*;

/// Closest rotation by Newton iteration `X ← (X + X⁻ᵀ) / 2`.
fn polar_oracle(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut x = *m;
    for _ in 0..60 {
        x = (x + x.try_inverse().unwrap().transpose()) * 0.5;
    }
    x
}

/// Splits every face into four through its edge midpoints.
fn subdivide(character: &SkinnedCharacter) -> SkinnedCharacter {
    let mut parts = character.parts().clone();
    let mut midpoints = std::collections::HashMap::new();
    let mut faces = Vec::new();
    let old_faces = parts.faces.clone();
    for f in old_faces {
        let mut mid = |a: usize, b: usize| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                parts.vertices.push((parts.vertices[a] + parts.vertices[b]) * 0.5);
                let mut w = parts.skin_weights[a].clone();
                w.extend(parts.skin_weights[b].iter().copied());
                let mut merged: Vec<(usize, f64)> = Vec::new();
                for (j, x) in w {
                    match merged.iter_mut().find(|(k, _)| *k == j) {
                        Some(e) => e.1 += x * 0.5,
                        None => merged.push((j, x * 0.5)),
                    }
                }
                parts.skin_weights.push(merged);
                parts.vertices.len() - 1
            })
        };
        let (ab, bc, ca) = (mid(f[0], f[1]), mid(f[1], f[2]), mid(f[2], f[0]));
        faces.extend([[f[0], ab, ca], [ab, f[1], bc], [ca, bc, f[2]], [ab, bc, ca]]);
    }
    parts.faces = faces;
    SkinnedCharacter::new(parts).unwrap()
}

fn default_biped() -> SkinnedCharacter {
    biped("a", &ShapeSpec::default()).unwrap()
}

#[test]
fn cylinder_sensors_match_analytic_surface() {
    let character = cylinder_character(0.1, 64);
    let grid = coordinate_grid(1, 8, 14);
    let sensors = SensorSet::derive(&character, &grid, &ScsConfig::default());
    assert_eq!(sensors.valid_count(), grid.len());
    for f in &sensors.features {
        let c = f.coordinate;
        let want = Vector3::new(-0.1 * c.phi.sin(), c.l, 0.1 * c.phi.cos());
        assert!((f.position - want).norm() < 1e-3, "{c:?}: {} vs {want}", f.position);
    }
    let front = derive_sensor(&character, SemanticCoordinate::new(0, 0.5, 0.0), &ScsConfig::default());
    assert!((front.position - Vector3::new(0.0, 0.5, 0.1)).norm() < 1e-9);
    let back = derive_sensor(&character, SemanticCoordinate::new(0, 0.5, PI), &ScsConfig::default());
    assert!((back.position - Vector3::new(0.0, 0.5, -0.1)).norm() < 1e-9);
}

#[test]
fn scaling_doubles_positions_and_keeps_frames() {
    let a = default_biped();
    let b = a.scaled(2.0).unwrap();
    let grid = default_coordinate_grid(a.bone_count());
    let sa = SensorSet::derive(&a, &grid, &ScsConfig::default());
    let sb = SensorSet::derive(&b, &grid, &ScsConfig::default());
    assert_eq!(sa.len(), sb.len());
    for (fa, fb) in sa.features.iter().zip(&sb.features) {
        assert_eq!(fa.coordinate, fb.coordinate);
        assert_eq!(fa.valid, fb.valid);
        if fa.valid {
            assert!((fb.position - fa.position * 2.0).amax() < 1e-6);
            assert!((fb.tangent - fa.tangent).amax() < 1e-6);
        }
    }
}

#[test]
fn sensors_are_index_aligned_with_convex_weights() {
    let grid = default_coordinate_grid(18);
    let a = default_biped();
    let b = biped("b", &ShapeSpec { arm_length: 1.5, leg_width: 1.3, ..ShapeSpec::default() }).unwrap();
    let sa = SensorSet::derive(&a, &grid, &ScsConfig::default());
    let sb = SensorSet::derive(&b, &grid, &ScsConfig::default());
    assert_eq!(sa.len(), 288);
    assert_eq!(sa.coordinates(), sb.coordinates());
    for f in sa.features.iter().chain(&sb.features).filter(|f| f.valid) {
        assert!(f.skin_weights.iter().all(|&(_, w)| w >= 0.0));
        assert!((f.skin_weights.iter().map(|&(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-6);
        assert!((f.tangent.transpose() * f.tangent - Matrix3::identity()).amax() < 1e-9);
    }
}

#[test]
fn subdivided_mesh_keeps_sensors() {
    let coarse = cylinder_character(0.1, 24);
    let fine = subdivide(&coarse);
    let grid = coordinate_grid(1, 4, 8);
    let sa = SensorSet::derive(&coarse, &grid, &ScsConfig::default());
    let sb = SensorSet::derive(&fine, &grid, &ScsConfig::default());
    for (a, b) in sa.features.iter().zip(&sb.features) {
        if a.valid {
            assert!(b.valid);
            assert!((a.position - b.position).norm() < 1e-9);
        }
    }
}

#[test]
fn forearm_submesh_matches_face_scan() {
    let character = default_biped();
    for bone in (0..character.bone_count()).filter(|&b| character.is_forearm_bone(b)) {
        let owner = character.bone_owner(bone);
        let argmax = |v: usize| {
            let w = &character.skin_weights()[v];
            let top = w.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            w.iter().filter(|x| x.1 == top).map(|x| x.0).min().unwrap()
        };
        let scan: Vec<usize> = (0..character.faces().len())
            .filter(|&f| character.faces()[f].iter().all(|&v| argmax(v) == owner))
            .collect();
        let got = bone_mesh(&character, bone, BoneMeshRule::ArgMax).unwrap();
        assert_eq!(got, scan);
        assert!(!scan.is_empty());
    }
}

#[test]
fn sensor_fk_matches_dense_lbs() {
    let character = chain_character();
    let sensors = SensorSet::derive(&character, &coordinate_grid(5, 4, 4), &ScsConfig::default());
    assert!(sensors.valid_count() > 40);
    assert!(sensors.features.iter().any(|f| f.valid && f.skin_weights.len() > 1));
    let mut rng = rng(21);
    let motion = random_motion(&mut rng, 6, 100, 1.0);
    let traj = sensor_forward_kinematics(&character, &sensors, &motion).unwrap();
    for t in 0..motion.frame_count() {
        let local = motion.frame_matrices(t);
        let skin = skinning_oracle(character.parents(), character.joints(), &local, &motion.root_translation()[t]);
        for (s, f) in sensors.features.iter().enumerate().filter(|(_, f)| f.valid) {
            let p = apply_dense(&f.skin_weights, &skin, &f.position);
            assert!((traj.positions[t][s] - p).amax() < 1e-9);
            let mut lin = Matrix3::zeros();
            for &(j, w) in &f.skin_weights {
                lin += skin[j].fixed_view::<3, 3>(0, 0) * w;
            }
            let tangent = polar_oracle(&(lin * f.tangent));
            assert!((traj.tangents[t][s] - tangent).amax() < 1e-9);
        }
    }
}

#[test]
fn selection_matches_full_sort() {
    let mut rng = rng(22);
    let positions: Vec<Vector3<f64>> = (0..65).map(|_| random_vec(&mut rng, 1.0)).collect();
    let mask = InteractionMask {
        observers: vec![Observer {
            sensor: 0,
            groups: vec![TargetGroup {
                part: BodyPart::Torso,
                targets: (1..65).collect(),
            }],
        }],
        valid: vec![true; 65],
        body_parts: vec![BodyPart::Torso; 65],
    };
    let selected = select_pairs(&positions, &mask, 20).unwrap();
    let mut order: Vec<usize> = (1..65).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = ((positions[a] - positions[0]).norm(), (positions[b] - positions[0]).norm());
        da.partial_cmp(&db).unwrap()
    });
    let mut want: Vec<usize> = order[..10].to_vec();
    want.extend(order.iter().rev().take(10));
    assert_eq!(selected[0].targets, want);

    // a group of at most L members is taken whole
    let small = select_pairs(&positions[..15], &InteractionMask {
        observers: vec![Observer {
            sensor: 0,
            groups: vec![TargetGroup { part: BodyPart::Head, targets: (1..15).collect() }],
        }],
        valid: vec![true; 15],
        body_parts: vec![BodyPart::Head; 15],
    }, 20)
    .unwrap();
    assert_eq!(small[0].targets.len(), 14);
}

/// `motion` with one rigid transform applied to the whole character.
fn rigidly_moved(character: &SkinnedCharacter, motion: &MotionSequence, r: UnitQuaternion<f64>, t: Vector3<f64>) -> MotionSequence {
    let root = character.root();
    let j = character.joints()[root];
    let rotations = (0..motion.frame_count())
        .map(|f| {
            let mut q = motion.frame_rotations(f).to_vec();
            q[root] = r * q[root];
            q
        })
        .collect();
    let translation = motion.root_translation().iter().map(|x| r * (j + x) + t - j).collect();
    MotionSequence::new(motion.fps(), translation, rotations).unwrap()
}

fn clap_field(character: &SkinnedCharacter, motion: &MotionSequence) -> DmiField {
    let sensors = SensorSet::derive(character, &default_coordinate_grid(character.bone_count()), &ScsConfig::default());
    let traj = sensor_forward_kinematics(character, &sensors, motion).unwrap();
    let mask = build_interaction_mask(&sensors, None).unwrap();
    compute_dmi_field(&traj, &mask, DEFAULT_PAIRS, SelectionMode::PerFrame).unwrap()
}

#[test]
fn field_is_rigidly_invariant() {
    let character = default_biped();
    let motion = clap_motion(&character, 8, 30.0);
    let base = clap_field(&character, &motion);
    let mut rng = rng(23);
    for _ in 0..3 {
        let moved = rigidly_moved(&character, &motion, random_quat(&mut rng), random_vec(&mut rng, 3.0));
        let field = clap_field(&character, &moved);
        for (fa, fb) in base.frames.iter().zip(&field.frames) {
            assert_eq!(fa.len(), fb.len());
            for (a, b) in fa.iter().zip(fb) {
                assert_eq!((a.observer, a.target), (b.observer, b.target));
                assert!((a.d - b.d).norm() < 1e-6);
            }
        }
    }
}

#[test]
fn scaled_character_doubles_offsets() {
    let character = default_biped();
    let big = character.scaled(2.0).unwrap();
    let motion = clap_motion(&character, 6, 30.0);
    let doubled = motion
        .with_root_translation(motion.root_translation().iter().map(|x| x * 2.0).collect())
        .unwrap();
    let a = clap_field(&character, &motion);
    let b = clap_field(&big, &doubled);
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        for (x, y) in fa.iter().zip(fb) {
            assert_eq!((x.observer, x.target), (y.observer, y.target));
            assert!((y.d.norm() - 2.0 * x.d.norm()).abs() < 1e-6);
            assert!((y.d.normalize() - x.d.normalize()).norm() < 1e-6);
        }
    }
}

#[test]
fn field_respects_sparsity_bound_and_mask() {
    let character = default_biped();
    let motion = clap_motion(&character, 4, 30.0);
    let sensors = SensorSet::derive(&character, &default_coordinate_grid(18), &ScsConfig::default());
    let mask = build_interaction_mask(&sensors, None).unwrap();
    let traj = sensor_forward_kinematics(&character, &sensors, &motion).unwrap();
    for mode in [SelectionMode::PerFrame, SelectionMode::Static] {
        let field = compute_dmi_field(&traj, &mask, 20, mode).unwrap();
        let bound: usize = mask.observers.iter().map(|o| o.groups.len() * 20).sum();
        for frame in &field.frames {
            assert!(frame.len() <= bound);
            assert!(frame.iter().all(|e| mask.contains(e.observer, e.target) && e.valid));
        }
    }
    for bad in [0, 1, 7] {
        assert!(compute_dmi_field(&traj, &mask, bad, SelectionMode::PerFrame).is_err());
    }
}

#[test]
fn field_is_independent_of_thread_count() {
    let character = default_biped();
    let motion = clap_motion(&character, 6, 30.0);
    let parallel = clap_field(&character, &motion);
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| clap_field(&character, &motion));
    assert_eq!(parallel, serial);
}

#[test]
fn limb_parallel_to_forward_gives_invalid_sensors() {
    let mut parts: CharacterParts = cylinder_character(0.1, 16).into_parts();
    parts.forward = Vector3::y();
    let character = SkinnedCharacter::new(parts).unwrap();
    let sensors = SensorSet::derive(&character, &coordinate_grid(1, 2, 2), &ScsConfig::default());
    assert_eq!(sensors.valid_count(), 0);
    assert!(sensors.features.iter().all(|f| f.position == Vector3::zeros() && f.skin_weights.is_empty()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cylinder_sensor_lies_on_shell(l in 0.0f64..1.0, phi in 0.0f64..(2.0 * PI)) {
        let character = cylinder_character(0.1, 64);
        let f = derive_sensor(&character, SemanticCoordinate::new(0, l, phi), &ScsConfig::default());
        prop_assert!(f.valid);
        let radial = Vector3::new(f.position.x, 0.0, f.position.z).norm();
        prop_assert!(radial <= 0.1 + 1e-12 && radial >= 0.1 * (PI / 64.0).cos() - 1e-12);
        prop_assert!((f.position.y - l).abs() < 1e-9);
        prop_assert!((f.tangent.transpose() * f.tangent - Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn selection_never_exceeds_pair_budget(seed in any::<u64>(), n in 1usize..60, half in 1usize..8) {
        let mut rng = common::rng(seed);
        let positions: Vec<Vector3<f64>> = (0..=n).map(|_| random_vec(&mut rng, 1.0)).collect();
        let mask = InteractionMask {
            observers: vec![Observer {
                sensor: 0,
                groups: vec![TargetGroup { part: BodyPart::Torso, targets: (1..=n).collect() }],
            }],
            valid: vec![true; n + 1],
            body_parts: vec![BodyPart::Torso; n + 1],
        };
        let s = select_pairs(&positions, &mask, 2 * half).unwrap();
        prop_assert_eq!(s[0].targets.len(), n.min(2 * half));
        let mut unique = s[0].targets.clone();
        unique.sort_unstable();
        unique.dedup();
        prop_assert_eq!(unique.len(), s[0].targets.len());
    }
}
