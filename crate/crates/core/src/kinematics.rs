//! Skeletal forward kinematics and linear blend skinning.

use nalgebra::{Matrix3, Vector3};

use crate::character::SkinnedCharacter;

/// Affine map `p ↦ linear · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub linear: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            linear: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.linear * p + self.translation
    }

    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            linear: self.linear * inner.linear,
            translation: self.linear * inner.translation + self.translation,
        }
    }
}

/// Global joint rotations and positions for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotations: Vec<Matrix3<f64>>,
    pub positions: Vec<Vector3<f64>>,
}

impl Pose {
    /// Skinning transforms `G_n`, mapping rest-pose points skinned to joint
    /// `n` into the posed frame.
    pub fn skinning_transforms(&self, character: &SkinnedCharacter) -> Vec<RigidTransform> {
        self.rotations
            .iter()
            .zip(&self.positions)
            .zip(character.joints())
            .map(|((r, x), j)| RigidTransform {
                linear: *r,
                translation: x - r * j,
            })
            .collect()
    }
}

/// Composes local rotations down the hierarchy.
///
/// The root sits at its rest position plus `root_translation`; every other
/// joint sits at its parent's position plus the parent's global rotation
/// applied to its rest offset.
pub fn pose(character: &SkinnedCharacter, local: &[Matrix3<f64>], root_translation: &Vector3<f64>) -> Pose {
    let n = character.joint_count();
    assert_eq!(local.len(), n, "one local rotation per joint");
    let mut rotations = vec![Matrix3::identity(); n];
    let mut positions = vec![Vector3::zeros(); n];
    for &j in character.topological_order() {
        match character.parent(j) {
            None => {
                rotations[j] = local[j];
                positions[j] = character.joints()[j] + root_translation;
            }
            Some(p) => {
                rotations[j] = rotations[p] * local[j];
                positions[j] = positions[p] + rotations[p] * character.rest_offset(j);
            }
        }
    }
    Pose { rotations, positions }
}

pub fn forward_kinematics(
    character: &SkinnedCharacter,
    local: &[Matrix3<f64>],
    root_translation: &Vector3<f64>,
) -> Vec<RigidTransform> {
    pose(character, local, root_translation).skinning_transforms(character)
}

/// Linear blend of skinning transforms.
pub fn blend(transforms: &[RigidTransform], weights: &[(usize, f64)]) -> RigidTransform {
    let mut out = RigidTransform {
        linear: Matrix3::zeros(),
        translation: Vector3::zeros(),
    };
    for &(j, w) in weights {
        out.linear += transforms[j].linear * w;
        out.translation += transforms[j].translation * w;
    }
    out
}

/// Poses every mesh vertex.
pub fn skin_vertices(character: &SkinnedCharacter, transforms: &[RigidTransform]) -> Vec<Vector3<f64>> {
    character
        .vertices()
        .iter()
        .zip(character.skin_weights())
        .map(|(v, w)| blend(transforms, w).apply(v))
        .collect()
}
