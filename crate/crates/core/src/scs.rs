//! Semantically consistent surface sensors.
//!
//! A sensor is addressed by a semantic coordinate `(bone, l, phi)`: a ray is
//! cast from the point at fraction `l` along the bone, in the direction at
//! angle `phi` around it (measured from the character's forward direction),
//! and intersected with the part of the mesh that bone runs through. The same
//! coordinate lands on the same body location on any character with the same
//! skeleton topology, which is what gives index-aligned sensors across
//! characters with unrelated mesh topologies.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::character::{BodyPart, SkinWeights, SkinnedCharacter};
use crate::error::ScsError;
use crate::mesh::{face_normal, ray_mesh_intersection};

const FRAME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticCoordinate {
    pub bone: usize,
    /// Ray origin as a fraction of the bone, in `[0, 1)`.
    pub l: f64,
    /// Ray direction angle in `[0, 2π)`.
    pub phi: f64,
}

impl SemanticCoordinate {
    pub fn new(bone: usize, l: f64, phi: f64) -> Self {
        SemanticCoordinate { bone, l, phi }
    }
}

/// Cartesian product `{0..bones} × {k/l_steps} × {2πm/phi_steps}`, bone-major.
pub fn coordinate_grid(bones: usize, l_steps: usize, phi_steps: usize) -> Vec<SemanticCoordinate> {
    let mut out = Vec::with_capacity(bones * l_steps * phi_steps);
    for b in 0..bones {
        for k in 0..l_steps {
            for m in 0..phi_steps {
                let l = k as f64 / l_steps as f64;
                let phi = PI * (2.0 * m as f64 / phi_steps as f64);
                out.push(SemanticCoordinate::new(b, l, phi));
            }
        }
    }
    out
}

/// Four ray origins times four directions per bone.
pub fn default_coordinate_grid(body_bones: usize) -> Vec<SemanticCoordinate> {
    coordinate_grid(body_bones, 4, 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BoneMeshRule {
    /// Faces whose three vertices are all dominated by the bone's owner joint.
    #[default]
    ArgMax,
    /// Faces whose three vertices all carry at least this weight on the owner.
    Threshold(f64),
}

/// Default weight threshold for [`BoneMeshRule::Threshold`].
pub const BONE_WEIGHT_THRESHOLD: f64 = 0.4;

/// Indices (ascending) of the faces associated with a bone.
pub fn bone_mesh(character: &SkinnedCharacter, bone: usize, rule: BoneMeshRule) -> Result<Vec<usize>, ScsError> {
    if bone >= character.bone_count() {
        return Err(ScsError::InvalidBone(bone));
    }
    let owner = character.bone_owner(bone);
    let qualifies = |v: usize| match rule {
        BoneMeshRule::ArgMax => character.dominant_joint(v) == owner,
        BoneMeshRule::Threshold(tau) => character.skin_weights()[v]
            .iter()
            .any(|&(j, w)| j == owner && w >= tau),
    };
    let faces: Vec<usize> = character
        .faces()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.iter().all(|&v| qualifies(v)))
        .map(|(i, _)| i)
        .collect();
    if faces.is_empty() {
        Err(ScsError::EmptySubmesh(bone))
    } else {
        Ok(faces)
    }
}

/// Tangent frame with columns `(u, v, n)`: `n` the outward normal, `u` the
/// bone direction projected into the tangent plane, `v = n × u`.
pub fn tangent_frame(normal: &Vector3<f64>, bone_dir: &Vector3<f64>) -> Result<Matrix3<f64>, ScsError> {
    let n = normal.normalize();
    let u = bone_dir - n * bone_dir.dot(&n);
    let len = u.norm();
    if !(len > FRAME_EPS) {
        return Err(ScsError::DegenerateFrame);
    }
    let u = u / len;
    let v = n.cross(&u);
    Ok(Matrix3::from_columns(&[u, v, n]))
}

/// [`tangent_frame`], falling back to the forward direction (and then to the
/// coordinate axes) when the bone is parallel to the normal.
pub fn tangent_frame_with_fallback(
    normal: &Vector3<f64>,
    bone_dir: &Vector3<f64>,
    forward: &Vector3<f64>,
) -> Matrix3<f64> {
    [*bone_dir, *forward, Vector3::x(), Vector3::y(), Vector3::z()]
        .iter()
        .find_map(|d| tangent_frame(normal, d).ok())
        .expect("some coordinate axis is not parallel to the normal")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorFeature {
    pub coordinate: SemanticCoordinate,
    pub valid: bool,
    /// Rest-pose surface point.
    pub position: Vector3<f64>,
    /// Rest-pose tangent frame (columns `u, v, n`).
    pub tangent: Matrix3<f64>,
    pub skin_weights: SkinWeights,
}

impl SensorFeature {
    pub fn invalid(coordinate: SemanticCoordinate) -> Self {
        SensorFeature {
            coordinate,
            valid: false,
            position: Vector3::zeros(),
            tangent: Matrix3::zeros(),
            skin_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScsConfig {
    pub bone_mesh_rule: BoneMeshRule,
}

/// Casts the ray for one coordinate against a precomputed bone submesh.
fn cast_sensor(
    character: &SkinnedCharacter,
    coordinate: SemanticCoordinate,
    submesh: Result<&[usize], ScsError>,
) -> SensorFeature {
    let Ok(faces) = submesh else {
        return SensorFeature::invalid(coordinate);
    };
    let bone = coordinate.bone;
    let x_parent = character.joints()[character.bone_owner(bone)];
    let x_child = character.joints()[character.bone_child(bone)];
    let origin = x_parent * (1.0 - coordinate.l) + x_child * coordinate.l;

    let axis = x_child - x_parent;
    if !(axis.norm() > FRAME_EPS) {
        return SensorFeature::invalid(coordinate);
    }
    let d_bone = axis.normalize();
    let d_forward = character.forward();
    let d_other = d_forward.cross(&d_bone);
    if !(d_other.norm() > FRAME_EPS) {
        log::debug!("bone {bone} is parallel to the forward direction; sensor invalid");
        return SensorFeature::invalid(coordinate);
    }
    let d_other = d_other.normalize();
    let dir = (d_forward * coordinate.phi.cos() + d_other * coordinate.phi.sin()).normalize();

    let Some(hit) = ray_mesh_intersection(character.vertices(), character.faces(), faces, &origin, &dir) else {
        return SensorFeature::invalid(coordinate);
    };

    let face = character.faces()[hit.face];
    let mut normal = face_normal(character.vertices(), &face).normalize();
    if normal.dot(&(hit.point - origin)) < 0.0 {
        normal = -normal;
    }
    let tangent = tangent_frame_with_fallback(&normal, &d_bone, &d_forward);

    let mut blended: BTreeMap<usize, f64> = BTreeMap::new();
    for (corner, &beta) in face.iter().zip(&hit.barycentric) {
        for &(j, w) in &character.skin_weights()[*corner] {
            *blended.entry(j).or_insert(0.0) += beta * w;
        }
    }
    let total: f64 = blended.values().sum();
    let skin_weights = blended
        .into_iter()
        .filter(|&(_, w)| w > 0.0)
        .map(|(j, w)| (j, w / total))
        .collect();

    SensorFeature {
        coordinate,
        valid: true,
        position: hit.point,
        tangent,
        skin_weights,
    }
}

/// Derives a single sensor. Bones without an associated submesh, and rays
/// that miss it, give an invalid (zero) sensor rather than an error.
pub fn derive_sensor(character: &SkinnedCharacter, coordinate: SemanticCoordinate, config: &ScsConfig) -> SensorFeature {
    let submesh = bone_mesh(character, coordinate.bone, config.bone_mesh_rule);
    cast_sensor(character, coordinate, submesh.as_deref().map_err(Clone::clone))
}

/// Sensors of one character over a shared coordinate array.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    pub features: Vec<SensorFeature>,
    pub body_parts: Vec<BodyPart>,
}

impl SensorSet {
    /// Derives every sensor; output order follows `coordinates`.
    ///
    /// Coordinates referencing bones the character does not have yield
    /// invalid sensors labelled `Torso`.
    pub fn derive(character: &SkinnedCharacter, coordinates: &[SemanticCoordinate], config: &ScsConfig) -> SensorSet {
        let submeshes: Vec<Result<Vec<usize>, ScsError>> = (0..character.bone_count())
            .map(|b| bone_mesh(character, b, config.bone_mesh_rule))
            .collect();
        let features: Vec<SensorFeature> = coordinates
            .par_iter()
            .map(|&c| match submeshes.get(c.bone) {
                Some(sub) => cast_sensor(character, c, sub.as_deref().map_err(Clone::clone)),
                None => SensorFeature::invalid(c),
            })
            .collect();
        let body_parts = coordinates
            .iter()
            .map(|c| {
                if c.bone < character.bone_count() {
                    character.bone_part(c.bone)
                } else {
                    BodyPart::Torso
                }
            })
            .collect();
        SensorSet { features, body_parts }
    }

    /// First valid sensor whose tangent frame is not orthonormal within `tol`.
    pub fn first_non_orthonormal(&self, tol: f64) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.valid && (f.tangent.transpose() * f.tangent - Matrix3::identity()).norm() > tol)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn coordinates(&self) -> Vec<SemanticCoordinate> {
        self.features.iter().map(|f| f.coordinate).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.features.iter().filter(|f| f.valid).count()
    }

    pub fn is_valid(&self, sensor: usize) -> bool {
        self.features[sensor].valid
    }
}
