//! Skinned character: rest-pose mesh, joint hierarchy, skin weights and
//! body-part labels.
//!
//! Bones are identified with hierarchy edges. Bone `b` is the edge from
//! `parent(c)` to `c`, where `c` is the `b`-th non-root joint in index order.
//! The mesh region a bone runs through is the region skinned to its parent
//! joint (the joint whose rotation moves that segment), so the parent joint is
//! called the bone's *owner*.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::CharacterError;

pub const WEIGHT_SUM_TOL: f64 = 1e-6;
pub const FORWARD_NORM_TOL: f64 = 1e-9;

/// Canonical up axis.
pub const UP: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Torso,
    Head,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
}

impl BodyPart {
    pub const ALL: [BodyPart; 6] = [
        BodyPart::Torso,
        BodyPart::Head,
        BodyPart::LeftArm,
        BodyPart::RightArm,
        BodyPart::LeftLeg,
        BodyPart::RightLeg,
    ];

    pub fn is_arm(self) -> bool {
        matches!(self, BodyPart::LeftArm | BodyPart::RightArm)
    }

    /// Parts an observer on `self` interacts with. Torso and head sensors
    /// never observe.
    pub fn interaction_targets(self) -> &'static [BodyPart] {
        match self {
            BodyPart::LeftArm => &[BodyPart::RightArm, BodyPart::Head, BodyPart::Torso],
            BodyPart::RightArm => &[BodyPart::LeftArm, BodyPart::Head, BodyPart::Torso],
            BodyPart::LeftLeg => &[BodyPart::RightLeg, BodyPart::Torso],
            BodyPart::RightLeg => &[BodyPart::LeftLeg, BodyPart::Torso],
            BodyPart::Torso | BodyPart::Head => &[],
        }
    }
}

/// `(joint index, weight)` influences of a single point.
pub type SkinWeights = Vec<(usize, f64)>;

/// Plain construction data for a [`SkinnedCharacter`].
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterParts {
    pub name: String,
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub joints: Vec<Vector3<f64>>,
    pub parents: Vec<Option<usize>>,
    pub joint_names: Vec<String>,
    pub skin_weights: Vec<SkinWeights>,
    pub forward: Vector3<f64>,
    pub body_parts: Vec<BodyPart>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkinnedCharacter {
    parts: CharacterParts,
    root: usize,
    /// Joints ordered so every parent precedes its children.
    order: Vec<usize>,
    /// Child joint of each bone.
    bone_children: Vec<usize>,
    arm_depth: Vec<Option<usize>>,
}

impl SkinnedCharacter {
    pub fn new(parts: CharacterParts) -> Result<Self, CharacterError> {
        let n = parts.joints.len();
        if n == 0 {
            return Err(CharacterError::violation("skeleton", "character has no joints"));
        }
        if parts.parents.len() != n || parts.joint_names.len() != n || parts.body_parts.len() != n {
            return Err(CharacterError::DimensionMismatch(format!(
                "{} joints but {} parents, {} names, {} body-part labels",
                n,
                parts.parents.len(),
                parts.joint_names.len(),
                parts.body_parts.len()
            )));
        }
        if parts.skin_weights.len() != parts.vertices.len() {
            return Err(CharacterError::DimensionMismatch(format!(
                "{} vertices but {} skin-weight lists",
                parts.vertices.len(),
                parts.skin_weights.len()
            )));
        }
        if !all_finite(&parts.vertices) || !all_finite(&parts.joints) {
            return Err(CharacterError::violation("finite coordinates", "non-finite vertex or joint coordinate"));
        }

        let (root, order) = hierarchy_order(&parts.parents)?;
        validate_faces(&parts.faces, parts.vertices.len())?;
        validate_weights(&parts.skin_weights, n)?;

        let fnorm = parts.forward.norm();
        if !((fnorm - 1.0).abs() <= FORWARD_NORM_TOL) {
            return Err(CharacterError::violation(
                "unit forward",
                format!("forward direction has norm {fnorm}"),
            ));
        }

        let bone_children = (0..n).filter(|&j| j != root).collect();
        let mut arm_depth = vec![None; n];
        for &j in &order {
            if !parts.body_parts[j].is_arm() {
                continue;
            }
            arm_depth[j] = Some(match parts.parents[j] {
                Some(p) if parts.body_parts[p].is_arm() => arm_depth[p].map_or(0, |d| d + 1),
                _ => 0,
            });
        }

        Ok(SkinnedCharacter {
            parts,
            root,
            order,
            bone_children,
            arm_depth,
        })
    }

    pub fn parts(&self) -> &CharacterParts {
        &self.parts
    }

    pub fn into_parts(self) -> CharacterParts {
        self.parts
    }

    pub fn name(&self) -> &str {
        &self.parts.name
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.parts.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.parts.faces
    }

    pub fn joints(&self) -> &[Vector3<f64>] {
        &self.parts.joints
    }

    pub fn joint_count(&self) -> usize {
        self.parts.joints.len()
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parts.parents
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parts.parents[joint]
    }

    pub fn joint_names(&self) -> &[String] {
        &self.parts.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.parts.joint_names.iter().position(|n| n == name)
    }

    pub fn skin_weights(&self) -> &[SkinWeights] {
        &self.parts.skin_weights
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.parts.forward
    }

    pub fn body_part(&self, joint: usize) -> BodyPart {
        self.parts.body_parts[joint]
    }

    pub fn body_parts(&self) -> &[BodyPart] {
        &self.parts.body_parts
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Parent-before-child traversal order.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Rest offset of a joint from its parent (from the root origin for the root).
    pub fn rest_offset(&self, joint: usize) -> Vector3<f64> {
        match self.parts.parents[joint] {
            Some(p) => self.parts.joints[joint] - self.parts.joints[p],
            None => self.parts.joints[joint],
        }
    }

    pub fn bone_count(&self) -> usize {
        self.bone_children.len()
    }

    pub fn bone_child(&self, bone: usize) -> usize {
        self.bone_children[bone]
    }

    /// Parent joint of the bone; it owns the bone's mesh region.
    pub fn bone_owner(&self, bone: usize) -> usize {
        self.parts.parents[self.bone_children[bone]].expect("bone child always has a parent")
    }

    pub fn bone_part(&self, bone: usize) -> BodyPart {
        self.parts.body_parts[self.bone_owner(bone)]
    }

    /// Depth of a joint within its arm chain (0 at the shoulder).
    pub fn arm_depth(&self, joint: usize) -> Option<usize> {
        self.arm_depth[joint]
    }

    /// Forearm bones run from the elbow (arm depth 1) to the wrist.
    pub fn is_forearm_bone(&self, bone: usize) -> bool {
        self.arm_depth[self.bone_owner(bone)] == Some(1)
    }

    /// Forearm and hand bones.
    pub fn is_hand_side_bone(&self, bone: usize) -> bool {
        self.arm_depth[self.bone_owner(bone)].is_some_and(|d| d >= 1)
    }

    /// Joint with the largest skin weight on a vertex (lowest index on ties).
    pub fn dominant_joint(&self, vertex: usize) -> usize {
        dominant(&self.parts.skin_weights[vertex])
    }

    /// Extent of the rest-pose mesh along the up axis.
    pub fn height(&self) -> Result<f64, CharacterError> {
        if self.parts.vertices.is_empty() {
            return Err(CharacterError::EmptyMesh);
        }
        let (lo, hi) = self
            .parts
            .vertices
            .iter()
            .map(|v| v.dot(&UP))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
        Ok(hi - lo)
    }

    /// Uniformly scaled copy (about the origin).
    pub fn scaled(&self, factor: f64) -> Result<Self, CharacterError> {
        let mut parts = self.parts.clone();
        parts.vertices.iter_mut().for_each(|v| *v *= factor);
        parts.joints.iter_mut().for_each(|j| *j *= factor);
        SkinnedCharacter::new(parts)
    }

    /// Whether two characters share joint count and hierarchy.
    pub fn same_topology(&self, other: &SkinnedCharacter) -> bool {
        self.parts.parents == other.parts.parents
    }
}

pub(crate) fn dominant(weights: &[(usize, f64)]) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for &(j, w) in weights {
        if w > best.1 || (w == best.1 && j < best.0) {
            best = (j, w);
        }
    }
    best.0
}

fn all_finite(points: &[Vector3<f64>]) -> bool {
    points.iter().all(|p| p.iter().all(|c| c.is_finite()))
}

fn hierarchy_order(parents: &[Option<usize>]) -> Result<(usize, Vec<usize>), CharacterError> {
    let n = parents.len();
    for (j, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= n {
                return Err(CharacterError::violation(
                    "parent index",
                    format!("joint {j} has out-of-range parent {p}"),
                ));
            }
        }
    }
    // any ancestor chain longer than the joint count must loop
    for start in 0..n {
        let mut j = start;
        for _ in 0..=n {
            match parents[j] {
                Some(p) => j = p,
                None => break,
            }
        }
        if parents[j].is_some() {
            return Err(CharacterError::violation(
                "hierarchy cycle",
                format!("joint {start} has a cyclic ancestor chain"),
            ));
        }
    }
    let roots: Vec<usize> = (0..n).filter(|&j| parents[j].is_none()).collect();
    if roots.len() != 1 {
        return Err(CharacterError::violation(
            "single root",
            format!("expected exactly one root joint, found {}", roots.len()),
        ));
    }
    let mut children = vec![Vec::new(); n];
    for (j, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            children[p].push(j);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![roots[0]];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    debug_assert_eq!(order.len(), n);
    Ok((roots[0], order))
}

fn validate_faces(faces: &[[usize; 3]], vertex_count: usize) -> Result<(), CharacterError> {
    for (f, face) in faces.iter().enumerate() {
        if face.iter().any(|&v| v >= vertex_count) {
            return Err(CharacterError::violation(
                "face indices",
                format!("face {f} references a vertex out of range"),
            ));
        }
        if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            return Err(CharacterError::violation(
                "face indices",
                format!("face {f} repeats a vertex"),
            ));
        }
    }
    Ok(())
}

fn validate_weights(weights: &[SkinWeights], joint_count: usize) -> Result<(), CharacterError> {
    for (v, list) in weights.iter().enumerate() {
        let mut sum = 0.0;
        for &(j, w) in list {
            if j >= joint_count {
                return Err(CharacterError::violation(
                    "skin weights",
                    format!("vertex {v} references joint {j} out of range"),
                ));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(CharacterError::violation(
                    "skin weights",
                    format!("vertex {v} has negative or non-finite weight {w}"),
                ));
            }
            sum += w;
        }
        if !((sum - 1.0).abs() <= WEIGHT_SUM_TOL) {
            return Err(CharacterError::violation(
                "skin weights",
                format!("weights of vertex {v} sum to {sum}"),
            ));
        }
    }
    Ok(())
}
