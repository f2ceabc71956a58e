use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::character::SkinnedCharacter;
use crate::error::MotionError;
use crate::rotation::{quat_to_matrix, Rotation6d};

pub const QUAT_NORM_TOL: f64 = 1e-6;

/// Per-frame root translation and local joint rotations.
///
/// The root translation is an offset of the root joint from its rest
/// position; a zero translation with identity rotations reproduces the rest
/// pose.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    fps: f64,
    root_translation: Vec<Vector3<f64>>,
    rotations: Vec<Vec<UnitQuaternion<f64>>>,
}

impl MotionSequence {
    pub fn new(
        fps: f64,
        root_translation: Vec<Vector3<f64>>,
        rotations: Vec<Vec<UnitQuaternion<f64>>>,
    ) -> Result<Self, MotionError> {
        if rotations.is_empty() {
            return Err(MotionError::InvariantViolation {
                invariant: "frame count",
                detail: "motion has no frames".into(),
            });
        }
        if !(fps > 0.0) {
            return Err(MotionError::InvariantViolation {
                invariant: "fps",
                detail: format!("fps must be positive, got {fps}"),
            });
        }
        if root_translation.len() != rotations.len() {
            return Err(MotionError::DimensionMismatch(format!(
                "{} root translations for {} frames",
                root_translation.len(),
                rotations.len()
            )));
        }
        let joints = rotations[0].len();
        for (t, frame) in rotations.iter().enumerate() {
            if frame.len() != joints {
                return Err(MotionError::DimensionMismatch(format!(
                    "frame {t} has {} rotations, expected {joints}",
                    frame.len()
                )));
            }
            for (j, q) in frame.iter().enumerate() {
                let norm = q.coords.norm();
                if !((norm - 1.0).abs() <= QUAT_NORM_TOL) {
                    return Err(MotionError::InvariantViolation {
                        invariant: "unit quaternions",
                        detail: format!("frame {t} joint {j} has norm {norm}"),
                    });
                }
            }
        }
        if root_translation.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
            return Err(MotionError::InvariantViolation {
                invariant: "finite translation",
                detail: "root translation is not finite".into(),
            });
        }
        Ok(MotionSequence {
            fps,
            root_translation,
            rotations,
        })
    }

    /// Every frame in the rest pose.
    pub fn rest(joints: usize, frames: usize, fps: f64) -> Self {
        MotionSequence {
            fps,
            root_translation: vec![Vector3::zeros(); frames.max(1)],
            rotations: vec![vec![UnitQuaternion::identity(); joints]; frames.max(1)],
        }
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn joint_count(&self) -> usize {
        self.rotations[0].len()
    }

    pub fn root_translation(&self) -> &[Vector3<f64>] {
        &self.root_translation
    }

    pub fn rotations(&self) -> &[Vec<UnitQuaternion<f64>>] {
        &self.rotations
    }

    pub fn frame_rotations(&self, frame: usize) -> &[UnitQuaternion<f64>] {
        &self.rotations[frame]
    }

    pub fn frame_matrices(&self, frame: usize) -> Vec<Matrix3<f64>> {
        self.rotations[frame].iter().map(quat_to_matrix).collect()
    }

    pub fn to_6d(&self) -> Vec<Vec<Rotation6d>> {
        self.rotations
            .iter()
            .map(|f| f.iter().map(Rotation6d::from_quaternion).collect())
            .collect()
    }

    pub fn with_root_translation(&self, root_translation: Vec<Vector3<f64>>) -> Result<Self, MotionError> {
        MotionSequence::new(self.fps, root_translation, self.rotations.clone())
    }

    pub fn check_bound(&self, character: &SkinnedCharacter) -> Result<(), MotionError> {
        if self.joint_count() != character.joint_count() {
            return Err(MotionError::DimensionMismatch(format!(
                "motion has {} joints, character {} has {}",
                self.joint_count(),
                character.name(),
                character.joint_count()
            )));
        }
        Ok(())
    }
}
