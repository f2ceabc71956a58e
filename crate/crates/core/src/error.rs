use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("6D rotation columns are parallel or near zero")]
    DegenerateInput,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharacterError {
    #[error("character mesh has no vertices")]
    EmptyMesh,
    #[error("invariant violated ({invariant}): {detail}")]
    InvariantViolation {
        invariant: &'static str,
        detail: String,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl CharacterError {
    pub(crate) fn violation(invariant: &'static str, detail: impl Into<String>) -> Self {
        CharacterError::InvariantViolation {
            invariant,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("invariant violated ({invariant}): {detail}")]
    InvariantViolation {
        invariant: &'static str,
        detail: String,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScsError {
    #[error("bone {0} is out of range")]
    InvalidBone(usize),
    #[error("no faces are associated with bone {0}")]
    EmptySubmesh(usize),
    #[error("bone direction is parallel to the face normal")]
    DegenerateFrame,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pair count must be even and at least 2, got {0}")]
    InvalidPairCount(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("end-effector set is empty")]
    EmptyEndEffectorSet,
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Dmi(#[from] DmiError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetargetError {
    #[error("skeleton mismatch: {0}")]
    SkeletonMismatch(String),
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Dmi(#[from] DmiError),
    #[error(transparent)]
    Character(#[from] CharacterError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no valid forearm sensors")]
    NoForearmSensors,
    #[error("character has no arm vertices")]
    EmptyArmSet,
    #[error(transparent)]
    Character(#[from] CharacterError),
    #[error(transparent)]
    Dmi(#[from] DmiError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Character(#[from] CharacterError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: unsupported schema version {found}")]
    SchemaVersion { path: PathBuf, found: u32 },
    #[error("{path}: {source}")]
    Character {
        path: PathBuf,
        source: CharacterError,
    },
    #[error("{path}: {source}")]
    Motion { path: PathBuf, source: MotionError },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}
