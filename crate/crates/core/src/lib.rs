//! Geometry-aware motion retargeting for skinned characters.
//!
//! Surface sensors derived from the skeleton give a dense correspondence
//! between characters of any mesh topology. Tangent-space offsets between
//! sensor pairs over a motion form a dense interaction field; retargeting
//! optimizes the target character's joint rotations so its field matches the
//! source's, which preserves contacts and discourages interpenetration.

pub mod character;
pub mod dmi;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod mesh;
pub mod metrics;
pub mod motion;
pub mod objective;
pub mod optimizer;
pub mod rotation;
pub mod scs;
pub mod synthetic;

pub use character::{BodyPart, CharacterParts, SkinnedCharacter};
pub use dmi::{DmiEntry, DmiField, InteractionMask, SelectionMode, SensorTrajectory};
pub use error::*;
pub use motion::MotionSequence;
pub use objective::{LossBreakdown, RetargetConfig};
pub use optimizer::{retarget, OptimizerSettings, RetargetResult, Termination};
pub use rotation::Rotation6d;
pub use scs::{SemanticCoordinate, SensorFeature, SensorSet};
