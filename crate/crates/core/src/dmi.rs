//! Sensor forward kinematics and the dense mesh interaction (DMI) field.
//!
//! For every frame, each observer sensor on a limb records the offsets of a
//! handful of sensors on the body parts it interacts with, expressed in the
//! observer's tangent frame. Only the nearest and furthest targets of each
//! part are kept.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::character::{BodyPart, SkinnedCharacter};
use crate::error::DmiError;
use crate::kinematics::{blend, forward_kinematics};
use crate::motion::MotionSequence;
use crate::rotation::polar_rotation;
use crate::scs::{SemanticCoordinate, SensorSet};

/// Pairs kept per observer and target body part unless configured otherwise.
pub const DEFAULT_PAIRS: usize = 20;

/// Distances are compared at this resolution (metres) when ranking targets,
/// so rounding noise cannot reorder mirror-symmetric sensors.
const DISTANCE_QUANTUM: f64 = 1e-9;

/// Posed sensor positions and tangent frames over a motion.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrajectory {
    pub coordinates: Vec<SemanticCoordinate>,
    /// `[frame][sensor]`
    pub positions: Vec<Vec<Vector3<f64>>>,
    /// `[frame][sensor]`, orthonormal for valid sensors, zero otherwise.
    pub tangents: Vec<Vec<Matrix3<f64>>>,
    pub validity: Vec<bool>,
}

impl SensorTrajectory {
    pub fn frame_count(&self) -> usize {
        self.positions.len()
    }

    pub fn sensor_count(&self) -> usize {
        self.validity.len()
    }
}

fn check_sensor_weights(character: &SkinnedCharacter, sensors: &SensorSet) -> Result<(), DmiError> {
    let n = character.joint_count();
    for (i, f) in sensors.features.iter().enumerate() {
        if let Some(&(j, _)) = f.skin_weights.iter().find(|(j, _)| *j >= n) {
            return Err(DmiError::DimensionMismatch(format!(
                "sensor {i} is skinned to joint {j}, character has {n} joints"
            )));
        }
    }
    Ok(())
}

/// Posed sensors for one frame given local joint rotations.
pub fn pose_sensors(
    character: &SkinnedCharacter,
    sensors: &SensorSet,
    local: &[Matrix3<f64>],
    root_translation: &Vector3<f64>,
) -> (Vec<Vector3<f64>>, Vec<Matrix3<f64>>) {
    let transforms = forward_kinematics(character, local, root_translation);
    sensors
        .features
        .iter()
        .map(|f| {
            if !f.valid {
                return (Vector3::zeros(), Matrix3::zeros());
            }
            let g = blend(&transforms, &f.skin_weights);
            (g.apply(&f.position), polar_rotation(&(g.linear * f.tangent)).0)
        })
        .unzip()
}

/// Skins every sensor through every frame of `motion`.
pub fn sensor_forward_kinematics(
    character: &SkinnedCharacter,
    sensors: &SensorSet,
    motion: &MotionSequence,
) -> Result<SensorTrajectory, DmiError> {
    check_sensor_weights(character, sensors)?;
    motion
        .check_bound(character)
        .map_err(|e| DmiError::DimensionMismatch(e.to_string()))?;
    let (positions, tangents) = (0..motion.frame_count())
        .into_par_iter()
        .map(|t| {
            pose_sensors(
                character,
                sensors,
                &motion.frame_matrices(t),
                &motion.root_translation()[t],
            )
        })
        .unzip();
    Ok(SensorTrajectory {
        coordinates: sensors.coordinates(),
        positions,
        tangents,
        validity: sensors.features.iter().map(|f| f.valid).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetGroup {
    pub part: BodyPart,
    /// Ascending sensor indices.
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observer {
    pub sensor: usize,
    pub groups: Vec<TargetGroup>,
}

/// Admissible (observer, target) sensor pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMask {
    pub observers: Vec<Observer>,
    pub valid: Vec<bool>,
    pub body_parts: Vec<BodyPart>,
}

impl InteractionMask {
    pub fn contains(&self, observer: usize, target: usize) -> bool {
        observer != target
            && self.valid.get(observer).copied().unwrap_or(false)
            && self.valid.get(target).copied().unwrap_or(false)
            && self.body_parts[observer]
                .interaction_targets()
                .contains(&self.body_parts[target])
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.observers
            .iter()
            .flat_map(|o| o.groups.iter().flat_map(move |g| g.targets.iter().map(move |&j| (o.sensor, j))))
    }

    pub fn pair_count(&self) -> usize {
        self.observers
            .iter()
            .map(|o| o.groups.iter().map(|g| g.targets.len()).sum::<usize>())
            .sum()
    }
}

/// Builds the source mask, or with `target` the target mask that also drops
/// sensors invalid on the target character.
pub fn build_interaction_mask(source: &SensorSet, target: Option<&SensorSet>) -> Result<InteractionMask, DmiError> {
    if let Some(t) = target {
        if t.len() != source.len() {
            return Err(DmiError::DimensionMismatch(format!(
                "source has {} sensors, target {}",
                source.len(),
                t.len()
            )));
        }
    }
    let valid: Vec<bool> = (0..source.len())
        .map(|i| source.is_valid(i) && target.is_none_or(|t| t.is_valid(i)))
        .collect();
    let parts = source.body_parts.clone();
    let observers = (0..source.len())
        .filter(|&i| valid[i])
        .filter_map(|i| {
            let groups: Vec<TargetGroup> = parts[i]
                .interaction_targets()
                .iter()
                .map(|&part| TargetGroup {
                    part,
                    targets: (0..source.len())
                        .filter(|&j| j != i && valid[j] && parts[j] == part)
                        .collect(),
                })
                .filter(|g| !g.targets.is_empty())
                .collect();
            (!groups.is_empty()).then_some(Observer { sensor: i, groups })
        })
        .collect();
    Ok(InteractionMask {
        observers,
        valid,
        body_parts: parts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionMode {
    /// Rank targets by distance at every frame.
    #[default]
    PerFrame,
    /// Rank once using the first frame and reuse the pairs for all frames.
    Static,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedPairs {
    pub observer: usize,
    /// Targets over all groups: per group the nearest (closest first), then
    /// the furthest (furthest first).
    pub targets: Vec<usize>,
}

fn check_pair_count(pairs: usize) -> Result<(), DmiError> {
    if pairs < 2 || !pairs.is_multiple_of(2) {
        return Err(DmiError::InvalidPairCount(pairs));
    }
    Ok(())
}

/// Picks `pairs / 2` nearest and `pairs / 2` furthest targets per observer
/// and group; groups with at most `pairs` members are taken whole.
pub fn select_pairs(
    positions: &[Vector3<f64>],
    mask: &InteractionMask,
    pairs: usize,
) -> Result<Vec<SelectedPairs>, DmiError> {
    check_pair_count(pairs)?;
    let half = pairs / 2;
    Ok(mask
        .observers
        .iter()
        .map(|o| {
            let origin = positions[o.sensor];
            let mut targets = Vec::new();
            for g in &o.groups {
                let mut ranked: Vec<(i64, usize)> = g
                    .targets
                    .iter()
                    .map(|&j| (((positions[j] - origin).norm() / DISTANCE_QUANTUM).round() as i64, j))
                    .collect();
                ranked.sort_unstable();
                if ranked.len() <= pairs {
                    targets.extend(ranked.iter().map(|&(_, j)| j));
                } else {
                    targets.extend(ranked[..half].iter().map(|&(_, j)| j));
                    // furthest first; among equal distances the lower index wins
                    ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                    targets.extend(ranked[..half].iter().map(|&(_, j)| j));
                }
            }
            SelectedPairs {
                observer: o.sensor,
                targets,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmiEntry {
    pub observer: usize,
    pub target: usize,
    /// Target offset in the observer's tangent frame.
    pub d: Vector3<f64>,
    /// Whether the pair is admissible on the evaluated character.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmiField {
    pub pairs: usize,
    pub coordinates: Vec<SemanticCoordinate>,
    /// `[frame]` entries, grouped by observer in ascending sensor order.
    pub frames: Vec<Vec<DmiEntry>>,
}

impl DmiField {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn entry_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// `(d, b_i, b_j, l_i, l_j, φ_i, φ_j)` for an entry.
    pub fn features(&self, entry: &DmiEntry) -> [f64; 9] {
        let ci = self.coordinates[entry.observer];
        let cj = self.coordinates[entry.target];
        [
            entry.d.x,
            entry.d.y,
            entry.d.z,
            ci.bone as f64,
            cj.bone as f64,
            ci.l,
            cj.l,
            ci.phi,
            cj.phi,
        ]
    }
}

/// `tᵀ (p_target − p_observer)`; tangent frames are orthonormal.
pub fn relative_offset(
    observer_pos: &Vector3<f64>,
    observer_tangent: &Matrix3<f64>,
    target_pos: &Vector3<f64>,
) -> Vector3<f64> {
    observer_tangent.tr_mul(&(target_pos - observer_pos))
}

pub fn compute_dmi_field(
    trajectory: &SensorTrajectory,
    mask: &InteractionMask,
    pairs: usize,
    mode: SelectionMode,
) -> Result<DmiField, DmiError> {
    check_pair_count(pairs)?;
    if mask.valid.len() != trajectory.sensor_count() {
        return Err(DmiError::DimensionMismatch(format!(
            "mask covers {} sensors, trajectory {}",
            mask.valid.len(),
            trajectory.sensor_count()
        )));
    }
    let fixed = match mode {
        SelectionMode::Static => Some(select_pairs(&trajectory.positions[0], mask, pairs)?),
        SelectionMode::PerFrame => None,
    };
    let frames = (0..trajectory.frame_count())
        .into_par_iter()
        .map(|t| {
            let pos = &trajectory.positions[t];
            let tan = &trajectory.tangents[t];
            let selected = match &fixed {
                Some(s) => s.clone(),
                None => select_pairs(pos, mask, pairs)?,
            };
            Ok(selected
                .iter()
                .flat_map(|s| {
                    s.targets.iter().map(move |&j| DmiEntry {
                        observer: s.observer,
                        target: j,
                        d: relative_offset(&pos[s.observer], &tan[s.observer], &pos[j]),
                        valid: true,
                    })
                })
                .collect())
        })
        .collect::<Result<Vec<_>, DmiError>>()?;
    Ok(DmiField {
        pairs,
        coordinates: trajectory.coordinates.clone(),
        frames,
    })
}

/// Evaluates the source field's pairs on another character's trajectory.
///
/// Output entries align one-to-one with `source`; pairs outside `target_mask`
/// are flagged invalid and carry a zero offset.
pub fn evaluate_target_dmi(
    trajectory: &SensorTrajectory,
    source: &DmiField,
    target_mask: &InteractionMask,
) -> Result<DmiField, DmiError> {
    if trajectory.frame_count() != source.frame_count() {
        return Err(DmiError::DimensionMismatch(format!(
            "trajectory has {} frames, field {}",
            trajectory.frame_count(),
            source.frame_count()
        )));
    }
    if trajectory.sensor_count() != source.coordinates.len() {
        return Err(DmiError::DimensionMismatch(format!(
            "trajectory has {} sensors, field {}",
            trajectory.sensor_count(),
            source.coordinates.len()
        )));
    }
    let frames = source
        .frames
        .par_iter()
        .enumerate()
        .map(|(t, entries)| {
            let pos = &trajectory.positions[t];
            let tan = &trajectory.tangents[t];
            entries
                .iter()
                .map(|e| {
                    let valid = e.valid && target_mask.contains(e.observer, e.target);
                    DmiEntry {
                        d: if valid {
                            relative_offset(&pos[e.observer], &tan[e.observer], &pos[e.target])
                        } else {
                            Vector3::zeros()
                        },
                        valid,
                        ..*e
                    }
                })
                .collect()
        })
        .collect();
    Ok(DmiField {
        pairs: source.pairs,
        coordinates: source.coordinates.clone(),
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::axis_angle;
    use crate::scs::SensorFeature;
    use std::f64::consts::FRAC_PI_2;

    fn sensor_set(parts: &[BodyPart], valid: &[bool]) -> SensorSet {
        SensorSet {
            features: parts
                .iter()
                .zip(valid)
                .enumerate()
                .map(|(i, (_, &v))| {
                    let mut f = SensorFeature::invalid(SemanticCoordinate::new(i, 0.0, 0.0));
                    if v {
                        f.valid = true;
                        f.tangent = Matrix3::identity();
                        f.skin_weights = vec![(0, 1.0)];
                    }
                    f
                })
                .collect(),
            body_parts: parts.to_vec(),
        }
    }

    #[test]
    fn torso_only_has_no_observers() {
        let s = sensor_set(&[BodyPart::Torso; 4], &[true; 4]);
        assert!(build_interaction_mask(&s, None).unwrap().observers.is_empty());
    }

    #[test]
    fn left_arm_targets_follow_group_rules() {
        use BodyPart::*;
        let parts = [LeftArm, LeftArm, RightArm, Head, Torso, LeftLeg, RightLeg];
        let s = sensor_set(&parts, &[true; 7]);
        let m = build_interaction_mask(&s, None).unwrap();
        assert!(!m.contains(0, 1));
        assert!(!m.contains(0, 0));
        assert!(m.contains(0, 2) && m.contains(0, 3) && m.contains(0, 4));
        assert!(!m.contains(0, 5) && !m.contains(0, 6));
        assert!(m.contains(5, 6) && m.contains(5, 4) && !m.contains(5, 0));
        assert!(!m.contains(4, 0) && !m.contains(3, 0));
        for (k, j) in m.pairs() {
            assert!(m.contains(k, j));
        }
    }

    #[test]
    fn target_mask_drops_invalid_target_sensors() {
        use BodyPart::*;
        let parts = [LeftArm, Head, Head, Torso];
        let src = sensor_set(&parts, &[true; 4]);
        let tgt = sensor_set(&parts, &[true, false, true, true]);
        let m = build_interaction_mask(&src, Some(&tgt)).unwrap();
        assert!(!m.contains(0, 1));
        assert!(m.contains(0, 2));
        assert!(m.pairs().all(|(_, j)| j != 1));
    }

    fn line_mask(n_targets: usize) -> (Vec<Vector3<f64>>, InteractionMask) {
        let mut parts = vec![BodyPart::LeftArm];
        parts.extend(std::iter::repeat_n(BodyPart::Torso, n_targets));
        let s = sensor_set(&parts, &vec![true; parts.len()]);
        let m = build_interaction_mask(&s, None).unwrap();
        let pos = (0..parts.len()).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        (pos, m)
    }

    #[test]
    fn two_pairs_pick_min_and_max() {
        let (pos, m) = line_mask(3);
        let sel = select_pairs(&pos, &m, 2).unwrap();
        assert_eq!(sel[0].targets, vec![1, 3]);
    }

    #[test]
    fn small_group_is_taken_whole() {
        let (mut pos, m) = line_mask(4);
        pos.swap(1, 4);
        let mut got = select_pairs(&pos, &m, 4).unwrap()[0].targets.clone();
        got.sort();
        assert_eq!(got, vec![1, 2, 3, 4]);
    }

    #[test]
    fn odd_pair_count_rejected() {
        let (pos, m) = line_mask(3);
        assert_eq!(select_pairs(&pos, &m, 3), Err(DmiError::InvalidPairCount(3)));
        assert_eq!(select_pairs(&pos, &m, 0), Err(DmiError::InvalidPairCount(0)));
    }

    #[test]
    fn equal_distances_prefer_lower_index() {
        let (mut pos, m) = line_mask(5);
        // targets 1..=5 at distances 1, 1, 2, 2, 1.5
        pos[1] = Vector3::new(1.0, 0.0, 0.0);
        pos[2] = Vector3::new(-1.0, 0.0, 0.0);
        pos[3] = Vector3::new(2.0, 0.0, 0.0);
        pos[4] = Vector3::new(-2.0, 0.0, 0.0);
        pos[5] = Vector3::new(0.0, 1.5, 0.0);
        let sel = select_pairs(&pos, &m, 2).unwrap();
        assert_eq!(sel[0].targets, vec![1, 3]);
    }

    #[test]
    fn offsets_in_observer_frame() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        let q = p + Vector3::new(0.0, 0.0, 0.3);
        assert!((relative_offset(&p, &Matrix3::identity(), &q) - Vector3::new(0.0, 0.0, 0.3)).norm() < 1e-15);
        let rz = axis_angle(Vector3::z(), FRAC_PI_2);
        let d = relative_offset(&p, &rz, &q);
        assert!((d - Vector3::new(0.0, 0.0, 0.3)).norm() < 1e-15);
        let d = relative_offset(&p, &rz, &(p + Vector3::x()));
        assert!((d - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }
}
