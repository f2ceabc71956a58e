//! Evaluation metrics: height-normalized joint error, contact error,
//! arm–body penetration and a jitter trace.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::character::{BodyPart, SkinnedCharacter, UP};
use crate::dmi::sensor_forward_kinematics;
use crate::error::MetricsError;
use crate::kinematics::{forward_kinematics, pose, skin_vertices};
use crate::mesh::winding_number;
use crate::motion::MotionSequence;
use crate::scs::SensorSet;

/// Winding numbers above this count as inside.
pub const INSIDE_THRESHOLD: f64 = 0.5;

/// World joint positions, `[frame][joint]`.
pub fn joint_trajectories(character: &SkinnedCharacter, motion: &MotionSequence) -> Vec<Vec<Vector3<f64>>> {
    (0..motion.frame_count())
        .into_par_iter()
        .map(|t| pose(character, &motion.frame_matrices(t), &motion.root_translation()[t]).positions)
        .collect()
}

fn check_motion(character: &SkinnedCharacter, motion: &MotionSequence) -> Result<(), MetricsError> {
    motion
        .check_bound(character)
        .map_err(|e| MetricsError::DimensionMismatch(e.to_string()))
}

/// `(global, local)` mean squared joint distance divided by the character's
/// height. Local positions are taken relative to the root joint.
pub fn joint_mse(
    character: &SkinnedCharacter,
    ground_truth: &MotionSequence,
    candidate: &MotionSequence,
) -> Result<(f64, f64), MetricsError> {
    check_motion(character, ground_truth)?;
    check_motion(character, candidate)?;
    if ground_truth.frame_count() != candidate.frame_count() {
        return Err(MetricsError::DimensionMismatch(format!(
            "ground truth has {} frames, candidate {}",
            ground_truth.frame_count(),
            candidate.frame_count()
        )));
    }
    let h = character.height()?;
    let root = character.root();
    let gt = joint_trajectories(character, ground_truth);
    let cand = joint_trajectories(character, candidate);
    let (mut global, mut local) = (0.0, 0.0);
    for (fg, fc) in gt.iter().zip(&cand) {
        for (g, c) in fg.iter().zip(fc) {
            global += (g - c).norm_squared();
            local += ((g - fg[root]) - (c - fc[root])).norm_squared();
        }
    }
    let n = (gt.len() * character.joint_count()) as f64;
    Ok((global / n / h, local / n / h))
}

/// Mean distance of valid forearm sensors from their bone axis.
pub fn arm_radius(character: &SkinnedCharacter, sensors: &SensorSet) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for f in sensors.features.iter().filter(|f| f.valid) {
        let bone = f.coordinate.bone;
        if bone >= character.bone_count() || !character.is_forearm_bone(bone) {
            continue;
        }
        let a = character.joints()[character.bone_owner(bone)];
        let b = character.joints()[character.bone_child(bone)];
        let axis = (b - a).normalize();
        let rel = f.position - a;
        sum += (rel - axis * axis.dot(&rel)).norm();
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::NoForearmSensors);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub error: f64,
    pub contact_pairs: usize,
    /// Per-frame mean over that frame's contact pairs (0 without contacts).
    pub per_frame: Vec<f64>,
    pub source_arm_radius: f64,
    pub target_arm_radius: f64,
}

/// Penalty for one contact pair given radius-normalized source and target
/// distances: only separation beyond the source's counts.
pub fn contact_pair_error(source_normalized: f64, target_normalized: f64) -> f64 {
    if target_normalized > source_normalized {
        (target_normalized - source_normalized).powi(2)
    } else {
        0.0
    }
}

/// Hand–body sensor pairs closer than the source arm diameter are contacts;
/// each one accrues the squared excess of the target's radius-normalized
/// distance over the source's.
pub fn contact_error(
    source: &SkinnedCharacter,
    source_sensors: &SensorSet,
    source_motion: &MotionSequence,
    target: &SkinnedCharacter,
    target_sensors: &SensorSet,
    candidate: &MotionSequence,
) -> Result<ContactReport, MetricsError> {
    if source_sensors.len() != target_sensors.len() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{} source sensors, {} target sensors",
            source_sensors.len(),
            target_sensors.len()
        )));
    }
    if source_motion.frame_count() != candidate.frame_count() {
        return Err(MetricsError::DimensionMismatch(format!(
            "source motion has {} frames, candidate {}",
            source_motion.frame_count(),
            candidate.frame_count()
        )));
    }
    if !source.same_topology(target) {
        return Err(MetricsError::DimensionMismatch("skeletons differ".into()));
    }
    let ra = arm_radius(source, source_sensors)?;
    let rb = arm_radius(target, target_sensors)?;
    let d_src = 2.0 * ra;
    let traj_a = sensor_forward_kinematics(source, source_sensors, source_motion)?;
    let traj_b = sensor_forward_kinematics(target, target_sensors, candidate)?;

    let both_valid = |i: usize| source_sensors.is_valid(i) && target_sensors.is_valid(i);
    let hands: Vec<usize> = (0..source_sensors.len())
        .filter(|&i| both_valid(i))
        .filter(|&i| {
            let b = source_sensors.features[i].coordinate.bone;
            b < source.bone_count() && source.is_hand_side_bone(b)
        })
        .collect();
    let body: Vec<usize> = (0..source_sensors.len())
        .filter(|&i| both_valid(i) && matches!(source_sensors.body_parts[i], BodyPart::Torso | BodyPart::Head))
        .collect();

    let per_frame_sums: Vec<(f64, usize)> = (0..traj_a.frame_count())
        .into_par_iter()
        .map(|t| {
            let (pa, pb) = (&traj_a.positions[t], &traj_b.positions[t]);
            let mut sum = 0.0;
            let mut count = 0;
            for &h in &hands {
                for &b in &body {
                    let da = (pa[h] - pa[b]).norm();
                    if da >= d_src {
                        continue;
                    }
                    count += 1;
                    sum += contact_pair_error(da / ra, (pb[h] - pb[b]).norm() / rb);
                }
            }
            (sum, count)
        })
        .collect();
    let (total, pairs) = per_frame_sums
        .iter()
        .fold((0.0, 0usize), |(s, c), &(fs, fc)| (s + fs, c + fc));
    Ok(ContactReport {
        error: if pairs == 0 { 0.0 } else { total / pairs as f64 },
        contact_pairs: pairs,
        per_frame: per_frame_sums
            .iter()
            .map(|&(s, c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect(),
        source_arm_radius: ra,
        target_arm_radius: rb,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetrationReport {
    pub per_frame: Vec<f64>,
    pub mean: f64,
    pub arm_vertices: usize,
}

/// Vertices whose dominant joint lies in an arm, and faces with no such
/// vertex.
pub fn arm_body_split(character: &SkinnedCharacter) -> (Vec<usize>, Vec<[usize; 3]>) {
    let is_arm: Vec<bool> = (0..character.vertices().len())
        .map(|v| character.body_part(character.dominant_joint(v)).is_arm())
        .collect();
    let arms = (0..is_arm.len()).filter(|&v| is_arm[v]).collect();
    let body = character
        .faces()
        .iter()
        .filter(|f| f.iter().all(|&v| !is_arm[v]))
        .copied()
        .collect();
    (arms, body)
}

/// Fraction of arm vertices inside the posed body mesh, per frame.
pub fn penetration_ratio(character: &SkinnedCharacter, motion: &MotionSequence) -> Result<PenetrationReport, MetricsError> {
    check_motion(character, motion)?;
    let (arms, body) = arm_body_split(character);
    if arms.is_empty() {
        return Err(MetricsError::EmptyArmSet);
    }
    let per_frame: Vec<f64> = (0..motion.frame_count())
        .into_par_iter()
        .map(|t| {
            let g = forward_kinematics(character, &motion.frame_matrices(t), &motion.root_translation()[t]);
            let posed = skin_vertices(character, &g);
            let inside = arms
                .iter()
                .filter(|&&v| winding_number(&posed, &body, &posed[v]) > INSIDE_THRESHOLD)
                .count();
            inside as f64 / arms.len() as f64
        })
        .collect();
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(PenetrationReport {
        per_frame,
        mean,
        arm_vertices: arms.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterTrace {
    pub heights: Vec<f64>,
    pub max_delta: f64,
    /// First frame `t` where `|h[t+1] − h[t]|` is largest.
    pub max_delta_frame: usize,
}

/// World height of one joint over time.
pub fn jitter_trace(character: &SkinnedCharacter, motion: &MotionSequence, joint: usize) -> Result<JitterTrace, MetricsError> {
    check_motion(character, motion)?;
    if joint >= character.joint_count() {
        return Err(MetricsError::DimensionMismatch(format!("joint {joint} out of range")));
    }
    let heights: Vec<f64> = joint_trajectories(character, motion)
        .iter()
        .map(|f| f[joint].dot(&UP))
        .collect();
    let (mut max_delta, mut max_delta_frame) = (0.0, 0);
    for (t, w) in heights.windows(2).enumerate() {
        let d = (w[1] - w[0]).abs();
        if d > max_delta {
            max_delta = d;
            max_delta_frame = t;
        }
    }
    Ok(JitterTrace {
        heights,
        max_delta,
        max_delta_frame,
    })
}

/// Full metric suite for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Present when a ground-truth motion was supplied.
    pub mse_global: Option<f64>,
    pub mse_local: Option<f64>,
    pub contact: ContactReport,
    pub penetration: PenetrationReport,
}

impl MetricReport {
    pub fn contact_error(&self) -> f64 {
        self.contact.error
    }

    pub fn penetration_ratio(&self) -> f64 {
        self.penetration.mean
    }
}

pub fn evaluate(
    source: &SkinnedCharacter,
    source_sensors: &SensorSet,
    source_motion: &MotionSequence,
    target: &SkinnedCharacter,
    target_sensors: &SensorSet,
    candidate: &MotionSequence,
    ground_truth: Option<&MotionSequence>,
) -> Result<MetricReport, MetricsError> {
    let (mse_global, mse_local) = match ground_truth {
        Some(gt) => {
            let (g, l) = joint_mse(target, gt, candidate)?;
            (Some(g), Some(l))
        }
        None => (None, None),
    };
    Ok(MetricReport {
        mse_global,
        mse_local,
        contact: contact_error(source, source_sensors, source_motion, target, target_sensors, candidate)?,
        penetration: penetration_ratio(target, candidate)?,
    })
}
