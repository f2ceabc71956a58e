//! Retargeting objective: DMI consistency, reconstruction and end-effector
//! orientation terms, with an analytic gradient over 6D joint rotations.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::character::SkinnedCharacter;
use crate::dmi::{build_interaction_mask, DmiField, InteractionMask, SelectionMode, DEFAULT_PAIRS};
use crate::error::ObjectiveError;
use crate::kinematics::{blend, pose};
use crate::optimizer::OptimizerSettings;
use crate::rotation::{polar_backward, polar_rotation, GramSchmidt, Rotation6d};
use crate::scs::SensorSet;

/// Offsets shorter than this carry no usable direction.
pub const MIN_OFFSET_NORM: f64 = 1e-8;

/// Joint names (lower-case, separators stripped) used as end effectors when
/// none are configured.
pub const DEFAULT_END_EFFECTOR_NAMES: [&str; 5] = ["lefthand", "righthand", "leftfoot", "rightfoot", "head"];

#[derive(Debug, Clone, PartialEq)]
pub struct RetargetConfig {
    pub lambda_rec: f64,
    pub lambda_dmi: f64,
    pub lambda_ef: f64,
    /// Weight of the optional offset-length term; off by default.
    pub lambda_magnitude: f64,
    pub pairs: usize,
    /// Joint indices; `None` looks them up by name on the target character.
    pub end_effectors: Option<Vec<usize>>,
    pub selection: SelectionMode,
    pub optimizer: OptimizerSettings,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        RetargetConfig {
            lambda_rec: 1.0,
            lambda_dmi: 5.0,
            lambda_ef: 1.0,
            lambda_magnitude: 0.0,
            pairs: DEFAULT_PAIRS,
            end_effectors: None,
            selection: SelectionMode::PerFrame,
            optimizer: OptimizerSettings::default(),
        }
    }
}

impl RetargetConfig {
    pub(crate) fn validate(&self) -> Result<(), String> {
        for (name, w) in [
            ("lambda_rec", self.lambda_rec),
            ("lambda_dmi", self.lambda_dmi),
            ("lambda_ef", self.lambda_ef),
            ("lambda_magnitude", self.lambda_magnitude),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("{name} must be non-negative, got {w}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub dmi: f64,
    pub rec: f64,
    pub ef: f64,
    pub magnitude: f64,
    pub total: f64,
    pub valid_pair_count: usize,
    /// Set when no frame had a valid pair, so the DMI term is vacuous.
    pub no_valid_pairs: bool,
}

fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

pub fn default_end_effectors(character: &SkinnedCharacter) -> Vec<usize> {
    let mut out: Vec<usize> = character
        .joint_names()
        .iter()
        .enumerate()
        .filter(|(_, n)| DEFAULT_END_EFFECTOR_NAMES.contains(&normalize_name(n).as_str()))
        .map(|(i, _)| i)
        .collect();
    out.sort_unstable();
    out
}

/// `1 − cos(a, b)`, zero when either offset is too short to have a direction.
pub fn pair_cosine_loss(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    if a == b {
        return 0.0;
    }
    let (na, nb) = (a.norm(), b.norm());
    if na < MIN_OFFSET_NORM || nb < MIN_OFFSET_NORM {
        return 0.0;
    }
    // rounding can push the cosine just past ±1
    1.0 - (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Gradient of [`pair_cosine_loss`] with respect to `b`.
fn pair_cosine_grad(a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    if a == b {
        return Vector3::zeros();
    }
    let (na, nb) = (a.norm(), b.norm());
    if na < MIN_OFFSET_NORM || nb < MIN_OFFSET_NORM {
        return Vector3::zeros();
    }
    let cos = a.dot(b) / (na * nb);
    -(a / (na * nb) - b * (cos / (nb * nb)))
}

/// Mean over frames of the per-frame mean `1 − cos` over valid pairs.
/// Returns the loss and the total number of valid pairs.
pub fn dmi_loss(source: &DmiField, target: &DmiField) -> Result<(f64, usize), ObjectiveError> {
    if source.frame_count() != target.frame_count() {
        return Err(ObjectiveError::DimensionMismatch(format!(
            "source field has {} frames, target {}",
            source.frame_count(),
            target.frame_count()
        )));
    }
    let mut total = 0.0;
    let mut valid = 0;
    for (t, (fa, fb)) in source.frames.iter().zip(&target.frames).enumerate() {
        if fa.len() != fb.len() {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "frame {t}: {} source entries, {} target entries",
                fa.len(),
                fb.len()
            )));
        }
        let mut sum = 0.0;
        let mut count = 0;
        for (a, b) in fa.iter().zip(fb) {
            if (a.observer, a.target) != (b.observer, b.target) {
                return Err(ObjectiveError::DimensionMismatch(format!("frame {t}: fields are not entry-aligned")));
            }
            if a.valid && b.valid {
                sum += pair_cosine_loss(&a.d, &b.d);
                count += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
        }
        valid += count;
    }
    Ok((total / source.frame_count().max(1) as f64, valid))
}

fn check_shape(a: &[Vec<Rotation6d>], b: &[Vec<Rotation6d>]) -> Result<(), ObjectiveError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(ObjectiveError::DimensionMismatch(
            "rotation tensors differ in frame or joint count".into(),
        ));
    }
    Ok(())
}

/// Mean squared difference over all raw 6D components.
pub fn rec_loss(candidate: &[Vec<Rotation6d>], reference: &[Vec<Rotation6d>]) -> Result<f64, ObjectiveError> {
    check_shape(candidate, reference)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (fb, fa) in candidate.iter().zip(reference) {
        for (b, a) in fb.iter().zip(fa) {
            for k in 0..6 {
                sum += (b.0[k] - a.0[k]).powi(2);
            }
            n += 6;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

fn decode_frame(frame: &[Rotation6d]) -> Result<Vec<GramSchmidt>, ObjectiveError> {
    Ok(frame.iter().map(GramSchmidt::forward).collect::<Result<Vec<_>, _>>()?)
}

fn global_rotations(character: &SkinnedCharacter, frame: &[Rotation6d]) -> Result<Vec<Matrix3<f64>>, ObjectiveError> {
    let local: Vec<Matrix3<f64>> = decode_frame(frame)?.iter().map(GramSchmidt::matrix).collect();
    Ok(pose(character, &local, &Vector3::zeros()).rotations)
}

/// Mean Frobenius distance between global end-effector rotations.
pub fn end_effector_loss(
    character: &SkinnedCharacter,
    reference: &[Vec<Rotation6d>],
    candidate: &[Vec<Rotation6d>],
    end_effectors: &[usize],
) -> Result<f64, ObjectiveError> {
    if end_effectors.is_empty() {
        return Err(ObjectiveError::EmptyEndEffectorSet);
    }
    check_shape(reference, candidate)?;
    check_joints(character, end_effectors, reference)?;
    let mut sum = 0.0;
    for (fa, fb) in reference.iter().zip(candidate) {
        let ga = global_rotations(character, fa)?;
        let gb = global_rotations(character, fb)?;
        for &i in end_effectors {
            sum += (gb[i] - ga[i]).norm();
        }
    }
    Ok(sum / (reference.len() * end_effectors.len()) as f64)
}

fn check_joints(character: &SkinnedCharacter, joints: &[usize], q: &[Vec<Rotation6d>]) -> Result<(), ObjectiveError> {
    let n = character.joint_count();
    if let Some(&j) = joints.iter().find(|&&j| j >= n) {
        return Err(ObjectiveError::DimensionMismatch(format!("joint {j} out of range")));
    }
    if let Some(f) = q.iter().find(|f| f.len() != n) {
        return Err(ObjectiveError::DimensionMismatch(format!(
            "{} rotations per frame, character has {n} joints",
            f.len()
        )));
    }
    Ok(())
}

/// `[frame][joint][component]` derivatives of the total loss.
pub type Gradient = Vec<Vec<[f64; 6]>>;

/// Per-frame partial sums, reduced in frame order.
struct FrameTerms {
    dmi: f64,
    magnitude: f64,
    valid: usize,
    ef: f64,
    grad: Vec<[f64; 6]>,
}

/// The total objective for one retargeting problem, with the source field,
/// reference rotations and target sensors fixed.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    character: &'a SkinnedCharacter,
    sensors: &'a SensorSet,
    source_field: &'a DmiField,
    mask: InteractionMask,
    reference: Vec<Vec<Rotation6d>>,
    reference_globals: Vec<Vec<Matrix3<f64>>>,
    root_translation: Vec<Vector3<f64>>,
    end_effectors: Vec<usize>,
    lambda_rec: f64,
    lambda_dmi: f64,
    lambda_ef: f64,
    lambda_magnitude: f64,
}

impl<'a> Objective<'a> {
    /// `source_sensors` defines the source-side validity used to build the
    /// target mask; `sensors` are the target character's.
    pub fn new(
        config: &RetargetConfig,
        character: &'a SkinnedCharacter,
        sensors: &'a SensorSet,
        source_sensors: &SensorSet,
        source_field: &'a DmiField,
        reference: Vec<Vec<Rotation6d>>,
        root_translation: Vec<Vector3<f64>>,
    ) -> Result<Self, ObjectiveError> {
        let end_effectors = config
            .end_effectors
            .clone()
            .unwrap_or_else(|| default_end_effectors(character));
        if end_effectors.is_empty() {
            return Err(ObjectiveError::EmptyEndEffectorSet);
        }
        check_joints(character, &end_effectors, &reference)?;
        let frames = reference.len();
        if root_translation.len() != frames || source_field.frame_count() != frames {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "{frames} reference frames, {} root translations, {} field frames",
                root_translation.len(),
                source_field.frame_count()
            )));
        }
        if sensors.len() != source_field.coordinates.len() {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "{} target sensors, field has {}",
                sensors.len(),
                source_field.coordinates.len()
            )));
        }
        let n = character.joint_count();
        if let Some(i) = sensors.features.iter().position(|f| f.skin_weights.iter().any(|&(j, _)| j >= n)) {
            return Err(ObjectiveError::DimensionMismatch(format!("sensor {i} references a missing joint")));
        }
        let mask = build_interaction_mask(source_sensors, Some(sensors))?;
        let reference_globals = reference
            .iter()
            .map(|f| global_rotations(character, f))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Objective {
            character,
            sensors,
            source_field,
            mask,
            reference,
            reference_globals,
            root_translation,
            end_effectors,
            lambda_rec: config.lambda_rec,
            lambda_dmi: config.lambda_dmi,
            lambda_ef: config.lambda_ef,
            lambda_magnitude: config.lambda_magnitude,
        })
    }

    pub fn reference(&self) -> &[Vec<Rotation6d>] {
        &self.reference
    }

    pub fn end_effectors(&self) -> &[usize] {
        &self.end_effectors
    }

    pub fn evaluate(&self, params: &[Vec<Rotation6d>]) -> Result<LossBreakdown, ObjectiveError> {
        self.run(params, false).map(|(l, _)| l)
    }

    /// Loss and its gradient with respect to every raw 6D parameter.
    pub fn evaluate_with_gradient(
        &self,
        params: &[Vec<Rotation6d>],
    ) -> Result<(LossBreakdown, Gradient), ObjectiveError> {
        self.run(params, true)
    }

    fn run(&self, params: &[Vec<Rotation6d>], want_grad: bool) -> Result<(LossBreakdown, Gradient), ObjectiveError> {
        check_shape(params, &self.reference)?;
        let frames = params.len();
        let terms = (0..frames)
            .into_par_iter()
            .map(|t| self.frame(t, &params[t], want_grad))
            .collect::<Result<Vec<_>, _>>()?;

        let rec = rec_loss(params, &self.reference)?;
        let (mut dmi, mut magnitude, mut ef, mut valid) = (0.0, 0.0, 0.0, 0);
        for f in &terms {
            dmi += f.dmi;
            magnitude += f.magnitude;
            ef += f.ef;
            valid += f.valid;
        }
        let inv_t = 1.0 / frames as f64;
        dmi *= inv_t;
        magnitude *= inv_t;
        ef /= (frames * self.end_effectors.len()) as f64;
        let no_valid_pairs = valid == 0;
        if no_valid_pairs {
            warn!("no valid interaction pairs; DMI term is zero");
        }
        let total = self.lambda_rec * rec + self.lambda_dmi * dmi + self.lambda_ef * ef + self.lambda_magnitude * magnitude;
        let loss = LossBreakdown {
            dmi,
            rec,
            ef,
            magnitude,
            total,
            valid_pair_count: valid,
            no_valid_pairs,
        };

        let mut grad: Gradient = terms.into_iter().map(|f| f.grad).collect();
        if want_grad {
            let n_params: usize = params.iter().map(|f| f.len() * 6).sum();
            let rec_scale = if n_params == 0 {
                0.0
            } else {
                2.0 * self.lambda_rec / n_params as f64
            };
            for ((g_f, p_f), r_f) in grad.iter_mut().zip(params).zip(&self.reference) {
                for ((g, p), r) in g_f.iter_mut().zip(p_f).zip(r_f) {
                    for k in 0..6 {
                        g[k] += rec_scale * (p.0[k] - r.0[k]);
                    }
                }
            }
        }
        Ok((loss, grad))
    }

    fn frame(&self, t: usize, frame: &[Rotation6d], want_grad: bool) -> Result<FrameTerms, ObjectiveError> {
        let character = self.character;
        let frames = self.reference.len() as f64;
        let gs = decode_frame(frame)?;
        let local: Vec<Matrix3<f64>> = gs.iter().map(GramSchmidt::matrix).collect();
        let posed = pose(character, &local, &self.root_translation[t]);
        let transforms = posed.skinning_transforms(character);

        // posed sensors, keeping the polar factors for the backward pass
        let features = &self.sensors.features;
        let mut positions = vec![Vector3::zeros(); features.len()];
        let mut tangents = vec![Matrix3::zeros(); features.len()];
        let mut stretches = vec![Matrix3::zeros(); features.len()];
        for (i, f) in features.iter().enumerate() {
            if !self.mask.valid[i] {
                continue;
            }
            let g = blend(&transforms, &f.skin_weights);
            positions[i] = g.apply(&f.position);
            let (u, p) = polar_rotation(&(g.linear * f.tangent));
            tangents[i] = u;
            stretches[i] = p;
        }

        let entries = &self.source_field.frames[t];
        let valid = entries
            .iter()
            .filter(|e| e.valid && self.mask.contains(e.observer, e.target))
            .count();
        let inv_v = if valid > 0 { 1.0 / valid as f64 } else { 0.0 };
        let mut grad_pos = vec![Vector3::zeros(); if want_grad { features.len() } else { 0 }];
        let mut grad_tan = vec![Matrix3::zeros(); if want_grad { features.len() } else { 0 }];
        let (mut dmi, mut magnitude) = (0.0, 0.0);
        let dmi_scale = self.lambda_dmi * inv_v / frames;
        let mag_scale = self.lambda_magnitude * inv_v / frames;
        for e in entries {
            if !(e.valid && self.mask.contains(e.observer, e.target)) {
                continue;
            }
            let (i, j) = (e.observer, e.target);
            let delta = positions[j] - positions[i];
            let d = tangents[i].tr_mul(&delta);
            dmi += pair_cosine_loss(&e.d, &d);
            let (na, nb) = (e.d.norm(), d.norm());
            magnitude += (nb - na).powi(2);
            if want_grad {
                let mut gd = pair_cosine_grad(&e.d, &d) * dmi_scale;
                if self.lambda_magnitude != 0.0 && nb > 0.0 {
                    gd += d * (2.0 * (nb - na) / nb * mag_scale);
                }
                let gp = tangents[i] * gd;
                grad_pos[j] += gp;
                grad_pos[i] -= gp;
                grad_tan[i] += delta * gd.transpose();
            }
        }

        let mut ef = 0.0;
        let mut grad_global = vec![Matrix3::zeros(); if want_grad { character.joint_count() } else { 0 }];
        let ef_scale = self.lambda_ef / (frames * self.end_effectors.len() as f64);
        for &k in &self.end_effectors {
            let diff = posed.rotations[k] - self.reference_globals[t][k];
            let norm = diff.norm();
            ef += norm;
            if want_grad && norm > 0.0 {
                grad_global[k] += diff * (ef_scale / norm);
            }
        }

        let mut grad = Vec::new();
        if want_grad {
            let n = character.joint_count();
            let mut grad_x = vec![Vector3::zeros(); n];
            for (i, f) in features.iter().enumerate() {
                if !self.mask.valid[i] {
                    continue;
                }
                let gp = grad_pos[i];
                let gm = if grad_tan[i] == Matrix3::zeros() {
                    Matrix3::zeros()
                } else {
                    polar_backward(&tangents[i], &stretches[i], &grad_tan[i]) * f.tangent.transpose()
                };
                if gp == Vector3::zeros() && gm == Matrix3::zeros() {
                    continue;
                }
                for &(jn, w) in &f.skin_weights {
                    let rel = f.position - character.joints()[jn];
                    grad_global[jn] += (gp * rel.transpose() + gm) * w;
                    grad_x[jn] += gp * w;
                }
            }
            let mut grad_local = vec![Matrix3::zeros(); n];
            for &j in character.topological_order().iter().rev() {
                match character.parent(j) {
                    None => grad_local[j] = grad_global[j],
                    Some(p) => {
                        let ap = posed.rotations[p];
                        grad_local[j] = ap.tr_mul(&grad_global[j]);
                        let back = grad_global[j] * local[j].transpose() + grad_x[j] * character.rest_offset(j).transpose();
                        grad_global[p] += back;
                        let gx = grad_x[j];
                        grad_x[p] += gx;
                    }
                }
            }
            grad = gs.iter().zip(&grad_local).map(|(g, r)| g.backward(r)).collect();
        }

        Ok(FrameTerms {
            dmi: dmi * inv_v,
            magnitude: magnitude * inv_v,
            valid,
            ef,
            grad,
        })
    }
}
