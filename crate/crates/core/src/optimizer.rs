//! Per-sequence retargeting by direct minimization of the objective over the
//! target's 6D joint rotations.

use log::{debug, info};
use nalgebra::Vector3;

use crate::character::SkinnedCharacter;
use crate::dmi::{build_interaction_mask, compute_dmi_field, sensor_forward_kinematics, DmiField};
use crate::error::{ObjectiveError, RetargetError};
use crate::motion::MotionSequence;
use crate::objective::{Gradient, LossBreakdown, Objective, RetargetConfig};
use crate::rotation::Rotation6d;
use crate::scs::{ScsConfig, SemanticCoordinate, SensorSet};

/// A total at or below this is treated as an exact optimum.
const ABSOLUTE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Relative change of the total over `convergence_window` iterations
    /// below which the run stops.
    pub tolerance: f64,
    pub convergence_window: usize,
    /// Recorded for reproducibility; the procedure itself draws no random
    /// numbers.
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            max_iterations: 300,
            step_size: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            tolerance: 1e-6,
            convergence_window: 10,
            seed: 0,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<(), RetargetError> {
        let bad = |m: String| Err(RetargetError::InvalidSettings(m));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("moment decay rates must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) || !(self.tolerance >= 0.0) || self.convergence_window == 0 {
            return bad("epsilon, tolerance and window must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The objective became non-finite; the best finite iterate is returned.
    NonFiniteLoss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetargetResult {
    pub motion: MotionSequence,
    /// One record per objective evaluation, all finite.
    pub loss_trace: Vec<LossBreakdown>,
    pub best_iteration: usize,
    pub iterations: usize,
    pub termination: Termination,
}

impl RetargetResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn best_loss(&self) -> &LossBreakdown {
        &self.loss_trace[self.best_iteration]
    }
}

/// Adam state over a `[frame][joint]` tensor of 6D parameters.
struct Adam {
    m: Gradient,
    v: Gradient,
    step: i32,
}

impl Adam {
    fn new(shape: &[Vec<Rotation6d>]) -> Self {
        let zeros: Gradient = shape.iter().map(|f| vec![[0.0; 6]; f.len()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn apply(&mut self, s: &OptimizerSettings, params: &mut [Vec<Rotation6d>], grad: &[Vec<[f64; 6]>]) {
        self.step += 1;
        let c1 = 1.0 - s.beta1.powi(self.step);
        let c2 = 1.0 - s.beta2.powi(self.step);
        for (t, frame) in params.iter_mut().enumerate() {
            for (j, p) in frame.iter_mut().enumerate() {
                for k in 0..6 {
                    let g = grad[t][j][k];
                    let m = &mut self.m[t][j][k];
                    let v = &mut self.v[t][j][k];
                    *m = s.beta1 * *m + (1.0 - s.beta1) * g;
                    *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
                    p.0[k] -= s.step_size * (*m / c1) / ((*v / c2).sqrt() + s.epsilon);
                }
            }
        }
    }
}

fn check_skeletons(a: &SkinnedCharacter, b: &SkinnedCharacter) -> Result<(), RetargetError> {
    if a.parents() != b.parents() {
        return Err(RetargetError::SkeletonMismatch(format!(
            "{} and {} have different joint hierarchies",
            a.name(),
            b.name()
        )));
    }
    Ok(())
}

/// Builds the source DMI field for `motion` on `character`.
pub fn source_field(
    character: &SkinnedCharacter,
    sensors: &SensorSet,
    motion: &MotionSequence,
    config: &RetargetConfig,
) -> Result<DmiField, RetargetError> {
    let trajectory = sensor_forward_kinematics(character, sensors, motion)?;
    let mask = build_interaction_mask(sensors, None)?;
    Ok(compute_dmi_field(&trajectory, &mask, config.pairs, config.selection)?)
}

/// Derives sensors on both characters over `coordinates`, then retargets.
pub fn retarget(
    source: &SkinnedCharacter,
    target: &SkinnedCharacter,
    motion: &MotionSequence,
    coordinates: &[SemanticCoordinate],
    config: &RetargetConfig,
) -> Result<RetargetResult, RetargetError> {
    check_skeletons(source, target)?;
    let scs = ScsConfig::default();
    let source_sensors = SensorSet::derive(source, coordinates, &scs);
    let target_sensors = SensorSet::derive(target, coordinates, &scs);
    retarget_with_sensors(source, &source_sensors, target, &target_sensors, motion, config)
}

pub fn retarget_with_sensors(
    source: &SkinnedCharacter,
    source_sensors: &SensorSet,
    target: &SkinnedCharacter,
    target_sensors: &SensorSet,
    motion: &MotionSequence,
    config: &RetargetConfig,
) -> Result<RetargetResult, RetargetError> {
    check_skeletons(source, target)?;
    config.validate().map_err(RetargetError::InvalidSettings)?;
    let settings = &config.optimizer;
    settings.validate()?;
    motion
        .check_bound(source)
        .map_err(|e| RetargetError::SkeletonMismatch(e.to_string()))?;
    if source_sensors.coordinates() != target_sensors.coordinates() {
        return Err(RetargetError::SkeletonMismatch(
            "source and target sensors use different coordinate grids".into(),
        ));
    }

    let field = source_field(source, source_sensors, motion, config)?;
    let ratio = target.height()? / source.height()?;
    let root_translation: Vec<Vector3<f64>> = motion.root_translation().iter().map(|x| x * ratio).collect();
    let reference = motion.to_6d();
    let objective = Objective::new(
        config,
        target,
        target_sensors,
        source_sensors,
        &field,
        reference.clone(),
        root_translation.clone(),
    )?;

    let mut params = reference;
    let mut adam = Adam::new(&params);
    let mut trace: Vec<LossBreakdown> = Vec::new();
    let mut best: Option<(usize, Vec<Vec<Rotation6d>>)> = None;
    let mut termination = Termination::MaxIterations;

    for it in 0..settings.max_iterations {
        let (loss, grad) = match objective.evaluate_with_gradient(&params) {
            Ok(r) => r,
            Err(ObjectiveError::Rotation(_)) => {
                termination = Termination::NonFiniteLoss;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let grad_finite = grad.iter().flatten().flatten().all(|g| g.is_finite());
        if !loss.total.is_finite() || !grad_finite {
            termination = Termination::NonFiniteLoss;
            break;
        }
        debug!(
            "iter {it}: total {:.6e} dmi {:.6e} rec {:.6e} ef {:.6e}",
            loss.total, loss.dmi, loss.rec, loss.ef
        );
        trace.push(loss);
        if best.as_ref().is_none_or(|(b, _)| loss.total < trace[*b].total) {
            best = Some((it, params.clone()));
        }
        if loss.total <= ABSOLUTE_TOLERANCE {
            termination = Termination::Converged;
            break;
        }
        let w = settings.convergence_window;
        if it >= w {
            let before = trace[it - w].total;
            if (before - loss.total).abs() <= settings.tolerance * before.abs() {
                termination = Termination::Converged;
                break;
            }
        }
        adam.apply(settings, &mut params, &grad);
    }

    let Some((best_iteration, best_params)) = best else {
        return Err(RetargetError::Objective(ObjectiveError::DimensionMismatch(
            "objective was not finite at the initial motion".into(),
        )));
    };
    info!(
        "retarget finished after {} iterations ({:?}); best total {:.6e} at iteration {best_iteration}",
        trace.len(),
        termination,
        trace[best_iteration].total
    );
    let rotations = if best_iteration == 0 {
        motion.rotations().to_vec()
    } else {
        best_params
            .iter()
            .map(|f| f.iter().map(|r| r.to_quaternion()).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(ObjectiveError::from)?
    };
    let out = MotionSequence::new(motion.fps(), root_translation, rotations)
        .map_err(|e| RetargetError::SkeletonMismatch(e.to_string()))?;
    Ok(RetargetResult {
        motion: out,
        iterations: trace.len(),
        loss_trace: trace,
        best_iteration,
        termination,
    })
}
