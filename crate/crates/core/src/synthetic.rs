//! Parametric biped fixtures with contact-rich arm motions.
//!
//! The biped has 19 joints (18 bones): a box torso in three rigidly skinned
//! segments, a capsule neck with a sphere head, and capsule limbs. Characters
//! face +Z with +Y up; the left side is +X. Motions are built with analytic
//! two-bone IK so contact events happen at known frames.

use std::f64::consts::PI;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::character::{BodyPart, CharacterParts, SkinnedCharacter};
use crate::error::SyntheticError;
use crate::motion::MotionSequence;
use crate::rotation::{align_frames, matrix_to_quat};

/// Segments around every capsule and sphere.
pub const SEGMENTS: usize = 16;

pub const JOINT_NAMES: [&str; 19] = [
    "pelvis",
    "spine",
    "chest",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_hand",
    "left_hand_end",
    "right_shoulder",
    "right_elbow",
    "right_hand",
    "right_hand_end",
    "left_hip",
    "left_knee",
    "left_foot",
    "right_hip",
    "right_knee",
    "right_foot",
];

const PARENTS: [Option<usize>; 19] = [
    None,
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(2),
    Some(5),
    Some(6),
    Some(7),
    Some(2),
    Some(9),
    Some(10),
    Some(11),
    Some(0),
    Some(13),
    Some(14),
    Some(0),
    Some(16),
    Some(17),
];

// Default proportions (metres).
const UPPER_ARM: f64 = 0.28;
const FOREARM: f64 = 0.25;
const HAND: f64 = 0.18;
const UPPER_ARM_RADIUS: f64 = 0.045;
const FOREARM_RADIUS: f64 = 0.04;
const HAND_RADIUS: f64 = 0.035;
const THIGH: f64 = 0.43;
const SHIN: f64 = 0.47;
const THIGH_RADIUS: f64 = 0.07;
const SHIN_RADIUS: f64 = 0.05;
const SHOULDER_X: f64 = 0.22;
const SHOULDER_Y: f64 = 0.40;
const HIP_X: f64 = 0.09;
const TORSO_HALF_WIDTH: f64 = 0.17;
const CHEST_HALF_DEPTH: f64 = 0.10;

/// Limb and torso multipliers relative to the default proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeSpec {
    pub arm_length: f64,
    pub arm_width: f64,
    pub leg_length: f64,
    pub leg_width: f64,
    pub torso_width: f64,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec {
            arm_length: 1.0,
            arm_width: 1.0,
            leg_length: 1.0,
            leg_width: 1.0,
            torso_width: 1.0,
        }
    }
}

impl ShapeSpec {
    fn validate(&self) -> Result<(), SyntheticError> {
        for (name, v) in [
            ("arm_length", self.arm_length),
            ("arm_width", self.arm_width),
            ("leg_length", self.leg_length),
            ("leg_width", self.leg_width),
            ("torso_width", self.torso_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SyntheticError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A source/target character pair plus motion length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub source: ShapeSpec,
    pub target: ShapeSpec,
    pub frames: usize,
    pub fps: f64,
}

impl Default for SyntheticSpec {
    /// Default proportions for the source; the target's arms are 1.5× longer.
    fn default() -> Self {
        SyntheticSpec {
            source: ShapeSpec::default(),
            target: ShapeSpec {
                arm_length: 1.5,
                ..ShapeSpec::default()
            },
            frames: 20,
            fps: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub source: SkinnedCharacter,
    pub target: SkinnedCharacter,
    /// `(name, motion)` pairs bound to the source character.
    pub motions: Vec<(String, MotionSequence)>,
}

#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    weights: Vec<Vec<(usize, f64)>>,
}

impl MeshBuilder {
    fn push_vertex(&mut self, p: Vector3<f64>, joint: usize) -> usize {
        self.vertices.push(p);
        self.weights.push(vec![(joint, 1.0)]);
        self.vertices.len() - 1
    }

    /// Axis-aligned box, outward-oriented.
    fn add_box(&mut self, lo: Vector3<f64>, hi: Vector3<f64>, joint: usize) {
        let base = self.vertices.len();
        for i in 0..8 {
            let p = Vector3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            );
            self.push_vertex(p, joint);
        }
        const QUADS: [[usize; 4]; 6] = [
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
        ];
        for [a, b, c, d] in QUADS {
            self.faces.push([base + a, base + b, base + c]);
            self.faces.push([base + a, base + c, base + d]);
        }
    }

    /// Closed capsule around segment `a`–`b`; with `a == b` a sphere around
    /// the Y axis.
    fn add_capsule(&mut self, a: Vector3<f64>, b: Vector3<f64>, radius: f64, joint: usize) {
        let length = (b - a).norm();
        let e = if length > 0.0 { (b - a) / length } else { Vector3::y() };
        let helper = if e.x.abs() < 0.9 { Vector3::x() } else { Vector3::z() };
        let u = e.cross(&helper).normalize();
        let w = e.cross(&u);
        let cap_rings = SEGMENTS / 4;
        let body_rings = if length > 0.0 {
            ((length / (radius * 2.0)).ceil() as usize).max(1)
        } else {
            0
        };

        // (centre, radius) from bottom to top, poles excluded
        let mut rings = Vec::new();
        for k in 1..=cap_rings {
            let theta = 0.5 * PI * k as f64 / cap_rings as f64;
            rings.push((a - e * (radius * theta.cos()), radius * theta.sin()));
        }
        for i in 1..=body_rings {
            rings.push((a + (b - a) * (i as f64 / body_rings as f64), radius));
        }
        for k in (1..cap_rings).rev() {
            let theta = 0.5 * PI * k as f64 / cap_rings as f64;
            rings.push((b + e * (radius * theta.cos()), radius * theta.sin()));
        }

        let bottom = self.push_vertex(a - e * radius, joint);
        let first = self.vertices.len();
        for &(c, r) in &rings {
            for s in 0..SEGMENTS {
                let phi = 2.0 * PI * s as f64 / SEGMENTS as f64;
                self.push_vertex(c + (u * phi.cos() + w * phi.sin()) * r, joint);
            }
        }
        let top = self.push_vertex(b + e * radius, joint);
        let at = |ring: usize, s: usize| first + ring * SEGMENTS + s % SEGMENTS;
        for s in 0..SEGMENTS {
            self.faces.push([bottom, at(0, s + 1), at(0, s)]);
        }
        for i in 0..rings.len() - 1 {
            for s in 0..SEGMENTS {
                let (p, q, r, t) = (at(i, s), at(i, s + 1), at(i + 1, s + 1), at(i + 1, s));
                self.faces.push([p, q, r]);
                self.faces.push([p, r, t]);
            }
        }
        let last = rings.len() - 1;
        for s in 0..SEGMENTS {
            self.faces.push([top, at(last, s), at(last, s + 1)]);
        }
    }
}

/// Rest-pose joint positions for a shape.
fn joint_positions(shape: &ShapeSpec) -> Vec<Vector3<f64>> {
    let ankle = SHIN_RADIUS;
    let lift = (THIGH + SHIN) * (shape.leg_length - 1.0);
    let y = |v: f64| v + lift;
    let sx = SHOULDER_X * shape.torso_width;
    let hx = HIP_X * shape.torso_width;
    let (ua, fa, ha) = (
        UPPER_ARM * shape.arm_length,
        FOREARM * shape.arm_length,
        HAND * shape.arm_length,
    );
    let knee = ankle + SHIN * shape.leg_length;
    let hip = knee + THIGH * shape.leg_length;
    let shoulder_y = y(1.0 + SHOULDER_Y);
    let mut j = vec![
        Vector3::new(0.0, y(1.0), 0.0),
        Vector3::new(0.0, y(1.10), 0.0),
        Vector3::new(0.0, y(1.25), 0.0),
        Vector3::new(0.0, y(1.45), 0.0),
        Vector3::new(0.0, y(1.75), 0.0),
    ];
    for side in [1.0, -1.0] {
        let x = side * sx;
        j.push(Vector3::new(x, shoulder_y, 0.0));
        j.push(Vector3::new(x + side * ua, shoulder_y, 0.0));
        j.push(Vector3::new(x + side * (ua + fa), shoulder_y, 0.0));
        j.push(Vector3::new(x + side * (ua + fa + ha), shoulder_y, 0.0));
    }
    for side in [1.0, -1.0] {
        let x = side * hx;
        j.push(Vector3::new(x, hip, 0.0));
        j.push(Vector3::new(x, knee, 0.0));
        j.push(Vector3::new(x, ankle, 0.0));
    }
    j
}

fn body_parts() -> Vec<BodyPart> {
    use BodyPart::*;
    let mut p = vec![Torso, Torso, Torso, Head, Head];
    p.extend([LeftArm; 4]);
    p.extend([RightArm; 4]);
    p.extend([LeftLeg; 3]);
    p.extend([RightLeg; 3]);
    p
}

/// Builds one biped.
pub fn biped(name: &str, shape: &ShapeSpec) -> Result<SkinnedCharacter, SyntheticError> {
    shape.validate()?;
    let joints = joint_positions(shape);
    let lift = joints[0].y - 1.0;
    let tw = TORSO_HALF_WIDTH * shape.torso_width;
    let mut m = MeshBuilder::default();

    let slab = |half_width: f64, half_depth: f64, y0: f64, y1: f64| {
        (
            Vector3::new(-half_width, y0 + lift, -half_depth),
            Vector3::new(half_width, y1 + lift, half_depth),
        )
    };
    let (lo, hi) = slab(tw, CHEST_HALF_DEPTH, 0.86, 1.11);
    m.add_box(lo, hi, 0);
    let (lo, hi) = slab(tw * 0.95, CHEST_HALF_DEPTH * 0.9, 1.07, 1.28);
    m.add_box(lo, hi, 1);
    let (lo, hi) = slab(tw, CHEST_HALF_DEPTH, 1.24, 1.46);
    m.add_box(lo, hi, 2);

    m.add_capsule(joints[3], joints[3] + Vector3::new(0.0, 0.10, 0.0), 0.045, 3);
    m.add_capsule(
        Vector3::new(0.0, 1.64 + lift, 0.0),
        Vector3::new(0.0, 1.64 + lift, 0.0),
        0.11,
        3,
    );

    let aw = shape.arm_width;
    for base in [5, 9] {
        m.add_capsule(joints[base], joints[base + 1], UPPER_ARM_RADIUS * aw, base);
        m.add_capsule(joints[base + 1], joints[base + 2], FOREARM_RADIUS * aw, base + 1);
        m.add_capsule(joints[base + 2], joints[base + 3], HAND_RADIUS * aw, base + 2);
    }
    let lw = shape.leg_width;
    for base in [13, 16] {
        m.add_capsule(joints[base], joints[base + 1], THIGH_RADIUS * lw, base);
        // keep the sole at y = 0 whatever the shin radius
        let sole = joints[base + 2] + Vector3::new(0.0, SHIN_RADIUS * (lw - 1.0), 0.0);
        m.add_capsule(joints[base + 1], sole, SHIN_RADIUS * lw, base + 1);
    }

    Ok(SkinnedCharacter::new(CharacterParts {
        name: name.to_owned(),
        vertices: m.vertices,
        faces: m.faces,
        joints,
        parents: PARENTS.to_vec(),
        joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        skin_weights: m.weights,
        forward: Vector3::z(),
        body_parts: body_parts(),
    })?)
}

/// Joints of one arm: shoulder, elbow, wrist, hand tip.
#[derive(Debug, Clone, Copy)]
struct Arm {
    shoulder: usize,
    side: f64,
}

impl Arm {
    const LEFT: Arm = Arm { shoulder: 5, side: 1.0 };
    const RIGHT: Arm = Arm { shoulder: 9, side: -1.0 };

    fn pole(&self) -> Vector3<f64> {
        Vector3::new(self.side, -1.0, 0.5).normalize()
    }
}

/// How the hand is oriented once the wrist is placed.
#[derive(Debug, Clone, Copy)]
enum HandAim {
    /// Hand points along this global direction.
    Direction(Vector3<f64>),
    /// Hand continues the forearm.
    Straight,
}

/// Writes local rotations for `arm` so the wrist reaches `target`.
fn solve_arm(character: &SkinnedCharacter, arm: Arm, target: Vector3<f64>, aim: HandAim, local: &mut [Matrix3<f64>]) {
    let j = character.joints();
    let (s, e, w, h) = (arm.shoulder, arm.shoulder + 1, arm.shoulder + 2, arm.shoulder + 3);
    let (a, b) = ((j[e] - j[s]).norm(), (j[w] - j[e]).norm());
    let to = target - j[s];
    let d = to.norm().clamp((a - b).abs() + 1e-6, a + b - 1e-6);
    let dir = to.normalize();
    let pole = arm.pole();
    let bend = (pole - dir * dir.dot(&pole)).normalize();
    let cos_alpha = ((a * a + d * d - b * b) / (2.0 * a * d)).clamp(-1.0, 1.0);
    let elbow = j[s] + (dir * cos_alpha + bend * (1.0 - cos_alpha * cos_alpha).sqrt()) * a;
    let wrist = j[s] + dir * d;

    let upper = align_frames(j[e] - j[s], pole, elbow - j[s], pole);
    let fore = align_frames(j[w] - j[e], pole, wrist - elbow, pole);
    let hand = match aim {
        HandAim::Direction(to_dir) => align_frames(j[h] - j[w], Vector3::z(), to_dir, Vector3::z()),
        HandAim::Straight => fore,
    };
    local[s] = upper;
    local[e] = upper.transpose() * fore;
    local[w] = fore.transpose() * hand;
}

fn frame_quaternions(local: &[Matrix3<f64>]) -> Vec<UnitQuaternion<f64>> {
    local.iter().map(matrix_to_quat).collect()
}

/// Palms-together contact pose in front of the chest, wrist targets for
/// (left, right).
fn contact_targets(character: &SkinnedCharacter) -> (Vector3<f64>, Vector3<f64>) {
    let j = character.joints();
    let chest_front = CHEST_HALF_DEPTH;
    let r = character_arm_radius(character);
    let x = r + 0.0025;
    let y = j[2].y - 0.03;
    let z = chest_front + r + 0.01;
    (Vector3::new(x, y, z), Vector3::new(-x, y, z))
}

/// Largest arm capsule radius behind the wrist, measured from the mesh.
fn character_arm_radius(character: &SkinnedCharacter) -> f64 {
    let wrist = character.joints()[7];
    character
        .vertices()
        .iter()
        .zip(character.skin_weights())
        .filter(|(_, w)| w[0].0 == 6)
        .map(|(v, _)| {
            let d = v - wrist;
            (d.y * d.y + d.z * d.z).sqrt()
        })
        .fold(0.0, f64::max)
}

fn open_targets(character: &SkinnedCharacter) -> (Vector3<f64>, Vector3<f64>) {
    let y = character.joints()[2].y - 0.05;
    (Vector3::new(0.40, y, 0.30), Vector3::new(-0.40, y, 0.30))
}

fn lerp(a: Vector3<f64>, b: Vector3<f64>, s: f64) -> Vector3<f64> {
    a + (b - a) * s
}

fn build_motion(
    character: &SkinnedCharacter,
    frames: usize,
    fps: f64,
    pose_at: impl Fn(usize, &mut [Matrix3<f64>]),
) -> MotionSequence {
    let n = character.joint_count();
    let rotations = (0..frames)
        .map(|t| {
            let mut local = vec![Matrix3::identity(); n];
            pose_at(t, &mut local);
            frame_quaternions(&local)
        })
        .collect();
    MotionSequence::new(fps, vec![Vector3::zeros(); frames], rotations).expect("constructed motion is valid")
}

/// Hands swing from an open pose to palms together in front of the chest at
/// frame `frames / 2`, then back.
pub fn clap_motion(character: &SkinnedCharacter, frames: usize, fps: f64) -> MotionSequence {
    let (open_l, open_r) = open_targets(character);
    let (hit_l, hit_r) = contact_targets(character);
    build_motion(character, frames, fps, |t, local| {
        let s = 0.5 * (1.0 - (2.0 * PI * t as f64 / frames as f64).cos());
        solve_arm(character, Arm::LEFT, lerp(open_l, hit_l, s), HandAim::Direction(Vector3::y()), local);
        solve_arm(character, Arm::RIGHT, lerp(open_r, hit_r, s), HandAim::Direction(Vector3::y()), local);
    })
}

/// Hands come together by the middle frame and hold.
pub fn pray_motion(character: &SkinnedCharacter, frames: usize, fps: f64) -> MotionSequence {
    let (open_l, open_r) = open_targets(character);
    let (hit_l, hit_r) = contact_targets(character);
    let half = (frames / 2).max(1) as f64;
    build_motion(character, frames, fps, |t, local| {
        let x = (t as f64 / half).min(1.0);
        let s = x * x * (3.0 - 2.0 * x);
        solve_arm(character, Arm::LEFT, lerp(open_l, hit_l, s), HandAim::Direction(Vector3::y()), local);
        solve_arm(character, Arm::RIGHT, lerp(open_r, hit_r, s), HandAim::Direction(Vector3::y()), local);
    })
}

/// Forearms fold across the chest, one above the other.
pub fn cross_arms_motion(character: &SkinnedCharacter, frames: usize, fps: f64) -> MotionSequence {
    let (open_l, open_r) = open_targets(character);
    let y = character.joints()[2].y;
    let cross_l = Vector3::new(-0.14, y - 0.02, 0.17);
    let cross_r = Vector3::new(0.14, y - 0.10, 0.17);
    build_motion(character, frames, fps, |t, local| {
        let s = 0.5 * (1.0 - (2.0 * PI * t as f64 / frames as f64).cos());
        solve_arm(character, Arm::LEFT, lerp(open_l, cross_l, s), HandAim::Straight, local);
        solve_arm(character, Arm::RIGHT, lerp(open_r, cross_r, s), HandAim::Straight, local);
    })
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticSet, SyntheticError> {
    if spec.frames < 2 {
        return Err(SyntheticError::InvalidSpec(format!("need at least 2 frames, got {}", spec.frames)));
    }
    if !(spec.fps > 0.0 && spec.fps.is_finite()) {
        return Err(SyntheticError::InvalidSpec(format!("fps must be positive, got {}", spec.fps)));
    }
    let source = biped("source", &spec.source)?;
    let target = biped("target", &spec.target)?;
    let motions = vec![
        ("clap".to_owned(), clap_motion(&source, spec.frames, spec.fps)),
        ("pray".to_owned(), pray_motion(&source, spec.frames, spec.fps)),
        ("cross_arms".to_owned(), cross_arms_motion(&source, spec.frames, spec.fps)),
    ];
    Ok(SyntheticSet { source, target, motions })
}
