#![allow(dead_code)]

use std::f64::consts::PI;

use dmi_retarget::character::{BodyPart, CharacterParts, SkinWeights, SkinnedCharacter};
use dmi_retarget::motion::MotionSequence;
use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3, Vector4};
use rand::Rng;

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random rotation (Shoemake).
pub fn random_quat(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    ))
}

pub fn random_vec(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Rotation matrix from a unit quaternion written out by hand.
pub fn quat_matrix_oracle(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// World 4×4 joint transforms by multiplying local transforms up each chain
/// from scratch (no reuse of parent results).
pub fn world_transforms_oracle(
    parents: &[Option<usize>],
    joints: &[Vector3<f64>],
    local: &[Matrix3<f64>],
    root_translation: &Vector3<f64>,
) -> Vec<Matrix4<f64>> {
    (0..joints.len())
        .map(|j| {
            let mut chain = vec![j];
            while let Some(p) = parents[*chain.last().unwrap()] {
                chain.push(p);
            }
            let mut m = Matrix4::identity();
            for &k in chain.iter().rev() {
                let offset = match parents[k] {
                    Some(p) => joints[k] - joints[p],
                    None => joints[k] + root_translation,
                };
                m *= homogeneous(&local[k], &offset);
            }
            m
        })
        .collect()
}

/// Dense skinning matrices `W_j · B_j⁻¹` with `B_j` the rest bind transform.
pub fn skinning_oracle(
    parents: &[Option<usize>],
    joints: &[Vector3<f64>],
    local: &[Matrix3<f64>],
    root_translation: &Vector3<f64>,
) -> Vec<Matrix4<f64>> {
    world_transforms_oracle(parents, joints, local, root_translation)
        .iter()
        .zip(joints)
        .map(|(w, j)| {
            let bind_inv = homogeneous(&Matrix3::identity(), &-j);
            w * bind_inv
        })
        .collect()
}

pub fn apply_dense(weights: &[(usize, f64)], skin: &[Matrix4<f64>], p: &Vector3<f64>) -> Vector3<f64> {
    let mut m = Matrix4::zeros();
    for &(j, w) in weights {
        m += skin[j] * w;
    }
    let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
    Vector3::new(h.x, h.y, h.z)
}

/// Random tree with `n` joints: every parent has a lower index.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> (Vec<Option<usize>>, Vec<Vector3<f64>>) {
    let mut parents = vec![None];
    let mut joints = vec![random_vec(rng, 1.0)];
    for j in 1..n {
        let p = rng.random_range(0..j);
        parents.push(Some(p));
        joints.push(joints[p] + random_vec(rng, 0.5));
    }
    (parents, joints)
}

/// Closed tube around the Y axis with flat end caps; vertex weights are
/// supplied per ring height.
pub fn tube_mesh(
    radius: f64,
    y0: f64,
    y1: f64,
    segments: usize,
    rings: usize,
    weights_at: impl Fn(f64) -> Vec<(usize, f64)>,
) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>, Vec<SkinWeights>) {
    let mut v = Vec::new();
    let mut w = Vec::new();
    for r in 0..=rings {
        let y = y0 + (y1 - y0) * r as f64 / rings as f64;
        for s in 0..segments {
            let a = 2.0 * PI * s as f64 / segments as f64;
            // angle 0 points along +Z
            v.push(Vector3::new(radius * a.sin(), y, radius * a.cos()));
            w.push(weights_at(y));
        }
    }
    let mut f = Vec::new();
    let idx = |r: usize, s: usize| r * segments + s % segments;
    for r in 0..rings {
        for s in 0..segments {
            let (a, b, c, d) = (idx(r, s), idx(r, s + 1), idx(r + 1, s), idx(r + 1, s + 1));
            f.push([a, c, b]);
            f.push([b, c, d]);
        }
    }
    let bottom = v.len();
    v.push(Vector3::new(0.0, y0, 0.0));
    w.push(weights_at(y0));
    let top = v.len();
    v.push(Vector3::new(0.0, y1, 0.0));
    w.push(weights_at(y1));
    for s in 0..segments {
        f.push([bottom, idx(0, s), idx(0, s + 1)]);
        f.push([top, idx(rings, s + 1), idx(rings, s)]);
    }
    (v, f, w)
}

/// Two joints on the Y axis at `y = 0` and `y = 1`; a closed cylinder of
/// `radius` spanning `y ∈ [-0.1, 1.1]` is rigidly skinned to the first.
pub fn cylinder_character(radius: f64, segments: usize) -> SkinnedCharacter {
    let (vertices, faces, skin_weights) = tube_mesh(radius, -0.1, 1.1, segments, 12, |_| vec![(0, 1.0)]);
    SkinnedCharacter::new(CharacterParts {
        name: "cylinder".into(),
        vertices,
        faces,
        joints: vec![Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0)],
        parents: vec![None, Some(0)],
        joint_names: vec!["base".into(), "tip".into()],
        skin_weights,
        forward: Vector3::z(),
        body_parts: vec![BodyPart::LeftArm; 2],
    })
    .unwrap()
}

/// Six joints stacked along Y (five bones) inside a tube whose skin weights
/// blend linearly between neighbouring joints.
pub fn chain_character() -> SkinnedCharacter {
    let n = 6;
    let weights = |y: f64| {
        let s = (y / 0.2).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let mut w = vec![(i, 1.0 - t), (i + 1, t)];
        w.retain(|&(_, x)| x > 0.0);
        w
    };
    let (vertices, faces, skin_weights) = tube_mesh(0.05, -0.05, 1.05, 16, 22, weights);
    SkinnedCharacter::new(CharacterParts {
        name: "chain".into(),
        vertices,
        faces,
        joints: (0..n).map(|i| Vector3::new(0.0, 0.2 * i as f64, 0.0)).collect(),
        parents: (0..n).map(|i| i.checked_sub(1)).collect(),
        joint_names: (0..n).map(|i| format!("j{i}")).collect(),
        skin_weights,
        forward: Vector3::z(),
        body_parts: vec![BodyPart::Torso; n],
    })
    .unwrap()
}

pub fn random_motion(rng: &mut impl Rng, joints: usize, frames: usize, translation: f64) -> MotionSequence {
    let rotations = (0..frames)
        .map(|_| (0..joints).map(|_| random_quat(rng)).collect())
        .collect();
    let root = (0..frames).map(|_| random_vec(rng, translation)).collect();
    MotionSequence::new(30.0, root, rotations).unwrap()
}

/// Closed torus around the Y axis.
pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let mut v = Vec::new();
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let a = 2.0 * PI * j as f64 / nv as f64;
            let r = major + minor * a.cos();
            v.push(Vector3::new(r * u.cos(), minor * a.sin(), r * u.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % nu) * nv + j % nv;
    let mut f = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            f.push([idx(i, j), idx(i, j + 1), idx(i + 1, j)]);
            f.push([idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)]);
        }
    }
    (v, f)
}

/// Character over an arbitrary tree: a small triangle around every joint,
/// weighted 0.7 to that joint and 0.3 to its parent (or itself at the root).
pub fn tree_character(parents: Vec<Option<usize>>, joints: Vec<Vector3<f64>>) -> SkinnedCharacter {
    let n = joints.len();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut skin_weights = Vec::new();
    for (j, p) in joints.iter().enumerate() {
        let base = vertices.len();
        vertices.push(p + Vector3::new(0.05, 0.0, 0.0));
        vertices.push(p + Vector3::new(0.0, 0.05, 0.0));
        vertices.push(p + Vector3::new(0.0, 0.0, 0.05));
        faces.push([base, base + 1, base + 2]);
        for _ in 0..3 {
            skin_weights.push(match parents[j] {
                Some(q) => vec![(j, 0.7), (q, 0.3)],
                None => vec![(j, 1.0)],
            });
        }
    }
    SkinnedCharacter::new(CharacterParts {
        name: "tree".into(),
        vertices,
        faces,
        joints,
        parents,
        joint_names: (0..n).map(|i| format!("j{i}")).collect(),
        skin_weights,
        forward: Vector3::z(),
        body_parts: vec![BodyPart::Torso; n],
    })
    .unwrap()
}

/// Gram–Schmidt decode of a 6D vector written independently of the library.
pub fn gram_schmidt_oracle(r: &[f64; 6]) -> Matrix3<f64> {
    let a1 = Vector3::new(r[0], r[1], r[2]);
    let a2 = Vector3::new(r[3], r[4], r[5]);
    let b1 = a1 / (a1[0] * a1[0] + a1[1] * a1[1] + a1[2] * a1[2]).sqrt();
    let proj = b1[0] * a2[0] + b1[1] * a2[1] + b1[2] * a2[2];
    let u = a2 - b1 * proj;
    let b2 = u / (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let b3 = Vector3::new(
        b1[1] * b2[2] - b1[2] * b2[1],
        b1[2] * b2[0] - b1[0] * b2[2],
        b1[0] * b2[1] - b1[1] * b2[0],
    );
    Matrix3::from_columns(&[b1, b2, b3])
}
