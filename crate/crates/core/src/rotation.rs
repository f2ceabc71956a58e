//! Rotation algebra: the continuous 6D parameterization, quaternion storage,
//! and the handful of matrix helpers the kinematics and objective code share.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::RotationError;

/// Minimum norm accepted for either Gram–Schmidt column.
pub const DEGENERATE_EPS: f64 = 1e-9;

/// First two columns of a rotation matrix, column-major:
/// `[r00, r10, r20, r01, r11, r21]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation6d(pub [f64; 6]);

impl Rotation6d {
    pub const IDENTITY: Rotation6d = Rotation6d([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Rotation6d([
            m[(0, 0)],
            m[(1, 0)],
            m[(2, 0)],
            m[(0, 1)],
            m[(1, 1)],
            m[(2, 1)],
        ])
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Self::from_matrix(&quat_to_matrix(q))
    }

    pub fn first(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn second(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    /// Gram–Schmidt decode. The first column of the result is the
    /// normalized first input column.
    pub fn to_matrix(&self) -> Result<Matrix3<f64>, RotationError> {
        Ok(GramSchmidt::forward(self)?.matrix())
    }

    pub fn to_quaternion(&self) -> Result<UnitQuaternion<f64>, RotationError> {
        Ok(matrix_to_quat(&self.to_matrix()?))
    }
}

/// Intermediate values of the 6D decode, kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GramSchmidt {
    a2: Vector3<f64>,
    norm1: f64,
    norm2: f64,
    b1: Vector3<f64>,
    b2: Vector3<f64>,
    b3: Vector3<f64>,
}

impl GramSchmidt {
    pub(crate) fn forward(r: &Rotation6d) -> Result<Self, RotationError> {
        let a1 = r.first();
        let a2 = r.second();
        let norm1 = a1.norm();
        if !(norm1 > DEGENERATE_EPS) {
            return Err(RotationError::DegenerateInput);
        }
        let b1 = a1 / norm1;
        let u2 = a2 - b1 * b1.dot(&a2);
        let norm2 = u2.norm();
        if !(norm2 > DEGENERATE_EPS) {
            return Err(RotationError::DegenerateInput);
        }
        let b2 = u2 / norm2;
        let b3 = b1.cross(&b2);
        Ok(GramSchmidt {
            a2,
            norm1,
            norm2,
            b1,
            b2,
            b3,
        })
    }

    pub(crate) fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.b1, self.b2, self.b3])
    }

    /// Pulls a gradient with respect to the decoded matrix back onto the six
    /// raw parameters.
    pub(crate) fn backward(&self, grad_r: &Matrix3<f64>) -> [f64; 6] {
        let c1 = grad_r.column(0).into_owned();
        let c2 = grad_r.column(1).into_owned();
        let c3 = grad_r.column(2).into_owned();

        // b3 = b1 x b2
        let mut gb1 = c1 + self.b2.cross(&c3);
        let gb2 = c2 + c3.cross(&self.b1);

        // b2 = u2 / |u2|
        let gu2 = (gb2 - self.b2 * gb2.dot(&self.b2)) / self.norm2;

        // u2 = a2 - (b1 . a2) b1
        let b1_dot_a2 = self.b1.dot(&self.a2);
        let b1_dot_gu2 = self.b1.dot(&gu2);
        let ga2 = gu2 - self.b1 * b1_dot_gu2;
        gb1 -= gu2 * b1_dot_a2 + self.a2 * b1_dot_gu2;

        // b1 = a1 / |a1|
        let ga1 = (gb1 - self.b1 * gb1.dot(&self.b1)) / self.norm1;

        [ga1.x, ga1.y, ga1.z, ga2.x, ga2.y, ga2.z]
    }
}

pub fn quat_to_matrix(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    q.to_rotation_matrix().into_inner()
}

/// Converts a proper rotation matrix to a unit quaternion with non-negative
/// scalar part.
pub fn matrix_to_quat(m: &Matrix3<f64>) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
    canonical_sign(q)
}

pub fn canonical_sign(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Quaternion from `[w, x, y, z]` without renormalization.
pub fn quat_from_wxyz(q: [f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3]))
}

pub fn quat_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`skew`] applied to `m - mᵀ` (twice the axial vector of the
/// skew part of `m`).
pub(crate) fn vee_antisym(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

/// Closest proper rotation to `m` (polar decomposition `m = U P`).
///
/// Returns `(U, P)` with `P = Uᵀ m` symmetrized.
pub fn polar_rotation(m: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u requested");
    let v_t = svd.v_t.expect("svd v_t requested");
    let mut rot = u * v_t;
    if rot.determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
        let mut u_fixed = u;
        u_fixed.column_mut(idx).neg_mut();
        rot = u_fixed * v_t;
    }
    let p = rot.transpose() * m;
    let p = (p + p.transpose()) * 0.5;
    (rot, p)
}

/// Backward pass of [`polar_rotation`]: maps `∂L/∂U` to `∂L/∂m`.
pub(crate) fn polar_backward(
    rot: &Matrix3<f64>,
    stretch: &Matrix3<f64>,
    grad_rot: &Matrix3<f64>,
) -> Matrix3<f64> {
    let a = vee_antisym(&(rot.transpose() * grad_rot));
    let k = Matrix3::identity() * stretch.trace() - stretch;
    let g = match k.try_inverse() {
        Some(k_inv) => k_inv * a,
        None => return Matrix3::zeros(),
    };
    rot * skew(&g)
}

/// Rotation taking `from_primary` onto `to_primary` and, as far as possible,
/// `from_secondary` onto `to_secondary`.
pub fn align_frames(
    from_primary: Vector3<f64>,
    from_secondary: Vector3<f64>,
    to_primary: Vector3<f64>,
    to_secondary: Vector3<f64>,
) -> Matrix3<f64> {
    let frame = |p: Vector3<f64>, s: Vector3<f64>| {
        let e1 = p.normalize();
        let e2 = (s - e1 * e1.dot(&s)).normalize();
        Matrix3::from_columns(&[e1, e2, e1.cross(&e2)])
    };
    frame(to_primary, to_secondary) * frame(from_primary, from_secondary).transpose()
}
