//! Triangle-mesh queries: ray casting and inside/outside classification.

use nalgebra::Vector3;
use std::f64::consts::PI;

/// Hits closer than this along the ray are ignored.
pub const RAY_EPS: f64 = 1e-6;

/// Slack on barycentric bounds so rays through shared edges or vertices are
/// not lost to rounding on both sides.
const BARY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub point: Vector3<f64>,
    pub face: usize,
    /// Weights of the face's three vertices; non-negative, summing to 1.
    pub barycentric: [f64; 3],
    pub distance: f64,
}

/// Möller–Trumbore intersection with one triangle. Returns `(t, u, v)`.
pub fn intersect_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let scale = e1.norm() * e2.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(-BARY_SLACK..=1.0 + BARY_SLACK).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < -BARY_SLACK || u + v > 1.0 + BARY_SLACK {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    Some((t, u, v))
}

/// Nearest hit with `t > RAY_EPS` among the listed faces.
///
/// `face_ids` must be ascending; equal distances resolve to the lowest face
/// index. The reported point is the barycentric blend of the face corners,
/// so it lies exactly on the face plane.
pub fn ray_mesh_intersection(
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    face_ids: &[usize],
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
) -> Option<RayHit> {
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for &f in face_ids {
        let [i, j, k] = faces[f];
        let Some((t, u, v)) = intersect_triangle(origin, dir, &vertices[i], &vertices[j], &vertices[k]) else {
            continue;
        };
        if t <= RAY_EPS {
            continue;
        }
        let tie_tol = 1e-12 * t.max(1.0);
        match best {
            Some((bt, ..)) if t >= bt - tie_tol => {}
            _ => best = Some((t, f, u, v)),
        }
    }
    best.map(|(t, f, u, v)| {
        let u = u.clamp(0.0, 1.0);
        let v = v.clamp(0.0, 1.0);
        let mut w = [1.0 - u - v, u, v];
        if w[0] < 0.0 {
            let s = u + v;
            w = [0.0, u / s, v / s];
        }
        let [i, j, k] = faces[f];
        let point = vertices[i] * w[0] + vertices[j] * w[1] + vertices[k] * w[2];
        RayHit {
            point,
            face: f,
            barycentric: w,
            distance: t,
        }
    })
}

pub fn face_normal(vertices: &[Vector3<f64>], face: &[usize; 3]) -> Vector3<f64> {
    let [a, b, c] = *face;
    (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]))
}

/// Signed solid angle subtended by a triangle at `p`, divided by 4π.
fn triangle_winding(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let a = a - p;
    let b = b - p;
    let c = c - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let numer = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * numer.atan2(denom) / (4.0 * PI)
}

/// Generalized winding number of `p` with respect to a triangle soup.
/// Approximately 1 inside a closed outward-oriented mesh and 0 outside.
pub fn winding_number<'a>(
    vertices: &[Vector3<f64>],
    faces: impl IntoIterator<Item = &'a [usize; 3]>,
    p: &Vector3<f64>,
) -> f64 {
    faces
        .into_iter()
        .map(|&[i, j, k]| triangle_winding(p, &vertices[i], &vertices[j], &vertices[k]))
        .sum()
}

/// Ray-parity inside test; only meaningful for closed meshes.
pub fn ray_parity_inside(vertices: &[Vector3<f64>], faces: &[[usize; 3]], p: &Vector3<f64>, dir: &Vector3<f64>) -> bool {
    let crossings = faces
        .iter()
        .filter(|&&[i, j, k]| {
            intersect_triangle(p, dir, &vertices[i], &vertices[j], &vertices[k]).is_some_and(|(t, _, _)| t > 0.0)
        })
        .count();
    crossings % 2 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
        let v = vec![
            Vector3::new(-1.0, -1.0, 1.0),
            Vector3::new(1.0, -1.0, 1.0),
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(-1.0, 1.0, 1.0),
        ];
        (v, vec![[0, 1, 2], [0, 2, 3]])
    }

    #[test]
    fn hit_on_shared_edge_reports_lowest_face() {
        let (v, f) = square();
        // the diagonal 0-2 is shared by both faces
        let hit = ray_mesh_intersection(&v, &f, &[0, 1], &Vector3::zeros(), &Vector3::z()).unwrap();
        assert_eq!(hit.face, 0);
        assert!((hit.distance - 1.0).abs() < 1e-12);
        assert!((hit.barycentric.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((hit.point - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn ray_pointing_away_misses() {
        let (v, f) = square();
        assert!(ray_mesh_intersection(&v, &f, &[0, 1], &Vector3::zeros(), &-Vector3::z()).is_none());
    }

    #[test]
    fn hits_inside_epsilon_are_skipped() {
        let (v, f) = square();
        let origin = Vector3::new(0.3, 0.1, 1.0 - 1e-8);
        assert!(ray_mesh_intersection(&v, &f, &[0, 1], &origin, &Vector3::z()).is_none());
    }

    #[test]
    fn winding_of_single_triangle_is_bounded() {
        let (v, f) = square();
        let w = winding_number(&v, &f, &Vector3::zeros());
        // a square at distance 1 subtends a sixth of the sphere
        assert!((w.abs() - 1.0 / 6.0).abs() < 1e-12, "{w}");
    }
}
