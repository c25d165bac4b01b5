//! Small rotation-group helpers on 3×3 matrices.

use crate::triquat::{Mat3, Vec3};

/// `v×`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

fn rodrigues_coeffs(a: f64) -> (f64, f64) {
    if a < 1e-5 {
        let a2 = a * a;
        (1.0 - a2 / 6.0, 0.5 - a2 / 24.0)
    } else {
        let h = (0.5 * a).sin() / a;
        (a.sin() / a, 2.0 * h * h)
    }
}

/// Rodrigues formula.
pub fn exp_so3(phi: &Vec3) -> Mat3 {
    let k = skew(phi);
    let (s, c) = rodrigues_coeffs(phi.norm());
    Mat3::identity() + k * s + k * k * c
}

/// `(exp(φ×) − I)·x` without forming the identity, so a large `x` keeps its precision.
pub fn rotation_increment(phi: &Vec3, x: &Vec3) -> Vec3 {
    let (s, c) = rodrigues_coeffs(phi.norm());
    let px = phi.cross(x);
    px * s + phi.cross(&px) * c
}

/// Principal rotation vector of a rotation matrix.
pub fn log_so3(r: &Mat3) -> Vec3 {
    crate::triquat::Quaternion::from_matrix(r).to_rotation_vector()
}

/// Re-orthonormalize through the quaternion representation.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    crate::triquat::Quaternion::from_matrix(r).to_matrix()
}
