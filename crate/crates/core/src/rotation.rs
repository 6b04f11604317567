//! Quaternion and direction-cosine helpers.
//!
//! Quaternions are scalar-first and represent the passive body-from-inertial
//! rotation `q_B<-I`. The inertial frame has `e1` pointing up (opposite to
//! gravity); the body `x` axis is the thrust axis.

use nalgebra::{Matrix3, Vector3};

pub type Quat = [f64; 4];

pub const IDENTITY: Quat = [1.0, 0.0, 0.0, 0.0];

/// Direction cosine matrix `C_B<-I(q)`.
pub fn dcm_body_from_inertial(q: &Quat) -> Matrix3<f64> {
    let [q0, q1, q2, q3] = *q;
    Matrix3::new(
        1.0 - 2.0 * (q2 * q2 + q3 * q3),
        2.0 * (q1 * q2 + q0 * q3),
        2.0 * (q1 * q3 - q0 * q2),
        2.0 * (q1 * q2 - q0 * q3),
        1.0 - 2.0 * (q1 * q1 + q3 * q3),
        2.0 * (q2 * q3 + q0 * q1),
        2.0 * (q1 * q3 + q0 * q2),
        2.0 * (q2 * q3 - q0 * q1),
        1.0 - 2.0 * (q1 * q1 + q2 * q2),
    )
}

/// Partial derivatives `dC_B<-I / dq_k` for k = 0..4.
pub fn dcm_partials(q: &Quat) -> [Matrix3<f64>; 4] {
    let [q0, q1, q2, q3] = *q;
    let t = |x: f64| 2.0 * x;
    [
        Matrix3::new(0.0, t(q3), -t(q2), -t(q3), 0.0, t(q1), t(q2), -t(q1), 0.0),
        Matrix3::new(0.0, t(q2), t(q3), t(q2), -4.0 * q1, t(q0), t(q3), -t(q0), -4.0 * q1),
        Matrix3::new(-4.0 * q2, t(q1), -t(q0), t(q1), 0.0, t(q3), t(q0), t(q3), -4.0 * q2),
        Matrix3::new(-4.0 * q3, t(q0), t(q1), -t(q0), -4.0 * q3, t(q2), t(q1), t(q2), 0.0),
    ]
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Active rotation by `phi` radians about the inertial up axis `e1`.
pub fn about_up(phi: f64) -> Matrix3<f64> {
    let (s, c) = phi.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rotate3(rot: &Matrix3<f64>, v: &[f64; 3]) -> [f64; 3] {
    let out = rot * Vector3::from(*v);
    [out.x, out.y, out.z]
}

/// Conjugates the attitude by a rotation about `e1`, so that
/// `C(q') = R C(q) R^T`. Since `R` fixes `e1`, this rotates only the vector part.
pub fn conjugate_about_up(q: &Quat, rot: &Matrix3<f64>) -> Quat {
    let v = rotate3(rot, &[q[1], q[2], q[3]]);
    [q[0], v[0], v[1], v[2]]
}

pub fn normalize(q: &Quat) -> Quat {
    let n = norm4(q);
    if n < 1e-12 || !n.is_finite() {
        return IDENTITY;
    }
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

pub fn norm4(q: &Quat) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Spherical linear interpolation between unit quaternions (shortest arc).
pub fn slerp(a: &Quat, b: &Quat, t: f64) -> Quat {
    let mut b = *b;
    let mut dot: f64 = (0..4).map(|i| a[i] * b[i]).sum();
    if dot < 0.0 {
        b.iter_mut().for_each(|x| *x = -*x);
        dot = -dot;
    }
    if dot > 0.9995 {
        let lerp = [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
            a[3] + t * (b[3] - a[3]),
        ];
        return normalize(&lerp);
    }
    let theta = dot.clamp(-1.0, 1.0).acos();
    let s = theta.sin();
    let wa = ((1.0 - t) * theta).sin() / s;
    let wb = (t * theta).sin() / s;
    normalize(&[
        wa * a[0] + wb * b[0],
        wa * a[1] + wb * b[1],
        wa * a[2] + wb * b[2],
        wa * a[3] + wb * b[3],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_dcm() {
        assert_abs_diff_eq!(dcm_body_from_inertial(&IDENTITY), Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn dcm_is_orthonormal() {
        let q = normalize(&[0.3, -0.5, 0.7, 0.1]);
        let c = dcm_body_from_inertial(&q);
        assert_abs_diff_eq!(c * c.transpose(), Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn conjugation_matches_matrix_similarity() {
        let q = normalize(&[0.3, -0.5, 0.7, 0.1]);
        for k in 0..8 {
            let rot = about_up(k as f64 * std::f64::consts::FRAC_PI_4);
            let lhs = dcm_body_from_inertial(&conjugate_about_up(&q, &rot));
            let rhs = rot * dcm_body_from_inertial(&q) * rot.transpose();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let q = [0.4, -0.2, 0.8, 0.3];
        let parts = dcm_partials(&q);
        for k in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += 1e-6;
            qm[k] -= 1e-6;
            let fd = (dcm_body_from_inertial(&qp) - dcm_body_from_inertial(&qm)) / 2e-6;
            assert_abs_diff_eq!(fd, parts[k], epsilon = 1e-8);
        }
    }

    #[test]
    fn slerp_endpoints() {
        let a = IDENTITY;
        let b = normalize(&[0.0, 1.0, 1.0, 0.0]);
        let s0 = slerp(&a, &b, 0.0);
        let s1 = slerp(&a, &b, 1.0);
        for i in 0..4 {
            assert_abs_diff_eq!(s0[i], a[i], epsilon = 1e-12);
            assert_abs_diff_eq!(s1[i], b[i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(norm4(&slerp(&a, &b, 0.37)), 1.0, epsilon = 1e-12);
    }
}
