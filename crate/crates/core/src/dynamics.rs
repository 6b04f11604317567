//! Continuous-time rigid-body descent dynamics and their closed-form Jacobians.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::problem::{ControlInput, ProblemConstants, VehicleState, M, NU, NX, Q, R, V, W};
use crate::rotation::{dcm_body_from_inertial, dcm_partials, skew};

pub type StateVec = SVector<f64, NX>;
pub type StateMatrix = SMatrix<f64, NX, NX>;
pub type ControlMatrix = SMatrix<f64, NX, NU>;

/// Scalar arithmetic needed to evaluate the dynamics; lets tests push dual
/// numbers through the same code path.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn sqrt(self) -> Self;
    fn value(self) -> f64;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn value(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone)]
pub struct DynamicsJacobians {
    pub a: StateMatrix,
    pub b: ControlMatrix,
    pub f: StateVec,
}

fn cross<S: Real>(a: &[S; 3], b: &[S; 3]) -> [S; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm<S: Real>(a: &[S; 3]) -> S {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Generic state derivative over the flat state layout.
pub fn derivative_generic<S: Real>(x: &[S; NX], u: &[S; NU], c: &ProblemConstants) -> [S; NX] {
    let k = S::cst;
    let (q0, q1, q2, q3) = (x[6], x[7], x[8], x[9]);
    let two = k(2.0);
    let one = k(1.0);
    let cbi = [
        [one - two * (q2 * q2 + q3 * q3), two * (q1 * q2 + q0 * q3), two * (q1 * q3 - q0 * q2)],
        [two * (q1 * q2 - q0 * q3), one - two * (q1 * q1 + q3 * q3), two * (q2 * q3 + q0 * q1)],
        [two * (q1 * q3 + q0 * q2), two * (q2 * q3 - q0 * q1), one - two * (q1 * q1 + q2 * q2)],
    ];
    let v = [x[3], x[4], x[5]];
    let w = [x[10], x[11], x[12]];
    let m = x[13];

    let speed = norm(&v);
    let drag_scale = -k(0.5 * c.drag_coeff) * speed;
    let mut aero = [k(0.0); 3];
    for i in 0..3 {
        aero[i] = drag_scale * (cbi[i][0] * v[0] + cbi[i][1] * v[1] + cbi[i][2] * v[2]);
    }
    let force = [u[0] + aero[0], u[1] + aero[1], u[2] + aero[2]];

    let mut out = [k(0.0); NX];
    out[0] = v[0];
    out[1] = v[1];
    out[2] = v[2];
    for i in 0..3 {
        // C_I<-B = C_B<-I^T
        let f_i = cbi[0][i] * force[0] + cbi[1][i] * force[1] + cbi[2][i] * force[2];
        out[3 + i] = f_i / m + k(c.g_i[i]);
    }
    let half = k(0.5);
    out[6] = half * (-w[0] * q1 - w[1] * q2 - w[2] * q3);
    out[7] = half * (w[0] * q0 + w[2] * q2 - w[1] * q3);
    out[8] = half * (w[1] * q0 - w[2] * q1 + w[0] * q3);
    out[9] = half * (w[2] * q0 + w[1] * q1 - w[0] * q2);

    let r_t = c.r_t_b.map(k);
    let r_cp = c.r_cp_b.map(k);
    let jw = [k(c.j_b[0]) * w[0], k(c.j_b[1]) * w[1], k(c.j_b[2]) * w[2]];
    let t1 = cross(&r_t, u);
    let t2 = cross(&r_cp, &aero);
    let t3 = cross(&w, &jw);
    for i in 0..3 {
        out[10 + i] = (t1[i] + t2[i] - t3[i]) / k(c.j_b[i]);
    }
    out[13] = -k(c.alpha_mdot()) * norm(u) - k(c.beta_mdot);
    out
}

/// State derivative, laid out like the state vector.
pub fn derivative(state: &VehicleState, ctrl: &ControlInput, consts: &ProblemConstants) -> Result<StateVec> {
    if state.m <= 0.0 {
        return Err(Error::NonPositiveMass(state.m));
    }
    Ok(StateVec::from(derivative_generic(&state.to_array(), &ctrl.thrust_b, consts)))
}

pub fn derivative_flat(x: &[f64; NX], u: &[f64; NU], consts: &ProblemConstants) -> StateVec {
    StateVec::from(derivative_generic(x, u, consts))
}

/// Closed-form `A = df/dx`, `B = df/du` and `f`.
///
/// At `|T| < 1e-9` the thrust-norm gradient is replaced by the zero subgradient.
pub fn jacobians(state: &VehicleState, ctrl: &ControlInput, consts: &ProblemConstants) -> Result<DynamicsJacobians> {
    if state.m <= 0.0 {
        return Err(Error::NonPositiveMass(state.m));
    }
    Ok(jacobians_flat(&state.to_array(), &ctrl.thrust_b, consts))
}

pub fn jacobians_flat(x: &[f64; NX], u: &[f64; NU], c: &ProblemConstants) -> DynamicsJacobians {
    let q = [x[6], x[7], x[8], x[9]];
    let v = Vector3::new(x[3], x[4], x[5]);
    let w = Vector3::new(x[10], x[11], x[12]);
    let m = x[13];
    let thrust = Vector3::new(u[0], u[1], u[2]);
    let cbi = dcm_body_from_inertial(&q);
    let dc = dcm_partials(&q);
    let cd = 0.5 * c.drag_coeff;
    let speed = v.norm();
    let aero = -cd * speed * (cbi * v);
    let force = thrust + aero;
    let j = Matrix3::from_diagonal(&Vector3::from(c.j_b));
    let j_inv = Matrix3::from_diagonal(&Vector3::from(c.j_b.map(|x| 1.0 / x)));
    let r_cp = skew(&Vector3::from(c.r_cp_b));

    let mut a = StateMatrix::zeros();
    let mut b = ControlMatrix::zeros();

    // r' = v
    a.fixed_view_mut::<3, 3>(R.start, V.start).copy_from(&Matrix3::identity());

    // aero partials
    let daero_dv = if speed > 0.0 {
        -cd * (cbi * v * (v / speed).transpose() + speed * cbi)
    } else {
        Matrix3::zeros()
    };
    let mut daero_dq = SMatrix::<f64, 3, 4>::zeros();
    for k in 0..4 {
        daero_dq.set_column(k, &(-cd * speed * (dc[k] * v)));
    }

    // v' = C^T (T + A) / m + g
    let ct = cbi.transpose();
    a.fixed_view_mut::<3, 3>(V.start, V.start).copy_from(&(ct * daero_dv / m));
    for k in 0..4 {
        let col = (dc[k].transpose() * force + ct * daero_dq.column(k)) / m;
        a.fixed_view_mut::<3, 1>(V.start, Q.start + k).copy_from(&col);
    }
    a.fixed_view_mut::<3, 1>(V.start, M).copy_from(&(-(ct * force) / (m * m)));
    b.fixed_view_mut::<3, 3>(V.start, 0).copy_from(&(ct / m));

    // q' = 0.5 Omega(w) q
    let (w1, w2, w3) = (w.x, w.y, w.z);
    let omega = SMatrix::<f64, 4, 4>::new(
        0.0, -w1, -w2, -w3, //
        w1, 0.0, w3, -w2, //
        w2, -w3, 0.0, w1, //
        w3, w2, -w1, 0.0,
    );
    a.fixed_view_mut::<4, 4>(Q.start, Q.start).copy_from(&(0.5 * omega));
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    let dq_dw = SMatrix::<f64, 4, 3>::new(
        -q1, -q2, -q3, //
        q0, -q3, q2, //
        q3, q0, -q1, //
        -q2, q1, q0,
    );
    a.fixed_view_mut::<4, 3>(Q.start, W.start).copy_from(&(0.5 * dq_dw));

    // J w' = r_T x T + r_cp x A - w x J w
    let jw = j * w;
    let dw_dw = -j_inv * (skew(&w) * j - skew(&jw));
    a.fixed_view_mut::<3, 3>(W.start, W.start).copy_from(&dw_dw);
    a.fixed_view_mut::<3, 3>(W.start, V.start).copy_from(&(j_inv * r_cp * daero_dv));
    a.fixed_view_mut::<3, 4>(W.start, Q.start).copy_from(&(j_inv * r_cp * daero_dq));
    b.fixed_view_mut::<3, 3>(W.start, 0).copy_from(&(j_inv * skew(&Vector3::from(c.r_t_b))));

    // m' = -alpha |T| - beta
    let t_norm = thrust.norm();
    if t_norm >= 1e-9 {
        b.fixed_view_mut::<1, 3>(M, 0).copy_from(&(-c.alpha_mdot() / t_norm * thrust.transpose()));
    }

    let f = derivative_flat(x, u, c);
    DynamicsJacobians { a, b, f }
}
