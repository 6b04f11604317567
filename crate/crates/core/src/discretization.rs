//! First-order-hold discretization of the time-dilated dynamics.
//!
//! Normalized time runs over `[0, 1]` with `N` uniformly spaced nodes; the
//! physical final time is `t_f = sigma`. Controls are interpolated linearly
//! between nodes. Each segment is integrated with fixed-step RK4 together with
//! the sensitivities of its end state to the start state, both node controls
//! and `sigma`.

use std::io::Write;
use std::path::Path;

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{derivative_flat, jacobians_flat, ControlMatrix, StateMatrix, StateVec};
use crate::error::{Error, Result};
use crate::problem::{ControlInput, ProblemConstants, VehicleState, NU, NX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
    /// Time-dilation factor; equals the final time.
    pub sigma: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.sigma
    }

    pub fn state_array(&self, node: usize) -> [f64; NX] {
        self.states[node].to_array()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per node: time, state, thrust.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "node,t,rx,ry,rz,vx,vy,vz,q0,q1,q2,q3,wx_deg,wy_deg,wz_deg,m,tx,ty,tz")?;
        let n = self.len();
        for i in 0..n {
            let t = if n > 1 { self.sigma * i as f64 / (n - 1) as f64 } else { 0.0 };
            let s = &self.states[i];
            let u = &self.controls[i].thrust_b;
            write!(out, "{i},{t}")?;
            for v in s.r_i.iter().chain(&s.v_i).chain(&s.q_bi) {
                write!(out, ",{v}")?;
            }
            for v in &s.w_b {
                write!(out, ",{}", v.to_degrees())?;
            }
            write!(out, ",{}", s.m)?;
            for v in u {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Linearized transition over one segment:
/// `x[i+1] ~ a_d x[i] + b_minus u[i] + b_plus u[i+1] + s_d sigma + w_d + E v[i]`.
#[derive(Debug, Clone)]
pub struct LinearizedSegment {
    pub a_d: StateMatrix,
    pub b_minus: ControlMatrix,
    pub b_plus: ControlMatrix,
    pub s_d: StateVec,
    pub w_d: StateVec,
    /// Virtual-control channel; identity so every state is reachable.
    pub e: StateMatrix,
    /// Nonlinear end state integrated from the reference start node.
    pub propagated: StateVec,
}

type Aug = (StateVec, StateMatrix, ControlMatrix, ControlMatrix, StateVec);

fn axpy(base: &Aug, h: f64, k: &Aug) -> Aug {
    (
        base.0 + k.0 * h,
        base.1 + k.1 * h,
        base.2 + k.2 * h,
        base.3 + k.3 * h,
        base.4 + k.4 * h,
    )
}

fn segment_rhs(
    y: &Aug,
    lam: f64,
    u0: &SVector<f64, NU>,
    u1: &SVector<f64, NU>,
    sigma: f64,
    consts: &ProblemConstants,
) -> Aug {
    let u = u0 * (1.0 - lam) + u1 * lam;
    let x: [f64; NX] = y.0.into();
    let jac = jacobians_flat(&x, &[u[0], u[1], u[2]], consts);
    let a = jac.a * sigma;
    let b = jac.b * sigma;
    (
        jac.f * sigma,
        a * y.1,
        a * y.2 + b * (1.0 - lam),
        a * y.3 + b * lam,
        a * y.4 + jac.f,
    )
}

fn finite(y: &Aug) -> bool {
    y.0.iter().chain(y.1.iter()).chain(y.2.iter()).chain(y.3.iter()).chain(y.4.iter()).all(|v| v.is_finite())
}

fn segment_dt(n_nodes: usize) -> f64 {
    1.0 / (n_nodes - 1) as f64
}

/// Linearize one segment about the reference.
pub fn linearize_segment(
    x0: &[f64; NX],
    u0: &[f64; NU],
    u1: &[f64; NU],
    sigma: f64,
    consts: &ProblemConstants,
    segment: usize,
) -> Result<LinearizedSegment> {
    let steps = consts.rk4_substeps;
    let h = segment_dt(consts.n_nodes) / steps as f64;
    let (ua, ub) = (SVector::from(*u0), SVector::from(*u1));
    let mut y: Aug = (
        StateVec::from(*x0),
        StateMatrix::identity(),
        ControlMatrix::zeros(),
        ControlMatrix::zeros(),
        StateVec::zeros(),
    );
    for step in 0..steps {
        let l0 = step as f64 / steps as f64;
        let lm = (step as f64 + 0.5) / steps as f64;
        let l1 = (step as f64 + 1.0) / steps as f64;
        let k1 = segment_rhs(&y, l0, &ua, &ub, sigma, consts);
        let k2 = segment_rhs(&axpy(&y, 0.5 * h, &k1), lm, &ua, &ub, sigma, consts);
        let k3 = segment_rhs(&axpy(&y, 0.5 * h, &k2), lm, &ua, &ub, sigma, consts);
        let k4 = segment_rhs(&axpy(&y, h, &k3), l1, &ua, &ub, sigma, consts);
        y = (
            y.0 + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0),
            y.1 + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0),
            y.2 + (k1.2 + k2.2 * 2.0 + k3.2 * 2.0 + k4.2) * (h / 6.0),
            y.3 + (k1.3 + k2.3 * 2.0 + k3.3 * 2.0 + k4.3) * (h / 6.0),
            y.4 + (k1.4 + k2.4 * 2.0 + k3.4 * 2.0 + k4.4) * (h / 6.0),
        );
        if !finite(&y) {
            return Err(Error::IntegrationFailure { segment });
        }
    }
    let (propagated, a_d, b_minus, b_plus, s_d) = y;
    let w_d = propagated - a_d * StateVec::from(*x0) - b_minus * ua - b_plus * ub - s_d * sigma;
    Ok(LinearizedSegment { a_d, b_minus, b_plus, s_d, w_d, e: StateMatrix::identity(), propagated })
}

/// Linearizes every segment of the reference trajectory.
pub fn discretize(reference: &Trajectory, consts: &ProblemConstants) -> Result<Vec<LinearizedSegment>> {
    check_shape(reference, consts)?;
    (0..reference.len() - 1)
        .into_par_iter()
        .map(|i| {
            linearize_segment(
                &reference.state_array(i),
                &reference.controls[i].thrust_b,
                &reference.controls[i + 1].thrust_b,
                reference.sigma,
                consts,
                i,
            )
        })
        .collect()
}

fn check_shape(traj: &Trajectory, consts: &ProblemConstants) -> Result<()> {
    if traj.len() != consts.n_nodes || traj.controls.len() != consts.n_nodes {
        return Err(Error::Invalid(format!(
            "trajectory has {} states / {} controls, expected {}",
            traj.len(),
            traj.controls.len(),
            consts.n_nodes
        )));
    }
    Ok(())
}

/// Nonlinear FOH propagation of one segment (no sensitivities).
pub fn propagate_segment(
    x0: &[f64; NX],
    u0: &[f64; NU],
    u1: &[f64; NU],
    sigma: f64,
    consts: &ProblemConstants,
    segment: usize,
) -> Result<StateVec> {
    let steps = consts.rk4_substeps;
    let h = segment_dt(consts.n_nodes) / steps as f64;
    let (ua, ub) = (SVector::<f64, NU>::from(*u0), SVector::<f64, NU>::from(*u1));
    let f = |x: &StateVec, lam: f64| {
        let u = ua * (1.0 - lam) + ub * lam;
        derivative_flat(&(*x).into(), &[u[0], u[1], u[2]], consts) * sigma
    };
    let mut x = StateVec::from(*x0);
    for step in 0..steps {
        let l0 = step as f64 / steps as f64;
        let lm = (step as f64 + 0.5) / steps as f64;
        let l1 = (step as f64 + 1.0) / steps as f64;
        let k1 = f(&x, l0);
        let k2 = f(&(x + k1 * (0.5 * h)), lm);
        let k3 = f(&(x + k2 * (0.5 * h)), lm);
        let k4 = f(&(x + k3 * h), l1);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure { segment });
        }
    }
    Ok(x)
}

/// Per-segment defect vectors `x[i+1] - Phi(x[i], u[i], u[i+1], sigma)`.
pub fn defect_vectors(traj: &Trajectory, consts: &ProblemConstants) -> Result<Vec<StateVec>> {
    check_shape(traj, consts)?;
    (0..traj.len() - 1)
        .into_par_iter()
        .map(|i| {
            let end = propagate_segment(
                &traj.state_array(i),
                &traj.controls[i].thrust_b,
                &traj.controls[i + 1].thrust_b,
                traj.sigma,
                consts,
                i,
            )?;
            Ok(StateVec::from(traj.state_array(i + 1)) - end)
        })
        .collect()
}

/// One-norm of each segment defect.
pub fn defect(traj: &Trajectory, consts: &ProblemConstants) -> Result<Vec<f64>> {
    Ok(defect_vectors(traj, consts)?.iter().map(|d| d.lp_norm(1)).collect())
}

/// Forward simulation from `x0` under FOH controls; dynamically consistent by construction.
pub fn simulate(
    x0: &VehicleState,
    controls: &[ControlInput],
    sigma: f64,
    consts: &ProblemConstants,
) -> Result<Trajectory> {
    let mut states = vec![*x0];
    for i in 0..controls.len() - 1 {
        let next = propagate_segment(
            &states[i].to_array(),
            &controls[i].thrust_b,
            &controls[i + 1].thrust_b,
            sigma,
            consts,
            i,
        )?;
        states.push(VehicleState::from_slice(next.as_slice()));
    }
    Ok(Trajectory { states, controls: controls.to_vec(), sigma })
}

#[allow(dead_code)]
pub(crate) fn matrix_distance<const R: usize, const C: usize>(
    a: &SMatrix<f64, R, C>,
    b: &SMatrix<f64, R, C>,
) -> f64 {
    (a - b).amax()
}
