//! Shared test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tscvx::conic::{Cone, ConeProgram};

/// Random SOCP built from a chosen KKT point, so the optimum is known:
/// `c = -G'y`, `h = G x + s` with `s`, `y` complementary cone members.
pub struct PlantedSocp {
    pub prog: ConeProgram,
    pub x: Vec<f64>,
    pub optimum: f64,
}

pub fn planted_socp<R: Rng>(rng: &mut R, n: usize) -> PlantedSocp {
    let mut cones = Vec::new();
    let mut m = 0;
    if rng.gen_bool(0.5) {
        let d = rng.gen_range(1..=2);
        cones.push(Cone::Zero(d));
        m += d;
    }
    let nn = rng.gen_range(2..=6);
    cones.push(Cone::NonNeg(nn));
    m += nn;
    while m < n + 4 || cones.len() < 3 {
        let d = rng.gen_range(3..=6);
        cones.push(Cone::Soc(d));
        m += d;
    }
    let mut s = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut row = 0;
    for cone in &cones {
        match *cone {
            Cone::Zero(d) => {
                for k in row..row + d {
                    y[k] = rng.gen_range(-1.0..1.0);
                }
            }
            Cone::NonNeg(d) => {
                for k in row..row + d {
                    if rng.gen_bool(0.5) {
                        s[k] = rng.gen_range(0.1..2.0);
                    } else {
                        y[k] = rng.gen_range(0.1..2.0);
                    }
                }
            }
            Cone::Soc(d) => {
                let dir: Vec<f64> = (1..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let unit: Vec<f64> = dir.iter().map(|v| v / norm).collect();
                match rng.gen_range(0..3) {
                    0 => {
                        s[row] = rng.gen_range(1.0..2.0);
                        for k in 1..d {
                            s[row + k] = 0.5 * s[row] * unit[k - 1];
                        }
                    }
                    1 => {
                        y[row] = rng.gen_range(1.0..2.0);
                        for k in 1..d {
                            y[row + k] = 0.5 * y[row] * unit[k - 1];
                        }
                    }
                    _ => {
                        let (a, b) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
                        s[row] = a;
                        y[row] = b;
                        for k in 1..d {
                            s[row + k] = a * unit[k - 1];
                            y[row + k] = -b * unit[k - 1];
                        }
                    }
                }
            }
        }
        row += cone.dim();
    }
    let g = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &g * &x + DVector::from_vec(s);
    let c = -(g.transpose() * DVector::from_vec(y));
    let mut prog = ConeProgram::with_vars(n);
    prog.c = c.iter().copied().collect();
    prog.h = h.iter().copied().collect();
    prog.cones = cones;
    for i in 0..m {
        for j in 0..n {
            prog.g_rows.push(i);
            prog.g_cols.push(j);
            prog.g_vals.push(g[(i, j)]);
        }
    }
    let optimum = c.dot(&x);
    PlantedSocp { prog, x: x.iter().copied().collect(), optimum }
}

pub fn project_cone(cones: &[Cone], v: &mut [f64]) {
    let mut row = 0;
    for cone in cones {
        let block = &mut v[row..row + cone.dim()];
        match cone {
            Cone::Zero(_) => block.iter_mut().for_each(|x| *x = 0.0),
            Cone::NonNeg(_) => block.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::Soc(_) => {
                let t = block[0];
                let norm = block[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm <= t {
                } else if norm <= -t {
                    block.iter_mut().for_each(|x| *x = 0.0);
                } else {
                    let scale = 0.5 * (t + norm);
                    block[0] = scale;
                    for x in &mut block[1..] {
                        *x *= scale / norm;
                    }
                }
            }
        }
        row += cone.dim();
    }
}

/// Over-relaxed ADMM on `min c'x  s.t.  Gx + s = h, s in K`, run until the
/// primal and dual residuals fall below `tol`. Returns the objective.
pub fn admm_objective(prog: &ConeProgram, tol: f64, max_iter: usize) -> f64 {
    let (m, n) = (prog.n_rows(), prog.n_vars());
    let mut g = DMatrix::zeros(m, n);
    for k in 0..prog.g_vals.len() {
        g[(prog.g_rows[k], prog.g_cols[k])] += prog.g_vals[k];
    }
    let c = DVector::from_column_slice(&prog.c);
    let h = DVector::from_column_slice(&prog.h);
    let rho = 1.0;
    let relax = 1.6;
    let chol = (g.transpose() * &g).cholesky().expect("G has full column rank");
    let gt = g.transpose();
    let mut s = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    let mut x = DVector::zeros(n);
    for _ in 0..max_iter {
        let rhs = -(&c / rho) - &gt * (&s - &h + &u);
        x = chol.solve(&rhs);
        let gx = &g * &x;
        let gx_hat = &gx * relax + (&h - &s) * (1.0 - relax);
        let mut s_new = &h - &gx_hat - &u;
        project_cone(&prog.cones, s_new.as_mut_slice());
        u += &gx_hat + &s_new - &h;
        let primal = (&gx + &s_new - &h).amax();
        let dual = rho * (&gt * (&s_new - &s)).amax();
        s = s_new;
        if primal < tol && dual < tol {
            break;
        }
    }
    c.dot(&x)
}
