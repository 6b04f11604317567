//! Successive convexification: penalty bookkeeping, subproblem assembly,
//! trust-region logic and the outer loop.

use std::ops::Range;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::conic::{self, Affine, Cone, ConeProgram, ConeSolution};
use crate::discretization::{defect_vectors, discretize, LinearizedSegment, Trajectory};
use crate::error::{Error, Result};
use crate::problem::{
    boundary_conditions, boundary_residuals, cost, BoundaryNode, BoundaryRow, ConstraintCatalog, ConstraintKind, ControlInput,
    ProblemInstance, TightSet, VehicleState, M, NU, NX, Q, R, V, W,
};
use crate::rotation::{dcm_body_from_inertial, slerp};

/// Weights of the exact penalty. Each class uses one uniform weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Dynamics defects (nonconvex equalities).
    pub lambda: f64,
    /// Boundary-condition residuals.
    pub lambda_bc: f64,
    /// Nonconvex inequalities (thrust lower bound).
    pub lambda_ncvx: f64,
    /// Convex inequalities.
    pub tau: f64,
}

impl PenaltyConfig {
    pub fn uniform(weight: f64) -> Self {
        Self { lambda: weight, lambda_bc: weight, lambda_ncvx: weight, tau: weight }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda, self.lambda_bc, self.lambda_ncvx, self.tau];
        if w.iter().any(|v| !(*v >= 0.0)) || self.lambda <= 0.0 {
            return Err(Error::Invalid("penalty weights must be >= 0 with lambda > 0".into()));
        }
        Ok(())
    }
}

/// Individual terms of the exact penalty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PenaltyTerms {
    pub cost: f64,
    pub defect: f64,
    pub boundary: f64,
    pub nonconvex: f64,
    pub convex: f64,
}

impl PenaltyTerms {
    pub fn total(&self) -> f64 {
        self.cost + self.defect + self.boundary + self.nonconvex + self.convex
    }
}

pub fn penalty_terms(traj: &Trajectory, inst: &ProblemInstance, cfg: &PenaltyConfig) -> Result<PenaltyTerms> {
    let consts = &inst.constants;
    let defects = defect_vectors(traj, consts)?;
    let defect: f64 = defects.iter().map(|d| block_norm_sum(d.as_slice())).sum();
    let rows = boundary_conditions(inst);
    let residuals = boundary_residuals(&rows, traj);
    let bc: f64 = boundary_groups(&rows).iter().map(|g| g.iter().map(|&i| residuals[i].powi(2)).sum::<f64>().sqrt()).sum();
    let catalog = inst.catalog();
    let residuals = catalog.evaluate(traj, inst);
    let (mut ncvx, mut cvx) = (0.0, 0.0);
    for (row, g) in catalog.rows().zip(&residuals) {
        if row.convex {
            cvx += g.max(0.0);
        } else {
            ncvx += g.max(0.0);
        }
    }
    Ok(PenaltyTerms {
        cost: cost(traj),
        defect: cfg.lambda * defect,
        boundary: cfg.lambda_bc * bc,
        nonconvex: cfg.lambda_ncvx * ncvx,
        convex: cfg.tau * cvx,
    })
}

/// Sum of the Euclidean norms of the r, v, q, omega and m blocks of a state
/// vector. Unlike the componentwise 1-norm it does not change when the
/// scenario is rotated about the up axis.
pub fn block_norm_sum(x: &[f64]) -> f64 {
    STATE_BLOCKS.iter().map(|b| x[b.clone()].iter().map(|v| v * v).sum::<f64>().sqrt()).sum()
}

/// Boundary rows grouped by node and state block, as row indices.
pub fn boundary_groups(rows: &[BoundaryRow]) -> Vec<Vec<usize>> {
    let block_of = |c: usize| STATE_BLOCKS.iter().position(|b| b.contains(&c)).expect("component in a block");
    let mut groups: Vec<(BoundaryNode, usize, Vec<usize>)> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let key = (row.node, block_of(row.component));
        match groups.iter_mut().find(|g| (g.0, g.1) == key) {
            Some(g) => g.2.push(i),
            None => groups.push((key.0, key.1, vec![i])),
        }
    }
    groups.into_iter().map(|g| g.2).collect()
}

/// Exact penalty `J`: cost plus weighted defects, boundary residuals and
/// inequality violations. Defects and boundary residuals are penalized by
/// block, see [`block_norm_sum`].
pub fn penalty_cost(traj: &Trajectory, inst: &ProblemInstance, cfg: &PenaltyConfig) -> Result<f64> {
    Ok(penalty_terms(traj, inst, cfg)?.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub radius: f64,
    /// Contraction factor.
    pub alpha: f64,
    /// Growth factor.
    pub beta: f64,
    pub r_l: f64,
    pub r_u: f64,
    /// Ratio thresholds `rho0 < rho1 < rho2`.
    pub rho: [f64; 3],
    pub norm: TrustNorm,
}

/// Norm bounding the per-node step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TrustNorm {
    /// Euclidean norm on the raw state and thrust steps.
    Two,
    /// Scaled block norms, see [`TrustScales`].
    #[default]
    Block,
}

impl TrustRegion {
    pub fn new(radius: f64, inst: &ProblemInstance) -> Self {
        let c = &inst.constants;
        Self {
            radius,
            alpha: c.beta_sh,
            beta: c.beta_gr,
            r_l: c.eta_lb,
            r_u: c.eta_ub,
            rho: [c.rho0, c.rho1, c.rho2],
            norm: TrustNorm::default(),
        }
    }

    pub fn cold(inst: &ProblemInstance) -> Self {
        Self::new(inst.constants.eta_full_init, inst)
    }

    pub fn warm(inst: &ProblemInstance) -> Self {
        Self::new(inst.constants.eta_reduced_init, inst)
    }

    fn clamp(&mut self) {
        self.radius = self.radius.max(self.r_l).min(self.r_u);
    }

    /// Three-case update; returns whether the step is accepted. Rejected
    /// steps contract the radius.
    pub fn update(&mut self, rho: f64) -> bool {
        self.step(rho, self.alpha, self.beta)
    }

    /// Update with contraction `alpha^tau_r` and growth `beta^(1 - tau_r)`,
    /// where `tau_r` is the fraction of tight-set bits that changed.
    pub fn update_tscvx(&mut self, rho: f64, tau_r: f64) -> bool {
        let tau_r = tau_r.clamp(0.0, 1.0);
        self.step(rho, self.alpha.powf(tau_r), self.beta.powf(1.0 - tau_r))
    }

    fn step(&mut self, rho: f64, shrink: f64, grow: f64) -> bool {
        let accepted = rho >= self.rho[0];
        self.radius = if !accepted || rho < self.rho[1] {
            self.radius / shrink
        } else if rho < self.rho[2] {
            self.radius
        } else {
            self.radius * grow
        };
        self.clamp();
        accepted
    }
}

/// State blocks measured by the block trust region, each with its own scale.
pub const STATE_BLOCKS: [std::ops::Range<usize>; 5] = [R, V, Q, W, M..M + 1];

/// Scales that make the state blocks, thrust and time dilation comparable.
/// Every block is measured with its Euclidean norm, so the trust region is
/// unchanged by rotations about the up axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustScales {
    pub state: [f64; 5],
    pub control: f64,
    pub sigma: f64,
}

impl TrustScales {
    pub fn new(inst: &ProblemInstance) -> Self {
        let c = &inst.constants;
        let norm = |a: &[f64; 3]| a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let pos = norm(&inst.x0.r_i).max(norm(&inst.xf.r_i)).max(1.0);
        let vel = norm(&inst.x0.v_i).max(norm(&inst.xf.v_i)).max(1.0);
        let omega = c.omega_max.max(norm(&inst.x0.w_b));
        let mass = (inst.x0.m - c.m_dry).max(1e-3);
        Self { state: [pos, vel, 1.0, omega, mass], control: c.trust_thrust_scale, sigma: c.tf_max }
    }

    fn block_step(&self, a: &Trajectory, b: &Trajectory, node: usize) -> f64 {
        let (xa, xb) = (a.state_array(node), b.state_array(node));
        STATE_BLOCKS
            .iter()
            .zip(self.state)
            .map(|(block, scale)| block.clone().map(|k| (xa[k] - xb[k]).powi(2)).sum::<f64>().sqrt() / scale)
            .fold(0.0, f64::max)
    }

    /// Scaled step between two trajectories: the largest scaled block change
    /// over all nodes plus the scaled change in time dilation.
    pub fn deviation(&self, a: &Trajectory, b: &Trajectory) -> f64 {
        let worst = (0..a.len().min(b.len())).map(|i| self.block_step(a, b, i)).fold(0.0, f64::max);
        worst + (a.sigma - b.sigma).abs() / self.sigma
    }
}

/// Variable layout of an assembled subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemLayout {
    pub n_nodes: usize,
    pub x: usize,
    pub u: usize,
    pub sigma: usize,
    pub v: usize,
    /// Row range of every kept catalog row, indexed by catalog position.
    pub catalog_rows: Vec<Option<Range<usize>>>,
    /// Row ranges by block kind, for counting.
    pub dynamics_rows: usize,
    pub boundary_rows: usize,
    pub trust_rows: usize,
}

impl SubproblemLayout {
    pub fn state(&self, node: usize, k: usize) -> usize {
        self.x + node * NX + k
    }

    pub fn control(&self, node: usize, k: usize) -> usize {
        self.u + node * NU + k
    }
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    pub program: ConeProgram,
    pub layout: SubproblemLayout,
}

/// Builds the convex subproblem about `reference`.
///
/// Dynamics are linearized equalities with a free virtual control; boundary
/// conditions and every kept inequality are softened with nonnegative slacks
/// that carry the same weights as the exact penalty, so the subproblem is
/// always feasible and its objective is the linearized penalty `L`. With
/// `tight = None` every catalog row is kept; otherwise only flagged rows plus
/// the mass lower bound.
pub fn assemble_subproblem(
    reference: &Trajectory,
    segments: &[LinearizedSegment],
    tight: Option<&TightSet>,
    tr: &TrustRegion,
    inst: &ProblemInstance,
    cfg: &PenaltyConfig,
) -> Result<Subproblem> {
    let consts = &inst.constants;
    let n = consts.n_nodes;
    let catalog = inst.catalog();
    if let Some(t) = tight {
        t.check_width(&catalog)?;
    }
    if segments.len() + 1 != n || reference.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} segments for a {}-node reference",
            segments.len(),
            reference.len()
        )));
    }

    let mut p = ConeProgram::default();
    let x0 = p.c.len();
    for i in 0..n {
        for k in 0..NX {
            p.add_var(format!("x{i}_{k}"));
        }
    }
    let u0 = p.c.len();
    for i in 0..n {
        for k in 0..NU {
            p.add_var(format!("u{i}_{k}"));
        }
    }
    let sigma = p.add_var("sigma");
    let v0 = p.c.len();
    for i in 0..n - 1 {
        for k in 0..NX {
            p.add_var(format!("v{i}_{k}"));
        }
    }
    let xv = |i: usize, k: usize| x0 + i * NX + k;
    let uv = |i: usize, k: usize| u0 + i * NU + k;

    p.c[xv(n - 1, M)] = -1.0;

    // Linearized dynamics with virtual control.
    let mut dynamics_rows = 0;
    for (i, seg) in segments.iter().enumerate() {
        let mut rows = Vec::with_capacity(NX);
        for r in 0..NX {
            let mut e = Affine::var(xv(i + 1, r)).term(v0 + i * NX + r, -1.0).plus(-seg.w_d[r]);
            for c in 0..NX {
                e = e.term(xv(i, c), -seg.a_d[(r, c)]);
            }
            for c in 0..NU {
                e = e.term(uv(i, c), -seg.b_minus[(r, c)]).term(uv(i + 1, c), -seg.b_plus[(r, c)]);
            }
            rows.push(e.term(sigma, -seg.s_d[r]));
        }
        dynamics_rows += p.push_cone(Cone::Zero, &rows).len();
    }

    // Block norm epigraphs of the virtual control.
    for i in 0..n - 1 {
        for (b, block) in STATE_BLOCKS.iter().enumerate() {
            let t = p.add_var(format!("tv{i}_{b}"));
            p.c[t] = cfg.lambda;
            let mut rows = vec![Affine::var(t)];
            rows.extend(block.clone().map(|r| Affine::var(v0 + i * NX + r)));
            p.push_cone(Cone::Soc, &rows);
        }
    }

    // Soft boundary conditions, one epigraph per block.
    let mut boundary_rows = 0;
    let bcs = boundary_conditions(inst);
    for (g, group) in boundary_groups(&bcs).iter().enumerate() {
        let t = p.add_var(format!("tb{g}"));
        p.c[t] = cfg.lambda_bc;
        let mut rows = vec![Affine::var(t)];
        for &i in group {
            let row = &bcs[i];
            let node = match row.node {
                BoundaryNode::Initial => 0,
                BoundaryNode::Final => n - 1,
            };
            rows.push(Affine::var(xv(node, row.component)).plus(-row.target));
        }
        boundary_rows += p.push_cone(Cone::Soc, &rows).len();
    }

    // Inequality rows.
    let tan_gs = inst.gamma_gs.tan();
    let tilt_bound = 0.5 * (1.0 - inst.theta_max.cos());
    let cos_gimbal = consts.delta_max.cos();
    let mut catalog_rows = vec![None; catalog.width()];
    for (idx, row) in catalog.rows().enumerate() {
        let keep = row.kind == ConstraintKind::MassLb || tight.map_or(true, |t| t.bits[idx]);
        if !keep {
            continue;
        }
        let i = row.node;
        let s = p.add_var(format!("s{idx}"));
        p.c[s] = if row.convex { cfg.tau } else { cfg.lambda_ncvx };
        let slack_row = p.push_cone(Cone::NonNeg, &[Affine::var(s)]);
        let range = match row.kind {
            ConstraintKind::MassLb => {
                p.push_cone(Cone::NonNeg, &[Affine::var(xv(i, M)).term(s, 1.0).plus(-consts.m_dry)])
            }
            ConstraintKind::Glideslope => p.push_cone(
                Cone::Soc,
                &[
                    Affine::var(xv(i, R.start)).term(s, 1.0),
                    Affine::default().term(xv(i, R.start + 1), tan_gs),
                    Affine::default().term(xv(i, R.start + 2), tan_gs),
                ],
            ),
            ConstraintKind::Tilt => p.push_cone(
                Cone::Soc,
                &[
                    Affine::default().term(s, 0.5).plus(tilt_bound),
                    Affine::var(xv(i, Q.start + 2)),
                    Affine::var(xv(i, Q.start + 3)),
                ],
            ),
            ConstraintKind::OmegaMax => p.push_cone(
                Cone::Soc,
                &[
                    Affine::var(s).plus(consts.omega_max),
                    Affine::var(xv(i, W.start)),
                    Affine::var(xv(i, W.start + 1)),
                    Affine::var(xv(i, W.start + 2)),
                ],
            ),
            ConstraintKind::ThrustLb => {
                let ubar = Vector3::from(reference.controls[i].thrust_b);
                let dir = if ubar.norm() > 1e-9 { ubar / ubar.norm() } else { Vector3::x() };
                let mut e = Affine::var(s).plus(-consts.t_min);
                for k in 0..NU {
                    e = e.term(uv(i, k), dir[k]);
                }
                p.push_cone(Cone::NonNeg, &[e])
            }
            ConstraintKind::ThrustUb => p.push_cone(
                Cone::Soc,
                &[
                    Affine::var(s).plus(consts.t_max),
                    Affine::var(uv(i, 0)),
                    Affine::var(uv(i, 1)),
                    Affine::var(uv(i, 2)),
                ],
            ),
            ConstraintKind::Gimbal => p.push_cone(
                Cone::Soc,
                &[
                    Affine::default().term(uv(i, 0), 1.0 / cos_gimbal).term(s, 1.0 / cos_gimbal),
                    Affine::var(uv(i, 0)),
                    Affine::var(uv(i, 1)),
                    Affine::var(uv(i, 2)),
                ],
            ),
        };
        debug_assert_eq!(slack_row.end, range.start);
        catalog_rows[idx] = Some(range);
    }

    // Trust region about the reference.
    let mut trust_rows = 0;
    match tr.norm {
        TrustNorm::Two => {
            for i in 0..n {
                let xbar = reference.state_array(i);
                let ubar = reference.controls[i].thrust_b;
                let mut rows = vec![Affine::constant(tr.radius)];
                rows.extend((0..NX).map(|k| Affine::var(xv(i, k)).plus(-xbar[k])));
                trust_rows += p.push_cone(Cone::Soc, &rows).len();
                let mut rows = vec![Affine::constant(tr.radius)];
                rows.extend((0..NU).map(|k| Affine::var(uv(i, k)).plus(-ubar[k])));
                trust_rows += p.push_cone(Cone::Soc, &rows).len();
            }
            trust_rows += p
                .push_cone(
                    Cone::NonNeg,
                    &[
                        Affine::constant(tr.radius + reference.sigma).term(sigma, -1.0),
                        Affine::var(sigma).plus(tr.radius - reference.sigma),
                    ],
                )
                .len();
        }
        TrustNorm::Block => {
            // per node: max scaled state block + scaled thrust step + scaled sigma step <= r
            let scales = TrustScales::new(inst);
            let es = p.add_var("tr_sigma");
            let rows = [
                Affine::var(es).term(sigma, -1.0 / scales.sigma).plus(reference.sigma / scales.sigma),
                Affine::var(es).term(sigma, 1.0 / scales.sigma).plus(-reference.sigma / scales.sigma),
            ];
            trust_rows += p.push_cone(Cone::NonNeg, &rows).len();
            for i in 0..n {
                let xbar = reference.state_array(i);
                let ubar = reference.controls[i].thrust_b;
                let ex = p.add_var(format!("tr_x{i}"));
                let eu = p.add_var(format!("tr_u{i}"));
                for (block, scale) in STATE_BLOCKS.iter().zip(scales.state) {
                    let mut rows = vec![Affine::var(ex)];
                    rows.extend(block.clone().map(|k| Affine::var(xv(i, k)).plus(-xbar[k]).scaled(1.0 / scale)));
                    trust_rows += p.push_cone(Cone::Soc, &rows).len();
                }
                let mut rows = vec![Affine::var(eu)];
                rows.extend((0..NU).map(|k| Affine::var(uv(i, k)).plus(-ubar[k]).scaled(1.0 / scales.control)));
                trust_rows += p.push_cone(Cone::Soc, &rows).len();
                let total = Affine::constant(tr.radius).term(ex, -1.0).term(eu, -1.0).term(es, -1.0);
                trust_rows += p.push_cone(Cone::NonNeg, &[total]).len();
            }
        }
    }
    p.push_cone(
        Cone::NonNeg,
        &[Affine::var(sigma).plus(-consts.sigma_min), Affine::constant(consts.tf_max).term(sigma, -1.0)],
    );

    Ok(Subproblem {
        program: p,
        layout: SubproblemLayout {
            n_nodes: n,
            x: x0,
            u: u0,
            sigma,
            v: v0,
            catalog_rows,
            dynamics_rows,
            boundary_rows,
            trust_rows,
        },
    })
}

/// Reads the trajectory out of a subproblem solution; quaternions are renormalized.
pub fn extract_trajectory(sol: &ConeSolution, layout: &SubproblemLayout) -> Trajectory {
    let n = layout.n_nodes;
    let states = (0..n)
        .map(|i| VehicleState::from_slice(&sol.z[layout.state(i, 0)..layout.state(i, 0) + NX]))
        .collect();
    let controls = (0..n)
        .map(|i| {
            let b = layout.control(i, 0);
            ControlInput::new([sol.z[b], sol.z[b + 1], sol.z[b + 2]])
        })
        .collect();
    Trajectory { states, controls, sigma: sol.z[layout.sigma] }
}

/// Cold-start guess: straight lines in position, velocity, angular velocity
/// and mass, SLERP in attitude, hover thrust along the body axis.
pub fn initial_guess(inst: &ProblemInstance) -> Trajectory {
    let c = &inst.constants;
    let n = c.n_nodes;
    let x0 = &inst.x0;
    let xf = &inst.xf;
    let g = Vector3::from(c.g_i);
    let mut states = Vec::with_capacity(n);
    let mut controls = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let lerp3 = |a: &[f64; 3], b: &[f64; 3]| [0, 1, 2].map(|k| (1.0 - t) * a[k] + t * b[k]);
        let q = slerp(&x0.q_bi, &xf.q_bi, t);
        let m = (1.0 - t) * x0.m + t * c.m_dry;
        let thrust = dcm_body_from_inertial(&q) * (-m * g);
        states.push(VehicleState {
            r_i: lerp3(&x0.r_i, &xf.r_i),
            v_i: lerp3(&x0.v_i, &xf.v_i),
            q_bi: q,
            w_b: lerp3(&x0.w_b, &xf.w_b),
            m,
        });
        controls.push(ControlInput::new([thrust.x, thrust.y, thrust.z]));
    }
    Trajectory { states, controls, sigma: 0.5 * c.tf_max }
}

/// Largest violations of the full problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub max_defect: f64,
    pub max_boundary: f64,
    pub max_violation: f64,
}

impl Feasibility {
    pub fn within(&self, tol: f64) -> bool {
        self.max_defect <= tol && self.max_boundary <= tol && self.max_violation <= tol
    }
}

pub fn feasibility(traj: &Trajectory, inst: &ProblemInstance) -> Result<Feasibility> {
    let consts = &inst.constants;
    let max_defect = defect_vectors(traj, consts)?.iter().map(|d| block_norm_sum(d.as_slice())).fold(0.0, f64::max);
    let max_boundary =
        boundary_residuals(&boundary_conditions(inst), traj).iter().map(|r| r.abs()).fold(0.0, f64::max);
    let max_violation = inst.catalog().evaluate(traj, inst).iter().fold(0.0f64, |a, &g| a.max(g));
    Ok(Feasibility { max_defect, max_boundary, max_violation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScvxStatus {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Penalty at the reference.
    pub j: f64,
    /// Penalty at the candidate.
    pub j_candidate: f64,
    /// Linearized penalty at the subproblem optimum.
    pub l: f64,
    pub delta_j: f64,
    pub delta_l: f64,
    pub rho: f64,
    /// Radius used for this subproblem.
    pub radius: f64,
    pub accepted: bool,
    /// Rows kept in the subproblem.
    pub kept_rows: usize,
    /// Fraction of predicted bits that changed, when predictions drive the loop.
    pub tau_r: Option<f64>,
    pub solver_iterations: u32,
    /// Rows tight or violated at the candidate.
    pub tight: TightSet,
    /// Scaled step size between reference and candidate.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScvxReport {
    pub status: ScvxStatus,
    pub iterates: Vec<IterationRecord>,
    pub solution: Trajectory,
    pub cost: f64,
    pub penalty: f64,
    pub feasibility: Feasibility,
    pub binding_count: Option<usize>,
    pub wall_time_s: f64,
    /// Set when a failed predictor forced a cold restart.
    #[serde(default)]
    pub fell_back: bool,
}

impl ScvxReport {
    pub fn iterations(&self) -> usize {
        self.iterates.len()
    }

    /// Tight sets of the accepted iterations, in order.
    pub fn accepted_tight_sets(&self) -> Vec<TightSet> {
        self.iterates.iter().filter(|r| r.accepted).map(|r| r.tight.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScvxConfig {
    /// Defaults to the uniform weight from the problem constants.
    pub penalty: Option<PenaltyConfig>,
    /// Directory receiving each subproblem in the sparse text format.
    pub trace_dir: Option<PathBuf>,
}

impl ScvxConfig {
    pub fn penalty_for(&self, inst: &ProblemInstance) -> PenaltyConfig {
        self.penalty.unwrap_or_else(|| PenaltyConfig::uniform(inst.constants.lambda))
    }
}

/// Which catalog rows enter the next subproblem.
#[derive(Debug, Clone, Default)]
pub struct RowChoice {
    /// `None` keeps every row.
    pub rows: Option<TightSet>,
    /// Fraction of changed predictions, switching to the modified radius rule.
    pub tau_r: Option<f64>,
}

/// Hook that decides the kept rows each iteration.
pub trait RowPolicy {
    /// Called before every subproblem with the 1-based iteration number and
    /// the catalog residuals at the current reference.
    fn choose(&mut self, iteration: usize, reference_residuals: &[f64]) -> Result<RowChoice>;

    /// Called after a rejected step with the residuals at the rejected candidate.
    fn rejected(&mut self, _candidate_residuals: &[f64]) {}
}

/// Keeps every row; plain SCvx.
pub struct FullRows;

impl RowPolicy for FullRows {
    fn choose(&mut self, _: usize, _: &[f64]) -> Result<RowChoice> {
        Ok(RowChoice::default())
    }
}

/// Runs SCvx with all constraints from `init`.
pub fn scvx(inst: &ProblemInstance, init: &Trajectory, cfg: &ScvxConfig, tr: TrustRegion) -> Result<ScvxReport> {
    run(inst, init, cfg, tr, &mut FullRows)
}

fn ratio(delta_j: f64, delta_l: f64) -> f64 {
    if delta_l > 1e-12 {
        delta_j / delta_l
    } else if delta_j >= -1e-12 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

/// The SCvx outer loop, parameterized by the row policy.
pub fn run(
    inst: &ProblemInstance,
    init: &Trajectory,
    cfg: &ScvxConfig,
    mut tr: TrustRegion,
    policy: &mut dyn RowPolicy,
) -> Result<ScvxReport> {
    let start = Instant::now();
    inst.validate()?;
    let consts = &inst.constants;
    let penalty = cfg.penalty_for(inst);
    penalty.validate()?;
    if init.len() != consts.n_nodes || init.controls.len() != consts.n_nodes {
        return Err(Error::ShapeMismatch(format!("initial guess has {} nodes, expected {}", init.len(), consts.n_nodes)));
    }
    let catalog: ConstraintCatalog = inst.catalog();
    if let Some(dir) = &cfg.trace_dir {
        std::fs::create_dir_all(dir)?;
    }

    let scales = TrustScales::new(inst);
    let mut reference = init.clone();
    let mut j_ref = penalty_cost(&reference, inst, &penalty)?;
    let mut segments = discretize(&reference, consts)?;
    let mut ref_residuals = catalog.evaluate(&reference, inst);
    let mut iterates = Vec::new();
    let mut rejections = 0;
    let mut status = ScvxStatus::MaxIter;
    let mut result: Option<Trajectory> = None;

    for k in 1..=consts.iter_max {
        let wrap = |e: Error| Error::SubproblemFailure { iteration: k, source: Box::new(e) };
        let choice = policy.choose(k, &ref_residuals)?;
        let sub = assemble_subproblem(&reference, &segments, choice.rows.as_ref(), &tr, inst, &penalty)?;
        if let Some(dir) = &cfg.trace_dir {
            std::fs::write(dir.join(format!("subproblem_{k:02}.txt")), sub.program.to_text())?;
        }
        let sol = conic::solve(&sub.program, consts.solver_tol, consts.solver_maxit).map_err(wrap)?;
        if !sol.is_usable() {
            return Err(wrap(Error::NotOptimal(format!("{:?}", sol.status))));
        }
        let candidate = extract_trajectory(&sol, &sub.layout);
        let j_cand = penalty_cost(&candidate, inst, &penalty).map_err(wrap)?;
        let l = sol.objective;
        let delta_j = j_ref - j_cand;
        let delta_l = j_ref - l;
        let rho = ratio(delta_j, delta_l);
        let cand_residuals = catalog.evaluate(&candidate, inst);
        let radius = tr.radius;

        let threshold = consts.eps_abs + consts.eps_rel * j_ref.abs();
        let deviation = scales.deviation(&reference, &candidate);
        let short_step = rho >= tr.rho[0] && deviation <= consts.eps_abs && {
            let f = feasibility(&candidate, inst)?;
            f.max_defect <= consts.exit_residual_tol && f.max_boundary <= consts.exit_residual_tol
        };
        let small_change = delta_j.abs() <= threshold || short_step;
        let accepted = match choice.tau_r {
            Some(tau_r) if tau_r > 0.0 => tr.update_tscvx(rho, tau_r),
            Some(_) if rho < tr.rho[0] => {
                // With no predicted change the modified rule cannot contract on
                // rejection; fall back to the plain contraction.
                tr.update(rho)
            }
            Some(tau_r) => tr.update_tscvx(rho, tau_r),
            None => tr.update(rho),
        };
        iterates.push(IterationRecord {
            iteration: k,
            j: j_ref,
            j_candidate: j_cand,
            l,
            delta_j,
            delta_l,
            rho,
            radius,
            accepted,
            kept_rows: sub.layout.catalog_rows.iter().filter(|r| r.is_some()).count(),
            tau_r: choice.tau_r,
            solver_iterations: sol.iters,
            tight: TightSet::from_residuals(&cand_residuals, k),
            deviation,
        });
        log::debug!(
            "iter {k}: J {j_ref:.6} -> {j_cand:.6}, L {l:.6}, rho {rho:.3}, r {radius:.4}, {}",
            if accepted { "accept" } else { "reject" }
        );

        if small_change {
            let best = if j_cand <= j_ref { &candidate } else { &reference };
            if feasibility(best, inst)?.within(consts.feas_tol) {
                status = ScvxStatus::Converged;
                result = Some(best.clone());
                break;
            }
        }

        if accepted {
            rejections = 0;
            reference = candidate;
            j_ref = j_cand;
            ref_residuals = cand_residuals;
            if k < consts.iter_max {
                segments = discretize(&reference, consts).map_err(wrap)?;
            }
        } else {
            policy.rejected(&cand_residuals);
            rejections += 1;
            if rejections > consts.max_rejections {
                status = ScvxStatus::Diverged;
                break;
            }
        }
    }

    let solution = result.unwrap_or(reference);
    let feas = feasibility(&solution, inst)?;
    let terms = penalty_terms(&solution, inst, &penalty)?;
    let mut report = ScvxReport {
        status,
        iterates,
        cost: terms.cost,
        penalty: terms.total(),
        feasibility: feas,
        solution,
        binding_count: None,
        wall_time_s: 0.0,
        fell_back: false,
    };
    if status == ScvxStatus::Converged {
        report.binding_count = Some(binding_diagnostic(&report, inst)?.0);
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Counts binding constraints at a converged solution: the boundary rows
/// (always binding) plus every catalog row within the activation tolerance.
/// The flag reports whether the count reaches `n_u (N - 1)`.
pub fn binding_diagnostic(report: &ScvxReport, inst: &ProblemInstance) -> Result<(usize, bool)> {
    if report.status != ScvxStatus::Converged {
        return Err(Error::NotConverged);
    }
    let residuals = inst.catalog().evaluate(&report.solution, inst);
    let active = TightSet::from_residuals(&residuals, 0).count();
    let count = boundary_conditions(inst).len() + active;
    Ok((count, count >= NU * (inst.constants.n_nodes - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(radius: f64) -> TrustRegion {
        TrustRegion::new(radius, &ProblemInstance::nominal())
    }

    #[test]
    fn radius_rule_cases() {
        let mut tr = region(1.0);
        assert!(tr.update(0.05));
        assert_eq!(tr.radius, 0.5);
        let mut tr = region(1.0);
        assert!(tr.update(0.4));
        assert_eq!(tr.radius, 1.0);
        let mut tr = region(1.0);
        assert!(tr.update(0.8));
        assert_eq!(tr.radius, 2.0);
        let mut tr = region(8.0);
        tr.update(0.8);
        assert_eq!(tr.radius, 10.0);
        let mut tr = region(1.0);
        assert!(!tr.update(-0.2));
        assert_eq!(tr.radius, 0.5);
        let mut tr = region(0.0015);
        tr.update(-0.2);
        assert_eq!(tr.radius, 0.001);
    }

    #[test]
    fn modified_rule_exponents() {
        let mut tr = region(1.0);
        tr.update_tscvx(0.05, 0.0);
        assert_eq!(tr.radius, 1.0);
        let mut tr = region(1.0);
        tr.update_tscvx(0.8, 0.0);
        assert_eq!(tr.radius, 2.0);
        let mut tr = region(1.0);
        tr.update_tscvx(0.8, 1.0);
        assert_eq!(tr.radius, 1.0);
        let mut tr = region(1.0);
        tr.update_tscvx(0.05, 1.0);
        assert_eq!(tr.radius, 0.5);
    }

    #[test]
    fn ratio_edge_cases() {
        assert_eq!(ratio(0.5, 1.0), 0.5);
        assert_eq!(ratio(0.0, 0.0), 1.0);
        assert_eq!(ratio(-1.0, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn penalty_of_feasible_point_is_cost() {
        let inst = ProblemInstance::nominal();
        let guess = initial_guess(&inst);
        let cfg = PenaltyConfig::uniform(0.0);
        let j = penalty_cost(&guess, &inst, &PenaltyConfig { lambda: 1e-300, ..cfg }).unwrap();
        assert!((j - cost(&guess)).abs() < 1e-9);
    }
}
