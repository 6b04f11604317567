//! The 6-DoF minimum-fuel powered descent guidance problem: constants,
//! instances, the state/control types, and the catalog of inequality rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretization::Trajectory;
use crate::error::{Error, Result};
use crate::rotation::{self, Quat};

/// State vector layout: `[r(3) v(3) q(4) w(3) m(1)]`.
pub const NX: usize = 14;
pub const NU: usize = 3;
pub const R: std::ops::Range<usize> = 0..3;
pub const V: std::ops::Range<usize> = 3..6;
pub const Q: std::ops::Range<usize> = 6..10;
pub const W: std::ops::Range<usize> = 10..13;
pub const M: usize = 13;

/// Tolerance for calling a row tight: `|g| <= ACTIVATION_TOL` in nondimensional units.
pub const ACTIVATION_TOL: f64 = 1e-4;

pub(crate) mod degrees {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rad: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(rad.to_degrees())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(f64::deserialize(d)?.to_radians())
    }

    pub mod vec3 {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(rad: &[f64; 3], s: S) -> Result<S::Ok, S::Error> {
            rad.map(f64::to_degrees).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 3], D::Error> {
            Ok(<[f64; 3]>::deserialize(d)?.map(f64::to_radians))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Inertial position [U_L].
    pub r_i: [f64; 3],
    /// Inertial velocity [U_L/U_T].
    pub v_i: [f64; 3],
    /// Attitude quaternion, scalar first.
    pub q_bi: Quat,
    /// Body angular velocity, rad/U_T internally and deg/U_T on disk.
    #[serde(rename = "w_b_deg", with = "degrees::vec3")]
    pub w_b: [f64; 3],
    /// Mass [U_M].
    pub m: f64,
}

impl VehicleState {
    pub fn to_array(&self) -> [f64; NX] {
        let mut x = [0.0; NX];
        x[R].copy_from_slice(&self.r_i);
        x[V].copy_from_slice(&self.v_i);
        x[Q].copy_from_slice(&self.q_bi);
        x[W].copy_from_slice(&self.w_b);
        x[M] = self.m;
        x
    }

    pub fn from_slice(x: &[f64]) -> Self {
        assert!(x.len() >= NX, "state slice too short");
        Self {
            r_i: [x[0], x[1], x[2]],
            v_i: [x[3], x[4], x[5]],
            q_bi: [x[6], x[7], x[8], x[9]],
            w_b: [x[10], x[11], x[12]],
            m: x[13],
        }
    }

    pub fn normalized(mut self) -> Self {
        self.q_bi = rotation::normalize(&self.q_bi);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Body-frame thrust [U_M U_L / U_T^2].
    pub thrust_b: [f64; 3],
}

impl ControlInput {
    pub fn new(thrust_b: [f64; 3]) -> Self {
        Self { thrust_b }
    }

    pub fn norm(&self) -> f64 {
        norm3(&self.thrust_b)
    }

    pub fn is_finite(&self) -> bool {
        self.thrust_b.iter().all(|t| t.is_finite())
    }
}

/// Terminal boundary values; the final mass is free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalState {
    pub r_i: [f64; 3],
    pub v_i: [f64; 3],
    pub q_bi: Quat,
    #[serde(rename = "w_b_deg", with = "degrees::vec3")]
    pub w_b: [f64; 3],
}

impl Default for TerminalState {
    fn default() -> Self {
        Self {
            r_i: [0.0; 3],
            v_i: [-0.1, 0.0, 0.0],
            q_bi: rotation::IDENTITY,
            w_b: [0.0; 3],
        }
    }
}

/// Fixed vehicle, environment and algorithm constants. Defaults are the
/// nondimensional Mars landing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemConstants {
    pub g_i: [f64; 3],
    /// Atmospheric density [U_M/U_L^3]. Only the lumped drag coefficient enters the dynamics.
    pub rho_atm: f64,
    /// Diagonal of the body inertia [U_M U_L^2].
    pub j_b: [f64; 3],
    pub p_amb: f64,
    pub a_noz: f64,
    pub r_cp_b: [f64; 3],
    pub r_t_b: [f64; 3],
    /// Lumped aerodynamic coefficient `rho * S_A * C_A`.
    pub drag_coeff: f64,
    pub isp: f64,
    #[serde(rename = "omega_max_deg", with = "degrees")]
    pub omega_max: f64,
    #[serde(rename = "delta_max_deg", with = "degrees")]
    pub delta_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Listed with the vehicle data but no angle-of-attack row is enforced.
    pub v_alpha: f64,
    pub m_dry: f64,
    pub n_nodes: usize,
    /// Number of discretization segments.
    pub n_sub: usize,
    /// Fixed RK4 steps per segment.
    pub rk4_substeps: usize,
    pub iter_max: usize,
    pub lambda: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub beta_sh: f64,
    pub beta_gr: f64,
    pub eta_full_init: f64,
    pub eta_reduced_init: f64,
    pub eta_lb: f64,
    pub eta_ub: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub feas_tol: f64,
    pub solver_maxit: u32,
    pub solver_tol: f64,
    pub tf_max: f64,
    pub sigma_min: f64,
    /// Constant mass-depletion offset.
    pub beta_mdot: f64,
    pub max_rejections: usize,
    /// Defect and boundary tolerance for stopping on a short step.
    pub exit_residual_tol: f64,
    /// Thrust change counted as one unit of trust-region step.
    pub trust_thrust_scale: f64,
}

impl Default for ProblemConstants {
    fn default() -> Self {
        Self {
            g_i: [-1.0, 0.0, 0.0],
            rho_atm: 0.020,
            j_b: [0.001, 0.01, 0.01],
            p_amb: 0.1,
            a_noz: 0.5,
            r_cp_b: [0.0; 3],
            r_t_b: [-0.01, 0.0, 0.0],
            drag_coeff: 0.2,
            isp: 30.0,
            omega_max: 90f64.to_radians(),
            delta_max: 20f64.to_radians(),
            t_min: 0.3,
            t_max: 5.0,
            v_alpha: 2.0,
            m_dry: 2.0,
            n_nodes: 50,
            n_sub: 49,
            rk4_substeps: 15,
            iter_max: 20,
            lambda: 500.0,
            rho0: 0.0,
            rho1: 0.1,
            rho2: 0.7,
            beta_sh: 2.0,
            beta_gr: 2.0,
            eta_full_init: 2.0,
            eta_reduced_init: 0.01,
            eta_lb: 0.001,
            eta_ub: 10.0,
            eps_abs: 0.1,
            eps_rel: 0.001,
            feas_tol: 0.5,
            solver_maxit: 1000,
            solver_tol: 1e-7,
            tf_max: 10.0,
            sigma_min: 0.1,
            beta_mdot: 0.0,
            max_rejections: 10,
            exit_residual_tol: 1e-2,
            trust_thrust_scale: 0.5,
        }
    }
}

impl ProblemConstants {
    /// Fuel consumption rate `1 / (I_sp g0)` with `g0 = |g_I|`.
    pub fn alpha_mdot(&self) -> f64 {
        1.0 / (self.isp * norm3(&self.g_i))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invalid(msg.to_string()));
        if !(self.rho0 >= 0.0 && self.rho0 < self.rho1 && self.rho1 < self.rho2 && self.rho2 < 1.0) {
            return bad("trust-region ratios must satisfy 0 <= rho0 < rho1 < rho2 < 1");
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max) {
            return bad("thrust bounds must satisfy 0 < t_min < t_max");
        }
        if !(self.eta_lb < self.eta_full_init && self.eta_full_init <= self.eta_ub) {
            return bad("eta_lb < eta_full_init <= eta_ub violated");
        }
        if !(self.eta_lb < self.eta_reduced_init && self.eta_reduced_init <= self.eta_ub) {
            return bad("eta_lb < eta_reduced_init <= eta_ub violated");
        }
        if self.n_nodes < 2 {
            return bad("need at least two nodes");
        }
        if self.rk4_substeps == 0 {
            return bad("rk4_substeps must be positive");
        }
        if self.beta_sh <= 1.0 || self.beta_gr <= 1.0 {
            return bad("trust-region factors must exceed 1");
        }
        if self.j_b.iter().any(|&j| j <= 0.0) || self.m_dry <= 0.0 {
            return bad("inertia and dry mass must be positive");
        }
        if !(self.trust_thrust_scale > 0.0 && self.exit_residual_tol >= 0.0) {
            return bad("trust_thrust_scale must be positive and exit_residual_tol nonnegative");
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.tf_max) {
            return bad("need 0 < sigma_min < tf_max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    #[serde(rename = "gamma_gs_deg", with = "degrees")]
    pub gamma_gs: f64,
    #[serde(rename = "theta_max_deg", with = "degrees")]
    pub theta_max: f64,
    pub x0: VehicleState,
    #[serde(default)]
    pub xf: TerminalState,
    #[serde(default)]
    pub constants: ProblemConstants,
}

impl ProblemInstance {
    /// Reference landing scenario used by the examples and the acceptance suite.
    pub fn nominal() -> Self {
        Self {
            gamma_gs: 20f64.to_radians(),
            theta_max: 90f64.to_radians(),
            x0: VehicleState {
                r_i: [4.0, 2.0, 1.0],
                v_i: [-1.0, -0.5, -0.2],
                q_bi: rotation::IDENTITY,
                w_b: [0.0; 3],
                m: 3.0,
            },
            xf: TerminalState::default(),
            constants: ProblemConstants::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(self.gamma_gs > 0.0 && self.gamma_gs <= half_pi + 1e-12) {
            return Err(Error::Invalid("gamma_gs must lie in (0, 90] degrees".into()));
        }
        if !(self.theta_max > 0.0 && self.theta_max < 2.0 * std::f64::consts::PI) {
            return Err(Error::Invalid("theta_max must lie in (0, 360) degrees".into()));
        }
        if !(self.x0.m > self.constants.m_dry) {
            return Err(Error::Invalid("initial mass must exceed the dry mass".into()));
        }
        let x = self.x0.to_array();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("initial state has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut inst: Self = serde_json::from_str(text)?;
        inst.x0 = inst.x0.normalized();
        inst.xf.q_bi = rotation::normalize(&inst.xf.q_bi);
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn catalog(&self) -> ConstraintCatalog {
        ConstraintCatalog::new(self.constants.n_nodes)
    }
}

/// Inequality row kinds, in their per-node order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    MassLb,
    Glideslope,
    Tilt,
    OmegaMax,
    ThrustLb,
    ThrustUb,
    Gimbal,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 7] = [
        ConstraintKind::MassLb,
        ConstraintKind::Glideslope,
        ConstraintKind::Tilt,
        ConstraintKind::OmegaMax,
        ConstraintKind::ThrustLb,
        ConstraintKind::ThrustUb,
        ConstraintKind::Gimbal,
    ];

    /// Only the thrust lower bound is nonconvex; it is linearized with a buffer.
    pub fn is_convex(self) -> bool {
        self != ConstraintKind::ThrustLb
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub kind: ConstraintKind,
    /// Zero-based node index.
    pub node: usize,
    pub convex: bool,
}

/// Node-major ordering of every discretized inequality row:
/// `index = node * kinds.len() + kind_position`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCatalog {
    pub kinds: Vec<ConstraintKind>,
    pub n_nodes: usize,
}

impl ConstraintCatalog {
    pub fn new(n_nodes: usize) -> Self {
        Self::with_kinds(ConstraintKind::ALL.to_vec(), n_nodes)
    }

    pub fn with_kinds(kinds: Vec<ConstraintKind>, n_nodes: usize) -> Self {
        Self { kinds, n_nodes }
    }

    pub fn per_node(&self) -> usize {
        self.kinds.len()
    }

    pub fn width(&self) -> usize {
        self.kinds.len() * self.n_nodes
    }

    pub fn index(&self, node: usize, kind: ConstraintKind) -> Option<usize> {
        let pos = self.kinds.iter().position(|&k| k == kind)?;
        (node < self.n_nodes).then_some(node * self.kinds.len() + pos)
    }

    pub fn row(&self, index: usize) -> ConstraintRow {
        let kind = self.kinds[index % self.kinds.len()];
        ConstraintRow { kind, node: index / self.kinds.len(), convex: kind.is_convex() }
    }

    pub fn rows(&self) -> impl Iterator<Item = ConstraintRow> + '_ {
        (0..self.width()).map(|i| self.row(i))
    }

    /// CRC32 of the canonical JSON form; stored in dataset headers.
    pub fn hash(&self) -> u32 {
        let text = serde_json::to_string(self).expect("catalog serializes");
        crc32fast::hash(text.as_bytes())
    }

    /// Residuals (`g <= 0` satisfied) of every row over a whole trajectory.
    pub fn evaluate(&self, traj: &Trajectory, inst: &ProblemInstance) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for node in 0..self.n_nodes {
            let all = evaluate_constraints(&traj.states[node], &traj.controls[node], inst);
            for &kind in &self.kinds {
                out.push(all[kind_slot(kind)]);
            }
        }
        out
    }
}

fn kind_slot(kind: ConstraintKind) -> usize {
    ConstraintKind::ALL.iter().position(|&k| k == kind).unwrap()
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Residual of each inequality kind at one node, in `ConstraintKind::ALL` order.
pub fn evaluate_constraints(
    state: &VehicleState,
    ctrl: &ControlInput,
    inst: &ProblemInstance,
) -> [f64; 7] {
    let c = &inst.constants;
    let r = &state.r_i;
    let q = &state.q_bi;
    let lateral = (r[1] * r[1] + r[2] * r[2]).sqrt();
    let tilt = (q[2] * q[2] + q[3] * q[3]).sqrt();
    let thrust = ctrl.norm();
    [
        c.m_dry - state.m,
        inst.gamma_gs.tan() * lateral - r[0],
        inst.theta_max.cos() - 1.0 + 2.0 * tilt,
        norm3(&state.w_b) - c.omega_max,
        c.t_min - thrust,
        thrust - c.t_max,
        c.delta_max.cos() * thrust - ctrl.thrust_b[0],
    ]
}

/// Binary activity vector over the catalog rows, tagged with the SCvx
/// iteration it describes. Serialized as a `0`/`1` string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TightSet {
    #[serde(with = "bitstring")]
    pub bits: Vec<bool>,
    pub iteration: usize,
}

impl TightSet {
    pub fn new(bits: Vec<bool>, iteration: usize) -> Self {
        Self { bits, iteration }
    }

    /// Rows whose residual is at least `-ACTIVATION_TOL` (tight or violated).
    pub fn from_residuals(residuals: &[f64], iteration: usize) -> Self {
        Self::new(residuals.iter().map(|&g| g >= -ACTIVATION_TOL).collect(), iteration)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn check_width(&self, catalog: &ConstraintCatalog) -> Result<()> {
        if self.bits.len() != catalog.width() {
            return Err(Error::InconsistentCatalog { expected: catalog.width(), got: self.bits.len() });
        }
        Ok(())
    }

    /// Fraction of positions that differ; zero when both are empty.
    pub fn changed_fraction(&self, other: &TightSet) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        let changed = self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count();
        changed as f64 / self.bits.len() as f64
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

mod bitstring {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let text: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(D::Error::custom(format!("invalid bit {other:?}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryNode {
    Initial,
    Final,
}

/// One scalar equality `x[node][component] = target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub node: BoundaryNode,
    pub component: usize,
    pub target: f64,
}

/// Initial mass, position, velocity and rate; terminal position, velocity,
/// attitude and rate. The initial attitude and final mass are free.
pub fn boundary_conditions(inst: &ProblemInstance) -> Vec<BoundaryRow> {
    let x0 = inst.x0.to_array();
    let mut rows = Vec::with_capacity(23);
    let initial = std::iter::once(M).chain(R).chain(V).chain(W);
    for component in initial {
        rows.push(BoundaryRow { node: BoundaryNode::Initial, component, target: x0[component] });
    }
    let xf = &inst.xf;
    let mut terminal = [0.0; NX];
    terminal[R].copy_from_slice(&xf.r_i);
    terminal[V].copy_from_slice(&xf.v_i);
    terminal[Q].copy_from_slice(&xf.q_bi);
    terminal[W].copy_from_slice(&xf.w_b);
    for component in R.chain(V).chain(Q).chain(W) {
        rows.push(BoundaryRow { node: BoundaryNode::Final, component, target: terminal[component] });
    }
    rows
}

/// Signed residual of each boundary row on a trajectory.
pub fn boundary_residuals(rows: &[BoundaryRow], traj: &Trajectory) -> Vec<f64> {
    let last = traj.states.len() - 1;
    rows.iter()
        .map(|row| {
            let node = match row.node {
                BoundaryNode::Initial => 0,
                BoundaryNode::Final => last,
            };
            traj.states[node].to_array()[row.component] - row.target
        })
        .collect()
}

/// Minimum-fuel objective: the negated final mass.
pub fn cost(traj: &Trajectory) -> f64 {
    -traj.states.last().expect("non-empty trajectory").m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upright(m: f64) -> VehicleState {
        VehicleState { r_i: [0.0; 3], v_i: [0.0; 3], q_bi: rotation::IDENTITY, w_b: [0.0; 3], m }
    }

    #[test]
    fn thrust_lower_bound_tight_at_t_min() {
        let inst = ProblemInstance::nominal();
        let g = evaluate_constraints(&upright(2.5), &ControlInput::new([0.3, 0.0, 0.0]), &inst);
        assert_eq!(g[4], 0.0);
    }

    #[test]
    fn mass_bound_tight_at_dry_mass() {
        let inst = ProblemInstance::nominal();
        let g = evaluate_constraints(&upright(2.0), &ControlInput::new([1.0, 0.0, 0.0]), &inst);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn glideslope_directly_above_pad() {
        for gamma in [5.0f64, 30.0, 60.0, 89.0] {
            let mut inst = ProblemInstance::nominal();
            inst.gamma_gs = gamma.to_radians();
            let mut s = upright(2.5);
            s.r_i = [1.0, 0.0, 0.0];
            let g = evaluate_constraints(&s, &ControlInput::new([1.0, 0.0, 0.0]), &inst);
            assert_eq!(g[1], -1.0);
        }
    }

    #[test]
    fn catalog_layout() {
        let cat = ConstraintCatalog::new(50);
        assert_eq!(cat.width(), 350);
        assert_eq!(cat.index(3, ConstraintKind::ThrustUb), Some(3 * 7 + 5));
        let row = cat.row(3 * 7 + 5);
        assert_eq!((row.kind, row.node, row.convex), (ConstraintKind::ThrustUb, 3, true));
        assert!(!cat.row(4).convex);
        let json = serde_json::to_string(&cat).unwrap();
        let back: ConstraintCatalog = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cat);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn boundary_row_count_and_terminal_velocity() {
        let inst = ProblemInstance::nominal();
        let rows = boundary_conditions(&inst);
        let initial = rows.iter().filter(|r| r.node == BoundaryNode::Initial).count();
        // m, r, v, omega at the start; r, v, q, omega at the end
        assert_eq!((initial, rows.len() - initial), (10, 13));
        let vf: Vec<f64> = rows
            .iter()
            .filter(|r| r.node == BoundaryNode::Final && V.contains(&r.component))
            .map(|r| r.target)
            .collect();
        assert_eq!(vf, vec![-0.1, 0.0, 0.0]);
        // no initial quaternion rows
        assert!(!rows.iter().any(|r| r.node == BoundaryNode::Initial && Q.contains(&r.component)));
    }

    #[test]
    fn instance_json_roundtrip_uses_degrees() {
        let inst = ProblemInstance::nominal();
        let text = inst.to_json().unwrap();
        assert!(text.contains("\"gamma_gs_deg\": 20"));
        assert!(text.contains("\"omega_max_deg\": 90"));
        let back = ProblemInstance::from_json(&text).unwrap();
        assert!((back.gamma_gs - inst.gamma_gs).abs() < 1e-15);
        assert!((back.constants.delta_max - inst.constants.delta_max).abs() < 1e-15);
    }

    #[test]
    fn constants_validation() {
        let mut c = ProblemConstants::default();
        c.validate().unwrap();
        c.rho1 = 0.8;
        assert!(c.validate().is_err());
        let mut inst = ProblemInstance::nominal();
        inst.x0.m = 1.9;
        assert!(inst.validate().is_err());
    }
}
