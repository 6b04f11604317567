//! Learned and lookup-based warm starts, and the SCvx variant that uses them
//! to pick the initial guess and the constraint rows of each subproblem.

pub mod interp;
pub mod kdtree;
pub mod mahalanobis;
pub mod transformer;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::discretization::Trajectory;
use crate::error::{Error, Result};
use crate::problem::{ConstraintCatalog, ControlInput, ProblemInstance, VehicleState, ACTIVATION_TOL, NU, NX};
use crate::rotation;
use crate::scvx::{initial_guess, run, scvx, RowChoice, RowPolicy, ScvxConfig, ScvxReport, TrustRegion};

pub use crate::problem::TightSet;
use interp::IdwInterpolator;
use kdtree::KdTree;
use transformer::{Standardizer, Transformer};

/// Problem parameters fed to the predictors, in this order:
/// `r0 (3), v0 (3), q0 (4), w0 (3, rad), m0, theta_max (rad), gamma_gs (rad)`.
/// The constraint predictor appends the iteration number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub [f64; ParamVector::WIDTH]);

impl ParamVector {
    pub const WIDTH: usize = 16;
    pub const NAMES: [&'static str; 16] = [
        "r0_x", "r0_y", "r0_z", "v0_x", "v0_y", "v0_z", "q0_w", "q0_x", "q0_y", "q0_z", "w0_x", "w0_y", "w0_z", "m0",
        "theta_max", "gamma_gs",
    ];

    pub fn from_instance(inst: &ProblemInstance) -> Self {
        let mut p = [0.0; Self::WIDTH];
        p[..13].copy_from_slice(&inst.x0.to_array()[..13]);
        p[13] = inst.x0.m;
        p[14] = inst.theta_max;
        p[15] = inst.gamma_gs;
        Self(p)
    }

    /// Rebuilds an instance with the given constants and the default terminal state.
    pub fn to_instance(&self, constants: &crate::problem::ProblemConstants) -> ProblemInstance {
        let p = &self.0;
        ProblemInstance {
            gamma_gs: p[15],
            theta_max: p[14],
            x0: VehicleState::from_slice(&p[..NX]),
            xf: Default::default(),
            constants: constants.clone(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The 17-wide input of the constraint predictor.
    pub fn with_iteration(&self, k: usize) -> Vec<f64> {
        let mut v = self.0.to_vec();
        v.push(k as f64);
        v
    }
}

/// Flattened solution: per node 14 states then 3 thrusts, and `t_f` last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolutionGuess(pub Vec<f64>);

impl SolutionGuess {
    pub const PER_NODE: usize = NX + NU;

    pub fn width(n_nodes: usize) -> usize {
        Self::PER_NODE * n_nodes + 1
    }

    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut v = Vec::with_capacity(Self::width(traj.len()));
        for (s, u) in traj.states.iter().zip(&traj.controls) {
            v.extend_from_slice(&s.to_array());
            v.extend_from_slice(&u.thrust_b);
        }
        v.push(traj.sigma);
        Self(v)
    }

    pub fn n_nodes(&self) -> usize {
        self.0.len().saturating_sub(1) / Self::PER_NODE
    }

    /// Decodes into a trajectory for `inst`, clamping the final time to
    /// `[sigma_min, tf_max]`, masses to `[m_dry, m0]` and renormalizing
    /// quaternions (a zero quaternion becomes the identity). The guess is
    /// then shifted so the constrained boundary components match the
    /// instance: position and velocity by a cubic offset whose derivative
    /// is the velocity offset, attitude, rate and mass linearly.
    pub fn decode(&self, inst: &ProblemInstance) -> Result<Trajectory> {
        let c = &inst.constants;
        let n = c.n_nodes;
        if self.0.len() != Self::width(n) {
            return Err(Error::ShapeMismatch(format!("solution guess of width {} for {n} nodes", self.0.len())));
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::PredictorFailure("predicted solution has non-finite entries".into()));
        }
        let sigma = self.0[n * Self::PER_NODE].clamp(c.sigma_min, c.tf_max);
        let node = |i: usize| &self.0[i * Self::PER_NODE..(i + 1) * Self::PER_NODE];
        let (first, last) = (node(0), node(n - 1));
        let mut x0 = inst.x0.to_array();
        let mut xf = x0;
        xf[0..3].copy_from_slice(&inst.xf.r_i);
        xf[3..6].copy_from_slice(&inst.xf.v_i);
        xf[6..10].copy_from_slice(&inst.xf.q_bi);
        xf[10..13].copy_from_slice(&inst.xf.w_b);
        // initial attitude and final mass are free
        x0[6..10].copy_from_slice(&first[6..10]);
        xf[NX - 1] = last[NX - 1];
        let d0: Vec<f64> = (0..NX).map(|k| x0[k] - first[k]).collect();
        let df: Vec<f64> = (0..NX).map(|k| xf[k] - last[k]).collect();
        let mut states = Vec::with_capacity(n);
        let mut controls = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let chunk = node(i);
            let mut x: Vec<f64> = (0..NX).map(|k| chunk[k] + (1.0 - t) * d0[k] + t * df[k]).collect();
            // Hermite basis values and derivatives in t
            let h = [2.0 * t.powi(3) - 3.0 * t * t + 1.0, t.powi(3) - 2.0 * t * t + t, -2.0 * t.powi(3) + 3.0 * t * t, t.powi(3) - t * t];
            let dh = [6.0 * t * t - 6.0 * t, 3.0 * t * t - 4.0 * t + 1.0, -6.0 * t * t + 6.0 * t, 3.0 * t * t - 2.0 * t];
            for k in 0..3 {
                let coef = [d0[k], sigma * d0[3 + k], df[k], sigma * df[3 + k]];
                let dot = |b: &[f64; 4]| b.iter().zip(&coef).map(|(b, c)| b * c).sum::<f64>();
                x[k] = chunk[k] + dot(&h);
                x[3 + k] = chunk[3 + k] + dot(&dh) / sigma;
            }
            let mut s = VehicleState::from_slice(&x);
            s.q_bi = rotation::normalize(&s.q_bi);
            s.m = s.m.clamp(c.m_dry, inst.x0.m.max(c.m_dry));
            controls.push(ControlInput::new([chunk[NX], chunk[NX + 1], chunk[NX + 2]]));
            states.push(s);
        }
        Ok(Trajectory { states, controls, sigma })
    }
}

/// Source of initial guesses and per-iteration tight sets.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;
    fn predict_solution(&self, params: &ParamVector) -> Result<SolutionGuess>;
    /// Tight rows expected for subproblem `iteration` (1-based).
    fn predict_tight(&self, params: &ParamVector, iteration: usize) -> Result<TightSet>;
}

/// Label of a sample for a given iteration: the latest recorded set at or
/// before it, or the earliest one.
fn tight_at(sample: &Sample, iteration: usize) -> Result<&TightSet> {
    let sets = &sample.tight_sets;
    sets.iter()
        .rev()
        .find(|t| t.iteration <= iteration)
        .or_else(|| sets.first())
        .ok_or_else(|| Error::PredictorFailure(format!("sample {} has no tight sets", sample.id)))
}

fn solution_of(sample: &Sample) -> Result<&SolutionGuess> {
    sample.solution.as_ref().ok_or_else(|| Error::PredictorFailure(format!("sample {} has no solution", sample.id)))
}

fn training_rows(samples: &[Sample]) -> Result<(Vec<Sample>, Standardizer, Vec<Vec<f64>>)> {
    let usable: Vec<Sample> = samples.iter().filter(|s| s.usable_for_training()).cloned().collect();
    if usable.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let raw: Vec<Vec<f64>> = usable.iter().map(|s| s.params.0.to_vec()).collect();
    let norm = Standardizer::fit(&raw)?;
    let rows = raw.iter().map(|r| norm.apply(r)).collect();
    Ok((usable, norm, rows))
}

/// Nearest-neighbor lookup in standardized parameter space.
pub struct KdPredictor {
    samples: Vec<Sample>,
    norm: Standardizer,
    tree: KdTree,
}

impl KdPredictor {
    /// Builds over the converged samples.
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        let (samples, norm, rows) = training_rows(samples)?;
        let tree = KdTree::build(rows, samples.iter().map(|s| s.id).collect())?;
        Ok(Self { samples, norm, tree })
    }

    pub fn nearest(&self, params: &ParamVector) -> Result<&Sample> {
        let nn = self.tree.nearest(&self.norm.apply(&params.0))?;
        Ok(&self.samples[nn.index])
    }
}

impl Predictor for KdPredictor {
    fn name(&self) -> &str {
        "kdtree"
    }

    fn predict_solution(&self, params: &ParamVector) -> Result<SolutionGuess> {
        solution_of(self.nearest(params)?).cloned()
    }

    fn predict_tight(&self, params: &ParamVector, iteration: usize) -> Result<TightSet> {
        let mut t = tight_at(self.nearest(params)?, iteration)?.clone();
        t.iteration = iteration;
        Ok(t)
    }
}

/// Inverse-distance weighting over 11 neighbors in a 10-component PCA space.
pub struct InterpPredictor {
    samples: Vec<Sample>,
    norm: Standardizer,
    idw: IdwInterpolator,
}

impl InterpPredictor {
    pub const COMPONENTS: usize = 10;
    pub const NEIGHBORS: usize = 11;

    pub fn fit(samples: &[Sample]) -> Result<Self> {
        let (samples, norm, rows) = training_rows(samples)?;
        let ids = samples.iter().map(|s| s.id).collect();
        let idw = IdwInterpolator::fit(&rows, ids, Self::COMPONENTS, Self::NEIGHBORS)?;
        Ok(Self { samples, norm, idw })
    }

    /// Weighted average of the neighbors' tight bits, before thresholding.
    pub fn soft_tight(&self, params: &ParamVector, iteration: usize) -> Result<Vec<f64>> {
        let mut acc: Option<Vec<f64>> = None;
        for (i, w) in self.idw.weights(&self.norm.apply(&params.0))? {
            let bits = tight_at(&self.samples[i], iteration)?;
            let acc = acc.get_or_insert_with(|| vec![0.0; bits.len()]);
            if acc.len() != bits.len() {
                return Err(Error::InconsistentCatalog { expected: acc.len(), got: bits.len() });
            }
            for (a, &b) in acc.iter_mut().zip(&bits.bits) {
                *a += if b { w } else { 0.0 };
            }
        }
        acc.ok_or(Error::EmptyDataset)
    }
}

impl Predictor for InterpPredictor {
    fn name(&self) -> &str {
        "interp"
    }

    fn predict_solution(&self, params: &ParamVector) -> Result<SolutionGuess> {
        let mut acc: Option<Vec<f64>> = None;
        for (i, w) in self.idw.weights(&self.norm.apply(&params.0))? {
            let sol = solution_of(&self.samples[i])?;
            let acc = acc.get_or_insert_with(|| vec![0.0; sol.0.len()]);
            if acc.len() != sol.0.len() {
                return Err(Error::ShapeMismatch("stored solutions have different widths".into()));
            }
            for (a, v) in acc.iter_mut().zip(&sol.0) {
                *a += w * v;
            }
        }
        acc.map(SolutionGuess).ok_or(Error::EmptyDataset)
    }

    fn predict_tight(&self, params: &ParamVector, iteration: usize) -> Result<TightSet> {
        let soft = self.soft_tight(params, iteration)?;
        Ok(TightSet::new(soft.iter().map(|&p| p > 0.5).collect(), iteration))
    }
}

/// The two transformer networks. Either may be missing; the corresponding
/// prediction then fails and T-SCvx falls back to a cold start.
pub struct NnPredictor {
    pub constraint: Option<Transformer>,
    pub solution: Option<Transformer>,
}

impl NnPredictor {
    pub fn load(constraint: Option<&Path>, solution: Option<&Path>) -> Result<Self> {
        Ok(Self {
            constraint: constraint.map(Transformer::load).transpose()?,
            solution: solution.map(Transformer::load).transpose()?,
        })
    }

    /// Checks network widths against a problem size.
    pub fn check(&self, catalog: &ConstraintCatalog) -> Result<()> {
        if let Some(net) = &self.constraint {
            if net.input_width() != ParamVector::WIDTH + 1 || net.output_width() != catalog.width() {
                return Err(Error::ShapeMismatch(format!(
                    "constraint net maps {} -> {}, expected {} -> {}",
                    net.input_width(),
                    net.output_width(),
                    ParamVector::WIDTH + 1,
                    catalog.width()
                )));
            }
        }
        if let Some(net) = &self.solution {
            let width = SolutionGuess::width(catalog.n_nodes);
            if net.input_width() != ParamVector::WIDTH || net.output_width() != width {
                return Err(Error::ShapeMismatch(format!(
                    "solution net maps {} -> {}, expected {} -> {width}",
                    net.input_width(),
                    net.output_width(),
                    ParamVector::WIDTH
                )));
            }
        }
        Ok(())
    }
}

/// Bits from logits: set iff the sigmoid exceeds 0.5, so a zero logit is unset.
pub fn threshold_logits(logits: &[f64], iteration: usize) -> TightSet {
    TightSet::new(logits.iter().map(|&l| l > 0.0).collect(), iteration)
}

impl Predictor for NnPredictor {
    fn name(&self) -> &str {
        "nn"
    }

    fn predict_solution(&self, params: &ParamVector) -> Result<SolutionGuess> {
        let net = self.solution.as_ref().ok_or_else(|| Error::PredictorFailure("no solution network loaded".into()))?;
        Ok(SolutionGuess(net.predict(&params.0)?))
    }

    fn predict_tight(&self, params: &ParamVector, iteration: usize) -> Result<TightSet> {
        let net =
            self.constraint.as_ref().ok_or_else(|| Error::PredictorFailure("no constraint network loaded".into()))?;
        Ok(threshold_logits(&net.predict(&params.with_iteration(iteration))?, iteration))
    }
}

/// Replays a fixed solution and tight-set schedule, e.g. a recorded run.
pub struct FixedPredictor {
    pub solution: SolutionGuess,
    pub tight_sets: Vec<TightSet>,
}

impl FixedPredictor {
    pub fn from_report(report: &ScvxReport) -> Self {
        Self { solution: SolutionGuess::from_trajectory(&report.solution), tight_sets: report.accepted_tight_sets() }
    }
}

impl Predictor for FixedPredictor {
    fn name(&self) -> &str {
        "fixed"
    }

    fn predict_solution(&self, _: &ParamVector) -> Result<SolutionGuess> {
        Ok(self.solution.clone())
    }

    fn predict_tight(&self, _: &ParamVector, iteration: usize) -> Result<TightSet> {
        let sets = &self.tight_sets;
        let t = sets
            .iter()
            .rev()
            .find(|t| t.iteration <= iteration)
            .or_else(|| sets.first())
            .ok_or_else(|| Error::PredictorFailure("no tight sets recorded".into()))?;
        Ok(TightSet::new(t.bits.clone(), iteration))
    }
}

/// Row policy of T-SCvx: keeps the predicted rows plus every row that is
/// tight or violated at the reference, and every row a rejected candidate
/// violated. The modified radius rule uses the fraction of predicted bits
/// that changed since the previous iteration.
struct PredictedRows<'a> {
    predictor: &'a dyn Predictor,
    params: ParamVector,
    catalog: ConstraintCatalog,
    previous: Option<TightSet>,
    sticky: Vec<bool>,
}

impl RowPolicy for PredictedRows<'_> {
    fn choose(&mut self, iteration: usize, reference_residuals: &[f64]) -> Result<RowChoice> {
        let predicted = self.predictor.predict_tight(&self.params, iteration)?;
        predicted.check_width(&self.catalog).map_err(|e| Error::PredictorFailure(e.to_string()))?;
        let previous = self.previous.take().unwrap_or_else(|| TightSet::from_residuals(reference_residuals, 0));
        let tau_r = predicted.changed_fraction(&previous);
        let bits = predicted
            .bits
            .iter()
            .zip(reference_residuals)
            .zip(&self.sticky)
            .map(|((&p, &g), &s)| p || s || g >= -ACTIVATION_TOL)
            .collect();
        self.previous = Some(predicted);
        Ok(RowChoice { rows: Some(TightSet::new(bits, iteration)), tau_r: Some(tau_r) })
    }

    fn rejected(&mut self, candidate_residuals: &[f64]) {
        for (s, &g) in self.sticky.iter_mut().zip(candidate_residuals) {
            *s |= g >= -ACTIVATION_TOL;
        }
    }
}

/// T-SCvx: initial guess and per-iteration rows from `predictor`, radius
/// starting at the reduced-mode value. Any predictor failure falls back to
/// cold SCvx and sets `fell_back`. The reported wall time includes inference.
pub fn tscvx(inst: &ProblemInstance, predictor: &dyn Predictor, cfg: &ScvxConfig) -> Result<ScvxReport> {
    let start = Instant::now();
    let params = ParamVector::from_instance(inst);
    let catalog = inst.catalog();
    let warm = predictor.predict_solution(&params).and_then(|g| g.decode(inst)).and_then(|guess| {
        let mut policy = PredictedRows {
            predictor,
            params,
            sticky: vec![false; catalog.width()],
            catalog: catalog.clone(),
            previous: None,
        };
        run(inst, &guess, cfg, TrustRegion::warm(inst), &mut policy)
    });
    let mut report = match warm {
        Ok(r) => r,
        Err(Error::PredictorFailure(msg)) | Err(Error::ShapeMismatch(msg)) => {
            log::warn!("predictor {} failed ({msg}); solving cold", predictor.name());
            let mut r = scvx(inst, &initial_guess(inst), cfg, TrustRegion::cold(inst))?;
            r.fell_back = true;
            r
        }
        Err(e) => return Err(e),
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}
