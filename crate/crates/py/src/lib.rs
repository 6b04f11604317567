//! Python bindings: problem instances, cold and warm-started solves,
//! dataset generation, predictors, transformer inference and weights checks.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use tscvx::bench::{run_bench, BenchOptions, Method};
use tscvx::dataset::{export_training, generate, split_and_standardize, GenConfig, Split, ROTATION_ANGLES};
use tscvx::scvx::{initial_guess, scvx, ScvxConfig, ScvxStatus, TrustRegion};
use tscvx::warmstart::transformer::{self, verify_weights};
use tscvx::warmstart::{tscvx as run_tscvx, NnPredictor, ParamVector};

create_exception!(tscvx, TscvxError, PyException, "Raised for any error reported by the library.");

fn err(e: tscvx::Error) -> PyErr {
    TscvxError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    TscvxError::new_err(e.to_string())
}

fn params(values: Vec<f64>) -> PyResult<ParamVector> {
    let arr: [f64; ParamVector::WIDTH] = values.try_into().map_err(|v: Vec<f64>| {
        TscvxError::new_err(format!("expected {} parameters, got {}", ParamVector::WIDTH, v.len()))
    })?;
    Ok(ParamVector(arr))
}

/// A landing scenario with its problem constants.
#[pyclass(name = "ProblemInstance")]
struct PyInstance(tscvx::problem::ProblemInstance);

#[pymethods]
impl PyInstance {
    /// The built-in reference scenario.
    #[staticmethod]
    fn nominal() -> Self {
        Self(tscvx::problem::ProblemInstance::nominal())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inst = tscvx::problem::ProblemInstance::from_json(text).map_err(err)?;
        inst.validate().map_err(err)?;
        Ok(Self(inst))
    }

    /// Instance described by the 16 sampled parameters, with default constants.
    #[staticmethod]
    fn from_params(values: Vec<f64>) -> PyResult<Self> {
        let inst = params(values)?.to_instance(&Default::default());
        inst.validate().map_err(err)?;
        Ok(Self(inst))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    fn params(&self) -> Vec<f64> {
        ParamVector::from_instance(&self.0).0.to_vec()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.0.constants.n_nodes
    }

    #[getter]
    fn catalog_width(&self) -> usize {
        self.0.catalog().width()
    }

    fn __repr__(&self) -> String {
        format!("ProblemInstance(r0={:?}, m0={})", self.0.x0.r_i, self.0.x0.m)
    }
}

/// Result of an SCvx or T-SCvx solve.
#[pyclass(name = "SolveReport")]
struct PyReport(tscvx::scvx::ScvxReport);

#[pymethods]
impl PyReport {
    #[getter]
    fn status(&self) -> String {
        format!("{:?}", self.0.status)
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.status == ScvxStatus::Converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations()
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.0.cost
    }

    #[getter]
    fn wall_time_s(&self) -> f64 {
        self.0.wall_time_s
    }

    #[getter]
    fn fell_back(&self) -> bool {
        self.0.fell_back
    }

    /// `(max defect, max boundary residual, max inequality violation)`.
    #[getter]
    fn residuals(&self) -> (f64, f64, f64) {
        let f = &self.0.feasibility;
        (f.max_defect, f.max_boundary, f.max_violation)
    }

    /// Time dilation of the returned trajectory.
    #[getter]
    fn sigma(&self) -> f64 {
        self.0.solution.sigma
    }

    /// One row `[r, v, q, w, m]` per node.
    fn states(&self) -> Vec<Vec<f64>> {
        (0..self.0.solution.len()).map(|i| self.0.solution.state_array(i).to_vec()).collect()
    }

    /// Body-frame thrust per node.
    fn thrust(&self) -> Vec<[f64; 3]> {
        self.0.solution.controls.iter().map(|c| c.thrust_b).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("SolveReport(status={:?}, iterations={}, cost={})", self.0.status, self.0.iterations(), self.0.cost)
    }
}

/// Labeled samples: parameters, tight sets per accepted iteration and solutions.
#[pyclass(name = "Dataset")]
struct PyDataset(tscvx::dataset::Dataset);

#[pymethods]
impl PyDataset {
    /// Samples `bases` instances, solves them cold and adds the rotated copies.
    #[staticmethod]
    #[pyo3(signature = (bases, seed, preset = "desk", augment = true))]
    fn generate(py: Python<'_>, bases: usize, seed: u64, preset: &str, augment: bool) -> PyResult<Self> {
        let mut cfg = GenConfig::new(bases, seed, preset).map_err(err)?;
        if !augment {
            cfg.angles = vec![0.0];
        }
        Ok(Self(py.detach(|| generate(&cfg).0)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        tscvx::dataset::Dataset::load(path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.samples.len()
    }

    /// Rebuilds the rotated copies of the base samples.
    #[pyo3(signature = (angles = None))]
    fn augment(&mut self, angles: Option<Vec<f64>>) {
        self.0.augment(angles.as_deref().unwrap_or(&ROTATION_ANGLES));
    }

    /// Tags samples train/test, keeping rotation groups together unless `per_sample`.
    #[pyo3(signature = (ratio = 0.8, seed = 0, per_sample = false))]
    fn split(&mut self, ratio: f64, seed: u64, per_sample: bool) -> PyResult<()> {
        split_and_standardize(&mut self.0, ratio, seed, per_sample).map_err(err)
    }

    /// Writes the trainer CSV files; returns the constraint and solution row counts.
    fn export_training(&self, dir: PathBuf) -> PyResult<(usize, usize)> {
        export_training(&self.0, dir).map_err(err)
    }

    /// Parameter vectors, optionally restricted to `"train"` or `"test"`.
    #[pyo3(signature = (split = None))]
    fn params(&self, split: Option<&str>) -> PyResult<Vec<Vec<f64>>> {
        let want = match split {
            None => None,
            Some("train") => Some(Split::Train),
            Some("test") => Some(Split::Test),
            Some(other) => return Err(TscvxError::new_err(format!("unknown split {other:?}"))),
        };
        Ok(self.0.samples.iter().filter(|s| want.is_none() || s.split == want).map(|s| s.params.0.to_vec()).collect())
    }

    /// Final tight bits of every converged sample.
    fn final_tight(&self) -> Vec<Vec<bool>> {
        self.0.samples.iter().filter_map(|s| s.final_tight()).map(|t| t.bits.clone()).collect()
    }

    /// Benchmarks `methods` (`"kdtree"`, `"interp"`) and returns the report as JSON.
    #[pyo3(signature = (methods, solve_instances = 0))]
    fn bench(&self, py: Python<'_>, methods: Vec<String>, solve_instances: usize) -> PyResult<String> {
        let methods = methods
            .iter()
            .map(|m| match m.as_str() {
                "kdtree" => Ok(Method::Kdtree),
                "interp" => Ok(Method::Interp),
                other => Err(TscvxError::new_err(format!("unknown method {other:?}"))),
            })
            .collect::<PyResult<Vec<_>>>()?;
        let opts = BenchOptions { solve_instances, ..Default::default() };
        let report = py.detach(|| run_bench(&self.0, &methods, &opts)).map_err(err)?;
        serde_json::to_string(&report).map_err(json_err)
    }
}

/// Warm-start predictor: a lookup over a dataset or the transformer networks.
#[pyclass(name = "Predictor")]
struct PyPredictor(Box<dyn tscvx::warmstart::Predictor + Send + Sync>);

fn training(ds: &PyDataset) -> Vec<tscvx::dataset::Sample> {
    let train = ds.0.with_split(Split::Train);
    if train.is_empty() {
        ds.0.samples.clone()
    } else {
        train
    }
}

#[pymethods]
impl PyPredictor {
    /// Nearest neighbor over the training split (or every sample when untagged).
    #[staticmethod]
    fn kdtree(dataset: &PyDataset) -> PyResult<Self> {
        Ok(Self(Box::new(tscvx::warmstart::KdPredictor::fit(&training(dataset)).map_err(err)?)))
    }

    /// Inverse-distance weighting over 11 neighbors in PCA space.
    #[staticmethod]
    fn interp(dataset: &PyDataset) -> PyResult<Self> {
        Ok(Self(Box::new(tscvx::warmstart::InterpPredictor::fit(&training(dataset)).map_err(err)?)))
    }

    #[staticmethod]
    #[pyo3(signature = (constraint = None, solution = None))]
    fn weights(constraint: Option<PathBuf>, solution: Option<PathBuf>) -> PyResult<Self> {
        Ok(Self(Box::new(NnPredictor::load(constraint.as_deref(), solution.as_deref()).map_err(err)?)))
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    fn predict_tight(&self, params_: Vec<f64>, iteration: usize) -> PyResult<Vec<bool>> {
        Ok(self.0.predict_tight(&params(params_)?, iteration).map_err(err)?.bits)
    }

    fn predict_solution(&self, params_: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.0.predict_solution(&params(params_)?).map_err(err)?.0)
    }
}

/// Solves cold with SCvx, or with T-SCvx when a predictor is given.
#[pyfunction]
#[pyo3(signature = (instance, predictor = None))]
fn solve(py: Python<'_>, instance: &PyInstance, predictor: Option<&PyPredictor>) -> PyResult<PyReport> {
    let inst = &instance.0;
    let cfg = ScvxConfig::default();
    let report = py.detach(|| match predictor {
        None => scvx(inst, &initial_guess(inst), &cfg, TrustRegion::cold(inst)),
        Some(p) => run_tscvx(inst, p.0.as_ref(), &cfg),
    });
    Ok(PyReport(report.map_err(err)?))
}

/// A transformer network loaded from a weights file.
#[pyclass(name = "Transformer")]
struct PyTransformer(transformer::Transformer);

#[pymethods]
impl PyTransformer {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        transformer::Transformer::load(path).map(Self).map_err(err)
    }

    #[getter]
    fn input_width(&self) -> usize {
        self.0.input_width()
    }

    #[getter]
    fn output_width(&self) -> usize {
        self.0.output_width()
    }

    /// Raw input row, standardized by the stored statistics; returns the outputs.
    fn predict(&self, input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.predict(&input).map_err(err)
    }

    /// Already standardized tokens, one row each; returns one output row per token.
    fn forward(&self, tokens: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let width = tokens.first().map_or(0, Vec::len);
        if tokens.iter().any(|t| t.len() != width) {
            return Err(TscvxError::new_err("tokens must all have the same width"));
        }
        let m = DMatrix::from_row_slice(tokens.len(), width, &tokens.concat());
        let out = self.0.forward_raw(&m).map_err(err)?;
        Ok(out.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

/// Verifies checksums and shape of a weights file, plus parity against a
/// fixture when given. Returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (path, fixture = None))]
fn verify(path: PathBuf, fixture: Option<PathBuf>) -> PyResult<String> {
    let summary = verify_weights(path, fixture.as_deref()).map_err(err)?;
    serde_json::to_string(&summary).map_err(json_err)
}

#[pymodule(name = "tscvx")]
fn tscvx_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TscvxError", m.py().get_type::<TscvxError>())?;
    m.add("PARAM_WIDTH", ParamVector::WIDTH)?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPredictor>()?;
    m.add_class::<PyTransformer>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
