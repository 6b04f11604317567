//! Training data: parameter sampling, labeling by SCvx, rotation
//! augmentation about the up axis, splits, standardization and files.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::Trajectory;
use crate::error::{Error, Result};
use crate::problem::{ControlInput, ProblemConstants, ProblemInstance, TightSet, VehicleState};
use crate::rotation::{about_up, conjugate_about_up, normalize, rotate3};
use crate::scvx::{initial_guess, scvx, ScvxConfig, ScvxStatus, TrustRegion};
use crate::warmstart::transformer::Standardizer;
use crate::warmstart::{ParamVector, SolutionGuess};

pub const FORMAT_VERSION: u32 = 1;

/// Rotation angles (degrees) applied to every base sample.
pub const ROTATION_ANGLES: [f64; 8] = [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    /// Id of the unrotated sample this one derives from.
    pub base_id: u64,
    pub angle_deg: f64,
    pub params: ParamVector,
    /// Tight set after every accepted SCvx iteration.
    pub tight_sets: Vec<TightSet>,
    pub solution: Option<SolutionGuess>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Sample {
    pub fn usable_for_training(&self) -> bool {
        self.converged && self.solution.is_some() && !self.tight_sets.is_empty()
    }

    /// The tight set of the returned solution.
    pub fn final_tight(&self) -> Option<&TightSet> {
        self.tight_sets.last()
    }
}

/// Uniform sampling box for the problem parameters. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRanges {
    pub gamma_gs_deg: [f64; 2],
    pub theta_max_deg: [f64; 2],
    pub r_up: [f64; 2],
    /// East and north positions; the paper samples only the positive quadrant.
    pub r_lateral: [f64; 2],
    pub v_up: [f64; 2],
    pub v_lateral: [f64; 2],
    /// Range of each quaternion component before normalization. The scalar
    /// part has its own range.
    pub q_scalar: [f64; 2],
    pub q_vector: [f64; 2],
    pub w_up_deg: [f64; 2],
    pub w_lateral_deg: [f64; 2],
    pub m0: [f64; 2],
}

impl SamplingRanges {
    /// The full ranges of the published dataset. Many draws are infeasible
    /// (for instance `m0` below the dry mass) and get dropped.
    pub fn paper() -> Self {
        Self {
            gamma_gs_deg: [0.0, 90.0],
            theta_max_deg: [0.0, 359.4],
            r_up: [0.003, 9.997],
            r_lateral: [0.0, 13.83],
            v_up: [-1.998, -0.001],
            v_lateral: [-2.779, 2.779],
            q_scalar: [-0.996, 1.0],
            q_vector: [-1.0, 1.0],
            w_up_deg: [-89.98, 89.70],
            w_lateral_deg: [-123.49, 123.49],
            m0: [0.003, 3.0],
        }
    }

    /// A compact box around the nominal scenario where cold SCvx converges
    /// reliably; used for laptop-sized datasets.
    pub fn desk() -> Self {
        Self {
            gamma_gs_deg: [10.0, 30.0],
            theta_max_deg: [60.0, 120.0],
            r_up: [3.0, 6.0],
            r_lateral: [0.0, 3.0],
            v_up: [-1.5, -0.5],
            v_lateral: [-0.6, 0.6],
            q_scalar: [0.95, 1.0],
            q_vector: [-0.1, 0.1],
            w_up_deg: [-5.0, 5.0],
            w_lateral_deg: [-5.0, 5.0],
            m0: [2.6, 3.0],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            _ => Err(Error::Invalid(format!("unknown sampling preset {name:?} (expected paper or desk)"))),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// One uniform draw; the quaternion is normalized after sampling its components.
pub fn sample_params(rng: &mut ChaCha8Rng, ranges: &SamplingRanges) -> ParamVector {
    let mut p = [0.0; ParamVector::WIDTH];
    p[0] = draw(rng, ranges.r_up);
    p[1] = draw(rng, ranges.r_lateral);
    p[2] = draw(rng, ranges.r_lateral);
    p[3] = draw(rng, ranges.v_up);
    p[4] = draw(rng, ranges.v_lateral);
    p[5] = draw(rng, ranges.v_lateral);
    let q = normalize(&[
        draw(rng, ranges.q_scalar),
        draw(rng, ranges.q_vector),
        draw(rng, ranges.q_vector),
        draw(rng, ranges.q_vector),
    ]);
    p[6..10].copy_from_slice(&q);
    p[10] = draw(rng, ranges.w_up_deg).to_radians();
    p[11] = draw(rng, ranges.w_lateral_deg).to_radians();
    p[12] = draw(rng, ranges.w_lateral_deg).to_radians();
    p[13] = draw(rng, ranges.m0);
    p[14] = draw(rng, ranges.theta_max_deg).to_radians();
    p[15] = draw(rng, ranges.gamma_gs_deg).to_radians();
    ParamVector(p)
}

fn rotate_state(rot: &nalgebra::Matrix3<f64>, s: &VehicleState) -> VehicleState {
    VehicleState {
        r_i: rotate3(rot, &s.r_i),
        v_i: rotate3(rot, &s.v_i),
        q_bi: conjugate_about_up(&s.q_bi, rot),
        w_b: rotate3(rot, &s.w_b),
        m: s.m,
    }
}

pub fn rotate_params(p: &ParamVector, phi_deg: f64) -> ParamVector {
    let rot = about_up(phi_deg.to_radians());
    let mut out = p.0;
    let s = rotate_state(&rot, &VehicleState::from_slice(&p.0[..14]));
    out[..14].copy_from_slice(&s.to_array());
    ParamVector(out)
}

/// Rotates states and thrusts about the up axis. Body-frame vectors turn
/// with the conjugated attitude.
pub fn rotate_trajectory(t: &Trajectory, phi_deg: f64) -> Trajectory {
    let rot = about_up(phi_deg.to_radians());
    Trajectory {
        states: t.states.iter().map(|s| rotate_state(&rot, s)).collect(),
        controls: t.controls.iter().map(|u| ControlInput::new(rotate3(&rot, &u.thrust_b))).collect(),
        sigma: t.sigma,
    }
}

pub fn rotate_instance(inst: &ProblemInstance, phi_deg: f64) -> ProblemInstance {
    let rot = about_up(phi_deg.to_radians());
    let mut out = inst.clone();
    out.x0 = rotate_state(&rot, &inst.x0);
    out
}

fn rotate_guess(g: &SolutionGuess, phi_deg: f64) -> SolutionGuess {
    let rot = about_up(phi_deg.to_radians());
    let mut v = g.0.clone();
    let n = g.n_nodes();
    for chunk in v[..n * SolutionGuess::PER_NODE].chunks_exact_mut(SolutionGuess::PER_NODE) {
        let s = rotate_state(&rot, &VehicleState::from_slice(&chunk[..14]));
        chunk[..14].copy_from_slice(&s.to_array());
        let t = rotate3(&rot, &[chunk[14], chunk[15], chunk[16]]);
        chunk[14..17].copy_from_slice(&t);
    }
    SolutionGuess(v)
}

/// Rotates parameters and solution by `phi_deg` about the up axis; tight
/// sets are copied since every constraint is symmetric about that axis.
/// Zero degrees returns an exact copy.
pub fn rotate_sample(s: &Sample, phi_deg: f64) -> Sample {
    if phi_deg == 0.0 {
        return s.clone();
    }
    Sample {
        params: rotate_params(&s.params, phi_deg),
        solution: s.solution.as_ref().map(|g| rotate_guess(g, phi_deg)),
        angle_deg: (s.angle_deg + phi_deg).rem_euclid(360.0),
        ..s.clone()
    }
}

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub catalog_hash: u32,
    pub catalog_width: usize,
    pub n_nodes: usize,
    pub seed: u64,
    pub preset: String,
    /// Parameter standardization fitted on the training split.
    #[serde(default)]
    pub standardization: Option<Standardizer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub base_count: usize,
    pub seed: u64,
    pub preset: String,
    pub ranges: SamplingRanges,
    pub angles: Vec<f64>,
    pub constants: ProblemConstants,
}

impl GenConfig {
    pub fn new(base_count: usize, seed: u64, preset: &str) -> Result<Self> {
        Ok(Self {
            base_count,
            seed,
            preset: preset.to_string(),
            ranges: SamplingRanges::preset(preset)?,
            angles: ROTATION_ANGLES.to_vec(),
            constants: ProblemConstants::default(),
        })
    }
}

/// Outcome of labeling one base sample.
#[derive(Debug, Clone)]
pub struct Labeled {
    pub sample: Sample,
    pub wall_time_s: f64,
}

/// Solves one instance cold and packages the labels.
pub fn label(id: u64, params: ParamVector, constants: &ProblemConstants) -> Result<Labeled> {
    let inst = params.to_instance(constants);
    inst.validate()?;
    let start = Instant::now();
    let report = scvx(&inst, &initial_guess(&inst), &ScvxConfig::default(), TrustRegion::cold(&inst))?;
    let converged = report.status == ScvxStatus::Converged;
    let mut tight_sets = report.accepted_tight_sets();
    if converged {
        let residuals = inst.catalog().evaluate(&report.solution, &inst);
        tight_sets.push(TightSet::from_residuals(&residuals, report.iterations()));
    }
    Ok(Labeled {
        sample: Sample {
            id,
            base_id: id,
            angle_deg: 0.0,
            params,
            tight_sets,
            solution: Some(SolutionGuess::from_trajectory(&report.solution)),
            converged,
            iterations: report.iterations(),
            split: None,
        },
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Statistics of a generation run that are not part of the dataset file.
#[derive(Debug, Clone, Default)]
pub struct GenStats {
    pub dropped: usize,
    pub not_converged: usize,
    /// `(base id, iterations, wall time)` per labeled base sample.
    pub timings: Vec<(u64, usize, f64)>,
}

/// Samples, labels and augments `base_count` instances. Each base sample
/// draws from its own generator seeded by `(seed, index)`, so the output
/// does not depend on thread scheduling. Samples whose instance is invalid
/// or whose solve errors are dropped; non-converged ones are kept and flagged.
pub fn generate(cfg: &GenConfig) -> (Dataset, GenStats) {
    let stride = cfg.angles.len().max(1) as u64;
    let labeled: Vec<(u64, Result<Labeled>)> = (0..cfg.base_count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i);
            let params = sample_params(&mut rng, &cfg.ranges);
            (i, label(i * stride, params, &cfg.constants))
        })
        .collect();
    let mut stats = GenStats::default();
    let mut samples = Vec::new();
    for (i, result) in labeled {
        match result {
            Ok(l) => {
                if !l.sample.converged {
                    stats.not_converged += 1;
                }
                stats.timings.push((l.sample.id, l.sample.iterations, l.wall_time_s));
                for (a, &phi) in cfg.angles.iter().enumerate() {
                    let mut s = rotate_sample(&l.sample, phi);
                    s.id = l.sample.id + a as u64;
                    samples.push(s);
                }
            }
            Err(e) => {
                log::warn!("base sample {i} dropped: {e}");
                stats.dropped += 1;
            }
        }
    }
    let catalog = crate::problem::ConstraintCatalog::new(cfg.constants.n_nodes);
    let header = DatasetHeader {
        version: FORMAT_VERSION,
        catalog_hash: catalog.hash(),
        catalog_width: catalog.width(),
        n_nodes: cfg.constants.n_nodes,
        seed: cfg.seed,
        preset: cfg.preset.clone(),
        standardization: None,
    };
    (Dataset { header, samples }, stats)
}

impl Dataset {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        writeln!(out)?;
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Parses a JSON-lines dataset; errors name the offending line.
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, first) = lines.next().ok_or(Error::EmptyDataset)?;
        let header: DatasetHeader = serde_json::from_str(&first?)
            .map_err(|e| Error::Invalid(format!("dataset line 1: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Invalid(format!("dataset version {} is not supported", header.version)));
        }
        let mut samples = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample =
                serde_json::from_str(&line).map_err(|e| Error::Invalid(format!("dataset line {}: {e}", i + 1)))?;
            for t in &s.tight_sets {
                if t.len() != header.catalog_width {
                    return Err(Error::InconsistentCatalog { expected: header.catalog_width, got: t.len() });
                }
            }
            if let Some(g) = &s.solution {
                if g.0.len() != SolutionGuess::width(header.n_nodes) {
                    return Err(Error::Invalid(format!("dataset line {}: solution width {}", i + 1, g.0.len())));
                }
            }
            samples.push(s);
        }
        Ok(Self { header, samples })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn with_split(&self, split: Split) -> Vec<Sample> {
        self.samples.iter().filter(|s| s.split == Some(split)).cloned().collect()
    }

    /// Replaces the samples by every rotation of the unrotated ones. Rotated
    /// ids are `base_id + angle index`; generation spaces base ids by the
    /// number of angles to leave room for them.
    pub fn augment(&mut self, angles: &[f64]) {
        let bases: Vec<Sample> = self.samples.iter().filter(|s| s.angle_deg == 0.0).cloned().collect();
        self.samples = bases
            .iter()
            .flat_map(|b| {
                angles.iter().enumerate().map(move |(a, &phi)| {
                    let mut s = rotate_sample(b, phi);
                    s.id = b.base_id + a as u64;
                    s
                })
            })
            .collect();
    }
}

/// Tags samples train or test and fits the parameter standardization on the
/// training samples. By default whole rotation groups go to one side; with
/// `per_sample` the split ignores groups, as in the paper.
pub fn split_and_standardize(ds: &mut Dataset, ratio: f64, seed: u64, per_sample: bool) -> Result<()> {
    if ds.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if per_sample {
        let mut order: Vec<usize> = (0..ds.samples.len()).collect();
        order.shuffle(&mut rng);
        let n_train = (ratio * order.len() as f64).round() as usize;
        for (rank, &i) in order.iter().enumerate() {
            ds.samples[i].split = Some(if rank < n_train { Split::Train } else { Split::Test });
        }
    } else {
        let mut groups: Vec<u64> = ds.samples.iter().map(|s| s.base_id).collect();
        groups.sort_unstable();
        groups.dedup();
        groups.shuffle(&mut rng);
        let n_train = (ratio * groups.len() as f64).round() as usize;
        let train: std::collections::HashSet<u64> = groups[..n_train].iter().copied().collect();
        for s in &mut ds.samples {
            s.split = Some(if train.contains(&s.base_id) { Split::Train } else { Split::Test });
        }
    }
    let rows: Vec<Vec<f64>> = ds
        .samples
        .iter()
        .filter(|s| s.split == Some(Split::Train))
        .map(|s| s.params.0.to_vec())
        .collect();
    ds.header.standardization = Some(Standardizer::fit(&rows)?);
    Ok(())
}

fn split_name(s: &Sample) -> &'static str {
    match s.split {
        Some(Split::Train) => "train",
        Some(Split::Test) => "test",
        None => "none",
    }
}

/// Writes the trainer's two CSV files into `dir`:
///
/// * `constraints.csv`: `split,id,base_id,` the 16 parameters, `k`, then one
///   `t{j}` column per catalog row, one line per recorded tight set;
/// * `solutions.csv`: `split,id,base_id,` the 16 parameters, then `z{j}` for
///   the `17 N + 1` solution entries.
///
/// Parameters are raw; `standardization.json` holds the training-split
/// statistics. Non-converged samples are skipped. Returns the line counts.
pub fn export_training(ds: &Dataset, dir: impl AsRef<Path>) -> Result<(usize, usize)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let names = ParamVector::NAMES.join(",");
    let mut cons = std::io::BufWriter::new(std::fs::File::create(dir.join("constraints.csv"))?);
    let mut sols = std::io::BufWriter::new(std::fs::File::create(dir.join("solutions.csv"))?);
    let width = ds.header.catalog_width;
    let tcols: Vec<String> = (0..width).map(|j| format!("t{j}")).collect();
    writeln!(cons, "split,id,base_id,{names},k,{}", tcols.join(","))?;
    let zcols: Vec<String> = (0..SolutionGuess::width(ds.header.n_nodes)).map(|j| format!("z{j}")).collect();
    writeln!(sols, "split,id,base_id,{names},{}", zcols.join(","))?;
    let (mut nc, mut ns) = (0, 0);
    for s in ds.samples.iter().filter(|s| s.usable_for_training()) {
        let prefix = format!(
            "{},{},{},{}",
            split_name(s),
            s.id,
            s.base_id,
            s.params.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        );
        for t in &s.tight_sets {
            let bits: Vec<&str> = t.bits.iter().map(|&b| if b { "1" } else { "0" }).collect();
            writeln!(cons, "{prefix},{},{}", t.iteration, bits.join(","))?;
            nc += 1;
        }
        if let Some(g) = &s.solution {
            writeln!(sols, "{prefix},{}", g.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))?;
            ns += 1;
        }
    }
    cons.flush()?;
    sols.flush()?;
    std::fs::write(dir.join("standardization.json"), serde_json::to_string_pretty(&ds.header.standardization)?)?;
    Ok((nc, ns))
}
