//! Predictor benchmarks, summary statistics and allocation accounting.

use std::alloc::{GlobalAlloc, Layout, System};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::scvx::{initial_guess, scvx, ScvxConfig, ScvxStatus, TrustRegion};
use crate::warmstart::mahalanobis::{percentile, Mahalanobis};
use crate::warmstart::transformer::Standardizer;
use crate::warmstart::{tscvx, InterpPredictor, KdPredictor, NnPredictor, Predictor};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

/// System allocator that tracks live bytes and their high-water mark.
/// Install it with `#[global_allocator]` in a binary; without it the
/// counters stay at zero.
pub struct CountingAlloc;

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

/// Resets the high-water mark to the current live size and returns it.
pub fn reset_peak() -> usize {
    let now = CURRENT.load(Ordering::Relaxed);
    PEAK.store(now, Ordering::Relaxed);
    now
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Summary of a sample. Quartiles interpolate linearly between closest
/// ranks; `std` uses the unbiased `n - 1` estimator (zero for one value).
/// Whiskers reach the most extreme values within 1.5 IQR of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let q1 = percentile(values, 0.25)?;
        let q3 = percentile(values, 0.75)?;
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = values.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
        let (whisker_lo, whisker_hi) = inside.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        Ok(Self {
            n,
            mean,
            median: percentile(values, 0.5)?,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            q1,
            q3,
            whisker_lo,
            whisker_hi,
        })
    }
}

pub const BOXPLOT_HEADER: &str = "label,n,mean,median,std,min,q1,q3,max,whisker_lo,whisker_hi";

pub fn boxplot_row(label: &str, s: &Stats) -> String {
    format!(
        "{label},{},{},{},{},{},{},{},{},{},{}",
        s.n, s.mean, s.median, s.std, s.min, s.q1, s.q3, s.max, s.whisker_lo, s.whisker_hi
    )
}

/// Parses rows written by [`boxplot_row`] (header line included).
pub fn parse_boxplot(text: &str) -> Result<Vec<(String, Stats)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::Invalid(format!("box plot line {}: expected 11 fields", i + 1)));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse().map_err(|_| Error::Invalid(format!("box plot line {}: bad number {:?}", i + 1, f[k])))
        };
        let n = f[1].parse().map_err(|_| Error::Invalid(format!("box plot line {}: bad count", i + 1)))?;
        out.push((
            f[0].to_string(),
            Stats {
                n,
                mean: num(2)?,
                median: num(3)?,
                std: num(4)?,
                min: num(5)?,
                q1: num(6)?,
                q3: num(7)?,
                max: num(8)?,
                whisker_lo: num(9)?,
                whisker_hi: num(10)?,
            },
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Kdtree,
    Interp,
    Nn { constraint: Option<PathBuf>, solution: Option<PathBuf> },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Kdtree => "kdtree",
            Method::Interp => "interp",
            Method::Nn { .. } => "nn",
        }
    }

    pub fn build(&self, train: &[Sample]) -> Result<Box<dyn Predictor>> {
        Ok(match self {
            Method::Kdtree => Box::new(KdPredictor::fit(train)?),
            Method::Interp => Box::new(InterpPredictor::fit(train)?),
            Method::Nn { constraint: None, solution: None } => {
                return Err(Error::PredictorFailure("no weights files given".into()))
            }
            Method::Nn { constraint, solution } => {
                Box::new(NnPredictor::load(constraint.as_deref(), solution.as_deref())?)
            }
        })
    }
}

/// Cold versus warm-started solves on the same instances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveComparison {
    pub cold_time_s: Vec<f64>,
    pub warm_time_s: Vec<f64>,
    pub cold_iterations: Vec<usize>,
    pub warm_iterations: Vec<usize>,
    pub cold_converged: usize,
    pub warm_converged: usize,
    pub fell_back: usize,
}

impl SolveComparison {
    pub fn mean_iterations(v: &[usize]) -> f64 {
        v.iter().sum::<usize>() as f64 / v.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// Inference time per test query in milliseconds, warmup excluded.
    pub inference_ms: Vec<f64>,
    pub inference: Option<Stats>,
    pub solution_mse: Option<f64>,
    pub ood_solution_mse: Option<f64>,
    pub tight_accuracy: Option<f64>,
    /// Allocator high-water mark during one prediction, in MB.
    pub peak_mb: f64,
    pub solve: Option<SolveComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub train_samples: usize,
    pub test_samples: usize,
    pub ood_samples: usize,
    /// Accuracy of predicting every row inactive on the test labels.
    pub zeros_accuracy: f64,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub warmup: usize,
    /// Number of test instances re-solved cold and warm; zero skips solving.
    pub solve_instances: usize,
    pub ood_percentile: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { warmup: 3, solve_instances: 0, ood_percentile: 0.95 }
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

pub fn binary_accuracy(pred: &[bool], truth: &[bool]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64
}

/// Fraction of zero labels over the final tight sets of `samples`.
pub fn zeros_accuracy(samples: &[Sample]) -> f64 {
    let (zeros, total) = samples
        .iter()
        .filter_map(|s| s.final_tight())
        .fold((0usize, 0usize), |(z, t), set| (z + set.len() - set.count(), t + set.len()));
    zeros as f64 / total.max(1) as f64
}

/// Runs every method on the test split. Methods whose predictor cannot be
/// built (for example a missing weights file) are skipped with a warning.
pub fn run_bench(ds: &Dataset, methods: &[Method], opts: &BenchOptions) -> Result<BenchReport> {
    let usable = |split| -> Vec<Sample> {
        ds.samples.iter().filter(|s| s.split == Some(split) && s.usable_for_training()).cloned().collect()
    };
    let train = usable(Split::Train);
    let test = usable(Split::Test);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Invalid("benchmark needs converged train and test samples; run the split first".into()));
    }
    let norm = Standardizer::fit(&train.iter().map(|s| s.params.0.to_vec()).collect::<Vec<_>>())?;
    let mahal = Mahalanobis::fit(&train.iter().map(|s| norm.apply(&s.params.0)).collect::<Vec<_>>(), opts.ood_percentile)?;
    let ood: Vec<bool> = test.iter().map(|s| mahal.is_ood(&norm.apply(&s.params.0))).collect();
    let constants = crate::problem::ProblemConstants { n_nodes: ds.header.n_nodes, ..Default::default() };

    let mut reports = Vec::new();
    for method in methods {
        let predictor = match method.build(&train) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping {}: {e}", method.name());
                continue;
            }
        };
        let mut times = Vec::new();
        let (mut sq, mut sq_ood, mut n_ood, mut acc, mut n_acc, mut n_sol) = (0.0, 0.0, 0, 0.0, 0, 0);
        for (i, s) in test.iter().enumerate() {
            let truth = s.final_tight().expect("usable samples have tight sets");
            let start = Instant::now();
            let sol = predictor.predict_solution(&s.params);
            let tight = predictor.predict_tight(&s.params, truth.iteration);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            if i >= opts.warmup.min(test.len().saturating_sub(1)) {
                times.push(ms);
            }
            if let Ok(sol) = sol {
                let e = mse(&sol.0, &s.solution.as_ref().expect("usable").0);
                sq += e;
                n_sol += 1;
                if ood[i] {
                    sq_ood += e;
                    n_ood += 1;
                }
            }
            if let Ok(t) = tight {
                acc += binary_accuracy(&t.bits, &truth.bits);
                n_acc += 1;
            }
        }
        let before = reset_peak();
        let _ = predictor.predict_solution(&test[0].params);
        let _ = predictor.predict_tight(&test[0].params, 1);
        let peak_mb = peak_bytes().saturating_sub(before) as f64 / 1e6;

        let solve = if opts.solve_instances > 0 {
            let mut cmp = SolveComparison::default();
            for s in test.iter().filter(|s| s.angle_deg == 0.0).chain(test.iter().filter(|s| s.angle_deg != 0.0)).take(opts.solve_instances) {
                let inst = s.params.to_instance(&constants);
                let cold = scvx(&inst, &initial_guess(&inst), &ScvxConfig::default(), TrustRegion::cold(&inst))?;
                let warm = tscvx(&inst, predictor.as_ref(), &ScvxConfig::default())?;
                cmp.cold_time_s.push(cold.wall_time_s);
                cmp.warm_time_s.push(warm.wall_time_s);
                cmp.cold_iterations.push(cold.iterations());
                cmp.warm_iterations.push(warm.iterations());
                cmp.cold_converged += (cold.status == ScvxStatus::Converged) as usize;
                cmp.warm_converged += (warm.status == ScvxStatus::Converged) as usize;
                cmp.fell_back += warm.fell_back as usize;
            }
            Some(cmp)
        } else {
            None
        };

        reports.push(MethodReport {
            method: method.name().to_string(),
            inference: Stats::of(&times).ok(),
            inference_ms: times,
            solution_mse: (n_sol > 0).then(|| sq / n_sol as f64),
            ood_solution_mse: (n_ood > 0).then(|| sq_ood / n_ood as f64),
            tight_accuracy: (n_acc > 0).then(|| acc / n_acc as f64),
            peak_mb,
            solve,
        });
    }
    Ok(BenchReport {
        train_samples: train.len(),
        test_samples: test.len(),
        ood_samples: ood.iter().filter(|&&o| o).count(),
        zeros_accuracy: zeros_accuracy(&test),
        methods: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_quartiles_collapse() {
        let s = Stats::of(&[4.5]).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.std), (4.5, 4.5, 4.5, 0.0));
    }

    #[test]
    fn five_numbers_use_linear_ranks() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.whisker_lo, s.whisker_hi), (1.0, 5.0));
    }

    #[test]
    fn boxplot_csv_round_trips() {
        let s = Stats::of(&[0.3, 1.7, 2.2, 9.0, 0.01]).unwrap();
        let text = format!("{BOXPLOT_HEADER}\n{}\n", boxplot_row("scvx", &s));
        assert_eq!(parse_boxplot(&text).unwrap(), vec![("scvx".to_string(), s)]);
    }
}
