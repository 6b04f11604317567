use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tscvx::bench::{
    boxplot_row, run_bench, BenchOptions, BenchReport, CountingAlloc, Method, SolveComparison, Stats,
    BOXPLOT_HEADER,
};
use tscvx::dataset::{export_training, generate, split_and_standardize, Dataset, GenConfig, Split, ROTATION_ANGLES};
use tscvx::problem::{ConstraintCatalog, ProblemConstants, ProblemInstance};
use tscvx::scvx::{initial_guess, scvx, ScvxConfig, ScvxReport, ScvxStatus, TrustRegion};
use tscvx::warmstart::transformer::verify_weights;
use tscvx::warmstart::{tscvx, NnPredictor, ParamVector, Predictor, SolutionGuess};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

/// Exit code for a solve that ran but did not converge.
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "tscvx", version, about = "6-DoF powered descent guidance by successive convexification")]
struct Cli {
    /// Seed for sampling and splitting.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with defaults for `seed`, `threads` and `constants`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for generation (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write `report.json` and `trajectory.csv`.
    Solve {
        /// Instance JSON file.
        #[arg(required_unless_present = "nominal")]
        instance: Option<PathBuf>,
        /// Use the built-in reference scenario.
        #[arg(long, conflicts_with = "instance")]
        nominal: bool,
        #[arg(long, value_enum, default_value = "none")]
        warm: Warm,
        /// Dataset for `--warm kdtree|interp`; its training split is used when tagged.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        constraint_weights: Option<PathBuf>,
        #[arg(long)]
        solution_weights: Option<PathBuf>,
        /// Dump every subproblem in the sparse text format under `<out>/trace`.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sample, solve and label instances.
    Gen {
        #[arg(long, default_value_t = 25)]
        bases: usize,
        /// Sampling ranges: `desk` or `paper`.
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Keep only the unrotated samples.
        #[arg(long)]
        no_augment: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Rebuild the rotated copies of every base sample and tag train/test.
    Augment {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Rotation angles about the up axis in degrees.
        #[arg(long, value_delimiter = ',')]
        angles: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.8)]
        train_ratio: f64,
        /// Split individual samples instead of whole rotation groups.
        #[arg(long)]
        per_sample: bool,
    },
    /// Benchmark predictors on the test split; writes JSON and a CSV summary.
    Bench {
        dataset: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "kdtree,interp")]
        methods: Vec<MethodName>,
        #[arg(long)]
        constraint_weights: Option<PathBuf>,
        #[arg(long)]
        solution_weights: Option<PathBuf>,
        /// Test instances to re-solve cold and warm.
        #[arg(long, default_value_t = 0)]
        solve: usize,
        /// Leading timed queries to discard.
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        /// Mahalanobis percentile separating out-of-distribution test samples.
        #[arg(long, default_value_t = 0.95)]
        ood: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Quartiles and whiskers of the timing arrays in benchmark reports.
    Boxplot {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write the trainer's CSV files for a split dataset.
    ExportTraining {
        dataset: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check weights files: checksums, network shape and optional parity fixtures.
    VerifyWeights {
        #[arg(required = true)]
        weights: Vec<PathBuf>,
        /// Parity fixture; give one for all files or one per file.
        #[arg(long)]
        fixture: Vec<PathBuf>,
        /// Expected role, checked against the catalog width.
        #[arg(long, value_enum)]
        role: Option<Role>,
        #[arg(long, default_value_t = 50)]
        nodes: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Warm {
    None,
    Kdtree,
    Interp,
    Weights,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodName {
    Kdtree,
    Interp,
    Nn,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Role {
    Constraint,
    Solution,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    constants: Option<ProblemConstants>,
}

struct Settings {
    seed: u64,
    constants: Option<ProblemConstants>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => serde_json::from_str::<FileConfig>(
            &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let settings = Settings { seed: cli.seed.or(file.seed).unwrap_or(0), constants: file.constants };

    match cli.command {
        Command::Solve { instance, nominal, warm, dataset, constraint_weights, solution_weights, trace, out } => {
            let inst = if nominal {
                let mut inst = ProblemInstance::nominal();
                if let Some(c) = &settings.constants {
                    inst.constants = c.clone();
                }
                inst
            } else {
                load_instance(instance.as_deref().expect("clap enforces an instance"), &settings)?
            };
            let weights = (constraint_weights, solution_weights);
            cmd_solve(&inst, warm, dataset.as_deref(), weights, trace, &out)
        }
        Command::Gen { bases, preset, no_augment, out } => {
            cmd_gen(bases, &preset, no_augment, &out, &settings)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Augment { input, out, angles, train_ratio, per_sample } => {
            let mut ds = Dataset::load(&input).with_context(|| format!("loading {}", input.display()))?;
            ds.augment(angles.as_deref().unwrap_or(&ROTATION_ANGLES));
            split_and_standardize(&mut ds, train_ratio, settings.seed, per_sample)?;
            ds.save(&out)?;
            let train = ds.samples.iter().filter(|s| s.split == Some(Split::Train)).count();
            println!("{} samples ({train} train, {} test) -> {}", ds.samples.len(), ds.samples.len() - train, out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { dataset, methods, constraint_weights, solution_weights, solve, warmup, ood, out } => {
            let ds = Dataset::load(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            let methods: Vec<Method> = methods
                .iter()
                .map(|m| match m {
                    MethodName::Kdtree => Method::Kdtree,
                    MethodName::Interp => Method::Interp,
                    MethodName::Nn => {
                        Method::Nn { constraint: constraint_weights.clone(), solution: solution_weights.clone() }
                    }
                })
                .collect();
            let opts = BenchOptions { warmup, solve_instances: solve, ood_percentile: ood };
            let report = run_bench(&ds, &methods, &opts)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            let csv = out.with_extension("csv");
            std::fs::write(&csv, bench_csv(&report))?;
            print!("{}", bench_csv(&report));
            eprintln!("wrote {} and {}", out.display(), csv.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Boxplot { reports, out } => {
            let text = cmd_boxplot(&reports)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportTraining { dataset, out } => {
            let ds = Dataset::load(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            if ds.header.standardization.is_none() {
                bail!("{} has no train/test split; run `tscvx augment` first", dataset.display());
            }
            let (nc, ns) = export_training(&ds, &out)?;
            println!("{nc} constraint rows, {ns} solution rows -> {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyWeights { weights, fixture, role, nodes } => cmd_verify(&weights, &fixture, role, nodes),
    }
}

/// Reads an instance; problem constants from the config file fill in when
/// the instance does not carry its own.
fn load_instance(path: &Path, settings: &Settings) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let (Some(c), Some(obj)) = (&settings.constants, value.as_object_mut()) {
        if !obj.contains_key("constants") {
            obj.insert("constants".into(), serde_json::to_value(c)?);
        }
    }
    let inst = ProblemInstance::from_json(&value.to_string()).with_context(|| format!("parsing {}", path.display()))?;
    inst.validate().with_context(|| format!("invalid instance {}", path.display()))?;
    Ok(inst)
}

fn training_samples(path: &Path) -> Result<Vec<tscvx::dataset::Sample>> {
    let ds = Dataset::load(path).with_context(|| format!("loading {}", path.display()))?;
    let train = ds.with_split(Split::Train);
    Ok(if train.is_empty() { ds.samples } else { train })
}

fn cmd_solve(
    inst: &ProblemInstance,
    warm: Warm,
    dataset: Option<&Path>,
    (constraint, solution): (Option<PathBuf>, Option<PathBuf>),
    trace: bool,
    out: &Path,
) -> Result<ExitCode> {
    std::fs::create_dir_all(out)?;
    let cfg = ScvxConfig { trace_dir: trace.then(|| out.join("trace")), ..Default::default() };
    let need_dataset = || dataset.context("--warm kdtree/interp needs --dataset");
    let predictor: Option<Box<dyn Predictor>> = match warm {
        Warm::None => None,
        Warm::Kdtree => Some(Method::Kdtree.build(&training_samples(need_dataset()?)?)?),
        Warm::Interp => Some(Method::Interp.build(&training_samples(need_dataset()?)?)?),
        Warm::Weights => {
            if constraint.is_none() && solution.is_none() {
                bail!("--warm weights needs --constraint-weights and/or --solution-weights");
            }
            let nn = NnPredictor::load(constraint.as_deref(), solution.as_deref())?;
            nn.check(&inst.catalog())?;
            Some(Box::new(nn))
        }
    };
    let report = match &predictor {
        None => scvx(inst, &initial_guess(inst), &cfg, TrustRegion::cold(inst))?,
        Some(p) => tscvx(inst, p.as_ref(), &cfg)?,
    };
    std::fs::write(out.join("report.json"), report.to_json()?)?;
    report.solution.save_csv(out.join("trajectory.csv"))?;
    print_solve(&report);
    Ok(if report.status == ScvxStatus::Converged { ExitCode::SUCCESS } else { ExitCode::from(EXIT_NOT_CONVERGED) })
}

fn print_solve(r: &ScvxReport) {
    let f = &r.feasibility;
    println!(
        "{:?} after {} iterations in {:.3} s: cost {:.6}, final mass {:.6}, max defect {:.2e}, max boundary {:.2e}, max violation {:.2e}{}",
        r.status,
        r.iterations(),
        r.wall_time_s,
        r.cost,
        r.solution.states.last().map_or(f64::NAN, |s| s.m),
        f.max_defect,
        f.max_boundary,
        f.max_violation,
        if r.fell_back { " (prediction failed, solved cold)" } else { "" },
    );
}

#[derive(Serialize)]
struct GenTiming {
    bases: usize,
    dropped: usize,
    not_converged: usize,
    total_s: f64,
    /// `(base id, iterations, wall time in seconds)` per labeled base sample.
    timings: Vec<(u64, usize, f64)>,
}

fn cmd_gen(bases: usize, preset: &str, no_augment: bool, out: &Path, settings: &Settings) -> Result<()> {
    let mut cfg = GenConfig::new(bases, settings.seed, preset)?;
    if let Some(c) = &settings.constants {
        cfg.constants = c.clone();
    }
    if no_augment {
        cfg.angles = vec![0.0];
    }
    let start = std::time::Instant::now();
    let (ds, stats) = generate(&cfg);
    let total_s = start.elapsed().as_secs_f64();
    ds.save(out).with_context(|| format!("writing {}", out.display()))?;
    let timing = GenTiming {
        bases,
        dropped: stats.dropped,
        not_converged: stats.not_converged,
        total_s,
        timings: stats.timings,
    };
    let sidecar = out.with_extension("timing.json");
    std::fs::write(&sidecar, serde_json::to_string_pretty(&timing)?)?;
    println!(
        "{} samples from {bases} bases ({} dropped, {} not converged) in {total_s:.1} s -> {}",
        ds.samples.len(),
        timing.dropped,
        timing.not_converged,
        out.display()
    );
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn bench_csv(report: &BenchReport) -> String {
    let mut s = String::from(
        "method,inference_mean_ms,inference_median_ms,inference_std_ms,solution_mse,ood_solution_mse,tight_accuracy,peak_mb,cold_mean_iterations,warm_mean_iterations,cold_mean_s,warm_mean_s\n",
    );
    let mean = |v: &[f64]| Stats::of(v).ok().map(|s| s.mean);
    for m in &report.methods {
        let inf = m.inference.as_ref();
        let (ci, wi, ct, wt) = match &m.solve {
            Some(c) => (
                Some(SolveComparison::mean_iterations(&c.cold_iterations)),
                Some(SolveComparison::mean_iterations(&c.warm_iterations)),
                mean(&c.cold_time_s),
                mean(&c.warm_time_s),
            ),
            None => (None, None, None, None),
        };
        s += &format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m.method,
            opt(inf.map(|s| s.mean)),
            opt(inf.map(|s| s.median)),
            opt(inf.map(|s| s.std)),
            opt(m.solution_mse),
            opt(m.ood_solution_mse),
            opt(m.tight_accuracy),
            m.peak_mb,
            opt(ci),
            opt(wi),
            opt(ct),
            opt(wt),
        );
    }
    s += &format!("zeros,,,,,,{},,,,,\n", report.zeros_accuracy);
    s
}

fn cmd_boxplot(paths: &[PathBuf]) -> Result<String> {
    let mut text = format!("{BOXPLOT_HEADER}\n");
    for path in paths {
        let report: BenchReport = serde_json::from_str(
            &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?;
        let prefix = if paths.len() > 1 {
            format!("{}:", path.file_stem().unwrap_or_default().to_string_lossy())
        } else {
            String::new()
        };
        for m in &report.methods {
            let mut series: Vec<(&str, Vec<f64>)> = vec![("inference_ms", m.inference_ms.clone())];
            if let Some(c) = &m.solve {
                series.push(("cold_s", c.cold_time_s.clone()));
                series.push(("warm_s", c.warm_time_s.clone()));
                series.push(("cold_iterations", c.cold_iterations.iter().map(|&i| i as f64).collect()));
                series.push(("warm_iterations", c.warm_iterations.iter().map(|&i| i as f64).collect()));
            }
            for (name, values) in series {
                if let Ok(stats) = Stats::of(&values) {
                    text += &boxplot_row(&format!("{prefix}{}/{name}", m.method), &stats);
                    text.push('\n');
                }
            }
        }
    }
    Ok(text)
}

fn cmd_verify(weights: &[PathBuf], fixtures: &[PathBuf], role: Option<Role>, nodes: usize) -> Result<ExitCode> {
    if !(fixtures.len() <= 1 || fixtures.len() == weights.len()) {
        bail!("give one fixture for all weights files or one per file");
    }
    let expected = role.map(|r| match r {
        Role::Constraint => (ParamVector::WIDTH + 1, ConstraintCatalog::new(nodes).width()),
        Role::Solution => (ParamVector::WIDTH, SolutionGuess::width(nodes)),
    });
    let mut failures = 0;
    for (i, path) in weights.iter().enumerate() {
        let fixture = fixtures.get(if fixtures.len() == 1 { 0 } else { i });
        let problem = match verify_weights(path, fixture.map(PathBuf::as_path)) {
            Err(e) => Some(e.to_string()),
            Ok(s) => {
                let mut line = format!(
                    "{} tensors, {} -> {}, width {}, {} heads, {} layers",
                    s.tensors, s.input_width, s.output_width, s.embed_dim, s.heads, s.layers
                );
                if let Some(p) = &s.parity {
                    line += &format!(", parity {} cases max error {:.1e} (tolerance {:.0e})", p.cases, p.max_abs_error, p.tolerance);
                }
                let shape_bad = expected.filter(|&e| e != (s.input_width, s.output_width));
                match (shape_bad, s.parity.as_ref().is_some_and(|p| !p.passed())) {
                    (Some((a, b)), _) => Some(format!("{line}; expected {a} -> {b}")),
                    (None, true) => Some(format!("{line}; parity exceeds tolerance")),
                    (None, false) => {
                        println!("ok {}: {line}", path.display());
                        None
                    }
                }
            }
        };
        if let Some(msg) = problem {
            println!("FAILED {}: {msg}", path.display());
            failures += 1;
        }
    }
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
