use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sketchls::harness::csvio::{load_csv, write_matrix_csv, BColumn};
use sketchls::harness::experiment::{run_experiment, run_single, ExperimentConfig, Method, MuPolicy, ProblemSource};
use sketchls::harness::report::{emit_profile, emit_timing_breakdown, emit_values_profile, parse_group_keys, read_records};
use sketchls::harness::synth::{generate_synthetic, Coherence, SyntheticSpec};
use sketchls::{Error, Result, SketchKind, SketchSpec, SolverReport};

#[derive(Parser)]
#[command(name = "sketchls", version, about = "Sketched least-squares solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic problem as CSV `[A | b]`.
    Generate(GenerateArgs),
    /// Solve one problem with one method and print a JSON report.
    Solve(SolveArgs),
    /// Run an experiment grid from a JSON config; writes JSONL records.
    Bench(BenchArgs),
    /// Residual profile CSV from records or from a list of values.
    Profile(ProfileArgs),
    /// Mean per-phase timings per method, as CSV.
    Timing(TimingArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 1e4)]
    condition: f64,
    #[arg(long, default_value = "incoherent")]
    coherence: Coherence,
    #[arg(long, default_value_t = 0.5)]
    residual_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// CSV with `b` as the last column unless `--b-file` is given.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    b_file: Option<PathBuf>,
    #[arg(long, default_value = "rpc")]
    method: Method,
    #[arg(long, default_value = "gaussian")]
    sketch: SketchKind,
    /// Sketch rows; required by sketched methods.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value = "auto")]
    mu: MuPolicy,
    #[arg(long, default_value_t = 5.0)]
    mu_factor: f64,
    #[arg(long, default_value_t = 1e-6)]
    lsqr_tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// JSONL output; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    mu: Option<MuPolicy>,
    /// Replaces the configured sketch kinds (repeatable).
    #[arg(long)]
    sketch: Vec<SketchKind>,
    /// Replaces the configured sketch sizes (repeatable).
    #[arg(long)]
    m: Vec<usize>,
    /// Replaces the configured methods (repeatable).
    #[arg(long)]
    method: Vec<Method>,
    #[arg(long)]
    lsqr_tol: Option<f64>,
}

#[derive(Args)]
struct ProfileArgs {
    /// JSONL records from `bench`.
    #[arg(long, conflicts_with = "values", required_unless_present = "values")]
    input: Option<PathBuf>,
    /// Comma-separated relative residuals, profiled as a single group.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long, default_value = "method,kind,m")]
    group_by: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec::new(args.rows, args.cols, args.condition, args.coherence, args.seed)
        .residual_fraction(args.residual_fraction);
    let inst = generate_synthetic(&spec)?;
    let p = &inst.problem;
    let mut ab = nalgebra::DMatrix::zeros(p.rows(), p.cols() + 1);
    ab.columns_mut(0, p.cols()).copy_from(p.a());
    ab.column_mut(p.cols()).copy_from(p.b());
    write_matrix_csv(&ab, output(args.out.as_deref())?)
}

#[derive(Serialize)]
struct SolveOutput {
    report: SolverReport,
    sketch: Option<SketchSpec>,
    mu: Option<f64>,
    iterations: Option<usize>,
}

fn solve(args: SolveArgs) -> Result<()> {
    let policy = match &args.b_file {
        Some(p) => BColumn::File(p.clone()),
        None => BColumn::Last,
    };
    let problem = load_csv(&args.input, &policy)?;
    let sketch = match (args.method.uses_sketch(), args.m) {
        (true, Some(m)) => Some(SketchSpec::new(args.sketch, m, problem.rows(), args.seed)?),
        (true, None) => return Err(Error::InvalidInput(format!("--m is required for {}", args.method))),
        (false, _) => None,
    };
    let source = ProblemSource::Csv { path: args.input.clone(), b_path: args.b_file.clone(), split: None };
    let mut cfg = ExperimentConfig::new(source, vec![args.method]);
    cfg.sketch_kinds = vec![args.sketch];
    cfg.m_values = args.m.into_iter().collect();
    cfg.seed = args.seed;
    cfg.rho = args.rho;
    cfg.mu = args.mu;
    cfg.mu_factor = args.mu_factor;
    cfg.lsqr_tol = args.lsqr_tol;
    cfg.lsqr_max_iter = args.max_iter;
    cfg.timing_repeats = 1;
    cfg.validate()?;
    let run = run_single(&problem, &cfg, args.method, sketch)?;
    let x_ls = sketchls::solve_ols(&problem, sketchls::OlsMethod::Factorized)?;
    let report = SolverReport::evaluate(args.method.as_str(), &problem, &run.x, &x_ls, &run.record.timings)?;
    let out = SolveOutput {
        report,
        sketch: run.record.sketch,
        mu: run.record.mu,
        iterations: run.record.iterations,
    };
    let mut w = output(None)?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(rho) = args.rho {
        cfg.rho = rho;
    }
    if let Some(mu) = args.mu {
        cfg.mu = mu;
    }
    if !args.sketch.is_empty() {
        cfg.sketch_kinds = args.sketch;
    }
    if !args.m.is_empty() {
        cfg.m_values = args.m;
    }
    if !args.method.is_empty() {
        cfg.methods = args.method;
    }
    if let Some(tol) = args.lsqr_tol {
        cfg.lsqr_tol = tol;
    }
    let records = run_experiment(&cfg, output(args.out.as_deref())?)?;
    let failed = records.iter().filter(|r| !r.succeeded()).count();
    log::info!("{} records ({failed} failed), config {}", records.len(), cfg.hash());
    Ok(())
}

fn profile(args: ProfileArgs) -> Result<()> {
    let csv = match (args.values, args.input) {
        (Some(values), _) => emit_values_profile(&BTreeMap::from([("values".to_string(), values)]))?,
        (None, Some(path)) => {
            let records = read_records(BufReader::new(File::open(path)?))?;
            emit_profile(&records, &parse_group_keys(&args.group_by)?)?
        }
        (None, None) => return Err(Error::InvalidInput("give --input or --values".into())),
    };
    write_text(args.out.as_deref(), &csv)
}

fn timing(args: TimingArgs) -> Result<()> {
    let records = read_records(BufReader::new(File::open(args.input)?))?;
    write_text(args.out.as_deref(), &emit_timing_breakdown(&records)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Profile(a) => profile(a),
        Command::Timing(a) => timing(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
