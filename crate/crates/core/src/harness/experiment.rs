//! Batch experiments: a grid of (sketch kind, m, trial) cells, each run
//! through a list of methods, emitting one JSON record per method per cell.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::csvio::{load_csv, train_test_split, BColumn};
use crate::harness::synth::{generate_synthetic, SyntheticSpec};
use crate::lsqr::LsqrOutcome;
use crate::problem::{
    eps_optimality, normal_equations_factor, relative_accuracy, timed, LSProblem, PhaseTimings, QrFactor,
    SpectralData,
};
use crate::rpc::{solve_rpc_with_spectral, RpcParams};
use crate::sketch::{SketchKind, SketchOperator, SketchSpec};
use crate::solvers::{
    robust_cls_from_spectral, BlendenpikPreconditioner, GramFactor, SketchedProblem, DEFAULT_LSQR_TOL,
    DEFAULT_MU_FACTOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Householder QR on the full problem.
    Ols,
    /// Cholesky on `AᵀA`.
    OlsNormal,
    Cls,
    Pcls,
    RidgeCls,
    RidgePcls,
    RobustCls,
    Rpc,
    Blendenpik,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Ols,
        Method::OlsNormal,
        Method::Cls,
        Method::Pcls,
        Method::RidgeCls,
        Method::RidgePcls,
        Method::RobustCls,
        Method::Rpc,
        Method::Blendenpik,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::OlsNormal => "ols-normal",
            Method::Cls => "cls",
            Method::Pcls => "pcls",
            Method::RidgeCls => "ridge-cls",
            Method::RidgePcls => "ridge-pcls",
            Method::RobustCls => "robust-cls",
            Method::Rpc => "rpc",
            Method::Blendenpik => "blendenpik",
        }
    }

    pub fn uses_sketch(self) -> bool {
        !matches!(self, Method::Ols | Method::OlsNormal)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

/// Ridge parameter: `auto` means `mu_factor · σ_min(P)²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "MuRepr", into = "MuRepr")]
pub enum MuPolicy {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MuRepr {
    Name(String),
    Value(f64),
}

impl TryFrom<MuRepr> for MuPolicy {
    type Error = Error;

    fn try_from(r: MuRepr) -> Result<Self> {
        match r {
            MuRepr::Name(s) => s.parse(),
            MuRepr::Value(v) => MuPolicy::fixed(v),
        }
    }
}

impl From<MuPolicy> for MuRepr {
    fn from(p: MuPolicy) -> Self {
        match p {
            MuPolicy::Auto => MuRepr::Name("auto".into()),
            MuPolicy::Fixed(v) => MuRepr::Value(v),
        }
    }
}

impl MuPolicy {
    pub fn fixed(v: f64) -> Result<Self> {
        if v > 0.0 && v.is_finite() {
            Ok(MuPolicy::Fixed(v))
        } else {
            Err(Error::InvalidInput(format!("mu must be positive, got {v}")))
        }
    }

    fn resolve(self, spectral: impl FnOnce() -> Result<SpectralData>, factor: f64) -> Result<f64> {
        match self {
            MuPolicy::Fixed(v) => Ok(v),
            MuPolicy::Auto => {
                let s = spectral()?.sigma_min();
                let mu = factor * s * s;
                if mu > 0.0 {
                    Ok(mu)
                } else {
                    Err(Error::Singular { context: "auto mu: sketched matrix is rank deficient" })
                }
            }
        }
    }
}

impl FromStr for MuPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MuPolicy::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidInput(format!("mu must be `auto` or a number, got `{s}`")))?;
        MuPolicy::fixed(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train: usize,
    pub test: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSource {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        /// Separate right-hand side file; otherwise `b` is the last column.
        #[serde(default)]
        b_path: Option<PathBuf>,
        /// Run on a random training subset of the rows.
        #[serde(default)]
        split: Option<SplitConfig>,
    },
}

impl ProblemSource {
    pub fn load(&self) -> Result<LSProblem> {
        match self {
            ProblemSource::Synthetic(spec) => Ok(generate_synthetic(spec)?.problem),
            ProblemSource::Csv { path, b_path, split } => {
                let policy = match b_path {
                    Some(p) => BColumn::File(p.clone()),
                    None => BColumn::Last,
                };
                let problem = load_csv(path, &policy)?;
                match split {
                    Some(s) => {
                        let (train, _) = train_test_split(&problem, s.train, s.test, s.seed)?;
                        if train.cols() >= train.rows() {
                            return Err(Error::Dimension(format!(
                                "training split has {} rows for {} columns",
                                train.rows(),
                                train.cols()
                            )));
                        }
                        Ok(train)
                    }
                    None => Ok(problem),
                }
            }
        }
    }
}

fn default_trials() -> usize {
    1
}
fn default_rho() -> f64 {
    1.0
}
fn default_mu_factor() -> f64 {
    DEFAULT_MU_FACTOR
}
fn default_lsqr_tol() -> f64 {
    DEFAULT_LSQR_TOL
}
fn default_lsqr_max_iter() -> usize {
    1000
}
fn default_timing_repeats() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: ProblemSource,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub sketch_kinds: Vec<SketchKind>,
    #[serde(default)]
    pub m_values: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub mu: MuPolicy,
    #[serde(default = "default_mu_factor")]
    pub mu_factor: f64,
    #[serde(default = "default_lsqr_tol")]
    pub lsqr_tol: f64,
    #[serde(default = "default_lsqr_max_iter")]
    pub lsqr_max_iter: usize,
    /// Each method runs this many times per cell and the fastest time per
    /// phase is kept; with more than one repeat a discarded warm-up run comes
    /// first.
    #[serde(default = "default_timing_repeats")]
    pub timing_repeats: usize,
}

impl ExperimentConfig {
    pub fn new(source: ProblemSource, methods: Vec<Method>) -> Self {
        Self {
            source,
            methods,
            sketch_kinds: Vec::new(),
            m_values: Vec::new(),
            trials: default_trials(),
            seed: 0,
            rho: default_rho(),
            mu: MuPolicy::Auto,
            mu_factor: default_mu_factor(),
            lsqr_tol: default_lsqr_tol(),
            lsqr_max_iter: default_lsqr_max_iter(),
            timing_repeats: default_timing_repeats(),
        }
    }

    /// Checks that do not need the problem dimensions.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.timing_repeats == 0 {
            return bad("timing_repeats must be at least 1".into());
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return bad(format!("rho must be finite and >= 0, got {}", self.rho));
        }
        if !(self.mu_factor > 0.0) {
            return bad(format!("mu_factor must be positive, got {}", self.mu_factor));
        }
        if !(self.lsqr_tol > 0.0) {
            return bad(format!("lsqr_tol must be positive, got {}", self.lsqr_tol));
        }
        if self.methods.iter().any(|m| m.uses_sketch()) && (self.sketch_kinds.is_empty() || self.m_values.is_empty()) {
            return bad("sketched methods need at least one sketch kind and one m".into());
        }
        Ok(())
    }

    fn validate_for(&self, problem: &LSProblem) -> Result<()> {
        for &m in &self.m_values {
            if m < problem.cols() || m > problem.rows() {
                return Err(Error::InvalidInput(format!(
                    "m = {m} must lie in [N, M] = [{}, {}]",
                    problem.cols(),
                    problem.rows()
                )));
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_hash: String,
    pub method: Method,
    pub trial: usize,
    /// Sketch used, absent for the sketch-free baselines.
    pub sketch: Option<SketchSpec>,
    pub relative_accuracy: Option<f64>,
    pub eps_optimality: Option<f64>,
    pub residual_norm: Option<f64>,
    pub mu: Option<f64>,
    pub iterations: Option<usize>,
    pub timings: PhaseTimings,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn sketch_kind(&self) -> Option<SketchKind> {
        self.sketch.map(|s| s.kind)
    }

    pub fn m(&self) -> Option<usize> {
        self.sketch.map(|s| s.m)
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    /// The record with wall times zeroed, for determinism checks.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: PhaseTimings::default(),
            ..self.clone()
        }
    }
}

/// SplitMix64 finalizer chained over `parts`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, p| mix(acc ^ mix(*p)))
}

fn kind_index(kind: SketchKind) -> u64 {
    SketchKind::ALL.iter().position(|k| *k == kind).expect("listed") as u64
}

struct MethodRun {
    x: DVector<f64>,
    factor: f64,
    solve: f64,
    mu: Option<f64>,
    iterations: Option<usize>,
}

/// Sketch-phase costs measured once per cell and shared by all methods.
#[derive(Default, Clone, Copy)]
struct SketchCosts {
    operator: f64,
    pa: f64,
    pb: f64,
    atb: f64,
}

impl SketchCosts {
    fn min(self, other: Self) -> Self {
        Self {
            operator: self.operator.min(other.operator),
            pa: self.pa.min(other.pa),
            pb: self.pb.min(other.pb),
            atb: self.atb.min(other.atb),
        }
    }

    fn for_method(&self, method: Method) -> f64 {
        let base = self.operator + self.pa;
        match method {
            Method::Ols | Method::OlsNormal => 0.0,
            Method::Cls | Method::RidgeCls | Method::RobustCls => base + self.pb,
            Method::Pcls | Method::RidgePcls | Method::Rpc => base + self.atb,
            Method::Blendenpik => base,
        }
    }
}

struct Runner<'a> {
    problem: &'a LSProblem,
    config: &'a ExperimentConfig,
}

impl Runner<'_> {
    fn run_once(&self, method: Method, sp: Option<&SketchedProblem>) -> Result<MethodRun> {
        let cfg = self.config;
        let problem = self.problem;
        let need_sp = || sp.ok_or_else(|| Error::InvalidInput(format!("{method} needs a sketch")));
        let plain = |x, factor, solve| MethodRun { x, factor, solve, mu: None, iterations: None };
        match method {
            Method::Ols => {
                let (qr, factor) = timed(|| QrFactor::new(problem.a()));
                let (x, solve) = timed(|| qr?.solve(problem.b()));
                Ok(plain(x?, factor, solve))
            }
            Method::OlsNormal => {
                let (chol, factor) = timed(|| normal_equations_factor(problem.a()));
                let chol = chol?;
                let (x, solve) = timed(|| chol.solve(&problem.atb()));
                Ok(plain(x, factor, solve))
            }
            Method::Cls | Method::Pcls => {
                let sp = need_sp()?;
                let (g, factor) = timed(|| GramFactor::new(sp.p(), 0.0));
                let g = g?;
                let (x, solve) = timed(|| {
                    if method == Method::Cls {
                        g.solve(&sp.p().tr_mul(sp.q()))
                    } else {
                        g.solve(sp.c())
                    }
                });
                Ok(plain(x, factor, solve))
            }
            Method::RidgeCls | Method::RidgePcls => {
                let sp = need_sp()?;
                let (g, factor) = timed(|| -> Result<(GramFactor, f64)> {
                    let mu = cfg.mu.resolve(|| SpectralData::of(sp.p()), cfg.mu_factor)?;
                    Ok((GramFactor::new(sp.p(), mu)?, mu))
                });
                let (g, mu) = g?;
                let (x, solve) = timed(|| {
                    if method == Method::RidgeCls {
                        g.solve(&sp.p().tr_mul(sp.q()))
                    } else {
                        g.solve(sp.c())
                    }
                });
                Ok(MethodRun { mu: Some(mu), ..plain(x, factor, solve) })
            }
            Method::RobustCls => {
                let sp = need_sp()?;
                let (spec, factor) = timed(|| SpectralData::of(sp.p()));
                let spec = spec?;
                let (sol, solve) = timed(|| robust_cls_from_spectral(&spec, sp.q(), cfg.rho));
                let sol = sol?;
                Ok(MethodRun {
                    mu: Some(sol.mu),
                    iterations: Some(sol.iterations),
                    ..plain(sol.x, factor, solve)
                })
            }
            Method::Rpc => {
                let sp = need_sp()?;
                let params = RpcParams::with_rho(cfg.rho);
                let (spec, factor) = timed(|| SpectralData::of(sp.p()));
                let spec = spec?;
                let (sol, solve) = timed(|| solve_rpc_with_spectral(sp, &spec, &params));
                let sol = sol?;
                Ok(MethodRun {
                    iterations: Some(sol.outer_iters),
                    ..plain(sol.x, factor, solve)
                })
            }
            Method::Blendenpik => {
                let sp = need_sp()?;
                let (pre, factor) = timed(|| BlendenpikPreconditioner::new(sp.p()));
                let pre = pre?;
                let (out, solve) = timed(|| pre.solve(problem, cfg.lsqr_tol, cfg.lsqr_max_iter));
                let LsqrOutcome { x, iterations, .. } = out?;
                Ok(MethodRun { iterations: Some(iterations), ..plain(x, factor, solve) })
            }
        }
    }

    fn run_timed(&self, method: Method, sp: Option<&SketchedProblem>) -> Result<MethodRun> {
        let repeats = self.config.timing_repeats;
        if repeats > 1 {
            self.run_once(method, sp)?;
        }
        let mut best = self.run_once(method, sp)?;
        for _ in 1..repeats {
            let run = self.run_once(method, sp)?;
            best.factor = best.factor.min(run.factor);
            best.solve = best.solve.min(run.solve);
        }
        Ok(best)
    }
}

fn sketch_cell(problem: &LSProblem, spec: SketchSpec, repeats: usize) -> Result<(SketchedProblem, SketchCosts)> {
    let measure = || -> Result<(SketchedProblem, SketchCosts)> {
        let (op, operator) = timed(|| SketchOperator::new(spec));
        let op = op?;
        let (p, pa) = timed(|| op.apply(problem.a()));
        let (q, pb) = timed(|| op.apply_vec(problem.b()));
        let (c, atb) = timed(|| problem.atb());
        let sp = SketchedProblem::new(p?, q?, c)?.with_b_norm(problem.b().norm());
        Ok((sp, SketchCosts { operator, pa, pb, atb }))
    };
    if repeats > 1 {
        measure()?;
    }
    let (sp, mut costs) = measure()?;
    for _ in 1..repeats {
        costs = costs.min(measure()?.1);
    }
    Ok((sp, costs))
}

/// Runs every cell of the grid on `problem`, writing each record as one JSON
/// line to `sink` as soon as it is produced. Failures become records with
/// `error` set rather than aborting the run.
pub fn run_experiment_on<W: Write>(
    problem: &LSProblem,
    config: &ExperimentConfig,
    mut sink: W,
) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    config.validate_for(problem)?;
    let hash = config.hash();
    let x_ls = QrFactor::new(problem.a())?.solve(problem.b())?;
    let runner = Runner { problem, config };
    let mut records = Vec::new();

    let mut emit = |record: TrialRecord, records: &mut Vec<TrialRecord>| -> Result<()> {
        serde_json::to_writer(&mut sink, &record)?;
        sink.write_all(b"\n")?;
        sink.flush()?;
        records.push(record);
        Ok(())
    };
    let make_record = |method: Method, trial: usize, sketch: Option<SketchSpec>, sketch_time: f64, run: Result<MethodRun>| {
        let mut record = TrialRecord {
            config_hash: hash.clone(),
            method,
            trial,
            sketch,
            relative_accuracy: None,
            eps_optimality: None,
            residual_norm: None,
            mu: None,
            iterations: None,
            timings: PhaseTimings { sketch: sketch_time, ..Default::default() },
            error: None,
        };
        match run {
            Ok(run) => {
                record.relative_accuracy = Some(relative_accuracy(&run.x, problem, &x_ls));
                record.eps_optimality = eps_optimality(&run.x, problem, &x_ls).ok();
                record.residual_norm = Some(problem.residual_norm(&run.x));
                record.mu = run.mu;
                record.iterations = run.iterations;
                record.timings.factor = run.factor;
                record.timings.solve = run.solve;
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        record
    };

    for trial in 0..config.trials {
        for &method in config.methods.iter().filter(|m| !m.uses_sketch()) {
            let run = runner.run_timed(method, None);
            emit(make_record(method, trial, None, 0.0, run), &mut records)?;
        }
        if !config.methods.iter().any(|m| m.uses_sketch()) {
            continue;
        }
        for &kind in &config.sketch_kinds {
            for &m in &config.m_values {
                let seed = derive_seed(config.seed, &[kind_index(kind), m as u64, trial as u64]);
                let spec = SketchSpec::new(kind, m, problem.rows(), seed)?;
                let cell = sketch_cell(problem, spec, config.timing_repeats);
                for &method in config.methods.iter().filter(|m| m.uses_sketch()) {
                    let record = match &cell {
                        Ok((sp, costs)) => {
                            let run = runner.run_timed(method, Some(sp));
                            make_record(method, trial, Some(spec), costs.for_method(method), run)
                        }
                        Err(e) => make_record(
                            method,
                            trial,
                            Some(spec),
                            0.0,
                            Err(Error::InvalidInput(format!("sketch failed: {e}"))),
                        ),
                    };
                    emit(record, &mut records)?;
                }
            }
        }
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub x: DVector<f64>,
    pub record: TrialRecord,
}

/// Runs one method once on `problem`, using `config` for the method
/// parameters (its grid fields are ignored). Unlike the batch runner, errors
/// are returned rather than recorded.
pub fn run_single(
    problem: &LSProblem,
    config: &ExperimentConfig,
    method: Method,
    sketch: Option<SketchSpec>,
) -> Result<SingleRun> {
    if method.uses_sketch() && sketch.is_none() {
        return Err(Error::InvalidInput(format!("{method} needs a sketch (kind and m)")));
    }
    if let Some(spec) = sketch {
        spec.validate()?;
        if spec.cols != problem.rows() {
            return Err(Error::Dimension(format!(
                "sketch has M = {} but the problem has {} rows",
                spec.cols,
                problem.rows()
            )));
        }
    }
    let runner = Runner { problem, config };
    let cell = match (method.uses_sketch(), sketch) {
        (true, Some(spec)) => Some(sketch_cell(problem, spec, config.timing_repeats)?),
        _ => None,
    };
    let run = runner.run_timed(method, cell.as_ref().map(|c| &c.0))?;
    let x_ls = QrFactor::new(problem.a())?.solve(problem.b())?;
    let record = TrialRecord {
        config_hash: config.hash(),
        method,
        trial: 0,
        sketch: if method.uses_sketch() { sketch } else { None },
        relative_accuracy: Some(relative_accuracy(&run.x, problem, &x_ls)),
        eps_optimality: eps_optimality(&run.x, problem, &x_ls).ok(),
        residual_norm: Some(problem.residual_norm(&run.x)),
        mu: run.mu,
        iterations: run.iterations,
        timings: PhaseTimings {
            sketch: cell.as_ref().map_or(0.0, |c| c.1.for_method(method)),
            factor: run.factor,
            solve: run.solve,
        },
        error: None,
    };
    Ok(SingleRun { x: run.x, record })
}

/// Loads the configured problem and runs [`run_experiment_on`].
pub fn run_experiment<W: Write>(config: &ExperimentConfig, sink: W) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let problem = config.source.load()?;
    run_experiment_on(&problem, config, sink)
}
