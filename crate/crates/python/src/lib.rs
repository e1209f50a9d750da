//! Python bindings: problems, sketches, every estimator, and the evaluation
//! metrics. Matrices cross the boundary as lists of rows.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sketchls::harness::csvio::{load_csv, BColumn};
use sketchls::harness::experiment::{run_single, ExperimentConfig, Method, MuPolicy, ProblemSource};
use sketchls::harness::synth::{generate_synthetic, Coherence, SyntheticSpec};
use sketchls::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Dimension(_) | Error::Csv { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Overdetermined problem `min ‖Ax − b‖`.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: sketchls::LSProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Self> {
        let inner = sketchls::LSProblem::new(matrix(a)?, DVector::from_vec(b)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// CSV with `b` as the last column, or in a separate one-column file.
    #[staticmethod]
    #[pyo3(signature = (path, b_path=None))]
    fn from_csv(path: PathBuf, b_path: Option<PathBuf>) -> PyResult<Self> {
        let policy = b_path.map_or(BColumn::Last, BColumn::File);
        Ok(Self { inner: load_csv(&path, &policy).map_err(to_py)? })
    }

    /// Synthetic instance with prescribed condition number and coherence
    /// (`incoherent`, `semi-coherent`, `coherent`).
    #[staticmethod]
    #[pyo3(signature = (rows, cols, condition=1e4, coherence="incoherent", residual_fraction=0.5, seed=0))]
    fn synthetic(
        rows: usize,
        cols: usize,
        condition: f64,
        coherence: &str,
        residual_fraction: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = SyntheticSpec::new(rows, cols, condition, parse::<Coherence>(coherence)?, seed)
            .residual_fraction(residual_fraction);
        Ok(Self { inner: generate_synthetic(&spec).map_err(to_py)?.problem })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.a())
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b().iter().copied().collect()
    }

    fn residual_norm(&self, x: Vec<f64>) -> PyResult<f64> {
        let x = self.vector(x)?;
        Ok(self.inner.residual_norm(&x))
    }

    /// Least-squares solution; `method` is `qr` or `normal`.
    #[pyo3(signature = (method="qr"))]
    fn solve_ols(&self, method: &str) -> PyResult<Vec<f64>> {
        let m = match method {
            "qr" => sketchls::OlsMethod::Factorized,
            "normal" => sketchls::OlsMethod::NormalEquations,
            other => return Err(PyValueError::new_err(format!("unknown OLS method `{other}`"))),
        };
        Ok(sketchls::solve_ols(&self.inner, m).map_err(to_py)?.iter().copied().collect())
    }

    /// `‖Ax − b‖ / ‖Ax_ls − b‖ − 1`.
    fn relative_accuracy(&self, x: Vec<f64>) -> PyResult<f64> {
        let x = self.vector(x)?;
        let x_ls = sketchls::solve_ols(&self.inner, sketchls::OlsMethod::Factorized).map_err(to_py)?;
        Ok(sketchls::relative_accuracy(&x, &self.inner, &x_ls))
    }

    fn eps_optimality(&self, x: Vec<f64>) -> PyResult<f64> {
        let x = self.vector(x)?;
        let x_ls = sketchls::solve_ols(&self.inner, sketchls::OlsMethod::Factorized).map_err(to_py)?;
        sketchls::eps_optimality(&x, &self.inner, &x_ls).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Problem(rows={}, cols={})", self.inner.rows(), self.inner.cols())
    }
}

impl PyProblem {
    fn vector(&self, x: Vec<f64>) -> PyResult<DVector<f64>> {
        if x.len() != self.inner.cols() {
            return Err(PyValueError::new_err(format!("x has length {}, expected {}", x.len(), self.inner.cols())));
        }
        Ok(DVector::from_vec(x))
    }
}

/// Random sketch `Φ` (`gaussian`, `ros`, `count`) with `m` rows acting on
/// vectors of length `M`.
#[pyclass(name = "Sketch", frozen)]
struct PySketch {
    op: sketchls::SketchOperator,
}

#[pymethods]
impl PySketch {
    #[new]
    #[pyo3(signature = (kind, m, M, seed=0))]
    #[allow(non_snake_case)]
    fn new(kind: &str, m: usize, M: usize, seed: u64) -> PyResult<Self> {
        let spec = sketchls::SketchSpec::new(parse(kind)?, m, M, seed).map_err(to_py)?;
        Ok(Self { op: sketchls::SketchOperator::new(spec).map_err(to_py)? })
    }

    /// Rebuilds a sketch from its JSON spec `{kind, m, M, seed}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: sketchls::SketchSpec =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { op: sketchls::SketchOperator::new(spec).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(self.op.spec()).expect("spec serializes")
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.op.spec().kind.as_str()
    }

    #[getter]
    fn m(&self) -> usize {
        self.op.spec().m
    }

    #[getter(M)]
    #[allow(non_snake_case)]
    fn M(&self) -> usize {
        self.op.spec().cols
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.op.spec().seed
    }

    /// `ΦX` for an `M × k` matrix given as rows.
    fn apply(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows_of(&self.op.apply(&matrix(x)?).map_err(to_py)?))
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        rows_of(&self.op.to_dense())
    }

    /// Flop estimate for sketching an `M × n_cols` matrix with `nnz` nonzeros.
    fn flops(&self, n_cols: usize, nnz: usize) -> f64 {
        sketchls::sketch_flops_estimate(self.op.spec(), n_cols, nnz)
    }

    fn __repr__(&self) -> String {
        let s = self.op.spec();
        format!("Sketch(kind='{}', m={}, M={}, seed={})", s.kind, s.m, s.cols, s.seed)
    }
}

/// Outcome of `solve`: the estimate plus the metrics of its trial record.
#[pyclass(name = "Run", frozen, get_all)]
struct PyRun {
    method: String,
    x: Vec<f64>,
    relative_accuracy: Option<f64>,
    eps_optimality: Option<f64>,
    residual_norm: Option<f64>,
    mu: Option<f64>,
    iterations: Option<usize>,
    timings: BTreeMap<String, f64>,
    record_json: String,
}

#[pymethods]
impl PyRun {
    fn __repr__(&self) -> String {
        format!("Run(method='{}', relative_accuracy={:?})", self.method, self.relative_accuracy)
    }
}

/// Runs one estimator. Sketched methods need `sketch`; `mu=None` picks the
/// ridge parameter automatically.
#[pyfunction]
#[pyo3(signature = (problem, method, sketch=None, rho=1.0, mu=None, mu_factor=5.0, lsqr_tol=1e-6, max_iter=1000))]
#[allow(clippy::too_many_arguments)]
fn solve(
    problem: &PyProblem,
    method: &str,
    sketch: Option<&PySketch>,
    rho: f64,
    mu: Option<f64>,
    mu_factor: f64,
    lsqr_tol: f64,
    max_iter: usize,
) -> PyResult<PyRun> {
    let method: Method = parse(method)?;
    let source = ProblemSource::Csv { path: PathBuf::from("<python>"), b_path: None, split: None };
    let mut cfg = ExperimentConfig::new(source, vec![method]);
    cfg.rho = rho;
    cfg.mu = mu.map_or(MuPolicy::Auto, MuPolicy::Fixed);
    cfg.mu_factor = mu_factor;
    cfg.lsqr_tol = lsqr_tol;
    cfg.lsqr_max_iter = max_iter;
    cfg.timing_repeats = 1;
    let spec = sketch.map(|s| *s.op.spec());
    let run = run_single(&problem.inner, &cfg, method, spec).map_err(to_py)?;
    let r = run.record;
    Ok(PyRun {
        method: method.to_string(),
        x: run.x.iter().copied().collect(),
        relative_accuracy: r.relative_accuracy,
        eps_optimality: r.eps_optimality,
        residual_norm: r.residual_norm,
        mu: r.mu,
        iterations: r.iterations,
        timings: r.timings.as_map(),
        record_json: serde_json::to_string(&r).expect("record serializes"),
    })
}

/// Robust partially-compressed solution with its dual quantities.
#[pyclass(name = "RpcSolution", frozen, get_all)]
struct PyRpcSolution {
    x: Vec<f64>,
    alpha: f64,
    beta: f64,
    tau: f64,
    gamma: f64,
    objective: f64,
    outer_iters: usize,
    newton_iters_total: usize,
    converged: bool,
}

#[pyfunction]
#[pyo3(signature = (problem, sketch, rho=1.0))]
fn solve_rpc(problem: &PyProblem, sketch: &PySketch, rho: f64) -> PyResult<PyRpcSolution> {
    let s = sketchls::solve_rpc(&problem.inner, &sketch.op, &sketchls::RpcParams::with_rho(rho)).map_err(to_py)?;
    Ok(PyRpcSolution {
        x: s.x.iter().copied().collect(),
        alpha: s.alpha,
        beta: s.beta,
        tau: s.tau,
        gamma: s.gamma,
        objective: s.objective,
        outer_iters: s.outer_iters,
        newton_iters_total: s.newton_iters_total,
        converged: s.converged,
    })
}

/// Sorted `(fraction, value)` pairs of an empirical residual profile.
#[pyfunction]
fn residual_profile(values: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    sketchls::relative_residual_profile(&values).map_err(to_py)
}

#[pyfunction]
fn methods() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.as_str()).collect()
}

#[pymodule]
fn sketchls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PySketch>()?;
    m.add_class::<PyRun>()?;
    m.add_class::<PyRpcSolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rpc, m)?)?;
    m.add_function(wrap_pyfunction!(residual_profile, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    Ok(())
}
