//! Problem representation, dense factorizations, and accuracy metrics shared
//! by every estimator in the crate.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a matrix is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// An uncompressed least-squares instance `min ½‖Ax − b‖²` with `A` tall and
/// of full column rank.
#[derive(Debug, Clone)]
pub struct LSProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LSProblem {
    /// Validates shapes and rejects numerically rank-deficient `A`.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let (rows, cols) = a.shape();
        if cols == 0 {
            return Err(Error::Dimension("A must have at least one column".into()));
        }
        if rows < cols {
            return Err(Error::Dimension(format!(
                "A is {rows}x{cols}; need at least as many rows as columns"
            )));
        }
        if b.len() != rows {
            return Err(Error::Dimension(format!(
                "b has length {} but A has {rows} rows",
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("A and b must be finite".into()));
        }
        let sv = a.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        if ratio < RANK_TOL {
            return Err(Error::RankDeficient { ratio });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Number of rows `M`.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Number of columns `N`.
    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// `Aᵀb`.
    pub fn atb(&self) -> DVector<f64> {
        self.a.tr_mul(&self.b)
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x - &self.b
    }

    pub fn residual_norm(&self, x: &DVector<f64>) -> f64 {
        self.residual(x).norm()
    }

    /// `½‖Ax − b‖²`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.residual(x).norm_squared()
    }

    pub fn nnz(&self) -> usize {
        self.a.iter().filter(|v| **v != 0.0).count()
    }
}

/// Thin SVD `P = U Σ Vᵀ` with `N` singular values in descending order and a
/// square `V`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SpectralData {
    pub fn of(p: &DMatrix<f64>) -> Result<Self> {
        let (m, n) = p.shape();
        if n == 0 {
            return Err(Error::Dimension("matrix has no columns".into()));
        }
        if m >= n {
            let svd = SVD::try_new(p.clone(), true, true, f64::EPSILON, 0).ok_or(
                Error::NotConverged {
                    what: "SVD",
                    iterations: 0,
                    residual: f64::NAN,
                    last: None,
                },
            )?;
            let u = svd.u.expect("requested U");
            let v = svd.v_t.expect("requested Vᵀ").transpose();
            return Ok(Self {
                u,
                sigma: svd.singular_values,
                v,
            });
        }
        // Wide P: the thin SVD does not give a square V, so go through PᵀP.
        let eig = SymmetricEigen::new(p.tr_mul(p));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        // eigenvalues of PᵀP below this are rounding noise of a true zero
        let floor = n as f64 * f64::EPSILON * eig.eigenvalues.max().max(0.0);
        let sigma = DVector::from_iterator(
            n,
            order.iter().map(|&i| {
                let l = eig.eigenvalues[i];
                if l > floor { l.sqrt() } else { 0.0 }
            }),
        );
        let v = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let smax = sigma[0];
        let pv = p * &v;
        let u = DMatrix::from_fn(m, n, |r, c| {
            if sigma[c] > RANK_TOL * smax {
                pv[(r, c)] / sigma[c]
            } else {
                0.0
            }
        });
        Ok(Self { u, sigma, v })
    }

    pub fn cols(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma[self.sigma.len() - 1]
    }

    /// `Vᵀ c`: a vector expressed in right-singular coordinates.
    pub fn rotate(&self, c: &DVector<f64>) -> DVector<f64> {
        self.v.tr_mul(c)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OlsMethod {
    /// Householder QR of `A`.
    Factorized,
    /// Cholesky of `AᵀA`.
    NormalEquations,
}

/// Householder QR of a tall matrix, kept so the factor and solve phases can
/// be timed separately.
pub struct QrFactor {
    qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
}

impl QrFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let qr = a.clone().qr();
        let r = qr.r();
        let dmax = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let dmin = r.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if !(dmax > 0.0) || dmin < RANK_TOL * dmax {
            return Err(Error::Singular {
                context: "QR factorization",
            });
        }
        Ok(Self { qr, r })
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Least-squares solve `min ‖A x − rhs‖`.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.r.ncols();
        let mut qtb = rhs.clone();
        self.qr.q_tr_mul(&mut qtb);
        let head = qtb.rows(0, n).into_owned();
        self.r
            .solve_upper_triangular(&head)
            .ok_or(Error::Singular {
                context: "triangular solve",
            })
    }
}

/// Cholesky of the Gram matrix `AᵀA` for the normal-equations path.
pub fn normal_equations_factor(a: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    a.tr_mul(a).cholesky().ok_or(Error::Singular {
        context: "normal equations (AᵀA not positive definite)",
    })
}

pub fn solve_ols(problem: &LSProblem, method: OlsMethod) -> Result<DVector<f64>> {
    match method {
        OlsMethod::Factorized => QrFactor::new(problem.a())?.solve(problem.b()),
        OlsMethod::NormalEquations => {
            let chol = normal_equations_factor(problem.a())?;
            Ok(chol.solve(&problem.atb()))
        }
    }
}

/// `‖A(x̂ − x_LS)‖ / ‖A x_LS‖`.
pub fn eps_optimality(xhat: &DVector<f64>, problem: &LSProblem, x_ls: &DVector<f64>) -> Result<f64> {
    if xhat.len() != problem.cols() || x_ls.len() != problem.cols() {
        return Err(Error::Dimension("solution length differs from N".into()));
    }
    let denom = (problem.a() * x_ls).norm();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("‖A x_LS‖ = 0".into()));
    }
    Ok((problem.a() * (xhat - x_ls)).norm() / denom)
}

/// `‖Ax̂ − b‖ / ‖Ax_LS − b‖ − 1`; zero when `b` lies in the range of `A` and
/// both residuals vanish.
pub fn relative_accuracy(xhat: &DVector<f64>, problem: &LSProblem, x_ls: &DVector<f64>) -> f64 {
    let r_hat = problem.residual_norm(xhat);
    let r_ls = problem.residual_norm(x_ls);
    if r_ls == 0.0 {
        if r_hat == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        r_hat / r_ls - 1.0
    }
}

/// Empirical CDF of residual factors: `(k/n, v_(k))` with the values sorted
/// ascending.
pub fn relative_residual_profile(residuals: &[f64]) -> Result<Vec<(f64, f64)>> {
    if residuals.is_empty() {
        return Err(Error::InvalidInput("empty residual list".into()));
    }
    if let Some(bad) = residuals.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "residual factors must be nonnegative, got {bad}"
        )));
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(k, v)| ((k + 1) as f64 / n, v))
        .collect())
}

/// Reads the step-function profile at `fraction`: the smallest value whose
/// cumulative fraction reaches it. At 0.5 this is the (lower) median.
pub fn profile_value_at(profile: &[(f64, f64)], fraction: f64) -> Option<f64> {
    // k/n is computed in floating point; tolerate rounding at exact fractions
    profile
        .iter()
        .find(|(f, _)| *f >= fraction - 1e-12)
        .map(|(_, v)| *v)
}

/// Wall time per solver phase, in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub sketch: f64,
    pub factor: f64,
    pub solve: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.sketch + self.factor + self.solve
    }

    pub fn as_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("sketch".to_string(), self.sketch),
            ("factor".to_string(), self.factor),
            ("solve".to_string(), self.solve),
            ("total".to_string(), self.total()),
        ])
    }
}

/// Runs `f`, returning its output and elapsed seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: String,
    pub residual_norm: f64,
    pub relative_accuracy: f64,
    pub eps_optimality: f64,
    pub timings: BTreeMap<String, f64>,
    pub x: Vec<f64>,
}

impl SolverReport {
    pub fn evaluate(
        method: impl Into<String>,
        problem: &LSProblem,
        xhat: &DVector<f64>,
        x_ls: &DVector<f64>,
        timings: &PhaseTimings,
    ) -> Result<Self> {
        Ok(Self {
            method: method.into(),
            residual_norm: problem.residual_norm(xhat),
            relative_accuracy: relative_accuracy(xhat, problem, x_ls),
            eps_optimality: eps_optimality(xhat, problem, x_ls)?,
            timings: timings.as_map(),
            x: xhat.iter().copied().collect(),
        })
    }
}
