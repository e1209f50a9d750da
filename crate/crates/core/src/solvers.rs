//! Compressed least-squares estimators: full compression (CLS), partial
//! compression (PCLS), their ridge-regularized variants, robust CLS, and a
//! sketch-preconditioned LSQR baseline.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::lsqr::{lsqr, LinearOperator, LsqrOutcome};
use crate::problem::{solve_ols, LSProblem, OlsMethod, QrFactor, SpectralData, RANK_TOL};
use crate::roots::bracketed_newton;
use crate::sketch::SketchOperator;

/// `P = ΦA`, `q = Φb`, `c = Aᵀb`, with the SVD of `P` computed on first use.
#[derive(Debug, Clone)]
pub struct SketchedProblem {
    p: DMatrix<f64>,
    q: DVector<f64>,
    c: DVector<f64>,
    b_norm: Option<f64>,
    spectral: OnceLock<SpectralData>,
}

impl SketchedProblem {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        if p.ncols() == 0 {
            return Err(Error::Dimension("P has no columns".into()));
        }
        if q.len() != p.nrows() {
            return Err(Error::Dimension(format!(
                "q has length {} but P has {} rows",
                q.len(),
                p.nrows()
            )));
        }
        if c.len() != p.ncols() {
            return Err(Error::Dimension(format!(
                "c has length {} but P has {} columns",
                c.len(),
                p.ncols()
            )));
        }
        Ok(Self {
            p,
            q,
            c,
            b_norm: None,
            spectral: OnceLock::new(),
        })
    }

    pub fn from_problem(problem: &LSProblem, op: &SketchOperator) -> Result<Self> {
        let p = op.apply(problem.a())?;
        let q = op.apply_vec(problem.b())?;
        Ok(Self::new(p, q, problem.atb())?.with_b_norm(problem.b().norm()))
    }

    /// Records `‖b‖` of the uncompressed problem (used to seed the RPC dual search).
    pub fn with_b_norm(mut self, b_norm: f64) -> Self {
        self.b_norm = Some(b_norm);
        self
    }

    pub fn with_spectral(self, spectral: SpectralData) -> Result<Self> {
        if spectral.cols() != self.p.ncols() || spectral.u.nrows() != self.p.nrows() {
            return Err(Error::Dimension("spectral data does not match P".into()));
        }
        let _ = self.spectral.set(spectral);
        Ok(self)
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn b_norm(&self) -> Option<f64> {
        self.b_norm
    }

    pub fn cols(&self) -> usize {
        self.p.ncols()
    }

    pub fn spectral(&self) -> Result<&SpectralData> {
        if let Some(s) = self.spectral.get() {
            return Ok(s);
        }
        let s = SpectralData::of(&self.p)?;
        let _ = self.spectral.set(s);
        Ok(self.spectral.get().expect("just set"))
    }
}

/// Factorization of `PᵀP + shift·I`. Cholesky normally; if that fails the
/// solve falls back to the SVD of `P`, which raises `Singular` when
/// `σ_min < 1e-12 σ_max`.
pub struct GramFactor {
    inner: GramInner,
}

enum GramInner {
    Cholesky(Cholesky<f64, Dyn>),
    Spectral { v: DMatrix<f64>, diag: DVector<f64> },
}

impl GramFactor {
    pub fn new(p: &DMatrix<f64>, shift: f64) -> Result<Self> {
        let n = p.ncols();
        let mut gram = p.tr_mul(p);
        for i in 0..n {
            gram[(i, i)] += shift;
        }
        if let Some(chol) = gram.cholesky() {
            let l = chol.l_dirty();
            let d = l.diagonal();
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let dmin = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
            if dmax > 0.0 && dmin >= RANK_TOL * dmax {
                return Ok(Self {
                    inner: GramInner::Cholesky(chol),
                });
            }
        }
        let spec = SpectralData::of(p)?;
        let smax = spec.sigma_max();
        if shift <= 0.0 && !(spec.sigma_min() >= RANK_TOL * smax && smax > 0.0) {
            return Err(Error::Singular { context: "PᵀP" });
        }
        log::warn!("Cholesky of PᵀP failed; falling back to SVD solve");
        let diag = spec.sigma.map(|s| s * s + shift);
        Ok(Self {
            inner: GramInner::Spectral { v: spec.v, diag },
        })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            GramInner::Cholesky(chol) => chol.solve(rhs),
            GramInner::Spectral { v, diag } => {
                let mut t = v.tr_mul(rhs);
                t.component_div_assign(diag);
                v * t
            }
        }
    }
}

/// `argmin ½‖P x − q‖²`.
pub fn solve_cls(sp: &SketchedProblem) -> Result<DVector<f64>> {
    Ok(GramFactor::new(sp.p(), 0.0)?.solve(&sp.p().tr_mul(sp.q())))
}

/// `(PᵀP)⁻¹ Aᵀb`: the stationary point of `½‖P x‖² − cᵀx`.
pub fn solve_pcls(sp: &SketchedProblem) -> Result<DVector<f64>> {
    Ok(GramFactor::new(sp.p(), 0.0)?.solve(sp.c()))
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput(format!("ridge parameter must be positive, got {mu}")));
    }
    Ok(())
}

/// `(PᵀP + μI)⁻¹ Pᵀq`, minimizing `½‖P x − q‖² + (μ/2)‖x‖²`.
pub fn solve_ridge_cls(sp: &SketchedProblem, mu: f64) -> Result<DVector<f64>> {
    check_mu(mu)?;
    Ok(GramFactor::new(sp.p(), mu)?.solve(&sp.p().tr_mul(sp.q())))
}

/// `(PᵀP + μI)⁻¹ c`, minimizing `½‖P x‖² − cᵀx + (μ/2)‖x‖²`.
pub fn solve_ridge_pcls(sp: &SketchedProblem, mu: f64) -> Result<DVector<f64>> {
    check_mu(mu)?;
    Ok(GramFactor::new(sp.p(), mu)?.solve(sp.c()))
}

/// `factor · σ_min(P)²`, i.e. a multiple of the smallest eigenvalue of `PᵀP`.
pub fn default_mu(sp: &SketchedProblem, factor: f64) -> Result<f64> {
    let s = sp.spectral()?.sigma_min();
    Ok(factor * s * s)
}

pub const DEFAULT_MU_FACTOR: f64 = 5.0;

/// Closed-form worst case of the jointly perturbed compressed residual:
/// `½(‖Px − q‖ + ρ√(‖x‖² + 1))²`.
pub fn robust_cls_objective(sp: &SketchedProblem, x: &DVector<f64>, rho: f64) -> f64 {
    let r = (sp.p() * x - sp.q()).norm();
    let t = r + rho * (x.norm_squared() + 1.0).sqrt();
    0.5 * t * t
}

#[derive(Debug, Clone)]
pub struct RobustClsSolution {
    pub x: DVector<f64>,
    /// Data-dependent ridge parameter `ρ‖Px − q‖ / √(1 + ‖x‖²)`.
    pub mu: f64,
    pub iterations: usize,
}

pub const ROBUST_CLS_TOL: f64 = 1e-10;
pub const ROBUST_CLS_MAX_ITER: usize = 200;

/// Robust CLS via the ridge path: the minimizer is `x(μ) = (PᵀP + μI)⁻¹Pᵀq`
/// at the root of `ψ(μ) = μ√(1 + ‖x(μ)‖²) − ρ‖P x(μ) − q‖`.
pub fn solve_robust_cls(sp: &SketchedProblem, rho: f64) -> Result<RobustClsSolution> {
    robust_cls_from_spectral(sp.spectral()?, sp.q(), rho)
}

pub fn robust_cls_from_spectral(spec: &SpectralData, q: &DVector<f64>, rho: f64) -> Result<RobustClsSolution> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidInput(format!("rho must be nonnegative, got {rho}")));
    }
    if q.len() != spec.u.nrows() {
        return Err(Error::Dimension("q does not match P".into()));
    }
    let n = spec.cols();
    let smax = spec.sigma_max();
    let qt = spec.u.tr_mul(q);
    let q_perp = (q - &spec.u * &qt).norm_squared();
    let s2: Vec<f64> = spec.sigma.iter().map(|s| s * s).collect();
    let w: Vec<f64> = (0..n).map(|i| qt[i] * qt[i]).collect();

    let recover = |mu: f64| -> DVector<f64> {
        let y = DVector::from_fn(n, |i, _| {
            let d = s2[i] + mu;
            if d > 0.0 {
                spec.sigma[i] * qt[i] / d
            } else {
                0.0
            }
        });
        &spec.v * y
    };

    if (0..n).all(|i| spec.sigma[i] * qt[i] == 0.0) {
        // Pᵀq = 0: the ridge path is identically zero.
        return Ok(RobustClsSolution { x: DVector::zeros(n), mu: f64::INFINITY, iterations: 0 });
    }

    let psi = |mu: f64| -> (f64, f64, f64) {
        let (mut xs, mut dxs, mut rs, mut drs) = (0.0, 0.0, q_perp, 0.0);
        for i in 0..n {
            let d = s2[i] + mu;
            if d <= 0.0 {
                continue;
            }
            let (d2, d3) = (d * d, d * d * d);
            xs += s2[i] * w[i] / d2;
            dxs -= 2.0 * s2[i] * w[i] / d3;
            rs += mu * mu * w[i] / d2;
            drs += 2.0 * mu * s2[i] * w[i] / d3;
        }
        let sx = (1.0 + xs).sqrt();
        let r = rs.max(0.0).sqrt();
        let value = mu * sx - rho * r;
        let deriv = sx + mu * dxs / (2.0 * sx) - if r > 0.0 { rho * drs / (2.0 * r) } else { 0.0 };
        (value, deriv, mu * sx + rho * r)
    };

    if rho == 0.0 {
        if spec.sigma_min() < RANK_TOL * smax {
            return Err(Error::Singular { context: "PᵀP" });
        }
        return Ok(RobustClsSolution { x: recover(0.0), mu: 0.0, iterations: 0 });
    }

    let mut lo = 0.0;
    if psi(0.0).0 >= 0.0 {
        // Zero least-squares residual: either x_CLS itself is optimal or the
        // root sits just to the right of zero.
        let tiny = 1e-12 * smax * smax;
        if psi(tiny).0 >= 0.0 {
            if spec.sigma_min() < RANK_TOL * smax {
                return Err(Error::Singular { context: "PᵀP" });
            }
            return Ok(RobustClsSolution { x: recover(0.0), mu: 0.0, iterations: 0 });
        }
        lo = tiny;
    }
    let mut hi = (rho * q.norm()).max(smax * smax).max(f64::MIN_POSITIVE);
    let mut grow = 0;
    while psi(hi).0 <= 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 2000 {
            return Err(Error::NotConverged {
                what: "robust CLS bracket",
                iterations: grow,
                residual: psi(hi).0,
                last: None,
            });
        }
    }
    let root = bracketed_newton(
        |mu| {
            let (v, d, _) = psi(mu);
            (v, d)
        },
        lo,
        hi,
        lo,
        |mu, v| v.abs() <= ROBUST_CLS_TOL * psi(mu).2,
        ROBUST_CLS_MAX_ITER,
        "robust CLS secular equation",
    )?;
    Ok(RobustClsSolution {
        x: recover(root.x),
        mu: root.x,
        iterations: root.iterations + grow,
    })
}

/// `A R⁻¹`, with `R` the triangular factor of a QR of `ΦA`.
struct RightPreconditioned<'a> {
    a: &'a DMatrix<f64>,
    r: &'a DMatrix<f64>,
}

impl LinearOperator for RightPreconditioned<'_> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let y = self.r.solve_upper_triangular(v).expect("R checked nonsingular");
        self.a * y
    }

    fn apply_t(&self, u: &DVector<f64>) -> DVector<f64> {
        let t = self.a.tr_mul(u);
        self.r.tr_solve_upper_triangular(&t).expect("R checked nonsingular")
    }
}

pub const DEFAULT_LSQR_TOL: f64 = 1e-6;

/// Triangular factor of `ΦA` used as a right preconditioner.
pub struct BlendenpikPreconditioner {
    r: DMatrix<f64>,
}

impl BlendenpikPreconditioner {
    pub fn new(sketched_a: &DMatrix<f64>) -> Result<Self> {
        if sketched_a.nrows() < sketched_a.ncols() {
            return Err(Error::InvalidInput("preconditioner needs m >= N".into()));
        }
        let qr = QrFactor::new(sketched_a).map_err(|_| Error::Singular {
            context: "preconditioner R",
        })?;
        Ok(Self { r: qr.r().clone() })
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// LSQR on `A R⁻¹`, stopping once `‖(AR⁻¹)ᵀ r‖ ≤ tol·‖(AR⁻¹)ᵀ b‖`.
    pub fn solve(&self, problem: &LSProblem, tol: f64, max_iter: usize) -> Result<LsqrOutcome> {
        let op = RightPreconditioned { a: problem.a(), r: &self.r };
        let map_back = |y: &DVector<f64>| self.r.solve_upper_triangular(y).expect("R checked nonsingular");
        match lsqr(&op, problem.b(), tol, max_iter) {
            Ok(out) => Ok(LsqrOutcome { x: map_back(&out.x), ..out }),
            Err(Error::NotConverged { what, iterations, residual, last }) => Err(Error::NotConverged {
                what,
                iterations,
                residual,
                last: last.map(|y| map_back(&DVector::from_vec(y)).iter().copied().collect()),
            }),
            Err(e) => Err(e),
        }
    }
}

pub fn solve_blendenpik(
    problem: &LSProblem,
    op: &SketchOperator,
    lsqr_tol: f64,
    max_iter: usize,
) -> Result<LsqrOutcome> {
    let pre = BlendenpikPreconditioner::new(&op.apply(problem.a())?)?;
    pre.solve(problem, lsqr_tol, max_iter)
}

/// Unpreconditioned LSQR on the same problem, for comparison.
pub fn solve_plain_lsqr(problem: &LSProblem, lsqr_tol: f64, max_iter: usize) -> Result<LsqrOutcome> {
    lsqr(problem.a(), problem.b(), lsqr_tol, max_iter)
}

/// Returns `(x_CLS, x_LS + (PᵀP)⁻¹ AᵀΦᵀΦ z*)` with `z* = b − A x_LS`.
pub fn cls_error_decomposition(problem: &LSProblem, op: &SketchOperator) -> Result<(DVector<f64>, DVector<f64>)> {
    let sp = SketchedProblem::from_problem(problem, op)?;
    let gram = GramFactor::new(sp.p(), 0.0)?;
    let x_cls = gram.solve(&sp.p().tr_mul(sp.q()));
    let x_ls = solve_ols(problem, OlsMethod::Factorized)?;
    let z = problem.b() - problem.a() * &x_ls;
    let phi_z = op.apply_vec(&z)?;
    let rhs = &x_ls + gram.solve(&sp.p().tr_mul(&phi_z));
    Ok((x_cls, rhs))
}

/// Returns `(x_PCLS, (PᵀP)⁻¹ AᵀA x_LS)`.
pub fn pcls_error_decomposition(problem: &LSProblem, op: &SketchOperator) -> Result<(DVector<f64>, DVector<f64>)> {
    let sp = SketchedProblem::from_problem(problem, op)?;
    let gram = GramFactor::new(sp.p(), 0.0)?;
    let x_pcls = gram.solve(sp.c());
    let x_ls = solve_ols(problem, OlsMethod::Factorized)?;
    let rhs = gram.solve(&problem.a().tr_mul(&(problem.a() * &x_ls)));
    Ok((x_pcls, rhs))
}
