//! Robust partially-compressed least squares (RPC):
//!
//! ```text
//! min_x  max_{‖ΔP‖_F ≤ ρ}  ½‖(P + ΔP)x‖² − cᵀx   =   min_x  ½(‖Px‖ + ρ‖x‖)² − cᵀx
//! ```
//!
//! with `P = ΦA` and `c = Aᵀb`. The fast solver works on the dual of the
//! epigraph form: for a dual value `τ` it finds the normalized minimizer of
//! `h_τ(x) = τ(‖Px‖ + ρ‖x‖) − cᵀx` in the right-singular basis of `P` by a
//! one-dimensional Newton solve in `γ = ‖x‖/‖Px‖`, then moves `τ` until the
//! normalized point satisfies `γ‖Σy‖ = 1`. The optimum is then rescaled so
//! that `‖Px‖ + ρ‖x‖ = τ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{LSProblem, SpectralData};
use crate::roots::{bracketed_newton, Root};
use crate::sketch::SketchOperator;
use crate::solvers::{solve_pcls, SketchedProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcParams {
    /// Radius of the Frobenius-norm uncertainty set on `P`.
    pub rho: f64,
    /// Outer stopping tolerance on `|γ‖Σy‖ − 1|`.
    pub eps: f64,
    /// Tolerance on `|φ(γ)|` for the inner Newton solve.
    pub newton_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
}

impl Default for RpcParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps: 1e-10,
            newton_tol: 1e-12,
            max_outer: 100,
            max_newton: 100,
        }
    }
}

impl RpcParams {
    pub fn with_rho(rho: f64) -> Self {
        Self { rho, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidInput(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !unit(self.eps) || !unit(self.newton_tol) {
            return Err(Error::InvalidInput("eps and newton_tol must lie in (0, 1)".into()));
        }
        if self.max_outer == 0 || self.max_newton == 0 {
            return Err(Error::InvalidInput("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

mod dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcSolution {
    #[serde(with = "dvec")]
    pub x: DVector<f64>,
    /// `‖Px‖` at the solution (from the dual variables `τ/(1+ργ)` when `ρ > 0`).
    pub alpha: f64,
    /// `‖x‖` at the solution (`αγ` when `ρ > 0`).
    pub beta: f64,
    pub tau: f64,
    /// `β/α`; infinite when the minimizer has `Px = 0`.
    pub gamma: f64,
    pub outer_iters: usize,
    pub newton_iters_total: usize,
    /// Norm of the first-order residual `(α+ρβ)(PᵀPx/α + ρx/β) − c`.
    pub foc_residual: f64,
    pub objective: f64,
    pub converged: bool,
}

/// `(‖Px‖ + ρ‖x‖)²`, the largest value of `‖(P + ΔP)x‖²` over `‖ΔP‖_F ≤ ρ`.
pub fn worst_case_objective(p: &DMatrix<f64>, x: &DVector<f64>, rho: f64) -> f64 {
    let t = (p * x).norm() + rho * x.norm();
    t * t
}

/// The rank-one perturbation `ρ/(‖Px‖‖x‖) · (Px)xᵀ` attaining the worst case.
pub fn worst_case_perturbation(p: &DMatrix<f64>, x: &DVector<f64>, rho: f64) -> Result<DMatrix<f64>> {
    if x.len() != p.ncols() {
        return Err(Error::Dimension("x does not match P".into()));
    }
    let px = p * x;
    let (npx, nx) = (px.norm(), x.norm());
    if nx == 0.0 || npx == 0.0 {
        return Err(Error::Degenerate(
            "worst-case direction undefined when x = 0 or Px = 0".into(),
        ));
    }
    Ok((rho / (npx * nx)) * px * x.transpose())
}

/// `½(‖Px‖ + ρ‖x‖)² − cᵀx`.
pub fn rpc_objective(sp: &SketchedProblem, x: &DVector<f64>, rho: f64) -> f64 {
    0.5 * worst_case_objective(sp.p(), x, rho) - sp.c().dot(x)
}

/// Gradient of [`rpc_objective`]; defined when `x ≠ 0` and `Px ≠ 0`.
pub fn rpc_gradient(sp: &SketchedProblem, x: &DVector<f64>, rho: f64) -> Result<DVector<f64>> {
    let px = sp.p() * x;
    let (alpha, beta) = (px.norm(), x.norm());
    if alpha == 0.0 || beta == 0.0 {
        return Err(Error::Degenerate("objective is not differentiable here".into()));
    }
    let ptpx = sp.p().tr_mul(&px);
    Ok((alpha + rho * beta) * (ptpx / alpha + (rho / beta) * x) - sp.c())
}

/// `‖∇f(x)‖` at a smooth point; `‖c‖` at the origin (zero iff `x = 0` is
/// optimal). When `Px` vanishes (relative to `‖P‖‖x‖`) this is the distance
/// from `c − ρ²x` to `{τPᵀu : ‖u‖ ≤ 1}`, `τ = ρ‖x‖`, up to the choice of `u`
/// as the scaled minimum-norm solution, so it never underestimates.
pub fn stationarity_residual(sp: &SketchedProblem, x: &DVector<f64>, rho: f64) -> f64 {
    let beta = x.norm();
    if beta == 0.0 {
        return sp.c().norm();
    }
    let alpha = (sp.p() * x).norm();
    let kink = alpha <= 1e-12 * sp.p().norm() * beta;
    if !kink {
        if let Ok(g) = rpc_gradient(sp, x, rho) {
            return g.norm();
        }
    }
    let r0 = sp.c() - (rho * rho) * x;
    let tau = rho * beta;
    let spectral = match sp.spectral() {
        Ok(s) if tau > 0.0 => s,
        _ => return r0.norm(),
    };
    let z = spectral.rotate(&r0);
    let w = DVector::from_fn(z.len(), |i, _| {
        let s = spectral.sigma[i];
        if s > 0.0 { z[i] / (tau * s) } else { 0.0 }
    });
    let scale = w.norm().max(1.0);
    z.iter()
        .zip(spectral.sigma.iter())
        .zip(w.iter())
        .map(|((zi, s), wi)| (zi - tau * s * wi / scale).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `h_τ(x) = τ(‖Px‖ + ρ‖x‖) − cᵀx`, positively homogeneous in `x`.
pub fn h_tau(sp: &SketchedProblem, x: &DVector<f64>, tau: f64, rho: f64) -> f64 {
    tau * ((sp.p() * x).norm() + rho * x.norm()) - sp.c().dot(x)
}

/// Secular function `φ(γ) = τ⁻² Σ b̄ᵢ²/(γσᵢ² + ρ)² − 1` and its derivative.
pub fn secular_phi(spectral: &SpectralData, bbar: &DVector<f64>, rho: f64, tau: f64, gamma: f64) -> (f64, f64) {
    let inv_t2 = 1.0 / (tau * tau);
    let (mut value, mut deriv) = (0.0, 0.0);
    for (s, b) in spectral.sigma.iter().zip(bbar.iter()) {
        let d = s * s;
        let den = gamma * d + rho;
        let b2 = b * b;
        value += b2 / (den * den);
        deriv += d * b2 / (den * den * den);
    }
    (inv_t2 * value - 1.0, -2.0 * inv_t2 * deriv)
}

/// Unique root `γ ≥ 0` of `φ`. `φ` is convex and decreasing, so Newton is run
/// on the nearly linear `(φ + 1)^{-1/2} − 1` inside a bisection bracket.
pub fn newton_gamma(
    spectral: &SpectralData,
    bbar: &DVector<f64>,
    rho: f64,
    tau: f64,
    newton_tol: f64,
    max_newton: usize,
) -> Result<Root> {
    if !(rho > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidInput("newton_gamma needs rho > 0 and tau > 0".into()));
    }
    let phi = |g: f64| secular_phi(spectral, bbar, rho, tau, g);
    let (phi0, _) = phi(0.0);
    if phi0 < -newton_tol {
        return Err(Error::NoRoot { phi0 });
    }
    if phi0.abs() <= newton_tol {
        return Ok(Root { x: 0.0, iterations: 0 });
    }
    // components with σᵢ = 0 keep φ bounded below by φ(∞) > −1
    let null_mass: f64 = spectral
        .sigma
        .iter()
        .zip(bbar.iter())
        .filter(|(s, _)| **s == 0.0)
        .map(|(_, b)| b * b)
        .sum();
    let phi_inf = null_mass / (rho * rho * tau * tau) - 1.0;
    if phi_inf >= -newton_tol {
        return Err(Error::Degenerate(format!(
            "secular function has no root: tau = {tau:e} is below the feasible range (phi(inf) = {phi_inf:e})"
        )));
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while phi(hi).0 > 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 {
            return Err(Error::NotConverged {
                what: "secular bracket",
                iterations: doublings,
                residual: phi(hi).0,
                last: Some(vec![hi]),
            });
        }
    }
    let root = bracketed_newton(
        |g| {
            let (v, d) = phi(g);
            let w = v + 1.0;
            (w.powf(-0.5) - 1.0, -0.5 * w.powf(-1.5) * d)
        },
        0.0,
        hi,
        0.0,
        |g, _| phi(g).0.abs() <= newton_tol,
        max_newton,
        "secular Newton",
    )?;
    Ok(root)
}

pub fn solve_rpc(problem: &LSProblem, op: &SketchOperator, params: &RpcParams) -> Result<RpcSolution> {
    let sp = SketchedProblem::from_problem(problem, op)?;
    solve_rpc_sketched(&sp, params)
}

pub fn solve_rpc_sketched(sp: &SketchedProblem, params: &RpcParams) -> Result<RpcSolution> {
    params.validate()?;
    if sp.c().iter().all(|v| *v == 0.0) {
        return Ok(zero_solution(sp.cols()));
    }
    if params.rho == 0.0 {
        let x = solve_pcls(sp)?;
        return Ok(finish(sp, x, 0.0, f64::NAN, 0, 0, true));
    }
    solve_rpc_with_spectral(sp, sp.spectral()?, params)
}

/// As [`solve_rpc_sketched`], with the SVD of `P` supplied by the caller.
pub fn solve_rpc_with_spectral(sp: &SketchedProblem, spectral: &SpectralData, params: &RpcParams) -> Result<RpcSolution> {
    params.validate()?;
    if spectral.cols() != sp.cols() {
        return Err(Error::Dimension("spectral data does not match P".into()));
    }
    if sp.c().iter().all(|v| *v == 0.0) {
        return Ok(zero_solution(sp.cols()));
    }
    if params.rho == 0.0 {
        let x = solve_pcls(sp)?;
        return Ok(finish(sp, x, 0.0, f64::NAN, 0, 0, true));
    }
    let search = dual_search(spectral, sp.c(), sp.b_norm(), params)?;
    let mut sol = finish(
        sp,
        search.x,
        params.rho,
        search.gamma,
        search.outer,
        search.newton,
        true,
    );
    // report the dual-side values the search converged to; the primal norms
    // ‖Px‖, ‖x‖ agree with them at a fixed point
    sol.tau = search.tau;
    if search.gamma.is_finite() {
        sol.alpha = search.tau / (1.0 + params.rho * search.gamma);
        sol.beta = sol.alpha * search.gamma;
    } else {
        sol.alpha = 0.0;
        sol.beta = search.tau / params.rho;
    }
    Ok(sol)
}

fn zero_solution(n: usize) -> RpcSolution {
    RpcSolution {
        x: DVector::zeros(n),
        alpha: 0.0,
        beta: 0.0,
        tau: 0.0,
        gamma: 0.0,
        outer_iters: 0,
        newton_iters_total: 0,
        foc_residual: 0.0,
        objective: 0.0,
        converged: true,
    }
}

fn finish(
    sp: &SketchedProblem,
    x: DVector<f64>,
    rho: f64,
    gamma: f64,
    outer: usize,
    newton: usize,
    converged: bool,
) -> RpcSolution {
    let alpha = (sp.p() * &x).norm();
    let beta = x.norm();
    RpcSolution {
        foc_residual: stationarity_residual(sp, &x, rho),
        objective: rpc_objective(sp, &x, rho),
        tau: alpha + rho * beta,
        gamma: if gamma.is_nan() && alpha > 0.0 { beta / alpha } else { gamma },
        alpha,
        beta,
        x,
        outer_iters: outer,
        newton_iters_total: newton,
        converged,
    }
}

struct DualOutcome {
    x: DVector<f64>,
    tau: f64,
    gamma: f64,
    outer: usize,
    newton: usize,
}

/// Outer search over `τ`. The basic step is the multiplicative update
/// `τ ← τ·γ‖Σy‖`; once the root is bracketed, steps that leave the bracket or
/// fail to halve the mismatch are replaced by a secant step in `ln τ`, and by
/// bisection if the secant also leaves the bracket.
fn dual_search(
    spectral: &SpectralData,
    c: &DVector<f64>,
    b_norm: Option<f64>,
    params: &RpcParams,
) -> Result<DualOutcome> {
    let rho = params.rho;
    let bbar = spectral.rotate(c);
    // φ(0) = 0 exactly at this τ; anything larger has no root in γ ≥ 0
    let tau_max = bbar.norm() / rho;
    let mut tau = b_norm
        .map(|b| rho * b / 2.0)
        .filter(|t| t.is_finite() && *t > 0.0)
        .unwrap_or(tau_max / 2.0);

    // With a rank-deficient P, γ → ∞ as τ falls to ‖b̄_null‖/ρ, where the
    // mismatch tends to ‖Σ⁺b̄_range‖/τ − 1. If that limit is ≤ 0 the minimizer
    // sits on the kink Px = 0.
    let null_mass: f64 = spectral
        .sigma
        .iter()
        .zip(bbar.iter())
        .filter(|(s, _)| **s == 0.0)
        .map(|(_, b)| b * b)
        .sum();
    if null_mass > 0.0 {
        let tau_min = null_mass.sqrt() / rho;
        let range_ratio = spectral
            .sigma
            .iter()
            .zip(bbar.iter())
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, b)| (b / s).powi(2))
            .sum::<f64>()
            .sqrt()
            / tau_min;
        if range_ratio <= 1.0 + params.eps {
            let z = DVector::from_fn(bbar.len(), |i, _| {
                if spectral.sigma[i] == 0.0 { bbar[i] / (rho * rho) } else { 0.0 }
            });
            return Ok(DualOutcome {
                x: &spectral.v * z,
                tau: tau_min,
                gamma: f64::INFINITY,
                outer: 0,
                newton: 0,
            });
        }
    }

    // (ln τ, γ‖Σy‖ − 1) at the ends of the current bracket
    let mut lo: Option<(f64, f64)> = None;
    let mut hi: Option<(f64, f64)> = None;
    let mut prev: Option<(f64, f64)> = None;
    let mut newton_total = 0;
    let mut last_err = f64::INFINITY;
    let mut last_point: Option<(f64, f64, DVector<f64>)> = None;
    let mut width_mark = f64::INFINITY;
    let mut since_mark = 0;

    for outer in 1..=params.max_outer {
        let gamma = match newton_gamma(spectral, &bbar, rho, tau, params.newton_tol, params.max_newton) {
            Ok(root) => {
                newton_total += root.iterations;
                root.x
            }
            Err(Error::NoRoot { .. }) => {
                hi = Some((tau.ln(), -1.0));
                tau = (0.5 * tau).min(tau_max);
                continue;
            }
            // τ too small for a finite γ: the mismatch is +∞ here
            Err(Error::Degenerate(_)) if tau > 0.0 => {
                lo = Some((tau.ln(), f64::INFINITY));
                let upper = hi.map(|h| h.0.exp()).unwrap_or(tau_max);
                tau = (tau * upper).sqrt();
                continue;
            }
            Err(e) => return Err(e),
        };
        let y = normalized_direction(spectral, &bbar, rho, tau, gamma);
        let sigma_y = y.iter().zip(spectral.sigma.iter()).map(|(a, s)| (a * s).powi(2)).sum::<f64>().sqrt();
        let ratio = gamma * sigma_y;
        let err = ratio - 1.0;
        last_point = Some((tau, gamma, y.clone()));

        if err.abs() <= params.eps {
            let alpha = tau / (1.0 + rho * gamma);
            let beta = alpha * gamma;
            return Ok(DualOutcome {
                x: beta * (&spectral.v * y),
                tau,
                gamma,
                outer,
                newton: newton_total,
            });
        }

        let lt = tau.ln();
        if err > 0.0 {
            lo = Some((lt, err));
        } else {
            hi = Some((lt, err));
        }
        let multiplicative_step = if ratio > 0.0 { lt + ratio.ln() } else { f64::NEG_INFINITY };
        let next = match (lo, hi) {
            (Some(l), Some(h)) => {
                let inside = |t: f64| t > l.0 && t < h.0;
                let width = h.0 - l.0;
                if width <= 0.5 * width_mark {
                    width_mark = width;
                    since_mark = 0;
                } else {
                    since_mark += 1;
                }
                let secant = prev.and_then(|(pt, pe)| {
                    let t = lt - err * (lt - pt) / (err - pe);
                    (t.is_finite() && inside(t)).then_some(t)
                });
                if since_mark >= 4 {
                    since_mark = 0;
                    width_mark = width;
                    0.5 * (l.0 + h.0)
                } else if inside(multiplicative_step) && err.abs() <= 0.5 * last_err {
                    multiplicative_step
                } else if let Some(t) = secant {
                    t
                } else {
                    let t = l.0 - l.1 * (h.0 - l.0) / (h.1 - l.1);
                    if inside(t) { t } else { 0.5 * (l.0 + h.0) }
                }
            }
            // not bracketed yet: follow the multiplicative update, at most ×8 per step
            _ => multiplicative_step.clamp(lt - 8f64.ln(), lt + 8f64.ln()),
        };
        prev = Some((lt, err));
        last_err = err.abs();
        tau = next.exp().min(tau_max);
    }

    let (residual, last) = match last_point {
        Some((tau, gamma, y)) => {
            let alpha = tau / (1.0 + rho * gamma);
            let x = (alpha * gamma) * (&spectral.v * y);
            (last_err, Some(x.iter().copied().collect()))
        }
        None => (f64::NAN, None),
    };
    Err(Error::NotConverged {
        what: "RPC dual search",
        iterations: params.max_outer,
        residual,
        last,
    })
}

/// Solves `τ(γD + ρI)y = b̄` and rescales to `‖y‖ = 1`.
fn normalized_direction(spectral: &SpectralData, bbar: &DVector<f64>, rho: f64, tau: f64, gamma: f64) -> DVector<f64> {
    let y = DVector::from_fn(bbar.len(), |i, _| {
        let s = spectral.sigma[i];
        bbar[i] / (tau * (gamma * s * s + rho))
    });
    let n = y.norm();
    y / n
}

/// Reference minimizer of [`rpc_objective`] that does not use the dual search.
///
/// Uses `½(a + b)² = min_{θ∈(0,1)} a²/(2θ) + b²/(2(1−θ))`: for fixed `θ` the
/// inner problem is the linear system `(PᵀP/θ + ρ²I/(1−θ))x = c`, and the
/// reduced function `g(θ) = −½cᵀ(PᵀP/θ + ρ²I/(1−θ))⁻¹c` is convex on `[0, 1]`.
/// Its minimizer is found by bisection on the sign of `g′` in the eigenbasis of
/// `PᵀP`; `θ = 0` is the kink `Px = 0`. The result is rejected if its
/// first-order residual exceeds `max(10·tol, 1e-6)·‖c‖`.
pub fn rpc_oracle(sp: &SketchedProblem, rho: f64, tol: f64) -> Result<(DVector<f64>, f64)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("oracle tolerance must be positive".into()));
    }
    let n = sp.cols();
    let c = sp.c();
    if c.iter().all(|v| *v == 0.0) {
        return Ok((DVector::zeros(n), 0.0));
    }
    if rho == 0.0 {
        let x = solve_pcls(sp)?;
        let f = rpc_objective(sp, &x, rho);
        return Ok((x, f));
    }
    let eig = SymmetricEigen::new(sp.p().tr_mul(sp.p()));
    let floor = n as f64 * f64::EPSILON * eig.eigenvalues.max().max(0.0);
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l > floor { l } else { 0.0 }).collect();
    let ct = eig.eigenvectors.tr_mul(c);
    let r2 = rho * rho;

    // weight wᵢ(θ) = θ(1−θ)/(λᵢ(1−θ) + ρ²θ), so x(θ) = Q diag(w) Qᵀc
    let weight = |l: f64, t: f64| -> f64 {
        if l == 0.0 { (1.0 - t) / r2 } else { t * (1.0 - t) / (l * (1.0 - t) + r2 * t) }
    };
    let weight_deriv = |l: f64, t: f64| -> f64 {
        if l == 0.0 {
            -1.0 / r2
        } else {
            let u = t * (1.0 - t);
            let v = l * (1.0 - t) + r2 * t;
            ((1.0 - 2.0 * t) * v - u * (r2 - l)) / (v * v)
        }
    };
    // g′(θ) = −½ Σ c̃ᵢ² wᵢ′(θ), increasing in θ
    let g_deriv = |t: f64| -> f64 {
        -0.5 * lambda.iter().zip(ct.iter()).map(|(l, ci)| ci * ci * weight_deriv(*l, t)).sum::<f64>()
    };
    let theta = if g_deriv(0.0) >= 0.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > f64::EPSILON * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g_deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let z = DVector::from_fn(n, |i, _| weight(lambda[i], theta) * ct[i]);
    let x = &eig.eigenvectors * z;
    let fx = rpc_objective(sp, &x, rho);

    let foc = stationarity_residual(sp, &x, rho);
    let bound = (10.0 * tol).max(1e-6) * c.norm();
    if foc > bound {
        return Err(Error::NotConverged {
            what: "RPC oracle stationarity",
            iterations: 0,
            residual: foc,
            last: Some(x.iter().copied().collect()),
        });
    }
    Ok((x, fx))
}
