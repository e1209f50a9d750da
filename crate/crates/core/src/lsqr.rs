//! LSQR (Paige & Saunders) for `min ‖Ax − b‖` over an abstract operator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
    fn apply_t(&self, u: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }

    fn apply_t(&self, u: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(u)
    }
}

#[derive(Debug, Clone)]
pub struct LsqrOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Final estimate of `‖Aᵀ(b − Ax)‖`.
    pub normal_residual: f64,
}

/// Runs LSQR until the estimated `‖Aᵀ(b − Ax)‖` falls to `tol · ‖Aᵀb‖`.
/// Hitting `max_iter` yields `NotConverged` carrying the last iterate.
pub fn lsqr<A: LinearOperator + ?Sized>(
    a: &A,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<LsqrOutcome> {
    if b.len() != a.nrows() {
        return Err(Error::Dimension(format!(
            "rhs has length {}, operator has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    let n = a.ncols();
    let mut x = DVector::zeros(n);

    let mut beta = b.norm();
    if beta == 0.0 {
        return Ok(LsqrOutcome { x, iterations: 0, normal_residual: 0.0 });
    }
    let mut u = b / beta;
    let mut v = a.apply_t(&u);
    let mut alpha = v.norm();
    if alpha == 0.0 {
        return Ok(LsqrOutcome { x, iterations: 0, normal_residual: 0.0 });
    }
    v /= alpha;
    let target = tol * alpha * beta;

    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut arnorm = alpha * beta;

    for k in 1..=max_iter {
        u = a.apply(&v) - alpha * &u;
        beta = u.norm();
        if beta > 0.0 {
            u /= beta;
        }
        v = a.apply_t(&u) - beta * &v;
        alpha = v.norm();
        if alpha > 0.0 {
            v /= alpha;
        }

        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;

        x.axpy(phi / rho, &w, 1.0);
        w = &v - (theta / rho) * &w;

        arnorm = phibar * alpha * c.abs();
        if arnorm <= target {
            return Ok(LsqrOutcome { x, iterations: k, normal_residual: arnorm });
        }
    }
    Err(Error::NotConverged {
        what: "LSQR",
        iterations: max_iter,
        residual: arnorm,
        last: Some(x.iter().copied().collect()),
    })
}
