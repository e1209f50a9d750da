//! Synthetic test matrices with a prescribed condition number and one of
//! three row-coherence profiles.
//!
//! * `incoherent`: `A = U diag(σ) Vᵀ` with `U`, `V` from QR of Gaussian
//!   matrices, so leverage is spread over all rows.
//! * `semi-coherent`: `A = U diag(σ)` where `U = [G 0; 0 I_k]`, `k = N/2`:
//!   a dense orthonormal block over the leading rows and identity columns on
//!   the last `k` rows. Sparse, and half the columns live on single rows.
//! * `coherent`: `A = U diag(σ)` where `U` orthonormalizes `[I_N; 0]` plus a
//!   small dense block on rows `N..2N`, so almost all leverage sits in the
//!   first `N` rows.
//!
//! Singular values decay geometrically from 1 to `1/condition`. The
//! right-hand side is `b = A x_planted + z` with `z ⟂ range(A)` scaled to
//! `‖z‖ = residual_fraction · ‖A x_planted‖`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::LSProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coherence {
    Incoherent,
    SemiCoherent,
    Coherent,
}

impl FromStr for Coherence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incoherent" => Ok(Self::Incoherent),
            "semi-coherent" | "semicoherent" => Ok(Self::SemiCoherent),
            "coherent" => Ok(Self::Coherent),
            other => Err(Error::InvalidInput(format!("unknown coherence class `{other}`"))),
        }
    }
}

impl fmt::Display for Coherence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Incoherent => "incoherent",
            Self::SemiCoherent => "semi-coherent",
            Self::Coherent => "coherent",
        })
    }
}

fn default_residual_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub condition: f64,
    pub coherence: Coherence,
    #[serde(default = "default_residual_fraction")]
    pub residual_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(rows: usize, cols: usize, condition: f64, coherence: Coherence, seed: u64) -> Self {
        Self {
            rows,
            cols,
            condition,
            coherence,
            residual_fraction: default_residual_fraction(),
            seed,
        }
    }

    pub fn residual_fraction(mut self, fraction: f64) -> Self {
        self.residual_fraction = fraction;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub problem: LSProblem,
    pub x_planted: DVector<f64>,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn orthonormal_columns(g: DMatrix<f64>) -> DMatrix<f64> {
    g.qr().q()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    let (rows, cols) = (spec.rows, spec.cols);
    if cols == 0 || rows < cols {
        return Err(Error::Dimension(format!(
            "synthetic matrix must satisfy rows >= cols >= 1, got {rows}x{cols}"
        )));
    }
    if !(spec.condition >= 1.0) || !spec.condition.is_finite() {
        return Err(Error::InvalidInput(format!("condition must be >= 1, got {}", spec.condition)));
    }
    if !(spec.residual_fraction >= 0.0) {
        return Err(Error::InvalidInput("residual fraction must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = DVector::from_fn(cols, |i, _| {
        if cols == 1 {
            1.0
        } else {
            spec.condition.powf(-(i as f64) / (cols - 1) as f64)
        }
    });

    let (u, v) = match spec.coherence {
        Coherence::Incoherent => {
            let u = orthonormal_columns(gaussian(rows, cols, &mut rng));
            let v = orthonormal_columns(gaussian(cols, cols, &mut rng));
            (u, Some(v))
        }
        Coherence::SemiCoherent => {
            let k = cols / 2;
            let dense = orthonormal_columns(gaussian(rows - k, cols - k, &mut rng));
            let mut u = DMatrix::zeros(rows, cols);
            u.view_mut((0, 0), (rows - k, cols - k)).copy_from(&dense);
            for i in 0..k {
                u[(rows - k + i, cols - k + i)] = 1.0;
            }
            (u, None)
        }
        Coherence::Coherent => {
            let mut base = DMatrix::zeros(rows, cols);
            for i in 0..cols {
                base[(i, i)] = 1.0;
            }
            let block_rows = cols.min(rows - cols);
            if block_rows > 0 {
                let g = gaussian(block_rows, cols, &mut rng) * 0.1;
                let mut view = base.view_mut((cols, 0), (block_rows, cols));
                view += g;
            }
            (orthonormal_columns(base), None)
        }
    };

    let mut a = u.clone();
    for (j, s) in sigma.iter().enumerate() {
        a.column_mut(j).scale_mut(*s);
    }
    if let Some(v) = v {
        a = a * v.transpose();
    }

    let x_planted = DVector::from_fn(cols, |_, _| StandardNormal.sample(&mut rng));
    let ax = &a * &x_planted;
    let mut b = ax.clone();
    if spec.residual_fraction > 0.0 && rows > cols {
        let g = DVector::from_fn(rows, |_, _| StandardNormal.sample(&mut rng));
        // two passes of projection keep z orthogonal to working precision
        let mut z = &g - &u * u.tr_mul(&g);
        z -= &u * u.tr_mul(&z);
        let zn = z.norm();
        if zn > 0.0 {
            b += z * (spec.residual_fraction * ax.norm() / zn);
        }
    }
    Ok(SyntheticInstance {
        problem: LSProblem::new(a, b)?,
        x_planted,
    })
}

/// `σ_max / σ_min` from a full SVD.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    sv.max() / sv.min()
}

/// Row leverage scores `‖U_i‖²` of the column space.
pub fn leverage_scores(a: &DMatrix<f64>) -> DVector<f64> {
    let q = a.clone().qr().q();
    DVector::from_fn(a.nrows(), |i, _| q.row(i).norm_squared())
}
