//! Randomized compression operators `Φ ∈ ℝ^{m×M}` scaled so that
//! `E[ΦᵀΦ] = I`.
//!
//! Randomness comes from ChaCha8 seeded with the spec's 64-bit seed, with one
//! independent stream per input column `j` (stream id `kind_tag << 60 | j`).
//! Column `j` of a Gaussian `Φ`, the `j`-th ROS sign, and the `j`-th count
//! sketch bucket/sign are each drawn from their own stream, so the realized
//! operator does not depend on the order in which columns are generated. ROS
//! row sampling uses the reserved stream `kind_tag << 60 | 1 << 59`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fwht::fwht;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchKind {
    Gaussian,
    /// Randomized orthogonal system: sign flip, Walsh–Hadamard, row sampling.
    Ros,
    #[serde(rename = "count")]
    CountSketch,
}

impl SketchKind {
    pub const ALL: [SketchKind; 3] = [SketchKind::Gaussian, SketchKind::Ros, SketchKind::CountSketch];

    fn stream_tag(self) -> u64 {
        match self {
            SketchKind::Gaussian => 1,
            SketchKind::Ros => 2,
            SketchKind::CountSketch => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SketchKind::Gaussian => "gaussian",
            SketchKind::Ros => "ros",
            SketchKind::CountSketch => "count",
        }
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(SketchKind::Gaussian),
            "ros" | "hadamard" | "walsh-hadamard" => Ok(SketchKind::Ros),
            "count" | "countsketch" | "count-sketch" => Ok(SketchKind::CountSketch),
            other => Err(Error::InvalidInput(format!("unknown sketch kind `{other}`"))),
        }
    }
}

/// Everything needed to rebuild a sketch bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SketchSpec {
    pub kind: SketchKind,
    /// Output rows of `Φ`.
    pub m: usize,
    /// Input rows (columns of `Φ`).
    #[serde(rename = "M")]
    pub cols: usize,
    pub seed: u64,
}

impl SketchSpec {
    pub fn new(kind: SketchKind, m: usize, cols: usize, seed: u64) -> Result<Self> {
        let spec = Self { kind, m, cols, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > self.cols {
            return Err(Error::InvalidInput(format!(
                "sketch rows m = {} must satisfy 1 <= m <= M = {}",
                self.m, self.cols
            )));
        }
        Ok(())
    }

    /// Zero-padded length used by the Hadamard transform.
    pub fn padded_len(&self) -> usize {
        self.cols.next_power_of_two()
    }

    fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.kind.stream_tag() << 60 | index);
        rng
    }
}

/// Asymptotic cost of applying the sketch to an `M×n_cols` matrix with `nnz`
/// nonzeros.
pub fn sketch_flops_estimate(spec: &SketchSpec, n_cols: usize, nnz: usize) -> f64 {
    match spec.kind {
        SketchKind::Gaussian => spec.m as f64 * spec.cols as f64 * n_cols as f64,
        SketchKind::Ros => {
            let pad = spec.padded_len() as f64;
            pad * pad.log2() * n_cols as f64
        }
        SketchKind::CountSketch => nnz as f64,
    }
}

#[derive(Debug, Clone)]
enum Realized {
    Gaussian {
        phi: DMatrix<f64>,
    },
    Ros {
        signs: Vec<f64>,
        rows: Vec<usize>,
        pad: usize,
    },
    Count {
        buckets: Vec<usize>,
        signs: Vec<f64>,
    },
}

/// A realized sketch. Immutable; `apply` is a pure function of its input.
#[derive(Debug, Clone)]
pub struct SketchOperator {
    spec: SketchSpec,
    realized: Realized,
}

impl SketchOperator {
    pub fn new(spec: SketchSpec) -> Result<Self> {
        spec.validate()?;
        let realized = match spec.kind {
            SketchKind::Gaussian => {
                let scale = 1.0 / (spec.m as f64).sqrt();
                let mut phi = DMatrix::zeros(spec.m, spec.cols);
                for j in 0..spec.cols {
                    let mut rng = spec.stream(j as u64);
                    for v in phi.column_mut(j).iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v = z * scale;
                    }
                }
                Realized::Gaussian { phi }
            }
            SketchKind::Ros => {
                let pad = spec.padded_len();
                let signs = (0..spec.cols)
                    .map(|j| if spec.stream(j as u64).random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                let mut rng = spec.stream(1 << 59);
                let mut rows = index::sample(&mut rng, pad, spec.m).into_vec();
                rows.sort_unstable();
                Realized::Ros { signs, rows, pad }
            }
            SketchKind::CountSketch => {
                let mut buckets = Vec::with_capacity(spec.cols);
                let mut signs = Vec::with_capacity(spec.cols);
                for j in 0..spec.cols {
                    let mut rng = spec.stream(j as u64);
                    buckets.push(rng.random_range(0..spec.m));
                    signs.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
                }
                Realized::Count { buckets, signs }
            }
        };
        Ok(Self { spec, realized })
    }

    /// Count sketch with explicitly chosen buckets and signs.
    pub fn count_sketch_from_parts(m: usize, buckets: Vec<usize>, signs: Vec<f64>) -> Result<Self> {
        let cols = buckets.len();
        if signs.len() != cols {
            return Err(Error::Dimension("buckets and signs differ in length".into()));
        }
        if buckets.iter().any(|&h| h >= m) {
            return Err(Error::InvalidInput("bucket index out of range".into()));
        }
        if signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::InvalidInput("count sketch signs must be ±1".into()));
        }
        let spec = SketchSpec::new(SketchKind::CountSketch, m, cols, 0)?;
        Ok(Self {
            spec,
            realized: Realized::Count { buckets, signs },
        })
    }

    /// `Φ = I_M`, expressed as a count sketch with the identity hash.
    pub fn identity(rows: usize) -> Result<Self> {
        Self::count_sketch_from_parts(rows, (0..rows).collect(), vec![1.0; rows])
    }

    pub fn spec(&self) -> &SketchSpec {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    /// `ΦX`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.spec.cols {
            return Err(Error::Dimension(format!(
                "sketch expects {} rows, input has {}",
                self.spec.cols,
                x.nrows()
            )));
        }
        let k = x.ncols();
        Ok(match &self.realized {
            Realized::Gaussian { phi } => phi * x,
            Realized::Ros { signs, rows, pad } => {
                let scale = 1.0 / (self.spec.m as f64).sqrt();
                let mut out = DMatrix::zeros(self.spec.m, k);
                let mut buf = vec![0.0; *pad];
                for j in 0..k {
                    let col = x.column(j);
                    for (i, slot) in buf.iter_mut().enumerate() {
                        *slot = if i < signs.len() { signs[i] * col[i] } else { 0.0 };
                    }
                    fwht(&mut buf);
                    for (r, &src) in rows.iter().enumerate() {
                        out[(r, j)] = buf[src] * scale;
                    }
                }
                out
            }
            Realized::Count { buckets, signs } => {
                let mut out = DMatrix::zeros(self.spec.m, k);
                for j in 0..k {
                    let col = x.column(j);
                    let mut dst = out.column_mut(j);
                    for (i, &v) in col.iter().enumerate() {
                        if v != 0.0 {
                            dst[buckets[i]] += signs[i] * v;
                        }
                    }
                }
                out
            }
        })
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let out = self.apply(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()))?;
        Ok(DVector::from_column_slice(out.as_slice()))
    }

    /// Dense `Φ`, for inspection and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.apply(&DMatrix::identity(self.spec.cols, self.spec.cols))
            .expect("identity has matching rows")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn op(kind: SketchKind, m: usize, cols: usize, seed: u64) -> SketchOperator {
        SketchOperator::new(SketchSpec::new(kind, m, cols, seed).unwrap()).unwrap()
    }

    #[test]
    fn zero_maps_to_zero() {
        for kind in SketchKind::ALL {
            let s = op(kind, 5, 12, 1);
            let out = s.apply(&DMatrix::zeros(12, 3)).unwrap();
            assert_eq!(out, DMatrix::zeros(5, 3));
        }
    }

    #[test]
    fn identity_count_sketch() {
        let s = SketchOperator::count_sketch_from_parts(4, vec![0, 1, 2, 3], vec![1.0; 4]).unwrap();
        assert_eq!(s.apply(&DMatrix::identity(4, 4)).unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn rejects_bad_specs_and_shapes() {
        assert!(SketchSpec::new(SketchKind::Gaussian, 0, 10, 0).is_err());
        assert!(SketchSpec::new(SketchKind::Ros, 11, 10, 0).is_err());
        let s = op(SketchKind::CountSketch, 3, 10, 0);
        assert!(matches!(s.apply(&DMatrix::zeros(9, 1)), Err(Error::Dimension(_))));
    }

    #[test]
    fn count_sketch_column_structure() {
        let s = op(SketchKind::CountSketch, 7, 40, 9);
        let phi = s.to_dense();
        for j in 0..40 {
            let col = phi.column(j);
            assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 1);
            assert!(col.iter().all(|v| *v == 0.0 || v.abs() == 1.0));
        }
        let gram = phi.tr_mul(&phi);
        assert!(gram.diagonal().iter().all(|d| *d == 1.0));
    }

    #[test]
    fn full_ros_is_orthogonal() {
        for cols in [16, 64] {
            let s = op(SketchKind::Ros, cols, cols, 4);
            let phi = s.to_dense();
            let err = (phi.tr_mul(&phi) - DMatrix::<f64>::identity(cols, cols)).amax();
            assert!(err <= 1e-10, "err = {err}");
        }
    }

    #[test]
    fn ros_pads_non_power_of_two() {
        let s = op(SketchKind::Ros, 10, 100, 2);
        assert_eq!(s.spec().padded_len(), 128);
        let out = s.apply(&DMatrix::from_element(100, 1, 1.0)).unwrap();
        assert_eq!(out.nrows(), 10);
    }

    #[test]
    fn gaussian_norm_is_preserved_in_expectation() {
        let v = DVector::from_fn(512, |i, _| ((i + 1) as f64).sqrt());
        let v = &v / v.norm();
        let mean: f64 = (0..1000u64)
            .map(|seed| op(SketchKind::Gaussian, 64, 512, seed).apply_vec(&v).unwrap().norm_squared())
            .sum::<f64>()
            / 1000.0;
        assert!((0.95..=1.05).contains(&mean), "mean = {mean}");
    }

    #[test]
    fn flops_estimates() {
        let g = SketchSpec::new(SketchKind::Gaussian, 10, 100, 0).unwrap();
        assert_eq!(sketch_flops_estimate(&g, 5, 0), 5000.0);
        let r = SketchSpec::new(SketchKind::Ros, 10, 100, 0).unwrap();
        assert_eq!(sketch_flops_estimate(&r, 2, 0), 1792.0);
        let c = SketchSpec::new(SketchKind::CountSketch, 10, 100, 0).unwrap();
        assert_eq!(sketch_flops_estimate(&c, 2, 12345), 12345.0);
    }

    #[test]
    fn spec_json_shape() {
        let spec = SketchSpec::new(SketchKind::CountSketch, 3, 10, 42).unwrap();
        let json = serde_json::to_value(spec).unwrap();
        assert_eq!(json, serde_json::json!({"kind": "count", "m": 3, "M": 10, "seed": 42}));
        let back: SketchSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn column_blocks_match_whole() {
        for kind in SketchKind::ALL {
            let s = op(kind, 6, 20, 8);
            let x = DMatrix::from_fn(20, 5, |i, j| ((i * 7 + j * 3) as f64).cos());
            let whole = s.apply(&x).unwrap();
            for j in 0..5 {
                let part = s.apply(&x.columns(j, 1).into_owned()).unwrap();
                assert_eq!(part.column(0), whole.column(j));
            }
        }
    }

    proptest! {
        #[test]
        fn linear_and_deterministic(seed in any::<u64>(), kind_idx in 0usize..3,
                                    xs in prop::collection::vec(-5.0f64..5.0, 24),
                                    ys in prop::collection::vec(-5.0f64..5.0, 24)) {
            let kind = SketchKind::ALL[kind_idx];
            let a = op(kind, 4, 12, seed);
            let b = op(kind, 4, 12, seed);
            let x = DMatrix::from_vec(12, 2, xs);
            let y = DMatrix::from_vec(12, 2, ys);
            prop_assert_eq!(a.apply(&x).unwrap(), b.apply(&x).unwrap());
            let lhs = a.apply(&(&x + &y)).unwrap();
            let rhs = a.apply(&x).unwrap() + a.apply(&y).unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-12);
        }
    }
}
