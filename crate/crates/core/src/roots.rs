//! Bracketed Newton iteration for scalar roots.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub iterations: usize,
}

/// Finds a root of `f` inside `[lo, hi]`, where `f(lo)` and `f(hi)` have
/// opposite signs (or one of them is zero). `f` returns `(value, derivative)`.
/// A Newton step is taken from the current point whenever it lands strictly
/// inside the bracket; otherwise the bracket is bisected. Iteration stops when
/// `done(x, value)` holds or the bracket shrinks to adjacent floats.
pub fn bracketed_newton<F, D>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    done: D,
    max_iter: usize,
    what: &'static str,
) -> Result<Root>
where
    F: FnMut(f64) -> (f64, f64),
    D: Fn(f64, f64) -> bool,
{
    let (f_lo, _) = f(lo);
    if done(lo, f_lo) {
        return Ok(Root { x: lo, iterations: 0 });
    }
    let (f_hi, _) = f(hi);
    if done(hi, f_hi) {
        return Ok(Root { x: hi, iterations: 0 });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::InvalidInput(format!(
            "{what}: root is not bracketed (f({lo:e}) = {f_lo:e}, f({hi:e}) = {f_hi:e})"
        )));
    }
    let lo_negative = f_lo < 0.0;
    let mut x = start.clamp(lo, hi);
    let mut last = (x, f64::NAN);
    for it in 1..=max_iter {
        let (fx, dfx) = f(x);
        last = (x, fx);
        if done(x, fx) {
            return Ok(Root { x, iterations: it });
        }
        if (fx < 0.0) == lo_negative {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
            return Ok(Root { x, iterations: it });
        }
        let newton = x - fx / dfx;
        x = if dfx != 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NotConverged {
        what,
        iterations: max_iter,
        residual: last.1.abs(),
        last: Some(vec![last.0]),
    })
}
