//! In-place fast Walsh–Hadamard transform.

/// Unnormalized Walsh–Hadamard transform of a power-of-two length buffer,
/// in natural (Sylvester) order. Applying it twice multiplies by `len`.
///
/// Panics if the length is not a power of two.
pub fn fwht(data: &mut [f64]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "fwht length {n} is not a power of two");
    let mut h = 1;
    while h < n {
        for block in data.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = a + b;
                *y = a - b;
            }
        }
        h *= 2;
    }
}

/// Orthonormal variant: scales by `1/√len`.
pub fn fwht_normalized(data: &mut [f64]) {
    fwht(data);
    let s = 1.0 / (data.len() as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= s);
}
