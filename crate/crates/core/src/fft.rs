//! Thin wrapper over rustfft: cached plans, 1-D batched and 2-D transforms.
//!
//! Forward transforms use the `e^{-2πi jk/n}` convention and are
//! unnormalized; inverse transforms use `e^{+2πi jk/n}` and are also
//! unnormalized. Callers apply their own normalization.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let dir = if inverse {
                    FftDirection::Inverse
                } else {
                    FftDirection::Forward
                };
                FftPlanner::new().plan_fft(n, dir)
            })
            .clone()
    })
}

/// Transform every contiguous length-`n` chunk of `data` in place.
pub(crate) fn fft_rows(data: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(data.len() % n, 0);
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
}

/// In-place transpose of a square row-major matrix.
fn transpose_square(data: &mut [Complex64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            data.swap(j * n + i, i * n + j);
        }
    }
}

/// 2-D transform of an `n x n` row-major array, in place.
///
/// Separable: transform rows, transpose, transform rows again, transpose
/// back, so the output stays in the input's row-major layout.
pub(crate) fn fft_2d(data: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n);
    fft_rows(data, n, inverse);
    transpose_square(data, n);
    fft_rows(data, n, inverse);
    transpose_square(data, n);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn roundtrip_1d() {
        let n = 64;
        let orig: Vec<Complex64> = (0..n)
            .map(|j| Complex64::new((j as f64).sin(), (j as f64 * 0.7).cos()))
            .collect();
        let mut data = orig.clone();
        fft_rows(&mut data, n, false);
        fft_rows(&mut data, n, true);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b * n as f64).norm() < 1e-10);
        }
    }

    #[test]
    fn plane_wave_2d() {
        // A pure plane wave must transform to a single spike.
        let n = 16;
        let (kx, ky) = (3, 5);
        let mut data = vec![Complex64::default(); n * n];
        for j in 0..n {
            for i in 0..n {
                let phase = TAU * (kx * i + ky * j) as f64 / n as f64;
                data[j * n + i] = Complex64::new(phase.cos(), phase.sin());
            }
        }
        fft_2d(&mut data, n, false);
        for j in 0..n {
            for i in 0..n {
                let expected = if (i, j) == (kx, ky) {
                    (n * n) as f64
                } else {
                    0.0
                };
                assert!(
                    (data[j * n + i] - expected).norm() < 1e-8,
                    "spike mismatch at ({i},{j})"
                );
            }
        }
    }
}
