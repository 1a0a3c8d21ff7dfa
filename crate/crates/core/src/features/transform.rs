//! Orthonormal DCT-II and the real cepstrum, both FFT-backed.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Magnitude floor applied before the logarithm in [`real_cepstrum`].
pub const CEPSTRUM_FLOOR: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fft = if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        };
        fft.process(buf);
    });
}

/// Orthonormal DCT-II:
/// `y[k] = s(k) * sum_j x[j] * cos(pi * (2j + 1) * k / (2N))`,
/// `s(0) = sqrt(1/N)`, `s(k) = sqrt(2/N)` otherwise.
///
/// Computed with one N-point complex FFT of the even/odd reordered input.
pub fn dct2(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Validation("dct2 of an empty vector".into()));
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        v[i].re = x[2 * i];
    }
    for i in 0..n / 2 {
        v[n - 1 - i].re = x[2 * i + 1];
    }
    fft_in_place(&mut v, false);
    let nf = n as f64;
    let s0 = (1.0 / nf).sqrt();
    let s = (2.0 / nf).sqrt();
    Ok(v.iter()
        .enumerate()
        .map(|(k, vk)| {
            let w = Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * nf));
            let scale = if k == 0 { s0 } else { s };
            scale * (vk * w).re
        })
        .collect())
}

/// Inverse of [`dct2`] (the orthonormal DCT-III), evaluated directly.
pub fn idct2(y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Validation("idct2 of an empty vector".into()));
    }
    let nf = n as f64;
    let s0 = (1.0 / nf).sqrt();
    let s = (2.0 / nf).sqrt();
    Ok((0..n)
        .map(|j| {
            y.iter()
                .enumerate()
                .map(|(k, &yk)| {
                    let scale = if k == 0 { s0 } else { s };
                    scale * yk * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos()
                })
                .sum()
        })
        .collect())
}

/// Real cepstrum: real part of `IDFT(log(max(|DFT(x)|, 1e-12)))`.
pub fn real_cepstrum(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "cepstrum needs at least 2 samples, got {n}"
        )));
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf, false);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm().max(CEPSTRUM_FLOOR).ln(), 0.0);
    }
    fft_in_place(&mut buf, true);
    let nf = n as f64;
    Ok(buf.iter().map(|c| c.re / nf).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                s * x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| v * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * n)).cos())
                    .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn constant_vector_is_pure_dc() {
        for n in [1usize, 2, 5, 30] {
            let y = dct2(&vec![2.5; n]).unwrap();
            assert!((y[0] - 2.5 * (n as f64).sqrt()).abs() < 1e-12);
            assert!(y[1..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_matches_cosine_sum() {
        let x = [1.0, 0.0, 0.0, 0.0];
        let y = dct2(&x).unwrap();
        for (a, b) in y.iter().zip(naive_dct(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
        // every coefficient of an impulse at j = 0 is s(k) * cos(pi k / 8)
        assert!((y[0] - 0.5).abs() < 1e-12);
        assert!((y[1] - (0.5f64).sqrt() * (PI / 8.0).cos()).abs() < 1e-12);
    }

    #[test]
    fn empty_and_short_inputs() {
        assert!(dct2(&[]).is_err());
        assert!(real_cepstrum(&[1.0]).is_err());
    }

    #[test]
    fn zero_signal_cepstrum_is_floored() {
        let c = real_cepstrum(&[0.0; 8]).unwrap();
        assert!(c.iter().all(|v| v.is_finite()));
        assert!((c[0] - CEPSTRUM_FLOOR.ln()).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    proptest! {
        #[test]
        fn dct_is_linear(
            x in proptest::collection::vec(-10.0f64..10.0, 17),
            z in proptest::collection::vec(-10.0f64..10.0, 17),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mixed: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
            let lhs = dct2(&mixed).unwrap();
            let dx = dct2(&x).unwrap();
            let dz = dct2(&z).unwrap();
            let scale = lhs.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for k in 0..17 {
                prop_assert!((lhs[k] - (a * dx[k] + b * dz[k])).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn dct_round_trips(x in proptest::collection::vec(-100.0f64..100.0, 1..64)) {
            let back = idct2(&dct2(&x).unwrap()).unwrap();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-10 * norm);
            }
        }

        #[test]
        fn cepstrum_is_shift_invariant(x in proptest::collection::vec(-1.0f64..1.0, 32), shift in 1usize..32) {
            let mut y = x.clone();
            y.rotate_left(shift);
            let a = real_cepstrum(&x).unwrap();
            let b = real_cepstrum(&y).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
