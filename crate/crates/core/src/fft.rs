//! Arbitrary-length discrete Fourier transforms and circular correlation.
//!
//! Power-of-two lengths use an iterative radix-2 Cooley-Tukey transform; every
//! other length goes through Bluestein's chirp-z reformulation, which turns the
//! transform into a power-of-two convolution. Inputs are never zero-padded at
//! the user-visible level because circular correlation depends on the length.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn bit_reverse_permute(buf: &mut [Complex64]) {
    let n = buf.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
}

/// In-place forward radix-2 transform; `buf.len()` must be a power of two.
fn radix2(buf: &mut [Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    bit_reverse_permute(buf);
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, ang * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * twiddles[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// `e^{i pi j^2 / n}` with the exponent reduced modulo `2n` before conversion.
fn chirp(j: usize, n: usize) -> Complex64 {
    let sq = (j as u128 * j as u128 % (2 * n as u128)) as f64;
    Complex64::from_polar(1.0, PI * sq / n as f64)
}

fn bluestein(buf: &mut [Complex64]) {
    let n = buf.len();
    let m = (2 * n - 1).next_power_of_two();
    let w: Vec<Complex64> = (0..n).map(|j| chirp(j, n)).collect();

    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for (i, x) in buf.iter().enumerate() {
        a[i] = x * w[i].conj();
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = w[0];
    for j in 1..n {
        b[j] = w[j];
        b[m - j] = w[j];
    }
    radix2(&mut a);
    radix2(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inverse_pow2(&mut a);
    for k in 0..n {
        buf[k] = a[k] * w[k].conj();
    }
}

fn inverse_pow2(buf: &mut [Complex64]) {
    buf.iter_mut().for_each(|x| *x = x.conj());
    radix2(buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|x| *x = x.conj() * scale);
}

/// Forward DFT `X_k = sum_j x_j e^{-2 pi i jk/n}` of any length.
pub fn fft(buf: &mut [Complex64]) {
    match buf.len() {
        0 | 1 => {}
        n if n.is_power_of_two() => radix2(buf),
        _ => bluestein(buf),
    }
}

/// Inverse DFT including the `1/n` normalization.
pub fn ifft(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    buf.iter_mut().for_each(|x| *x = x.conj());
    fft(buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|x| *x = x.conj() * scale);
}

fn to_complex(xs: &[f64]) -> Vec<Complex64> {
    xs.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Largest imaginary component tolerated when returning a real result.
const IMAG_RESIDUE: f64 = 1e-9;

fn real_part(buf: Vec<Complex64>) -> Result<Vec<f64>> {
    let scale = buf.iter().fold(1.0f64, |m, c| m.max(c.re.abs()));
    if buf.iter().any(|c| c.im.abs() > IMAG_RESIDUE * scale) {
        return Err(Error::NonFinite("inverse FFT left an imaginary residue"));
    }
    Ok(buf.into_iter().map(|c| c.re).collect())
}

/// `out[k] = sum_i a[i] * b[(i + k) mod d]` via `F^-1(conj(F(a)) * F(b))`.
pub fn circ_corr_slice(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape("circular correlation", &[a.len()], &[b.len()]));
    }
    let mut fa = to_complex(a);
    let mut fb = to_complex(b);
    fft(&mut fa);
    fft(&mut fb);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    ifft(&mut prod);
    real_part(prod)
}

/// `out[j] = sum_k a[k] * b[(j - k) mod d]` via `F^-1(F(a) * F(b))`.
pub fn circ_conv_slice(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape("circular convolution", &[a.len()], &[b.len()]));
    }
    let mut fa = to_complex(a);
    let mut fb = to_complex(b);
    fft(&mut fa);
    fft(&mut fb);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    ifft(&mut prod);
    real_part(prod)
}

fn check_vectors(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.ndim() != 1 || a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// Direct `O(d^2)` circular correlation.
pub fn circ_corr_naive(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_vectors("circ_corr_naive", a, b)?;
    let d = a.len();
    let (a, b) = (a.data(), b.data());
    let out = (0..d)
        .map(|k| (0..d).map(|i| a[i] * b[(i + k) % d]).sum())
        .collect();
    Tensor::vector(out)
}

/// FFT circular correlation, equal to [`circ_corr_naive`] up to rounding.
pub fn circ_corr_fft(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_vectors("circ_corr_fft", a, b)?;
    Tensor::vector(circ_corr_slice(a.data(), b.data())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_matches_naive_dft_for_many_lengths() {
        let mut rng = Rng::new(3);
        for n in [1, 2, 3, 4, 5, 6, 7, 8, 12, 17, 31, 64, 100] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.range_f64(-1.0, 1.0), rng.range_f64(-1.0, 1.0)))
                .collect();
            let mut y = x.clone();
            fft(&mut y);
            let want = naive_dft(&x);
            let err = y
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} err={err}");
            ifft(&mut y);
            let back = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(back < 1e-12, "n={n} roundtrip {back}");
        }
    }

    #[test]
    fn correlation_identity_and_zero() {
        let b = Tensor::vector(vec![0.3, -1.2, 2.5, 0.7, 9.0]).unwrap();
        let mut imp = Tensor::zeros(&[5]);
        imp.data_mut()[0] = 1.0;
        assert!(circ_corr_fft(&imp, &b).unwrap().max_abs_diff(&b).unwrap() < 1e-12);
        assert_eq!(circ_corr_naive(&imp, &b).unwrap(), b);
        let z = circ_corr_fft(&Tensor::zeros(&[5]), &b).unwrap();
        assert!(z.max_abs() < 1e-15);
    }

    #[test]
    fn correlation_hand_values() {
        let a = Tensor::vector(vec![1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![2.0, 3.0]).unwrap();
        assert_eq!(circ_corr_naive(&a, &b).unwrap().data(), &[5.0, 5.0]);
        // d = 3: out[k] = a0 b[k] + a1 b[k+1] + a2 b[k+2]
        let a = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::vector(vec![4.0, 5.0, 6.0]).unwrap();
        let want = [
            1.0 * 4.0 + 2.0 * 5.0 + 3.0 * 6.0,
            1.0 * 5.0 + 2.0 * 6.0 + 3.0 * 4.0,
            1.0 * 6.0 + 2.0 * 4.0 + 3.0 * 5.0,
        ];
        assert_eq!(circ_corr_naive(&a, &b).unwrap().data(), &want);
        let f = circ_corr_fft(&a, &b).unwrap();
        for (x, y) in f.data().iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = Tensor::zeros(&[3]);
        let b = Tensor::zeros(&[4]);
        assert!(circ_corr_fft(&a, &b).is_err());
        assert!(circ_corr_naive(&a, &b).is_err());
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let mut rng = Rng::new(9);
        for d in [1, 3, 8, 10] {
            let a: Vec<f64> = (0..d).map(|_| rng.range_f64(-1.0, 1.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.range_f64(-1.0, 1.0)).collect();
            let got = circ_conv_slice(&a, &b).unwrap();
            for j in 0..d {
                let want: f64 = (0..d).map(|k| a[k] * b[(j + d - k) % d]).sum();
                assert!((got[j] - want).abs() < 1e-12);
            }
        }
    }
}
