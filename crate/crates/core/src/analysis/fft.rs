//! Iterative radix-2 FFT.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// `Y_k = Σ y_n e^{−2πikn/N}`; the inverse carries the 1/N factor.
pub fn fft(values: &[C64], inverse: bool) -> Result<Vec<C64>> {
    let n = values.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut a = values.to_vec();
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                a.swap(i, j);
            }
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // twiddles evaluated directly rather than by recurrence, to keep
        // round-off at the level of a single sin/cos per factor
        let tw: Vec<C64> = (0..half).map(|k| C64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = a[start + k];
                let v = a[start + k + half] * tw[k];
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
        len *= 2;
    }
    if inverse {
        let s = 1.0 / n as f64;
        a.iter_mut().for_each(|z| *z *= s);
    }
    Ok(a)
}

/// O(N²) reference transform with the same conventions as [`fft`].
pub fn dft_direct(values: &[C64], inverse: bool) -> Vec<C64> {
    let n = values.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out: Vec<C64> = (0..n)
        .map(|k| {
            values
                .iter()
                .enumerate()
                .map(|(j, &y)| y * C64::from_polar(1.0, sign * 2.0 * PI * ((k * j) % n) as f64 / n as f64))
                .sum()
        })
        .collect();
    if inverse && n > 0 {
        out.iter_mut().for_each(|z| *z /= n as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn impulse_is_flat() {
        let x = [C64::new(1.0, 0.0), C64::default(), C64::default(), C64::default()];
        for y in fft(&x, false).unwrap() {
            assert_eq!(y, C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert_eq!(fft(&[C64::default(); 6], false).unwrap_err(), Error::NotPowerOfTwo(6));
        assert!(fft(&[], false).is_err());
    }

    fn signal() -> impl Strategy<Value = Vec<C64>> {
        (0u32..=6).prop_flat_map(|b| prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(r, i)| C64::new(r, i)), 1usize << b))
    }

    proptest! {
        #[test]
        fn matches_direct_dft(x in signal()) {
            prop_assert!(max_diff(&fft(&x, false).unwrap(), &dft_direct(&x, false)) <= 1e-9);
            prop_assert!(max_diff(&fft(&x, true).unwrap(), &dft_direct(&x, true)) <= 1e-9);
        }

        #[test]
        fn round_trip(x in signal()) {
            let back = fft(&fft(&x, false).unwrap(), true).unwrap();
            prop_assert!(max_diff(&back, &x) <= 1e-12);
        }

        #[test]
        fn parseval(x in signal()) {
            let y = fft(&x, false).unwrap();
            let et: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let ef: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
            prop_assert!((et - ef).abs() <= 1e-12 * et.max(1e-300));
        }

        #[test]
        fn linear(x in signal(), a in -2.0..2.0f64, b in -2.0..2.0f64, seed in 0u64..1000) {
            let y: Vec<C64> = x.iter().enumerate().map(|(k, z)| z.conj() * ((k as u64 + seed) as f64).sin()).collect();
            let mix: Vec<C64> = x.iter().zip(&y).map(|(p, q)| p * a + q * b).collect();
            let (fx, fy) = (fft(&x, false).unwrap(), fft(&y, false).unwrap());
            let expect: Vec<C64> = fx.iter().zip(&fy).map(|(p, q)| p * a + q * b).collect();
            prop_assert!(max_diff(&fft(&mix, false).unwrap(), &expect) <= 1e-12 * x.len() as f64);
        }
    }
}
