//! Unitary-normalized radix-2 FFT.
//!
//! Forward and inverse transforms are both scaled by `1/sqrt(n)`, so each is
//! unitary and the inverse is exactly the adjoint of the forward map.

use std::f64::consts::PI;

use crate::complex::ComplexVector;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// Precomputed bit-reversal table and twiddles for one power-of-two size.
#[derive(Clone, Debug)]
pub struct FftPlan {
    n: usize,
    bitrev: Vec<usize>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    scale: f64,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::UnsupportedSize(n));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let half = n / 2;
        let cos = (0..half)
            .map(|k| (2.0 * PI * k as f64 / n as f64).cos())
            .collect();
        let sin = (0..half)
            .map(|k| (2.0 * PI * k as f64 / n as f64).sin())
            .collect();
        Ok(Self {
            n,
            bitrev,
            cos,
            sin,
            scale: 1.0 / (n as f64).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unitary DFT: `X_k = n^{-1/2} Σ_j x_j e^{-2πi jk/n}`.
    pub fn forward_in_place(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im, Direction::Forward);
    }

    /// In-place adjoint of [`FftPlan::forward_in_place`].
    pub fn inverse_in_place(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im, Direction::Inverse);
    }

    fn transform(&self, re: &mut [f64], im: &mut [f64], dir: Direction) {
        let n = self.n;
        debug_assert_eq!(re.len(), n);
        debug_assert_eq!(im.len(), n);
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        // forward uses e^{-iθ}, inverse e^{+iθ}
        let sign = match dir {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let wr = self.cos[k * stride];
                    let wi = sign * self.sin[k * stride];
                    let a = start + k;
                    let b = a + half;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            size <<= 1;
        }
        for v in re.iter_mut().chain(im.iter_mut()) {
            *v *= self.scale;
        }
    }

    pub fn forward(&self, x: &ComplexVector) -> Result<ComplexVector> {
        self.apply(x, Direction::Forward)
    }

    pub fn inverse(&self, x: &ComplexVector) -> Result<ComplexVector> {
        self.apply(x, Direction::Inverse)
    }

    fn apply(&self, x: &ComplexVector, dir: Direction) -> Result<ComplexVector> {
        crate::error::check_len("FftPlan", self.n, x.len())?;
        let mut out = x.clone();
        self.transform(&mut out.re, &mut out.im, dir);
        Ok(out)
    }
}

pub fn fft_unitary(x: &ComplexVector) -> Result<ComplexVector> {
    FftPlan::new(x.len())?.forward(x)
}

pub fn ifft_unitary(x: &ComplexVector) -> Result<ComplexVector> {
    FftPlan::new(x.len())?.inverse(x)
}

/// Direct O(n²) evaluation of the unitary DFT. Any length `n ≥ 1`.
pub fn naive_dft(x: &ComplexVector) -> ComplexVector {
    let n = x.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = ComplexVector::zeros(n);
    for k in 0..n {
        let mut re = 0.0;
        let mut im = 0.0;
        for j in 0..n {
            // reduce jk mod n before forming the angle to keep it small
            let theta = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
            let (s, c) = theta.sin_cos();
            re += x.re[j] * c - x.im[j] * s;
            im += x.re[j] * s + x.im[j] * c;
        }
        out.re[k] = re * scale;
        out.im[k] = im * scale;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::cnorm;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(seed: u64, n: usize) -> ComplexVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexVector {
            re: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            im: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn delta_is_flat() {
        let y = fft_unitary(&ComplexVector::basis(4, 0)).unwrap();
        for k in 0..4 {
            assert!((y.re[k] - 0.5).abs() < 1e-15);
            assert!(y.im[k].abs() < 1e-15);
        }
    }

    #[test]
    fn constant_concentrates_at_bin_zero() {
        let y = fft_unitary(&ComplexVector::from_real(vec![1.0; 4])).unwrap();
        assert!((y.re[0] - 2.0).abs() < 1e-15);
        for k in 1..4 {
            assert!(y.re[k].abs() < 1e-15 && y.im[k].abs() < 1e-15);
        }
    }

    #[test]
    fn matches_naive_dft() {
        let x = random_vec(10, 64);
        let fast = fft_unitary(&x).unwrap();
        assert!(fast.max_abs_diff(&naive_dft(&x)) < 1e-10);
    }

    #[test]
    fn inverse_round_trip() {
        let x = random_vec(11, 128);
        let back = ifft_unitary(&fft_unitary(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn inverse_of_flat_is_delta() {
        let y = ifft_unitary(&ComplexVector::from_real(vec![0.5; 4])).unwrap();
        assert!(y.max_abs_diff(&ComplexVector::basis(4, 0)) < 1e-15);
    }

    #[test]
    fn inverse_is_conjugated_oracle() {
        // F^{-1} x = conj(F conj(x)) for the symmetric normalization
        let x = random_vec(12, 32);
        let expected = naive_dft(&x.conj()).conj();
        assert!(ifft_unitary(&x).unwrap().max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn naive_dft_small_cases() {
        let x = ComplexVector::new(vec![7.0], vec![0.0]).unwrap();
        assert_eq!(naive_dft(&x), x);

        let y = naive_dft(&ComplexVector::basis(3, 0));
        for k in 0..3 {
            assert!((y.re[k] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
            assert!(y.im[k].abs() < 1e-15);
        }

        let y = naive_dft(&ComplexVector::from_real(vec![1.0, 1.0]));
        assert!((y.re[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(y.re[1].abs() < 1e-15 && y.im[1].abs() < 1e-15);
    }

    #[test]
    fn rejects_non_power_of_two() {
        for n in [0, 3, 6, 100] {
            assert!(matches!(
                fft_unitary(&ComplexVector::zeros(n)),
                Err(Error::UnsupportedSize(m)) if m == n
            ));
            assert!(ifft_unitary(&ComplexVector::zeros(n)).is_err());
        }
    }

    #[test]
    fn length_one_is_identity() {
        let x = ComplexVector::new(vec![2.5], vec![-1.0]).unwrap();
        assert_eq!(fft_unitary(&x).unwrap(), x);
    }

    proptest! {
        #[test]
        fn preserves_norm(log_n in 0u32..=10, seed in any::<u64>()) {
            let x = random_vec(seed, 1 << log_n);
            let y = fft_unitary(&x).unwrap();
            let nx = cnorm(&x);
            prop_assert!((cnorm(&y) - nx).abs() <= 1e-12 * nx);
        }

        #[test]
        fn round_trip(log_n in 0u32..=9, seed in any::<u64>()) {
            let x = random_vec(seed, 1 << log_n);
            let back = ifft_unitary(&fft_unitary(&x).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&x) <= 1e-12);
        }

        #[test]
        fn linear(log_n in 1u32..=8, seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let x = random_vec(seed, 1 << log_n);
            let y = random_vec(seed.wrapping_add(1), 1 << log_n);
            let combo = x.scale(alpha).add(&y.scale(beta)).unwrap();
            let lhs = fft_unitary(&combo).unwrap();
            let rhs = fft_unitary(&x).unwrap().scale(alpha)
                .add(&fft_unitary(&y).unwrap().scale(beta)).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
        }
    }
}
