//! RMSProp and parameter initialization.

use std::f64::consts::PI;

use rand::Rng;

use crate::complex::{ComplexMatrix, ComplexVector};
use crate::error::{check_len, Error, Result};
use crate::seed::{derive, rng_for, Stream};
use crate::unitary::{DiagonalPhase, FixedPermutation, Reflection, UnitaryComposition};
use crate::urnn::{UrnnDims, UrnnParams};

pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_DECAY: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;

/// `accum ← decay·accum + (1 − decay)·g²`, `θ ← θ − lr·g / (√accum + ε)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    /// One running mean of squared gradients per parameter group.
    pub accum: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(lr: f64, decay: f64, group_sizes: &[usize]) -> Self {
        Self {
            lr,
            decay,
            eps: RMSPROP_EPS,
            accum: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update. Every gradient is checked before any parameter
    /// changes, so an error leaves parameters and state untouched.
    pub fn update(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[Vec<f64>],
        names: &[&str],
    ) -> Result<()> {
        check_len("rmsprop parameter groups", self.accum.len(), params.len())?;
        check_len("rmsprop gradient groups", self.accum.len(), grads.len())?;
        for (k, ((p, g), a)) in params.iter().zip(grads).zip(&self.accum).enumerate() {
            check_len("rmsprop group size", a.len(), p.len())?;
            check_len("rmsprop gradient size", a.len(), g.len())?;
            if g.iter().any(|v| !v.is_finite()) {
                let name = names
                    .get(k)
                    .map_or_else(|| format!("#{k}"), |n| n.to_string());
                return Err(Error::NonFiniteGradient(name));
            }
        }
        for ((p, g), a) in params.iter_mut().zip(grads).zip(&mut self.accum) {
            for ((pj, &gj), aj) in p.iter_mut().zip(g).zip(a.iter_mut()) {
                *aj = self.decay * *aj + (1.0 - self.decay) * gj * gj;
                *pj -= self.lr * gj / (aj.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// `count` draws from `U[−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))]`.
pub fn glorot_uniform<R: Rng>(
    rng: &mut R,
    fan_in: usize,
    fan_out: usize,
    count: usize,
) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-limit..=limit)).collect()
}

/// Initial uRNN parameters:
/// * `V` (real and imaginary parts independently) and `U`: Glorot uniform
/// * `b`, `b_o`: zero
/// * reflection vectors: `U[−1, 1]` per coordinate
/// * phase angles: `U[−π, π]`
/// * `h₀`: `U[−√(3/(2n_h)), √(3/(2n_h))]` per coordinate, so `E‖h₀‖² = 1`
pub fn init_urnn(dims: UrnnDims, seed: u64) -> Result<UrnnParams> {
    let UrnnDims { n_in, n_h, n_out } = dims;
    if n_h == 0 || !n_h.is_power_of_two() {
        return Err(Error::Config(format!(
            "hidden size {n_h} must be a power of two"
        )));
    }
    if n_in == 0 || n_out == 0 {
        return Err(Error::Config(
            "input and output sizes must be positive".into(),
        ));
    }
    let mut rng = rng_for(seed, Stream::Init, 0);
    let v_re = glorot_uniform(&mut rng, n_in, n_h, n_h * n_in);
    let v_im = glorot_uniform(&mut rng, n_in, n_h, n_h * n_in);
    let v_in = ComplexMatrix::new(n_h, n_in, v_re, v_im)?;

    let mut uniform = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    };
    let d1 = DiagonalPhase::new(uniform(n_h, -PI, PI));
    let d2 = DiagonalPhase::new(uniform(n_h, -PI, PI));
    let d3 = DiagonalPhase::new(uniform(n_h, -PI, PI));
    let r1 = Reflection::new(ComplexVector::new(
        uniform(n_h, -1.0, 1.0),
        uniform(n_h, -1.0, 1.0),
    )?)?;
    let r2 = Reflection::new(ComplexVector::new(
        uniform(n_h, -1.0, 1.0),
        uniform(n_h, -1.0, 1.0),
    )?)?;
    let h_lim = (3.0 / (2.0 * n_h as f64)).sqrt();
    let h0 = ComplexVector::new(uniform(n_h, -h_lim, h_lim), uniform(n_h, -h_lim, h_lim))?;

    let u_out = glorot_uniform(&mut rng, 2 * n_h, n_out, n_out * 2 * n_h);
    let perm = FixedPermutation::from_seed(n_h, derive(seed, Stream::Permutation, 0));
    let w = UnitaryComposition::new(d1, r1, perm, d2, r2, d3)?;
    UrnnParams::new(v_in, w, vec![0.0; n_h], u_out, vec![0.0; n_out], h0)
}
