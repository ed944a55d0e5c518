//! Parameterized unitary building blocks and the composed recurrent operator
//! `W = D₃ R₂ F⁻¹ D₂ Π R₁ F D₁`.
//!
//! Gradients follow the real-valued-loss convention used throughout the crate:
//! for an output cotangent `g = ∂L/∂Re y + i ∂L/∂Im y`, a complex-linear map
//! `y = A x` pulls back to `A* g`, and real parameters receive
//! `Re(conj(g) · ∂y/∂θ)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::complex::{inner, ComplexMatrix, ComplexVector};
use crate::error::{check_len, Error, Result};
use crate::fft::FftPlan;

/// Largest dimension [`materialize`] accepts.
pub const MATERIALIZE_LIMIT: usize = 64;

/// Diagonal matrix with entries `e^{i w_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalPhase {
    pub w: Vec<f64>,
}

impl DiagonalPhase {
    pub fn new(w: Vec<f64>) -> Self {
        Self { w }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    fn trig(&self) -> Trig {
        let (sin, cos) = self.w.iter().map(|w| w.sin_cos()).unzip();
        Trig { cos, sin }
    }
}

#[derive(Clone, Debug)]
struct Trig {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Trig {
    fn apply(&self, re: &mut [f64], im: &mut [f64]) {
        for j in 0..re.len() {
            let (c, s) = (self.cos[j], self.sin[j]);
            let r = re[j];
            re[j] = c * r - s * im[j];
            im[j] = s * r + c * im[j];
        }
    }

    fn apply_conj(&self, re: &mut [f64], im: &mut [f64]) {
        for j in 0..re.len() {
            let (c, s) = (self.cos[j], self.sin[j]);
            let r = re[j];
            re[j] = c * r + s * im[j];
            im[j] = -s * r + c * im[j];
        }
    }

    /// Accumulates `∂L/∂w_j = Re(conj(g_j) · i e^{iw_j} x_j)`.
    fn accumulate_grad(
        &self,
        x_re: &[f64],
        x_im: &[f64],
        g_re: &[f64],
        g_im: &[f64],
        acc: &mut [f64],
    ) {
        for j in 0..acc.len() {
            let yr = self.cos[j] * x_re[j] - self.sin[j] * x_im[j];
            let yi = self.sin[j] * x_re[j] + self.cos[j] * x_im[j];
            acc[j] += g_im[j] * yr - g_re[j] * yi;
        }
    }
}

pub fn apply_diag(d: &DiagonalPhase, x: &ComplexVector) -> Result<ComplexVector> {
    check_len("apply_diag", d.len(), x.len())?;
    let mut out = x.clone();
    d.trig().apply(&mut out.re, &mut out.im);
    Ok(out)
}

/// Householder reflection `I − 2vv*/‖v‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reflection {
    pub v: ComplexVector,
}

impl Reflection {
    pub fn new(v: ComplexVector) -> Result<Self> {
        let r = Self { v };
        r.squared_norm()?;
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    fn squared_norm(&self) -> Result<f64> {
        let q: f64 = self.v.re.iter().chain(&self.v.im).map(|a| a * a).sum();
        if q > 0.0 && q.is_finite() {
            Ok(q)
        } else {
            Err(Error::InvalidParameter(
                "reflection vector must have nonzero finite norm".into(),
            ))
        }
    }

    fn apply_in_place(&self, q: f64, re: &mut [f64], im: &mut [f64]) {
        let (sr, si) = inner(&self.v.re, &self.v.im, re, im);
        let (cr, ci) = (2.0 * sr / q, 2.0 * si / q);
        for j in 0..re.len() {
            let (vr, vi) = (self.v.re[j], self.v.im[j]);
            re[j] -= cr * vr - ci * vi;
            im[j] -= cr * vi + ci * vr;
        }
    }

    /// Accumulates the gradient with respect to `Re v` and `Im v` given the
    /// stage input `x` and output cotangent `g`.
    fn accumulate_grad(
        &self,
        q: f64,
        x: (&[f64], &[f64]),
        g: (&[f64], &[f64]),
        acc: &mut ComplexVector,
    ) {
        let (xr, xi) = x;
        let (gr, gi) = g;
        // s = v*x, a = g*v
        let (sr, si) = inner(&self.v.re, &self.v.im, xr, xi);
        let (ar, ai) = inner(gr, gi, &self.v.re, &self.v.im);
        let k = -2.0 / q;
        let m = 4.0 / (q * q) * (sr * ar - si * ai);
        for j in 0..acc.len() {
            // a·x_j
            let axr = ar * xr[j] - ai * xi[j];
            let axi = ar * xi[j] + ai * xr[j];
            // conj(s)·g_j
            let sgr = sr * gr[j] + si * gi[j];
            let sgi = sr * gi[j] - si * gr[j];
            acc.re[j] += k * (axr + sgr) + m * self.v.re[j];
            acc.im[j] += k * (axi + sgi) + m * self.v.im[j];
        }
    }
}

pub fn apply_reflection(r: &Reflection, x: &ComplexVector) -> Result<ComplexVector> {
    check_len("apply_reflection", r.len(), x.len())?;
    let q = r.squared_norm()?;
    let mut out = x.clone();
    r.apply_in_place(q, &mut out.re, &mut out.im);
    Ok(out)
}

/// Fixed index permutation: `output_j = x_{indices[j]}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedPermutation {
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl FixedPermutation {
    /// Fisher–Yates shuffle of `0..n` driven by `seed`.
    pub fn from_seed(n: usize, seed: u64) -> Self {
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        Self { indices, seed }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            seed: 0,
        }
    }

    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter(format!(
                    "indices are not a permutation of 0..{n}"
                )));
            }
        }
        Ok(Self { indices, seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (j, &i) in self.indices.iter().enumerate() {
            inv[i] = j;
        }
        Self {
            indices: inv,
            seed: self.seed,
        }
    }

    fn gather(&self, src: &[f64], dst: &mut [f64]) {
        for (d, &i) in dst.iter_mut().zip(&self.indices) {
            *d = src[i];
        }
    }

    fn scatter(&self, src: &[f64], dst: &mut [f64]) {
        for (&s, &i) in src.iter().zip(&self.indices) {
            dst[i] = s;
        }
    }
}

pub fn apply_permutation(p: &FixedPermutation, x: &ComplexVector) -> Result<ComplexVector> {
    check_len("apply_permutation", p.len(), x.len())?;
    let mut out = ComplexVector::zeros(x.len());
    p.gather(&x.re, &mut out.re);
    p.gather(&x.im, &mut out.im);
    Ok(out)
}

/// `W = D₃ R₂ F⁻¹ D₂ Π R₁ F D₁`, applied right to left.
#[derive(Clone, Debug)]
pub struct UnitaryComposition {
    pub d1: DiagonalPhase,
    pub r1: Reflection,
    pub perm: FixedPermutation,
    pub d2: DiagonalPhase,
    pub r2: Reflection,
    pub d3: DiagonalPhase,
    plan: FftPlan,
}

impl PartialEq for UnitaryComposition {
    fn eq(&self, other: &Self) -> bool {
        self.d1 == other.d1
            && self.r1 == other.r1
            && self.perm == other.perm
            && self.d2 == other.d2
            && self.r2 == other.r2
            && self.d3 == other.d3
    }
}

/// Parameter gradients of a [`UnitaryComposition`].
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionGrads {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub r1: ComplexVector,
    pub r2: ComplexVector,
}

impl CompositionGrads {
    pub fn zeros(n: usize) -> Self {
        Self {
            d1: vec![0.0; n],
            d2: vec![0.0; n],
            d3: vec![0.0; n],
            r1: ComplexVector::zeros(n),
            r2: ComplexVector::zeros(n),
        }
    }
}

/// Stage inputs cached by the forward pass for the backward pass: the
/// inputs of `R₁`, `D₂`, `R₂` and `D₃`. The input of `D₁` is the step's
/// incoming hidden state, which the caller already holds.
#[derive(Clone, Debug)]
pub struct CompositionTape {
    r1_in: ComplexVector,
    d2_in: ComplexVector,
    r2_in: ComplexVector,
    d3_in: ComplexVector,
}

/// Trig tables and reflection norms computed once per parameter setting.
pub struct PreparedComposition<'a> {
    c: &'a UnitaryComposition,
    d1: Trig,
    d2: Trig,
    d3: Trig,
    q1: f64,
    q2: f64,
}

impl UnitaryComposition {
    pub fn new(
        d1: DiagonalPhase,
        r1: Reflection,
        perm: FixedPermutation,
        d2: DiagonalPhase,
        r2: Reflection,
        d3: DiagonalPhase,
    ) -> Result<Self> {
        let n = d1.len();
        let plan = FftPlan::new(n)?;
        for (ctx, len) in [
            ("UnitaryComposition r1", r1.len()),
            ("UnitaryComposition permutation", perm.len()),
            ("UnitaryComposition d2", d2.len()),
            ("UnitaryComposition r2", r2.len()),
            ("UnitaryComposition d3", d3.len()),
        ] {
            check_len(ctx, n, len)?;
        }
        Ok(Self {
            d1,
            r1,
            perm,
            d2,
            r2,
            d3,
            plan,
        })
    }

    pub fn n(&self) -> usize {
        self.d1.len()
    }

    pub fn prepare(&self) -> Result<PreparedComposition<'_>> {
        Ok(PreparedComposition {
            c: self,
            d1: self.d1.trig(),
            d2: self.d2.trig(),
            d3: self.d3.trig(),
            q1: self.r1.squared_norm()?,
            q2: self.r2.squared_norm()?,
        })
    }
}

impl PreparedComposition<'_> {
    pub fn n(&self) -> usize {
        self.c.n()
    }

    /// Forward pass in place on `(re, im)`. When `tape` is requested the
    /// stage inputs needed by [`PreparedComposition::vjp`] are recorded.
    pub fn apply_in_place(
        &self,
        re: &mut [f64],
        im: &mut [f64],
        tape: bool,
    ) -> Option<CompositionTape> {
        let c = self.c;
        let snap = |re: &[f64], im: &[f64]| ComplexVector {
            re: re.to_vec(),
            im: im.to_vec(),
        };
        self.d1.apply(re, im);
        c.plan.forward_in_place(re, im);
        let r1_in = tape.then(|| snap(re, im));
        c.r1.apply_in_place(self.q1, re, im);
        let mut tmp = vec![0.0; re.len()];
        c.perm.gather(re, &mut tmp);
        re.copy_from_slice(&tmp);
        c.perm.gather(im, &mut tmp);
        im.copy_from_slice(&tmp);
        let d2_in = tape.then(|| snap(re, im));
        self.d2.apply(re, im);
        c.plan.inverse_in_place(re, im);
        let r2_in = tape.then(|| snap(re, im));
        c.r2.apply_in_place(self.q2, re, im);
        let d3_in = tape.then(|| snap(re, im));
        self.d3.apply(re, im);
        Some(CompositionTape {
            r1_in: r1_in?,
            d2_in: d2_in?,
            r2_in: r2_in?,
            d3_in: d3_in?,
        })
    }

    pub fn apply(&self, x: &ComplexVector) -> Result<ComplexVector> {
        check_len("apply_composition", self.n(), x.len())?;
        let mut out = x.clone();
        self.apply_in_place(&mut out.re, &mut out.im, false);
        Ok(out)
    }

    pub fn forward_with_tape(&self, x: &ComplexVector) -> Result<(ComplexVector, CompositionTape)> {
        check_len("apply_composition", self.n(), x.len())?;
        let mut out = x.clone();
        let tape = self
            .apply_in_place(&mut out.re, &mut out.im, true)
            .expect("tape requested");
        Ok((out, tape))
    }

    /// Applies `W*` in place.
    pub fn adjoint_in_place(&self, re: &mut [f64], im: &mut [f64]) {
        let c = self.c;
        self.d3.apply_conj(re, im);
        c.r2.apply_in_place(self.q2, re, im);
        c.plan.forward_in_place(re, im);
        self.d2.apply_conj(re, im);
        let mut tmp = vec![0.0; re.len()];
        c.perm.scatter(re, &mut tmp);
        re.copy_from_slice(&tmp);
        c.perm.scatter(im, &mut tmp);
        im.copy_from_slice(&tmp);
        c.r1.apply_in_place(self.q1, re, im);
        c.plan.inverse_in_place(re, im);
        self.d1.apply_conj(re, im);
    }

    /// Backward pass. `x` is the input that produced `tape`; `g` holds the
    /// output cotangent on entry and the input cotangent `W* g` on return.
    pub fn vjp(
        &self,
        x: &ComplexVector,
        tape: &CompositionTape,
        g: &mut ComplexVector,
        grads: &mut CompositionGrads,
    ) {
        let c = self.c;
        let (gr, gi) = (&mut g.re, &mut g.im);

        self.d3
            .accumulate_grad(&tape.d3_in.re, &tape.d3_in.im, gr, gi, &mut grads.d3);
        self.d3.apply_conj(gr, gi);

        c.r2.accumulate_grad(
            self.q2,
            (&tape.r2_in.re, &tape.r2_in.im),
            (gr, gi),
            &mut grads.r2,
        );
        c.r2.apply_in_place(self.q2, gr, gi);

        c.plan.forward_in_place(gr, gi);

        self.d2
            .accumulate_grad(&tape.d2_in.re, &tape.d2_in.im, gr, gi, &mut grads.d2);
        self.d2.apply_conj(gr, gi);

        let mut tmp = vec![0.0; gr.len()];
        c.perm.scatter(gr, &mut tmp);
        gr.copy_from_slice(&tmp);
        c.perm.scatter(gi, &mut tmp);
        gi.copy_from_slice(&tmp);

        c.r1.accumulate_grad(
            self.q1,
            (&tape.r1_in.re, &tape.r1_in.im),
            (gr, gi),
            &mut grads.r1,
        );
        c.r1.apply_in_place(self.q1, gr, gi);

        c.plan.inverse_in_place(gr, gi);

        self.d1.accumulate_grad(&x.re, &x.im, gr, gi, &mut grads.d1);
        self.d1.apply_conj(gr, gi);
    }
}

pub fn apply_composition(c: &UnitaryComposition, x: &ComplexVector) -> Result<ComplexVector> {
    c.prepare()?.apply(x)
}

/// Input cotangent and parameter gradients for output cotangent `g` at input `x`.
pub fn composition_vjp(
    c: &UnitaryComposition,
    x: &ComplexVector,
    g: &ComplexVector,
) -> Result<(ComplexVector, CompositionGrads)> {
    check_len("composition_vjp cotangent", c.n(), g.len())?;
    let prepared = c.prepare()?;
    let (_, tape) = prepared.forward_with_tape(x)?;
    let mut grad_x = g.clone();
    let mut grads = CompositionGrads::zeros(c.n());
    prepared.vjp(x, &tape, &mut grad_x, &mut grads);
    Ok((grad_x, grads))
}

/// Dense matrix of `c`, column `j` being `W e_j`. Small `n` only.
pub fn materialize(c: &UnitaryComposition) -> Result<ComplexMatrix> {
    let n = c.n();
    if n > MATERIALIZE_LIMIT {
        return Err(Error::SizeGuard {
            n,
            limit: MATERIALIZE_LIMIT,
        });
    }
    let prepared = c.prepare()?;
    let cols = (0..n)
        .map(|j| prepared.apply(&ComplexVector::basis(n, j)))
        .collect::<Result<Vec<_>>>()?;
    ComplexMatrix::from_columns(&cols)
}
