//! The unitary-evolution RNN:
//!
//! ```text
//! z_t = W h_{t-1} + V x_t,   h_t = modReLU(z_t, b),   o_t = U (Re h_t; Im h_t) + b_o
//! ```
//!
//! with `W` a [`UnitaryComposition`], complex `V`, real `U`, and a learned
//! initial state `h₀`.

use crate::complex::{cnorm, matvec_real_input_acc, ComplexMatrix, ComplexVector};
use crate::error::{check_len, Error, Result};
use crate::model::{Grads, OutputMode, ParamGroup, Recurrent};
use crate::unitary::{CompositionGrads, CompositionTape, UnitaryComposition};

/// Smoothing constant in the modReLU denominator `|z| + ε`.
pub const MODRELU_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    ModRelu,
    /// `h_t = z_t`: purely unitary evolution plus input.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UrnnDims {
    pub n_in: usize,
    pub n_h: usize,
    pub n_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UrnnParams {
    pub v_in: ComplexMatrix,
    pub w: UnitaryComposition,
    pub b: Vec<f64>,
    /// Row-major `n_out × 2n_h`.
    pub u_out: Vec<f64>,
    pub b_o: Vec<f64>,
    pub h0: ComplexVector,
    pub activation: Activation,
}

/// Group order of [`UrnnParams`] parameters and gradients.
pub const URNN_GROUPS: [&str; 14] = [
    "v_re", "v_im", "w_d1", "w_d2", "w_d3", "w_r1_re", "w_r1_im", "w_r2_re", "w_r2_im", "b", "u",
    "b_o", "h0_re", "h0_im",
];

impl UrnnParams {
    pub fn new(
        v_in: ComplexMatrix,
        w: UnitaryComposition,
        b: Vec<f64>,
        u_out: Vec<f64>,
        b_o: Vec<f64>,
        h0: ComplexVector,
    ) -> Result<Self> {
        let n_h = w.n();
        check_len("V rows", n_h, v_in.rows)?;
        check_len("modReLU biases", n_h, b.len())?;
        check_len("initial state", n_h, h0.len())?;
        check_len("U entries", b_o.len() * 2 * n_h, u_out.len())?;
        Ok(Self {
            v_in,
            w,
            b,
            u_out,
            b_o,
            h0,
            activation: Activation::ModRelu,
        })
    }

    pub fn dims(&self) -> UrnnDims {
        UrnnDims {
            n_in: self.v_in.cols,
            n_h: self.w.n(),
            n_out: self.b_o.len(),
        }
    }

    /// `2·n_h·n_in + 7·n_h + n_h + 2·n_h·n_o + n_o + 2·n_h`.
    pub fn expected_param_count(d: UrnnDims) -> usize {
        2 * d.n_h * d.n_in + 7 * d.n_h + d.n_h + 2 * d.n_h * d.n_out + d.n_out + 2 * d.n_h
    }

    fn output(&self, h: &ComplexVector) -> Vec<f64> {
        let n_h = h.len();
        self.b_o
            .iter()
            .enumerate()
            .map(|(k, bo)| {
                let row = &self.u_out[k * 2 * n_h..(k + 1) * 2 * n_h];
                let (ur, ui) = row.split_at(n_h);
                bo + ur.iter().zip(&h.re).map(|(u, v)| u * v).sum::<f64>()
                    + ui.iter().zip(&h.im).map(|(u, v)| u * v).sum::<f64>()
            })
            .collect()
    }

    /// `gh += Uᵀ g`, `∂U += g ⊗ (Re h; Im h)`, `∂b_o += g`.
    fn output_backward(
        &self,
        h: &ComplexVector,
        g: &[f64],
        gh: &mut ComplexVector,
        grads: &mut Grads,
    ) {
        let n_h = h.len();
        for (k, &gk) in g.iter().enumerate() {
            if gk == 0.0 {
                continue;
            }
            let row = &self.u_out[k * 2 * n_h..(k + 1) * 2 * n_h];
            let grow = &mut grads[G_U][k * 2 * n_h..(k + 1) * 2 * n_h];
            for j in 0..n_h {
                gh.re[j] += row[j] * gk;
                gh.im[j] += row[n_h + j] * gk;
                grow[j] += gk * h.re[j];
                grow[n_h + j] += gk * h.im[j];
            }
            grads[G_BO][k] += gk;
        }
    }
}

const G_VRE: usize = 0;
const G_VIM: usize = 1;
const G_D1: usize = 2;
const G_D2: usize = 3;
const G_D3: usize = 4;
const G_R1RE: usize = 5;
const G_R1IM: usize = 6;
const G_R2RE: usize = 7;
const G_R2IM: usize = 8;
const G_B: usize = 9;
const G_U: usize = 10;
const G_BO: usize = 11;
const G_H0RE: usize = 12;
const G_H0IM: usize = 13;

fn modrelu_in_place(re: &mut [f64], im: &mut [f64], b: &[f64]) {
    for j in 0..re.len() {
        let r = re[j].hypot(im[j]);
        let scale = (r + b[j]).max(0.0) / (r + MODRELU_EPS);
        re[j] *= scale;
        im[j] *= scale;
    }
}

/// `z ↦ z · max(|z| + b, 0) / (|z| + ε)` per coordinate.
pub fn modrelu(z: &ComplexVector, b: &[f64]) -> Result<ComplexVector> {
    check_len("modrelu", z.len(), b.len())?;
    let mut out = z.clone();
    modrelu_in_place(&mut out.re, &mut out.im, b);
    Ok(out)
}

/// Overwrites `g` (cotangent of the output) with the cotangent of `z` and
/// accumulates the bias gradient. Units with `|z| + b < 0` pass nothing.
fn modrelu_backward(z: &ComplexVector, b: &[f64], g: &mut ComplexVector, grad_b: &mut [f64]) {
    for j in 0..z.len() {
        let (zr, zi) = (z.re[j], z.im[j]);
        let r = zr.hypot(zi);
        let a = r + b[j];
        if a < 0.0 {
            g.re[j] = 0.0;
            g.im[j] = 0.0;
            continue;
        }
        let denom = r + MODRELU_EPS;
        let c = a / denom;
        let (gr, gi) = (g.re[j], g.im[j]);
        let gz = gr * zr + gi * zi;
        grad_b[j] += gz / denom;
        let mut out_r = gr * c;
        let mut out_i = gi * c;
        if r > 0.0 {
            // d c / d r = (ε − b) / (r + ε)²
            let k = gz * (MODRELU_EPS - b[j]) / (denom * denom * r);
            out_r += k * zr;
            out_i += k * zi;
        }
        g.re[j] = out_r;
        g.im[j] = out_i;
    }
}

/// Cotangents of `z` and `b` for output cotangent `g`.
pub fn modrelu_vjp(
    z: &ComplexVector,
    b: &[f64],
    g: &ComplexVector,
) -> Result<(ComplexVector, Vec<f64>)> {
    check_len("modrelu_vjp biases", z.len(), b.len())?;
    check_len("modrelu_vjp cotangent", z.len(), g.len())?;
    let mut grad_z = g.clone();
    let mut grad_b = vec![0.0; b.len()];
    modrelu_backward(z, b, &mut grad_z, &mut grad_b);
    Ok((grad_z, grad_b))
}

/// Forward record of one sequence.
#[derive(Clone, Debug)]
pub struct SequenceTape {
    pub steps: usize,
    pub mode: OutputMode,
    pub x: Vec<f64>,
    /// `h₀ … h_T`.
    pub h: Vec<ComplexVector>,
    /// `z₁ … z_T`.
    pub z: Vec<ComplexVector>,
    comp: Vec<CompositionTape>,
}

impl SequenceTape {
    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }
}

pub fn forward_sequence(
    p: &UrnnParams,
    x: &[f64],
    steps: usize,
    mode: OutputMode,
) -> Result<(SequenceTape, Vec<Vec<f64>>)> {
    let d = p.dims();
    check_len("input sequence", steps * d.n_in, x.len())?;
    if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite input at step {}, feature {}",
            bad / d.n_in.max(1),
            bad % d.n_in.max(1)
        )));
    }
    let w = p.w.prepare()?;
    let mut h = Vec::with_capacity(steps + 1);
    let mut z = Vec::with_capacity(steps);
    let mut comp = Vec::with_capacity(steps);
    let mut outputs = Vec::with_capacity(if mode == OutputMode::PerStep {
        steps
    } else {
        1
    });
    h.push(p.h0.clone());
    for t in 0..steps {
        let mut zt = h[t].clone();
        let ct = w
            .apply_in_place(&mut zt.re, &mut zt.im, true)
            .expect("tape requested");
        matvec_real_input_acc(
            &p.v_in,
            &x[t * d.n_in..(t + 1) * d.n_in],
            &mut zt.re,
            &mut zt.im,
        );
        let mut ht = zt.clone();
        if p.activation == Activation::ModRelu {
            modrelu_in_place(&mut ht.re, &mut ht.im, &p.b);
        }
        if mode == OutputMode::PerStep {
            outputs.push(p.output(&ht));
        }
        z.push(zt);
        comp.push(ct);
        h.push(ht);
    }
    if mode == OutputMode::Final {
        outputs.push(p.output(&h[steps]));
    }
    Ok((
        SequenceTape {
            steps,
            mode,
            x: x.to_vec(),
            h,
            z,
            comp,
        },
        outputs,
    ))
}

fn backward_into(
    p: &UrnnParams,
    tape: &SequenceTape,
    out_grads: &[Vec<f64>],
    grads: &mut Grads,
    mut probe: Option<&mut [f64]>,
) -> Result<()> {
    let d = p.dims();
    let steps = tape.steps;
    let consistent = tape.h.len() == steps + 1
        && tape.z.len() == steps
        && tape.comp.len() == steps
        && tape.x.len() == steps * d.n_in
        && tape.h.iter().all(|h| h.len() == d.n_h);
    if !consistent {
        return Err(Error::Consistency(
            "tape does not match uRNN parameters".into(),
        ));
    }
    let expected = if tape.mode == OutputMode::PerStep {
        steps
    } else {
        1
    };
    if out_grads.len() != expected || out_grads.iter().any(|g| g.len() != d.n_out) {
        return Err(Error::Consistency(format!(
            "expected {expected} output gradients of width {}",
            d.n_out
        )));
    }
    if grads.len() != URNN_GROUPS.len() {
        return Err(Error::Consistency(
            "gradient buffer has wrong group count".into(),
        ));
    }
    if let Some(pr) = probe.as_deref() {
        check_len("gradient probe", steps, pr.len())?;
    }

    let w = p.w.prepare()?;
    let mut comp_grads = CompositionGrads::zeros(d.n_h);
    let mut gh = ComplexVector::zeros(d.n_h);
    if tape.mode == OutputMode::Final {
        p.output_backward(&tape.h[steps], &out_grads[0], &mut gh, grads);
    }
    for t in (1..=steps).rev() {
        if tape.mode == OutputMode::PerStep {
            p.output_backward(&tape.h[t], &out_grads[t - 1], &mut gh, grads);
        }
        if let Some(pr) = probe.as_deref_mut() {
            pr[t - 1] += cnorm(&gh);
        }
        if p.activation == Activation::ModRelu {
            modrelu_backward(&tape.z[t - 1], &p.b, &mut gh, &mut grads[G_B]);
        }
        let xt = &tape.x[(t - 1) * d.n_in..t * d.n_in];
        for (j, &xj) in xt.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for i in 0..d.n_h {
                grads[G_VRE][i * d.n_in + j] += gh.re[i] * xj;
                grads[G_VIM][i * d.n_in + j] += gh.im[i] * xj;
            }
        }
        w.vjp(&tape.h[t - 1], &tape.comp[t - 1], &mut gh, &mut comp_grads);
    }
    let add = |dst: &mut Vec<f64>, src: &[f64]| dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
    add(&mut grads[G_D1], &comp_grads.d1);
    add(&mut grads[G_D2], &comp_grads.d2);
    add(&mut grads[G_D3], &comp_grads.d3);
    add(&mut grads[G_R1RE], &comp_grads.r1.re);
    add(&mut grads[G_R1IM], &comp_grads.r1.im);
    add(&mut grads[G_R2RE], &comp_grads.r2.re);
    add(&mut grads[G_R2IM], &comp_grads.r2.im);
    add(&mut grads[G_H0RE], &gh.re);
    add(&mut grads[G_H0IM], &gh.im);
    Ok(())
}

/// Named gradients of every [`UrnnParams`] field.
#[derive(Clone, Debug, PartialEq)]
pub struct UrnnGrads {
    pub v_in: ComplexMatrix,
    pub w: CompositionGrads,
    pub b: Vec<f64>,
    pub u_out: Vec<f64>,
    pub b_o: Vec<f64>,
    pub h0: ComplexVector,
}

impl UrnnGrads {
    pub fn from_groups(d: UrnnDims, mut g: Grads) -> Self {
        let mut take = |i: usize| std::mem::take(&mut g[i]);
        Self {
            v_in: ComplexMatrix {
                rows: d.n_h,
                cols: d.n_in,
                a: take(G_VRE),
                b: take(G_VIM),
            },
            w: CompositionGrads {
                d1: take(G_D1),
                d2: take(G_D2),
                d3: take(G_D3),
                r1: ComplexVector {
                    re: take(G_R1RE),
                    im: take(G_R1IM),
                },
                r2: ComplexVector {
                    re: take(G_R2RE),
                    im: take(G_R2IM),
                },
            },
            b: take(G_B),
            u_out: take(G_U),
            b_o: take(G_BO),
            h0: ComplexVector {
                re: take(G_H0RE),
                im: take(G_H0IM),
            },
        }
    }
}

/// Exact gradients of the loss whose output cotangents are `loss_grads`.
pub fn bptt(p: &UrnnParams, tape: &SequenceTape, loss_grads: &[Vec<f64>]) -> Result<UrnnGrads> {
    let mut grads = p.zero_grads();
    backward_into(p, tape, loss_grads, &mut grads, None)?;
    Ok(UrnnGrads::from_groups(p.dims(), grads))
}

impl Recurrent for UrnnParams {
    type Tape = SequenceTape;

    fn input_dim(&self) -> usize {
        self.v_in.cols
    }

    fn output_dim(&self) -> usize {
        self.b_o.len()
    }

    fn param_groups(&self) -> Vec<ParamGroup<'_>> {
        let d = self.dims();
        let g = |name, shape: Vec<usize>, data| ParamGroup { name, shape, data };
        vec![
            g(URNN_GROUPS[G_VRE], vec![d.n_h, d.n_in], &self.v_in.a[..]),
            g(URNN_GROUPS[G_VIM], vec![d.n_h, d.n_in], &self.v_in.b[..]),
            g(URNN_GROUPS[G_D1], vec![d.n_h], &self.w.d1.w[..]),
            g(URNN_GROUPS[G_D2], vec![d.n_h], &self.w.d2.w[..]),
            g(URNN_GROUPS[G_D3], vec![d.n_h], &self.w.d3.w[..]),
            g(URNN_GROUPS[G_R1RE], vec![d.n_h], &self.w.r1.v.re[..]),
            g(URNN_GROUPS[G_R1IM], vec![d.n_h], &self.w.r1.v.im[..]),
            g(URNN_GROUPS[G_R2RE], vec![d.n_h], &self.w.r2.v.re[..]),
            g(URNN_GROUPS[G_R2IM], vec![d.n_h], &self.w.r2.v.im[..]),
            g(URNN_GROUPS[G_B], vec![d.n_h], &self.b[..]),
            g(URNN_GROUPS[G_U], vec![d.n_out, 2 * d.n_h], &self.u_out[..]),
            g(URNN_GROUPS[G_BO], vec![d.n_out], &self.b_o[..]),
            g(URNN_GROUPS[G_H0RE], vec![d.n_h], &self.h0.re[..]),
            g(URNN_GROUPS[G_H0IM], vec![d.n_h], &self.h0.im[..]),
        ]
    }

    fn param_data_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.v_in.a,
            &mut self.v_in.b,
            &mut self.w.d1.w,
            &mut self.w.d2.w,
            &mut self.w.d3.w,
            &mut self.w.r1.v.re,
            &mut self.w.r1.v.im,
            &mut self.w.r2.v.re,
            &mut self.w.r2.v.im,
            &mut self.b,
            &mut self.u_out,
            &mut self.b_o,
            &mut self.h0.re,
            &mut self.h0.im,
        ]
    }

    fn forward(
        &self,
        x: &[f64],
        steps: usize,
        mode: OutputMode,
    ) -> Result<(SequenceTape, Vec<Vec<f64>>)> {
        forward_sequence(self, x, steps, mode)
    }

    fn backward(
        &self,
        tape: &SequenceTape,
        out_grads: &[Vec<f64>],
        grads: &mut Grads,
        hidden_grad_norms: Option<&mut [f64]>,
    ) -> Result<()> {
        backward_into(self, tape, out_grads, grads, hidden_grad_norms)
    }

    fn hidden_states(&self, tape: &SequenceTape) -> Vec<Vec<f64>> {
        tape.h[1..].iter().map(ComplexVector::stacked).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::{DiagonalPhase, FixedPermutation, Reflection};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c1(re: f64, im: f64) -> ComplexVector {
        ComplexVector::new(vec![re], vec![im]).unwrap()
    }

    #[test]
    fn modrelu_examples() {
        let y = modrelu(&c1(1.0, 0.0), &[0.5]).unwrap();
        assert!((y.re[0] - 1.5 / (1.0 + MODRELU_EPS)).abs() < 1e-15);
        assert!((y.re[0] - 1.5).abs() < 2e-5);

        assert_eq!(modrelu(&c1(3.0, 4.0), &[-6.0]).unwrap(), c1(0.0, 0.0));

        let y = modrelu(&c1(3.0, 4.0), &[0.0]).unwrap();
        assert!(y.max_abs_diff(&c1(3.0, 4.0)) < 1e-5);
        assert!(modrelu(&c1(3.0, 4.0), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn modrelu_at_zero_is_finite() {
        let y = modrelu(&c1(0.0, 0.0), &[0.3]).unwrap();
        assert_eq!(y, c1(0.0, 0.0));
        let (gz, gb) = modrelu_vjp(&c1(0.0, 0.0), &[0.3], &c1(1.0, -1.0)).unwrap();
        assert!(gz.re[0].is_finite() && gz.im[0].is_finite() && gb[0] == 0.0);
    }

    #[test]
    fn modrelu_vjp_dead_and_zero_cotangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = ComplexVector {
            re: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            im: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let g = ComplexVector::from_real(vec![1.0; 6]);
        let (gz, gb) = modrelu_vjp(&z, &[-10.0; 6], &g).unwrap();
        assert_eq!(gz, ComplexVector::zeros(6));
        assert_eq!(gb, vec![0.0; 6]);

        let (gz, gb) = modrelu_vjp(&z, &[0.1; 6], &ComplexVector::zeros(6)).unwrap();
        assert_eq!(gz, ComplexVector::zeros(6));
        assert_eq!(gb, vec![0.0; 6]);
    }

    #[test]
    fn modrelu_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 5;
        let z = ComplexVector {
            re: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            im: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        };
        let h = 1e-6;
        for b in [
            vec![0.0; n],
            (0..n).map(|_| rng.gen_range(-0.3..0.5)).collect(),
        ] {
            for j in 0..n {
                // loss = Re(output_j)
                let mut g = ComplexVector::zeros(n);
                g.re[j] = 1.0;
                let (gz, gb) = modrelu_vjp(&z, &b, &g).unwrap();
                let loss = |z: &ComplexVector, b: &[f64]| modrelu(z, b).unwrap().re[j];
                let fd = |f: &dyn Fn(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
                let fd_re = fd(&|e| {
                    let mut zp = z.clone();
                    zp.re[j] += e;
                    loss(&zp, &b)
                });
                let fd_im = fd(&|e| {
                    let mut zp = z.clone();
                    zp.im[j] += e;
                    loss(&zp, &b)
                });
                let fd_b = fd(&|e| {
                    let mut bp = b.clone();
                    bp[j] += e;
                    loss(&z, &bp)
                });
                assert!((fd_re - gz.re[j]).abs() < 1e-6, "re {fd_re} {}", gz.re[j]);
                assert!((fd_im - gz.im[j]).abs() < 1e-6, "im {fd_im} {}", gz.im[j]);
                assert!((fd_b - gb[j]).abs() < 1e-6, "b {fd_b} {}", gb[j]);
            }
        }
    }

    proptest! {
        #[test]
        fn modrelu_keeps_phase_and_sets_magnitude(
            r in 1.0f64..10.0, theta in -PI..PI, b in -12.0f64..5.0,
        ) {
            let z = c1(r * theta.cos(), r * theta.sin());
            let y = modrelu(&z, &[b]).unwrap();
            let mag = y.re[0].hypot(y.im[0]);
            prop_assert!((mag - (r + b).max(0.0)).abs() <= MODRELU_EPS * (1.0 + b.abs()));
            if r + b > 0.0 {
                let phase_in = z.im[0].atan2(z.re[0]);
                let phase_out = y.im[0].atan2(y.re[0]);
                prop_assert!((phase_in - phase_out).abs() <= 1e-9);
            }
        }
    }

    fn small_params(seed: u64, d: UrnnDims) -> UrnnParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u =
            |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-s..s)).collect() };
        let n = d.n_h;
        let v_in = ComplexMatrix::new(n, d.n_in, u(n * d.n_in, 0.5), u(n * d.n_in, 0.5)).unwrap();
        let w = UnitaryComposition::new(
            DiagonalPhase::new(u(n, 3.0)),
            Reflection::new(ComplexVector::new(u(n, 1.0), u(n, 1.0)).unwrap()).unwrap(),
            FixedPermutation::from_seed(n, seed),
            DiagonalPhase::new(u(n, 3.0)),
            Reflection::new(ComplexVector::new(u(n, 1.0), u(n, 1.0)).unwrap()).unwrap(),
            DiagonalPhase::new(u(n, 3.0)),
        )
        .unwrap();
        UrnnParams::new(
            v_in,
            w,
            u(n, 0.2),
            u(d.n_out * 2 * n, 0.5),
            u(d.n_out, 0.1),
            ComplexVector::new(u(n, 0.5), u(n, 0.5)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn param_count_formula() {
        let d = UrnnDims {
            n_in: 3,
            n_h: 8,
            n_out: 2,
        };
        let p = small_params(0, d);
        assert_eq!(p.num_params(), UrnnParams::expected_param_count(d));
        assert_eq!(p.param_groups().len(), URNN_GROUPS.len());
        for (g, name) in p.param_groups().iter().zip(URNN_GROUPS) {
            assert_eq!(g.name, name);
            assert_eq!(g.shape.iter().product::<usize>(), g.data.len());
        }
    }

    #[test]
    fn empty_sequence_uses_initial_state() {
        let d = UrnnDims {
            n_in: 2,
            n_h: 4,
            n_out: 3,
        };
        let p = small_params(1, d);
        let (tape, out) = forward_sequence(&p, &[], 0, OutputMode::Final).unwrap();
        assert_eq!(out, vec![p.output(&p.h0)]);
        assert!(tape.is_empty());
        let (_, out) = forward_sequence(&p, &[], 0, OutputMode::PerStep).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn zero_input_linear_regime_keeps_norm() {
        let d = UrnnDims {
            n_in: 2,
            n_h: 16,
            n_out: 2,
        };
        let mut p = small_params(2, d);
        p.b = vec![0.0; 16];
        p.u_out = vec![0.0; p.u_out.len()];
        p.activation = Activation::Identity;
        let (tape, out) = forward_sequence(&p, &vec![0.0; 40], 20, OutputMode::PerStep).unwrap();
        let n0 = cnorm(&p.h0);
        for h in &tape.h {
            assert!((cnorm(h) - n0).abs() < 1e-12 * n0);
        }
        assert!(out.iter().all(|o| o == &p.b_o));
    }

    #[test]
    fn hidden_norm_triangle_bound() {
        let d = UrnnDims {
            n_in: 3,
            n_h: 8,
            n_out: 2,
        };
        let p = small_params(3, d);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (tape, _) = forward_sequence(&p, &x, 5, OutputMode::PerStep).unwrap();
        let bmax =
            p.b.iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0);
        for t in 0..5 {
            let mut vx = ComplexVector::zeros(8);
            matvec_real_input_acc(&p.v_in, &x[3 * t..3 * t + 3], &mut vx.re, &mut vx.im);
            let bound = cnorm(&tape.h[t]) + cnorm(&vx) + bmax * 8f64.sqrt();
            assert!(cnorm(&tape.h[t + 1]) <= bound + 1e-12);
        }
    }

    #[test]
    fn forward_errors() {
        let d = UrnnDims {
            n_in: 2,
            n_h: 4,
            n_out: 1,
        };
        let p = small_params(4, d);
        assert!(matches!(
            forward_sequence(&p, &[0.0; 5], 3, OutputMode::Final),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            forward_sequence(&p, &[0.0, f64::NAN, 0.0, 0.0], 2, OutputMode::Final),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_grads() {
        let d = UrnnDims {
            n_in: 2,
            n_h: 4,
            n_out: 3,
        };
        let p = small_params(5, d);
        let (tape, _) = forward_sequence(&p, &[0.5; 8], 4, OutputMode::PerStep).unwrap();
        let g = bptt(&p, &tape, &vec![vec![0.0; 3]; 4]).unwrap();
        assert_eq!(g, UrnnGrads::from_groups(d, p.zero_grads()));
    }

    #[test]
    fn bptt_rejects_mismatched_tape() {
        let p4 = small_params(
            6,
            UrnnDims {
                n_in: 2,
                n_h: 4,
                n_out: 1,
            },
        );
        let p8 = small_params(
            6,
            UrnnDims {
                n_in: 2,
                n_h: 8,
                n_out: 1,
            },
        );
        let (tape, _) = forward_sequence(&p4, &[0.1; 6], 3, OutputMode::Final).unwrap();
        assert!(matches!(
            bptt(&p8, &tape, &[vec![1.0]]),
            Err(Error::Consistency(_))
        ));
        assert!(matches!(
            bptt(&p4, &tape, &[vec![1.0], vec![1.0]]),
            Err(Error::Consistency(_))
        ));
    }
}
