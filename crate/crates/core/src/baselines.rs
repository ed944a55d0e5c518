//! Comparison cells: a plain RNN (tanh, or ReLU with identity recurrence for
//! the IRNN) and an LSTM without peepholes. Both have a linear output layer.

use crate::error::{check_len, Error, Result};
use crate::model::{global_norm, Grads, OutputMode, ParamGroup, Recurrent};
use crate::optim::glorot_uniform;
use crate::seed::{rng_for, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RnnActivation {
    Tanh,
    Relu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams {
    pub n_in: usize,
    pub n_h: usize,
    pub n_out: usize,
    /// Row-major `n_h × n_h`.
    pub w_hh: Vec<f64>,
    /// Row-major `n_h × n_in`.
    pub w_xh: Vec<f64>,
    pub b_h: Vec<f64>,
    pub h0: Vec<f64>,
    /// Row-major `n_out × n_h`.
    pub w_ho: Vec<f64>,
    pub b_o: Vec<f64>,
    pub activation: RnnActivation,
}

pub const RNN_GROUPS: [&str; 6] = ["w_hh", "w_xh", "b_h", "h0", "w_ho", "b_o"];
pub const LSTM_GROUPS: [&str; 6] = ["w_gates", "b_gates", "h0", "c0", "w_ho", "b_o"];

/// `out += M v` for row-major `M` (`rows × v.len()`).
fn matvec_acc(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Mᵀ g`.
fn matvec_t_acc(m: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (&gi, row) in g.iter().zip(m.chunks_exact(cols)) {
        if gi == 0.0 {
            continue;
        }
        out.iter_mut().zip(row).for_each(|(o, r)| *o += gi * r);
    }
}

/// `M += g ⊗ v`.
fn outer_acc(m: &mut [f64], g: &[f64], v: &[f64]) {
    let cols = v.len();
    for (&gi, row) in g.iter().zip(m.chunks_exact_mut(cols)) {
        if gi == 0.0 {
            continue;
        }
        row.iter_mut().zip(v).for_each(|(r, x)| *r += gi * x);
    }
}

fn linear_output(w: &[f64], b: &[f64], h: &[f64]) -> Vec<f64> {
    let mut o = b.to_vec();
    matvec_acc(w, h, &mut o);
    o
}

fn check_finite_input(x: &[f64], n_in: usize) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Data(format!(
            "non-finite input at step {}",
            i / n_in.max(1)
        ))),
        None => Ok(()),
    }
}

fn check_out_grads(
    mode: OutputMode,
    steps: usize,
    n_out: usize,
    out_grads: &[Vec<f64>],
) -> Result<()> {
    let expected = if mode == OutputMode::PerStep {
        steps
    } else {
        1
    };
    if out_grads.len() != expected || out_grads.iter().any(|g| g.len() != n_out) {
        return Err(Error::Consistency(format!(
            "expected {expected} output gradients of width {n_out}"
        )));
    }
    Ok(())
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl RnnParams {
    /// Glorot-uniform weights; identity recurrence for ReLU (IRNN); zero
    /// biases and initial state.
    pub fn init(
        n_in: usize,
        n_h: usize,
        n_out: usize,
        activation: RnnActivation,
        seed: u64,
    ) -> Self {
        let mut rng = rng_for(seed, Stream::Init, 0);
        let w_hh = match activation {
            RnnActivation::Tanh => glorot_uniform(&mut rng, n_h, n_h, n_h * n_h),
            RnnActivation::Relu => {
                let mut w = vec![0.0; n_h * n_h];
                (0..n_h).for_each(|j| w[j * n_h + j] = 1.0);
                w
            }
        };
        let w_xh = glorot_uniform(&mut rng, n_in, n_h, n_h * n_in);
        let w_ho = glorot_uniform(&mut rng, n_h, n_out, n_out * n_h);
        Self {
            n_in,
            n_h,
            n_out,
            w_hh,
            w_xh,
            b_h: vec![0.0; n_h],
            h0: vec![0.0; n_h],
            w_ho,
            b_o: vec![0.0; n_out],
            activation,
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let (i, h, o) = (self.n_in, self.n_h, self.n_out);
        check_len("w_hh", h * h, self.w_hh.len())?;
        check_len("w_xh", h * i, self.w_xh.len())?;
        check_len("b_h", h, self.b_h.len())?;
        check_len("h0", h, self.h0.len())?;
        check_len("w_ho", o * h, self.w_ho.len())?;
        check_len("b_o", o, self.b_o.len())
    }
}

#[derive(Clone, Debug)]
pub struct RnnTape {
    mode: OutputMode,
    x: Vec<f64>,
    /// `h₀ … h_T`.
    h: Vec<Vec<f64>>,
}

impl Recurrent for RnnParams {
    type Tape = RnnTape;

    fn input_dim(&self) -> usize {
        self.n_in
    }

    fn output_dim(&self) -> usize {
        self.n_out
    }

    fn param_groups(&self) -> Vec<ParamGroup<'_>> {
        let (i, h, o) = (self.n_in, self.n_h, self.n_out);
        let g = |name, shape: Vec<usize>, data| ParamGroup { name, shape, data };
        vec![
            g(RNN_GROUPS[0], vec![h, h], &self.w_hh[..]),
            g(RNN_GROUPS[1], vec![h, i], &self.w_xh[..]),
            g(RNN_GROUPS[2], vec![h], &self.b_h[..]),
            g(RNN_GROUPS[3], vec![h], &self.h0[..]),
            g(RNN_GROUPS[4], vec![o, h], &self.w_ho[..]),
            g(RNN_GROUPS[5], vec![o], &self.b_o[..]),
        ]
    }

    fn param_data_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_hh,
            &mut self.w_xh,
            &mut self.b_h,
            &mut self.h0,
            &mut self.w_ho,
            &mut self.b_o,
        ]
    }

    fn forward(
        &self,
        x: &[f64],
        steps: usize,
        mode: OutputMode,
    ) -> Result<(RnnTape, Vec<Vec<f64>>)> {
        self.check_shapes()?;
        check_len("input sequence", steps * self.n_in, x.len())?;
        check_finite_input(x, self.n_in)?;
        let mut h = Vec::with_capacity(steps + 1);
        h.push(self.h0.clone());
        let mut outputs = Vec::new();
        for t in 0..steps {
            let mut a = self.b_h.clone();
            matvec_acc(&self.w_hh, &h[t], &mut a);
            matvec_acc(&self.w_xh, &x[t * self.n_in..(t + 1) * self.n_in], &mut a);
            match self.activation {
                RnnActivation::Tanh => a.iter_mut().for_each(|v| *v = v.tanh()),
                RnnActivation::Relu => a.iter_mut().for_each(|v| *v = v.max(0.0)),
            }
            if mode == OutputMode::PerStep {
                outputs.push(linear_output(&self.w_ho, &self.b_o, &a));
            }
            h.push(a);
        }
        if mode == OutputMode::Final {
            outputs.push(linear_output(&self.w_ho, &self.b_o, &h[steps]));
        }
        Ok((
            RnnTape {
                mode,
                x: x.to_vec(),
                h,
            },
            outputs,
        ))
    }

    fn backward(
        &self,
        tape: &RnnTape,
        out_grads: &[Vec<f64>],
        grads: &mut Grads,
        mut probe: Option<&mut [f64]>,
    ) -> Result<()> {
        let steps = tape.h.len() - 1;
        if tape.x.len() != steps * self.n_in
            || tape.h[0].len() != self.n_h
            || grads.len() != RNN_GROUPS.len()
        {
            return Err(Error::Consistency(
                "tape does not match RNN parameters".into(),
            ));
        }
        check_out_grads(tape.mode, steps, self.n_out, out_grads)?;
        let n_h = self.n_h;
        let mut gh = vec![0.0; n_h];
        let output_backward = |t: usize, g: &[f64], gh: &mut [f64], grads: &mut Grads| {
            matvec_t_acc(&self.w_ho, g, gh);
            outer_acc(&mut grads[4], g, &tape.h[t]);
            grads[5].iter_mut().zip(g).for_each(|(a, b)| *a += b);
        };
        if tape.mode == OutputMode::Final {
            output_backward(steps, &out_grads[0], &mut gh, grads);
        }
        for t in (1..=steps).rev() {
            if tape.mode == OutputMode::PerStep {
                output_backward(t, &out_grads[t - 1], &mut gh, grads);
            }
            if let Some(p) = probe.as_deref_mut() {
                p[t - 1] += l2(&gh);
            }
            let ht = &tape.h[t];
            let ga: Vec<f64> = match self.activation {
                RnnActivation::Tanh => gh.iter().zip(ht).map(|(g, h)| g * (1.0 - h * h)).collect(),
                RnnActivation::Relu => gh
                    .iter()
                    .zip(ht)
                    .map(|(g, &h)| if h > 0.0 { *g } else { 0.0 })
                    .collect(),
            };
            outer_acc(&mut grads[0], &ga, &tape.h[t - 1]);
            outer_acc(
                &mut grads[1],
                &ga,
                &tape.x[(t - 1) * self.n_in..t * self.n_in],
            );
            grads[2].iter_mut().zip(&ga).for_each(|(a, b)| *a += b);
            gh.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(&self.w_hh, &ga, &mut gh);
        }
        grads[3].iter_mut().zip(&gh).for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn hidden_states(&self, tape: &RnnTape) -> Vec<Vec<f64>> {
        tape.h[1..].to_vec()
    }
}

/// LSTM with gates stacked as `[input; forget; output; candidate]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub n_in: usize,
    pub n_h: usize,
    pub n_out: usize,
    /// Row-major `4n_h × (n_h + n_in)`, acting on `(h_{t-1}; x_t)`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
    pub w_ho: Vec<f64>,
    pub b_o: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    /// Glorot-uniform weights, forget-gate bias 1, other biases and states 0.
    pub fn init(n_in: usize, n_h: usize, n_out: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::Init, 0);
        let w = glorot_uniform(&mut rng, n_h + n_in, n_h, 4 * n_h * (n_h + n_in));
        let w_ho = glorot_uniform(&mut rng, n_h, n_out, n_out * n_h);
        let mut b = vec![0.0; 4 * n_h];
        b[n_h..2 * n_h].iter_mut().for_each(|v| *v = 1.0);
        Self {
            n_in,
            n_h,
            n_out,
            w,
            b,
            h0: vec![0.0; n_h],
            c0: vec![0.0; n_h],
            w_ho,
            b_o: vec![0.0; n_out],
        }
    }

    /// `4n_h(n_h + n_in) + 4n_h + 2n_h + n_o·n_h + n_o`.
    pub fn expected_param_count(n_in: usize, n_h: usize, n_out: usize) -> usize {
        4 * n_h * (n_h + n_in) + 4 * n_h + 2 * n_h + n_out * n_h + n_out
    }

    fn check_shapes(&self) -> Result<()> {
        let (i, h, o) = (self.n_in, self.n_h, self.n_out);
        check_len("lstm w", 4 * h * (h + i), self.w.len())?;
        check_len("lstm b", 4 * h, self.b.len())?;
        check_len("lstm h0", h, self.h0.len())?;
        check_len("lstm c0", h, self.c0.len())?;
        check_len("lstm w_ho", o * h, self.w_ho.len())?;
        check_len("lstm b_o", o, self.b_o.len())
    }
}

#[derive(Clone, Debug)]
pub struct LstmTape {
    mode: OutputMode,
    x: Vec<f64>,
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    /// Post-nonlinearity gates `[i; f; o; g]` per step.
    gates: Vec<Vec<f64>>,
}

impl Recurrent for LstmParams {
    type Tape = LstmTape;

    fn input_dim(&self) -> usize {
        self.n_in
    }

    fn output_dim(&self) -> usize {
        self.n_out
    }

    fn param_groups(&self) -> Vec<ParamGroup<'_>> {
        let (i, h, o) = (self.n_in, self.n_h, self.n_out);
        let g = |name, shape: Vec<usize>, data| ParamGroup { name, shape, data };
        vec![
            g(LSTM_GROUPS[0], vec![4 * h, h + i], &self.w[..]),
            g(LSTM_GROUPS[1], vec![4 * h], &self.b[..]),
            g(LSTM_GROUPS[2], vec![h], &self.h0[..]),
            g(LSTM_GROUPS[3], vec![h], &self.c0[..]),
            g(LSTM_GROUPS[4], vec![o, h], &self.w_ho[..]),
            g(LSTM_GROUPS[5], vec![o], &self.b_o[..]),
        ]
    }

    fn param_data_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w,
            &mut self.b,
            &mut self.h0,
            &mut self.c0,
            &mut self.w_ho,
            &mut self.b_o,
        ]
    }

    fn forward(
        &self,
        x: &[f64],
        steps: usize,
        mode: OutputMode,
    ) -> Result<(LstmTape, Vec<Vec<f64>>)> {
        self.check_shapes()?;
        check_len("input sequence", steps * self.n_in, x.len())?;
        check_finite_input(x, self.n_in)?;
        let n_h = self.n_h;
        let mut h = vec![self.h0.clone()];
        let mut c = vec![self.c0.clone()];
        let mut gates = Vec::with_capacity(steps);
        let mut outputs = Vec::new();
        let mut v = vec![0.0; n_h + self.n_in];
        for t in 0..steps {
            v[..n_h].copy_from_slice(&h[t]);
            v[n_h..].copy_from_slice(&x[t * self.n_in..(t + 1) * self.n_in]);
            let mut a = self.b.clone();
            matvec_acc(&self.w, &v, &mut a);
            for (k, val) in a.iter_mut().enumerate() {
                *val = if k < 3 * n_h {
                    sigmoid(*val)
                } else {
                    val.tanh()
                };
            }
            let (ig, rest) = a.split_at(n_h);
            let (fg, rest) = rest.split_at(n_h);
            let (og, gg) = rest.split_at(n_h);
            let ct: Vec<f64> = (0..n_h).map(|j| fg[j] * c[t][j] + ig[j] * gg[j]).collect();
            let ht: Vec<f64> = (0..n_h).map(|j| og[j] * ct[j].tanh()).collect();
            if mode == OutputMode::PerStep {
                outputs.push(linear_output(&self.w_ho, &self.b_o, &ht));
            }
            gates.push(a);
            c.push(ct);
            h.push(ht);
        }
        if mode == OutputMode::Final {
            outputs.push(linear_output(&self.w_ho, &self.b_o, &h[steps]));
        }
        Ok((
            LstmTape {
                mode,
                x: x.to_vec(),
                h,
                c,
                gates,
            },
            outputs,
        ))
    }

    fn backward(
        &self,
        tape: &LstmTape,
        out_grads: &[Vec<f64>],
        grads: &mut Grads,
        mut probe: Option<&mut [f64]>,
    ) -> Result<()> {
        let steps = tape.gates.len();
        let n_h = self.n_h;
        if tape.x.len() != steps * self.n_in
            || tape.h[0].len() != n_h
            || grads.len() != LSTM_GROUPS.len()
        {
            return Err(Error::Consistency(
                "tape does not match LSTM parameters".into(),
            ));
        }
        check_out_grads(tape.mode, steps, self.n_out, out_grads)?;
        let mut gh = vec![0.0; n_h];
        let mut gc = vec![0.0; n_h];
        let output_backward = |t: usize, g: &[f64], gh: &mut [f64], grads: &mut Grads| {
            matvec_t_acc(&self.w_ho, g, gh);
            outer_acc(&mut grads[4], g, &tape.h[t]);
            grads[5].iter_mut().zip(g).for_each(|(a, b)| *a += b);
        };
        if tape.mode == OutputMode::Final {
            output_backward(steps, &out_grads[0], &mut gh, grads);
        }
        let mut v = vec![0.0; n_h + self.n_in];
        let mut da = vec![0.0; 4 * n_h];
        for t in (1..=steps).rev() {
            if tape.mode == OutputMode::PerStep {
                output_backward(t, &out_grads[t - 1], &mut gh, grads);
            }
            if let Some(p) = probe.as_deref_mut() {
                p[t - 1] += l2(&gh);
            }
            let a = &tape.gates[t - 1];
            let (c_prev, ct) = (&tape.c[t - 1], &tape.c[t]);
            for j in 0..n_h {
                let (i, f, o, g) = (a[j], a[n_h + j], a[2 * n_h + j], a[3 * n_h + j]);
                let tc = ct[j].tanh();
                gc[j] += gh[j] * o * (1.0 - tc * tc);
                da[j] = gc[j] * g * i * (1.0 - i);
                da[n_h + j] = gc[j] * c_prev[j] * f * (1.0 - f);
                da[2 * n_h + j] = gh[j] * tc * o * (1.0 - o);
                da[3 * n_h + j] = gc[j] * i * (1.0 - g * g);
                gc[j] *= f;
            }
            v[..n_h].copy_from_slice(&tape.h[t - 1]);
            v[n_h..].copy_from_slice(&tape.x[(t - 1) * self.n_in..t * self.n_in]);
            outer_acc(&mut grads[0], &da, &v);
            grads[1].iter_mut().zip(&da).for_each(|(a, b)| *a += b);
            let mut gv = vec![0.0; n_h + self.n_in];
            matvec_t_acc(&self.w, &da, &mut gv);
            gh.copy_from_slice(&gv[..n_h]);
        }
        grads[2].iter_mut().zip(&gh).for_each(|(a, b)| *a += b);
        grads[3].iter_mut().zip(&gc).for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn hidden_states(&self, tape: &LstmTape) -> Vec<Vec<f64>> {
        tape.h[1..].to_vec()
    }
}

/// Rescales all gradients by `threshold / norm` when their global L2 norm
/// exceeds `threshold`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Vec<f64>], threshold: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > threshold {
        let s = threshold / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_weight_tanh_rnn_is_constant() {
        let mut p = RnnParams::init(2, 3, 1, RnnActivation::Tanh, 0);
        p.w_hh
            .iter_mut()
            .chain(p.w_xh.iter_mut())
            .for_each(|w| *w = 0.0);
        p.b_h = vec![0.5, -1.0, 2.0];
        let (tape, _) = p.forward(&[0.3; 8], 4, OutputMode::Final).unwrap();
        for h in p.hidden_states(&tape) {
            for (v, b) in h.iter().zip(&p.b_h) {
                assert_eq!(*v, b.tanh());
            }
        }
    }

    #[test]
    fn irnn_starts_as_identity_evolution() {
        let p = RnnParams::init(2, 4, 1, RnnActivation::Relu, 3);
        assert!((0..4).all(|j| p.w_hh[j * 4 + j] == 1.0));
        let mut q = p.clone();
        q.h0 = vec![0.5, 0.0, 1.5, 2.0];
        let (tape, _) = q.forward(&[0.0; 20], 10, OutputMode::Final).unwrap();
        for h in q.hidden_states(&tape) {
            assert_eq!(h, q.h0);
        }
    }

    #[test]
    fn zero_lstm_keeps_zero_cell() {
        let mut p = LstmParams::init(2, 3, 1, 0);
        p.w.iter_mut().chain(p.b.iter_mut()).for_each(|w| *w = 0.0);
        let (tape, _) = p.forward(&[0.7; 10], 5, OutputMode::Final).unwrap();
        assert!(tape.c.iter().flatten().all(|&c| c == 0.0));
        assert!(tape.h.iter().flatten().all(|&h| h == 0.0));
    }

    #[test]
    fn lstm_forget_bias_is_one() {
        let p = LstmParams::init(10, 40, 9, 1);
        assert!(p.b[40..80].iter().all(|&b| b == 1.0));
        assert!(p.b[..40].iter().chain(&p.b[80..]).all(|&b| b == 0.0));
        assert_eq!(p.num_params(), LstmParams::expected_param_count(10, 40, 9));
    }

    #[test]
    fn shape_errors() {
        let p = RnnParams::init(2, 3, 1, RnnActivation::Tanh, 0);
        assert!(matches!(
            p.forward(&[0.0; 5], 3, OutputMode::Final),
            Err(Error::Shape { .. })
        ));
        let mut bad = p.clone();
        bad.w_hh.pop();
        assert!(bad.forward(&[0.0; 6], 3, OutputMode::Final).is_err());
        let l = LstmParams::init(2, 3, 1, 0);
        assert!(l.forward(&[0.0; 3], 3, OutputMode::Final).is_err());
    }

    #[test]
    fn clip_examples() {
        let mut g = vec![vec![0.3], vec![0.4]];
        clip_gradients(&mut g, 1.0);
        assert_eq!(g, vec![vec![0.3], vec![0.4]]);

        let mut g = vec![vec![3.0, 4.0]];
        assert_eq!(clip_gradients(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[0][1] - 0.8).abs() < 1e-15);

        let mut g = vec![vec![0.0; 3]];
        clip_gradients(&mut g, 1.0);
        assert_eq!(g, vec![vec![0.0; 3]]);
    }

    proptest! {
        #[test]
        fn clip_never_grows_and_keeps_direction(
            v in proptest::collection::vec(-100.0f64..100.0, 1..20), thr in 0.01f64..50.0,
        ) {
            let mut g = vec![v.clone()];
            let before = global_norm(&g);
            clip_gradients(&mut g, thr);
            let after = global_norm(&g);
            prop_assert!(after <= before * (1.0 + 1e-15));
            prop_assert!(after <= thr.max(before) * (1.0 + 1e-15));
            if before > 0.0 {
                let s = after / before;
                for (a, b) in g[0].iter().zip(&v) {
                    prop_assert!((a - b * s).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }
    }
}
