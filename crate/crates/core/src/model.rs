//! Batch-level training and diagnostics shared by every recurrent cell.
//!
//! A cell exposes its learnable parameters as named flat groups. Gradients
//! use the same group order, which is what the optimizer, gradient clipping
//! and checkpoints operate on.

use crate::error::{check_len, Error, Result};
use crate::loss::{argmax, softmax_xent};
use crate::tasks::{Targets, TaskBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputMode {
    /// An output after every step.
    PerStep,
    /// A single output from the final hidden state (from `h₀` when `T = 0`).
    Final,
}

/// Read-only view of one parameter group.
#[derive(Clone, Debug)]
pub struct ParamGroup<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Gradient buffers, one per parameter group.
pub type Grads = Vec<Vec<f64>>;

pub trait Recurrent {
    /// Everything the backward pass needs from one forward pass.
    type Tape;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn param_groups(&self) -> Vec<ParamGroup<'_>>;
    fn param_data_mut(&mut self) -> Vec<&mut [f64]>;

    /// Runs one sequence `x` (row-major `steps × input_dim`).
    fn forward(
        &self,
        x: &[f64],
        steps: usize,
        mode: OutputMode,
    ) -> Result<(Self::Tape, Vec<Vec<f64>>)>;

    /// Accumulates parameter gradients into `grads`. When `hidden_grad_norms`
    /// is given, `‖∂C/∂h_t‖` is added to entry `t − 1` for `t = 1..=T`.
    fn backward(
        &self,
        tape: &Self::Tape,
        out_grads: &[Vec<f64>],
        grads: &mut Grads,
        hidden_grad_norms: Option<&mut [f64]>,
    ) -> Result<()>;

    /// Hidden states `h₁..h_T` of a tape in stacked-real form.
    fn hidden_states(&self, tape: &Self::Tape) -> Vec<Vec<f64>>;

    fn zero_grads(&self) -> Grads {
        self.param_groups()
            .iter()
            .map(|g| vec![0.0; g.data.len()])
            .collect()
    }

    fn num_params(&self) -> usize {
        self.param_groups().iter().map(|g| g.data.len()).sum()
    }
}

/// Loss, task metric and (optionally) gradients for one batch.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub loss: f64,
    /// Recall accuracy (copy), accuracy (classification) or MSE (adding).
    pub metric: f64,
    pub grads: Option<Grads>,
    pub hidden_grad_norms: Option<Vec<f64>>,
}

#[derive(Default)]
struct SampleStats {
    loss: f64,
    correct: usize,
    scored: usize,
    sq_err: f64,
}

/// Loss and output cotangents for sample `b`, scaled for batch averaging.
fn sample_loss(
    targets: &Targets,
    b: usize,
    batch: usize,
    outputs: &[Vec<f64>],
    stats: &mut SampleStats,
) -> Result<Vec<Vec<f64>>> {
    match targets {
        Targets::PerStepClass {
            labels,
            recall_window,
            ..
        } => {
            let labels = &labels[b];
            check_len("per-step targets", outputs.len(), labels.len())?;
            let scale = 1.0 / (labels.len().max(1) * batch) as f64;
            let window_start = labels.len().saturating_sub(*recall_window);
            let mut grads = Vec::with_capacity(outputs.len());
            for (t, (o, &y)) in outputs.iter().zip(labels).enumerate() {
                let (l, g) = softmax_xent(o, y, scale)?;
                stats.loss += l * scale;
                if t >= window_start {
                    stats.scored += 1;
                    stats.correct += usize::from(argmax(o) == y);
                }
                grads.push(g);
            }
            Ok(grads)
        }
        Targets::FinalClass { labels, .. } => {
            let scale = 1.0 / batch as f64;
            let (l, g) = softmax_xent(&outputs[0], labels[b], scale)?;
            stats.loss += l * scale;
            stats.scored += 1;
            stats.correct += usize::from(argmax(&outputs[0]) == labels[b]);
            Ok(vec![g])
        }
        Targets::FinalValue(values) => {
            let scale = 1.0 / batch as f64;
            let e = outputs[0][0] - values[b];
            stats.loss += e * e * scale;
            stats.sq_err += e * e * scale;
            Ok(vec![vec![2.0 * e * scale]])
        }
    }
}

fn check_batch<M: Recurrent>(model: &M, batch: &TaskBatch) -> Result<()> {
    check_len("batch input dimension", model.input_dim(), batch.n_in)?;
    check_len(
        "batch output dimension",
        model.output_dim(),
        batch.output_dim(),
    )?;
    for x in &batch.inputs {
        check_len("sequence length", batch.steps * batch.n_in, x.len())?;
    }
    let n_targets = match &batch.targets {
        Targets::PerStepClass { labels, .. } => labels.len(),
        Targets::FinalClass { labels, .. } => labels.len(),
        Targets::FinalValue(v) => v.len(),
    };
    check_len("batch targets", batch.len(), n_targets)?;
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    Ok(())
}

fn mode_for(batch: &TaskBatch) -> OutputMode {
    if batch.per_step() {
        OutputMode::PerStep
    } else {
        OutputMode::Final
    }
}

/// Runs every sample in order; gradients are reduced in sample order so the
/// result is bitwise reproducible.
pub fn run_batch<M: Recurrent>(
    model: &M,
    batch: &TaskBatch,
    want_grads: bool,
    want_probe: bool,
) -> Result<BatchResult> {
    check_batch(model, batch)?;
    let mode = mode_for(batch);
    let n = batch.len();
    let mut stats = SampleStats::default();
    let mut grads = (want_grads || want_probe).then(|| model.zero_grads());
    let mut probe = want_probe.then(|| vec![0.0; batch.steps]);
    for (b, x) in batch.inputs.iter().enumerate() {
        let (tape, outputs) = model.forward(x, batch.steps, mode)?;
        let out_grads = sample_loss(&batch.targets, b, n, &outputs, &mut stats)?;
        if let Some(g) = grads.as_mut() {
            model.backward(&tape, &out_grads, g, probe.as_deref_mut())?;
        }
    }
    let metric = match batch.targets {
        Targets::FinalValue(_) => stats.sq_err,
        _ => stats.correct as f64 / stats.scored.max(1) as f64,
    };
    if let Some(p) = probe.as_mut() {
        p.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(BatchResult {
        loss: stats.loss,
        metric,
        grads: if want_grads { grads } else { None },
        hidden_grad_norms: probe,
    })
}

pub fn loss_and_grads<M: Recurrent>(model: &M, batch: &TaskBatch) -> Result<(f64, f64, Grads)> {
    let r = run_batch(model, batch, true, false)?;
    Ok((r.loss, r.metric, r.grads.expect("requested")))
}

pub fn evaluate<M: Recurrent>(model: &M, batch: &TaskBatch) -> Result<(f64, f64)> {
    let r = run_batch(model, batch, false, false)?;
    Ok((r.loss, r.metric))
}

/// Batch-averaged `‖∂C/∂h_t‖` for `t = 1..=T`.
pub fn gradient_norm_probe<M: Recurrent>(model: &M, batch: &TaskBatch) -> Result<Vec<f64>> {
    Ok(run_batch(model, batch, false, true)?
        .hidden_grad_norms
        .expect("requested"))
}

/// Batch-averaged `‖h_t‖` and `‖h_t − h_T‖` for `t = 1..=T`.
pub fn hidden_norm_probe<M: Recurrent>(
    model: &M,
    batch: &TaskBatch,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_batch(model, batch)?;
    let mode = mode_for(batch);
    let steps = batch.steps;
    let mut norms = vec![0.0; steps];
    let mut dists = vec![0.0; steps];
    for x in &batch.inputs {
        let (tape, _) = model.forward(x, steps, mode)?;
        let hs = model.hidden_states(&tape);
        let Some(last) = hs.last() else { continue };
        for (t, h) in hs.iter().enumerate() {
            norms[t] += h.iter().map(|v| v * v).sum::<f64>().sqrt();
            dists[t] += h
                .iter()
                .zip(last)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    let n = batch.len() as f64;
    norms
        .iter_mut()
        .chain(dists.iter_mut())
        .for_each(|v| *v /= n);
    Ok((norms, dists))
}

pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
}
