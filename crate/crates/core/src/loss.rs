//! Losses on real model outputs. Losses are averaged over the batch (and
//! over time steps for per-step objectives); gradients carry the same scaling.

use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Same layout as the outputs the loss was computed from.
    pub grads: Vec<Vec<Vec<f64>>>,
}

/// Softmax cross entropy in nats for one step, plus `(softmax − onehot)·scale`.
pub(crate) fn softmax_xent(logits: &[f64], target: usize, scale: f64) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::Data(format!(
            "target class {target} out of range for {} outputs",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[target];
    let grads = exps
        .iter()
        .enumerate()
        .map(|(k, e)| (e / sum - if k == target { 1.0 } else { 0.0 }) * scale)
        .collect();
    Ok((loss, grads))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Mean cross entropy over every step of every sequence.
///
/// `outputs[b][t]` are the logits of sequence `b` at step `t`.
pub fn cross_entropy_per_step(
    outputs: &[Vec<Vec<f64>>],
    targets: &[Vec<usize>],
) -> Result<LossOutput> {
    check_len("cross_entropy_per_step batch", outputs.len(), targets.len())?;
    let count: usize = targets.iter().map(Vec::len).sum();
    let scale = if count == 0 { 0.0 } else { 1.0 / count as f64 };
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (seq, labels) in outputs.iter().zip(targets) {
        check_len("cross_entropy_per_step steps", seq.len(), labels.len())?;
        let mut seq_grads = Vec::with_capacity(seq.len());
        for (logits, &label) in seq.iter().zip(labels) {
            let (l, g) = softmax_xent(logits, label, scale)?;
            loss += l;
            seq_grads.push(g);
        }
        grads.push(seq_grads);
    }
    Ok(LossOutput {
        loss: loss * scale,
        grads,
    })
}

/// Mean squared error of scalar final outputs.
pub fn mse_final(outputs: &[f64], targets: &[f64]) -> Result<LossOutput> {
    check_len("mse_final batch", outputs.len(), targets.len())?;
    let scale = 1.0 / outputs.len().max(1) as f64;
    let mut loss = 0.0;
    let grads = outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| {
            let e = o - t;
            loss += e * e;
            vec![vec![2.0 * e * scale]]
        })
        .collect();
    Ok(LossOutput {
        loss: loss * scale,
        grads,
    })
}

/// Mean softmax cross entropy of final-step logits.
pub fn cross_entropy_final(outputs: &[Vec<f64>], targets: &[usize]) -> Result<LossOutput> {
    check_len("cross_entropy_final batch", outputs.len(), targets.len())?;
    let scale = 1.0 / outputs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (logits, &label) in outputs.iter().zip(targets) {
        let (l, g) = softmax_xent(logits, label, scale)?;
        loss += l;
        grads.push(vec![g]);
    }
    Ok(LossOutput {
        loss: loss * scale,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_cost_ln_classes() {
        let out = cross_entropy_per_step(&[vec![vec![0.3; 8]; 5]], &[vec![2; 5]]).unwrap();
        assert!((out.loss - 8f64.ln()).abs() < 1e-12);
        assert!((out.loss - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_logit_costs_nothing() {
        let mut logits = vec![0.0; 4];
        logits[1] = 800.0;
        let out = cross_entropy_per_step(&[vec![logits]], &[vec![1]]).unwrap();
        assert!(out.loss.abs() < 1e-300);
        assert!(out.loss.is_finite());
    }

    #[test]
    fn matches_direct_log_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let outputs: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| {
                (0..4)
                    .map(|_| (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect())
                    .collect()
            })
            .collect();
        let targets: Vec<Vec<usize>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(0..6)).collect())
            .collect();
        let out = cross_entropy_per_step(&outputs, &targets).unwrap();
        let mut direct = 0.0;
        for (seq, labels) in outputs.iter().zip(&targets) {
            for (logits, &y) in seq.iter().zip(labels) {
                let z: f64 = logits.iter().map(|l| l.exp()).sum();
                direct += -(logits[y].exp() / z).ln();
            }
        }
        assert!((out.loss - direct / 12.0).abs() < 1e-12);

        // gradient by central differences on one logit
        let h = 1e-6;
        let mut plus = outputs.clone();
        plus[1][2][3] += h;
        let mut minus = outputs.clone();
        minus[1][2][3] -= h;
        let fd = (cross_entropy_per_step(&plus, &targets).unwrap().loss
            - cross_entropy_per_step(&minus, &targets).unwrap().loss)
            / (2.0 * h);
        assert!((fd - out.grads[1][2][3]).abs() < 1e-8);
    }

    #[test]
    fn target_out_of_range() {
        assert!(matches!(
            cross_entropy_per_step(&[vec![vec![0.0; 3]]], &[vec![3]]),
            Err(Error::Data(_))
        ));
        assert!(cross_entropy_final(&[vec![0.0; 3]], &[5]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_final(&[0.7], &[0.7]).unwrap().loss, 0.0);
        let out = mse_final(&[1.0], &[0.0]).unwrap();
        assert_eq!(out.loss, 1.0);
        assert_eq!(out.grads[0][0][0], 2.0);
        let out = mse_final(&[0.1, 0.3], &[0.0, 0.0]).unwrap();
        assert!((out.loss - 0.05).abs() < 1e-15);
    }

    #[test]
    fn argmax_picks_first_maximum() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5, -1.0]), 1);
    }
}
