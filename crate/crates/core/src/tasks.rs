//! Synthetic long-memory benchmarks and the batch format models consume.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

/// Content categories of the copy task are `0..COPY_SYMBOLS`.
pub const COPY_SYMBOLS: usize = 8;
pub const COPY_BLANK: u8 = 8;
pub const COPY_DELIMITER: u8 = 9;
/// Length of the sequence to remember.
pub const COPY_LENGTH: usize = 10;
/// One-hot width of copy inputs (categories `0..=9`).
pub const COPY_INPUT_DIM: usize = 10;
/// Output classes of the copy task: the delimiter is never a target.
pub const COPY_OUTPUT_DIM: usize = 9;
pub const ADDING_INPUT_DIM: usize = 2;

/// What a batch asks the model to predict.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// A class at every step. Accuracy is measured on the last
    /// `recall_window` steps only.
    PerStepClass {
        classes: usize,
        labels: Vec<Vec<usize>>,
        recall_window: usize,
    },
    FinalClass {
        classes: usize,
        labels: Vec<usize>,
    },
    FinalValue(Vec<f64>),
}

/// Model-ready batch: `inputs[b]` is a row-major `steps × n_in` sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    pub steps: usize,
    pub n_in: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Targets,
}

impl TaskBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::PerStepClass { classes, .. } | Targets::FinalClass { classes, .. } => *classes,
            Targets::FinalValue(_) => 1,
        }
    }

    pub fn per_step(&self) -> bool {
        matches!(self.targets, Targets::PerStepClass { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CopyBatch {
    pub lag: usize,
    pub inputs: Vec<Vec<u8>>,
    pub targets: Vec<Vec<u8>>,
}

/// Copy-memory batch of sequences of length `lag + 20`.
///
/// Inputs: 10 symbols from `0..8`, then `lag − 1` blanks, the delimiter,
/// and 10 more blanks. Targets: `lag + 10` blanks, then the 10 symbols.
pub fn gen_copy_batch(lag: usize, batch: usize, seed: u64) -> Result<CopyBatch> {
    if lag == 0 {
        return Err(Error::InvalidParameter(
            "copy task lag must be at least 1".into(),
        ));
    }
    let len = lag + 2 * COPY_LENGTH;
    let mut rng = rng_for(seed, Stream::TrainBatch, 0);
    let mut inputs = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..batch {
        let mut input = vec![COPY_BLANK; len];
        let mut target = vec![COPY_BLANK; len];
        for j in 0..COPY_LENGTH {
            let symbol = rng.gen_range(0..COPY_SYMBOLS as u8);
            input[j] = symbol;
            target[lag + COPY_LENGTH + j] = symbol;
        }
        input[lag + COPY_LENGTH - 1] = COPY_DELIMITER;
        inputs.push(input);
        targets.push(target);
    }
    Ok(CopyBatch {
        lag,
        inputs,
        targets,
    })
}

impl CopyBatch {
    pub fn to_task_batch(&self) -> TaskBatch {
        let steps = self.lag + 2 * COPY_LENGTH;
        let inputs = self
            .inputs
            .iter()
            .map(|seq| {
                let mut x = vec![0.0; steps * COPY_INPUT_DIM];
                for (t, &c) in seq.iter().enumerate() {
                    x[t * COPY_INPUT_DIM + c as usize] = 1.0;
                }
                x
            })
            .collect();
        let labels = self
            .targets
            .iter()
            .map(|seq| seq.iter().map(|&c| c as usize).collect())
            .collect();
        TaskBatch {
            steps,
            n_in: COPY_INPUT_DIM,
            inputs,
            targets: Targets::PerStepClass {
                classes: COPY_OUTPUT_DIM,
                labels,
                recall_window: COPY_LENGTH,
            },
        }
    }
}

/// Cross entropy of the memoryless strategy, `10 ln 8 / (lag + 20)` nats.
pub fn copy_baseline_ce(lag: usize) -> f64 {
    COPY_LENGTH as f64 * (COPY_SYMBOLS as f64).ln() / (lag + 2 * COPY_LENGTH) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct AddingBatch {
    pub steps: usize,
    pub values: Vec<Vec<f64>>,
    pub markers: Vec<Vec<u8>>,
    pub targets: Vec<f64>,
}

/// Adding-problem batch: values `U[0,1]`, one marker in each half.
pub fn gen_adding_batch(steps: usize, batch: usize, seed: u64) -> Result<AddingBatch> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "adding task needs at least 2 steps, got {steps}"
        )));
    }
    let mut rng = rng_for(seed, Stream::TrainBatch, 0);
    let half = steps / 2;
    let mut values = Vec::with_capacity(batch);
    let mut markers = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..batch {
        let v: Vec<f64> = (0..steps).map(|_| rng.gen::<f64>()).collect();
        let first = rng.gen_range(0..half);
        let second = rng.gen_range(half..steps);
        let mut m = vec![0u8; steps];
        m[first] = 1;
        m[second] = 1;
        targets.push(v[first] + v[second]);
        values.push(v);
        markers.push(m);
    }
    Ok(AddingBatch {
        steps,
        values,
        markers,
        targets,
    })
}

impl AddingBatch {
    /// Single-sample batch from explicit values and markers.
    pub fn from_parts(values: Vec<f64>, markers: Vec<u8>) -> Result<Self> {
        crate::error::check_len("AddingBatch markers", values.len(), markers.len())?;
        if markers.iter().filter(|&&m| m == 1).count() != 2 || markers.iter().any(|&m| m > 1) {
            return Err(Error::Data(
                "adding sample needs exactly two markers".into(),
            ));
        }
        let target = values
            .iter()
            .zip(&markers)
            .filter(|(_, &m)| m == 1)
            .map(|(v, _)| v)
            .sum();
        Ok(Self {
            steps: values.len(),
            values: vec![values],
            markers: vec![markers],
            targets: vec![target],
        })
    }

    pub fn to_task_batch(&self) -> TaskBatch {
        let inputs = self
            .values
            .iter()
            .zip(&self.markers)
            .map(|(v, m)| {
                v.iter()
                    .zip(m)
                    .flat_map(|(&value, &marker)| [value, f64::from(marker)])
                    .collect()
            })
            .collect();
        TaskBatch {
            steps: self.steps,
            n_in: ADDING_INPUT_DIM,
            inputs,
            targets: Targets::FinalValue(self.targets.clone()),
        }
    }
}

/// MSE of always predicting 1: the variance of a sum of two `U[0,1]`.
pub fn adding_baseline_mse() -> f64 {
    1.0 / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn copy_layout() {
        let lag = 15;
        let b = gen_copy_batch(lag, 4, 3).unwrap();
        for (x, y) in b.inputs.iter().zip(&b.targets) {
            assert_eq!(x.len(), lag + 20);
            assert!(x[10..lag + 9].iter().all(|&c| c == COPY_BLANK));
            assert_eq!(x[lag + 9], COPY_DELIMITER);
            assert!(x[lag + 10..].iter().all(|&c| c == COPY_BLANK));
            assert!(y[..lag + 10].iter().all(|&c| c == COPY_BLANK));
            assert_eq!(&y[lag + 10..], &x[..10]);
            assert!(x[..10].iter().all(|&c| c < 8));
        }
    }

    #[test]
    fn copy_lag_one_has_no_blank_run() {
        let b = gen_copy_batch(1, 1, 0).unwrap();
        assert_eq!(b.inputs[0][10], COPY_DELIMITER);
        assert_eq!(b.inputs[0].len(), 21);
        assert!(gen_copy_batch(0, 1, 0).is_err());
    }

    #[test]
    fn copy_symbols_are_uniform() {
        let mut counts = [0usize; 8];
        let b = gen_copy_batch(1, 10_000, 11).unwrap();
        for x in &b.inputs {
            for &c in &x[..10] {
                counts[c as usize] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / 100_000.0 - 0.125).abs() < 0.01);
        }
    }

    #[test]
    fn copy_task_batch_encoding() {
        let b = gen_copy_batch(5, 2, 1).unwrap();
        let tb = b.to_task_batch();
        assert_eq!(tb.steps, 25);
        assert_eq!(tb.n_in, 10);
        assert_eq!(tb.output_dim(), 9);
        for (x, raw) in tb.inputs.iter().zip(&b.inputs) {
            for t in 0..25 {
                let row = &x[t * 10..(t + 1) * 10];
                assert_eq!(row.iter().sum::<f64>(), 1.0);
                assert_eq!(row[raw[t] as usize], 1.0);
            }
        }
    }

    #[test]
    fn copy_baseline_values() {
        assert!((copy_baseline_ce(100) - 0.173287).abs() < 5e-7);
        assert!((copy_baseline_ce(200) - 0.094520).abs() < 5e-7);
        assert!((copy_baseline_ce(500) - 0.039990).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for t in [1, 2, 10, 100, 1000, 1_000_000] {
            let v = copy_baseline_ce(t);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(copy_baseline_ce(100_000_000) < 1e-6);
    }

    #[test]
    fn adding_from_parts() {
        let b = AddingBatch::from_parts(vec![0.2, 0.9, 0.4, 0.7], vec![1, 0, 0, 1]).unwrap();
        assert!((b.targets[0] - 0.9).abs() < 1e-15);
        assert!(AddingBatch::from_parts(vec![0.2, 0.9], vec![1, 0]).is_err());
    }

    #[test]
    fn adding_rejects_short_sequences() {
        assert!(gen_adding_batch(1, 3, 0).is_err());
        assert!(gen_adding_batch(2, 3, 0).is_ok());
    }

    #[test]
    fn adding_target_mean_is_one() {
        let b = gen_adding_batch(10, 100_000, 5).unwrap();
        let mean = b.targets.iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn adding_baseline() {
        assert!((adding_baseline_mse() - 0.167).abs() < 5e-4);
        assert_eq!(adding_baseline_mse(), 2.0 / 12.0);
        let b = gen_adding_batch(4, 1_000_000, 9).unwrap();
        let mse = b.targets.iter().map(|t| (1.0 - t).powi(2)).sum::<f64>() / 1e6;
        assert!((mse - 1.0 / 6.0).abs() < 0.002);
    }

    #[test]
    fn adding_task_batch_encoding() {
        let b = gen_adding_batch(6, 2, 1).unwrap();
        let tb = b.to_task_batch();
        assert_eq!(tb.n_in, 2);
        for (x, (v, m)) in tb.inputs.iter().zip(b.values.iter().zip(&b.markers)) {
            for t in 0..6 {
                assert_eq!(x[2 * t], v[t]);
                assert_eq!(x[2 * t + 1], f64::from(m[t]));
            }
        }
    }

    proptest! {
        #[test]
        fn generators_are_deterministic_and_well_formed(seed in any::<u64>(), steps in 2usize..60) {
            let a = gen_adding_batch(steps, 3, seed).unwrap();
            prop_assert_eq!(&a, &gen_adding_batch(steps, 3, seed).unwrap());
            for ((m, v), t) in a.markers.iter().zip(&a.values).zip(&a.targets) {
                let half = steps / 2;
                prop_assert_eq!(m[..half].iter().filter(|&&x| x == 1).count(), 1);
                prop_assert_eq!(m[half..].iter().filter(|&&x| x == 1).count(), 1);
                prop_assert!(v.iter().all(|x| (0.0..1.0).contains(x)));
                prop_assert!((0.0..=2.0).contains(t));
            }

            let c = gen_copy_batch(steps, 3, seed).unwrap();
            prop_assert_eq!(&c, &gen_copy_batch(steps, 3, seed).unwrap());
            for (x, y) in c.inputs.iter().zip(&c.targets) {
                prop_assert_eq!(x[steps + 9], COPY_DELIMITER);
                prop_assert_eq!(&y[steps + 10..], &x[..10]);
                prop_assert!(y.iter().all(|&c| c <= COPY_BLANK));
            }
        }
    }
}
