#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urnn_core::optim::init_urnn;
use urnn_core::tasks::{Targets, TaskBatch};
use urnn_core::{Recurrent, UrnnDims, UrnnParams};

pub const FD_STEP: f64 = 1e-6;
pub const FD_RTOL: f64 = 1e-5;
pub const FD_ATOL: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_inputs(
    rng: &mut ChaCha8Rng,
    batch: usize,
    steps: usize,
    n_in: usize,
) -> Vec<Vec<f64>> {
    (0..batch)
        .map(|_| {
            (0..steps * n_in)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect()
}

pub fn per_step_batch(
    seed: u64,
    batch: usize,
    steps: usize,
    n_in: usize,
    classes: usize,
) -> TaskBatch {
    let mut r = rng(seed);
    let inputs = random_inputs(&mut r, batch, steps, n_in);
    let labels = (0..batch)
        .map(|_| (0..steps).map(|_| r.gen_range(0..classes)).collect())
        .collect();
    TaskBatch {
        steps,
        n_in,
        inputs,
        targets: Targets::PerStepClass {
            classes,
            labels,
            recall_window: steps,
        },
    }
}

pub fn final_class_batch(
    seed: u64,
    batch: usize,
    steps: usize,
    n_in: usize,
    classes: usize,
) -> TaskBatch {
    let mut r = rng(seed);
    let inputs = random_inputs(&mut r, batch, steps, n_in);
    let labels = (0..batch).map(|_| r.gen_range(0..classes)).collect();
    TaskBatch {
        steps,
        n_in,
        inputs,
        targets: Targets::FinalClass { classes, labels },
    }
}

pub fn final_value_batch(seed: u64, batch: usize, steps: usize, n_in: usize) -> TaskBatch {
    let mut r = rng(seed);
    let inputs = random_inputs(&mut r, batch, steps, n_in);
    let values = (0..batch).map(|_| r.gen_range(-2.0..2.0)).collect();
    TaskBatch {
        steps,
        n_in,
        inputs,
        targets: Targets::FinalValue(values),
    }
}

/// A uRNN with every parameter group randomized, including the biases and
/// initial state that the standard initialization zeroes.
pub fn random_urnn(dims: UrnnDims, seed: u64) -> UrnnParams {
    let mut p = init_urnn(dims, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    for group in p.param_data_mut() {
        for v in group.iter_mut() {
            *v += r.gen_range(-0.3..0.3);
        }
    }
    p
}
