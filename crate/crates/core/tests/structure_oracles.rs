mod common;

use std::f64::consts::PI;

use common::*;
use nalgebra::{Complex, DMatrix};
use urnn_core::model::gradient_norm_probe;
use urnn_core::optim::init_urnn;
use urnn_core::{materialize, Activation, UrnnDims};

#[test]
fn composition_eigenvalues_lie_on_unit_circle() {
    for seed in 0..20 {
        let p = init_urnn(
            UrnnDims {
                n_in: 1,
                n_h: 4,
                n_out: 1,
            },
            seed,
        )
        .unwrap();
        let m = materialize(&p.w).unwrap();
        let dense = DMatrix::from_fn(4, 4, |i, j| Complex::new(m.a[i * 4 + j], m.b[i * 4 + j]));
        let eig = dense
            .schur()
            .eigenvalues()
            .expect("complex Schur form is triangular");
        for l in eig.iter() {
            assert!(
                (l.norm() - 1.0).abs() < 1e-8,
                "seed {seed}: |λ| = {}",
                l.norm()
            );
        }
    }
}

/// With the nonlinearity bypassed and a loss only at the last step,
/// `∂C/∂h_{t-1} = W* ∂C/∂h_t`, so the norm is the same at every step.
#[test]
fn linear_regime_backpropagated_norm_is_flat() {
    for (n_h, steps) in [(8, 10), (32, 200), (64, 1000)] {
        let mut p = random_urnn(
            UrnnDims {
                n_in: 2,
                n_h,
                n_out: 1,
            },
            n_h as u64,
        );
        p.activation = Activation::Identity;
        let batch = final_value_batch(5, 2, steps, 2);
        let probe = gradient_norm_probe(&p, &batch).unwrap();
        assert_eq!(probe.len(), steps);
        let max = probe.iter().cloned().fold(f64::MIN, f64::max);
        let min = probe.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min > 0.0);
        assert!(
            max / min - 1.0 <= 1e-9,
            "n_h={n_h} T={steps}: ratio {}",
            max / min
        );
    }
}

#[test]
fn initial_state_has_unit_expected_squared_norm() {
    let n = 10_000;
    let mean = (0..n)
        .map(|seed| {
            init_urnn(
                UrnnDims {
                    n_in: 1,
                    n_h: 128,
                    n_out: 1,
                },
                seed,
            )
            .unwrap()
            .h0
            .norm()
            .powi(2)
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - 1.0).abs() < 0.05, "mean ‖h₀‖² = {mean}");
}

#[test]
fn phase_angles_are_uniform_by_kolmogorov_smirnov() {
    let n = 100_000;
    let mut angles = Vec::with_capacity(n);
    let mut seed = 0;
    while angles.len() < n {
        let p = init_urnn(
            UrnnDims {
                n_in: 1,
                n_h: 128,
                n_out: 1,
            },
            seed,
        )
        .unwrap();
        for d in [&p.w.d1, &p.w.d2, &p.w.d3] {
            angles.extend_from_slice(&d.w);
        }
        seed += 1;
    }
    angles.truncate(n);
    angles.sort_by(f64::total_cmp);
    let d = angles
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x + PI) / (2.0 * PI);
            (f - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // Asymptotic critical value at the 1% level.
    let critical = 1.6276 / (n as f64).sqrt();
    assert!(d < critical, "KS statistic {d} exceeds {critical}");
}
