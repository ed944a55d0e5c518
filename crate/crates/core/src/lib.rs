//! Unitary-evolution recurrent networks.
//!
//! The recurrent matrix is never stored densely. It is the product of
//! diagonal phase, reflection, permutation and Fourier blocks, so each step
//! costs `O(n log n)` and preserves the norm of the hidden state exactly.

pub mod baselines;
pub mod checkpoint;
pub mod complex;
pub mod config;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod harness;
pub mod loss;
pub mod mnist;
pub mod model;
pub mod optim;
pub mod seed;
pub mod tasks;
pub mod unitary;
pub mod urnn;

pub use checkpoint::{Checkpoint, NamedArray};
pub use complex::{cnorm, complex_matvec, ComplexMatrix, ComplexVector};
pub use config::{ModelKind, RunConfig, TaskKind};
pub use error::{Error, Result};
pub use fft::{fft_unitary, ifft_unitary, naive_dft, FftPlan};
pub use harness::{
    run_probes, run_training, train, AnyModel, MetricsRecord, ProbeKind, ProbeOutput,
};
pub use model::{OutputMode, Recurrent};
pub use unitary::{
    apply_composition, apply_diag, apply_permutation, apply_reflection, composition_vjp,
    materialize, CompositionGrads, DiagonalPhase, FixedPermutation, Reflection, UnitaryComposition,
};
pub use urnn::{Activation, UrnnDims, UrnnParams};
