//! Federated training of a linear model over the simulated cipher.
//!
//! The pieces, bottom-up:
//!
//! * [`model`] — plaintext loss/gradient for multi-output least squares,
//!   plus the exact normal-equations fit used as a reference optimum.
//! * [`encrypted`] — the same gradient computed homomorphically on an
//!   encrypted data shard, and weighted aggregation of encrypted
//!   gradients.
//! * [`training`] — the round loop: provider-side encrypted gradient on
//!   the pooled shard, user-side plaintext gradients on local blocks,
//!   weighted merge, optimizer step, straggler dropouts, trace emission.
//! * [`bound`] — a closed-form per-round bound on the optimality gap of
//!   that loop, and spectrum helpers to calibrate its inputs.
//!
//! All randomness is seeded; identical configs produce identical traces.

pub mod bound;
pub mod encrypted;
pub mod model;
pub mod training;

use thiserror::Error;

use crate::he::HeError;

/// Error raised by the training engine.
#[derive(Debug, Error)]
pub enum FlError {
    #[error("no training data: every user block is empty and there is no pooled shard")]
    NoTrainingData,

    #[error("invalid training configuration: {0}")]
    BadConfig(String),

    #[error("model shape {got:?} does not match data (expected {expected:?})")]
    ModelShape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("step size {value} outside [0, {max}]")]
    BadStepSize { value: f64, max: f64 },

    #[error("invalid bound parameters: {0}")]
    BadBoundParams(String),

    #[error("normal equations are singular; cannot fit reference optimum")]
    SingularSystem,

    #[error("cipher error: {0}")]
    He(#[from] HeError),
}
