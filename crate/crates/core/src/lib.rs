//! Simulation and stability diagnostics for the one-dimensional overdamped
//! Langevin equation in a double-well potential,
//!
//! ```text
//! dX_t = (a X_t − b X_t³)/λ dt + σ(X_t) dB_t,
//! ```
//!
//! together with the general Lyapunov decay-envelope machinery (the Φ_c
//! transform of a concave rate function).
//!
//! * [`model`]: drift, diffusion families, generator, noiseless flow.
//! * [`sde`]: fixed-step Euler–Maruyama / Milstein paths, stopping rules,
//!   seeded batches.
//! * [`stability`]: equilibrium classification, decay constants, drift checks.
//! * [`decay`]: rate functions, Φ_c and its inverse, decay envelopes.
//! * [`ergodic`]: time-average histograms, exit-time statistics.
//! * [`cli`]: configuration and the `langevin` command-line front end.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod decay;
pub mod ergodic;
mod error;
pub mod model;
pub mod quad;
pub mod report;
pub mod sde;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
pub use model::{DiffusionSpec, PotentialParams, Slope};
