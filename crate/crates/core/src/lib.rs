//! Risk-averse zero-order trajectory optimization.
//!
//! The crate is organised bottom-up:
//!
//! - [`ensemble`]: probabilistic MLP ensembles over state deltas, NLL training,
//!   and particle/mean-path propagation.
//! - [`uncertainty`]: aleatoric and epistemic measures computed from a
//!   [`ensemble::ParticleBundle`], and the penalty/bonus terms built on them.
//! - [`safety`]: per-slice moment matching and box-violation probabilities.
//! - [`planner`]: the cross-entropy-method MPC controller with colored noise,
//!   elite reuse and shift initialization.
//! - [`envs`]: analytic noisy environments and a ground-truth ensemble adapter.
//! - [`harness`]: experiment configs, training/evaluation loops and CSV output.

pub mod ensemble;
pub mod envs;
pub mod error;
pub mod harness;
pub mod planner;
pub mod rng;
pub mod safety;
pub mod uncertainty;

pub use error::{Error, Result};
