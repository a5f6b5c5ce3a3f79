//! Adversarial robustness toolkit for deep-learning network intrusion
//! detection: an MLP classifier with analytic gradients, four white-box
//! evasion attacks (FGSM, PGD, JSMA, Carlini-Wagner L2), three defences
//! (adversarial retraining, Gaussian augmentation, a high-confidence
//! filter), a full metric suite, and a deterministic packet-flow
//! simulator for routed evasion scenarios.
//!
//! Everything is seeded: the same configuration produces bit-identical
//! models, adversarial batches, and reports on every run.

pub mod attack;
pub mod config;
pub mod data;
pub mod defence;
pub mod error;
pub mod eval;
pub mod flowsim;
pub mod model_io;
pub mod net;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
