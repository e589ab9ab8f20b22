//! Desk-scale laboratory for query-budgeted latent-space inversion attacks
//! against black-box classifiers.
//!
//! The pieces, bottom up:
//!
//! - [`numkit`] — deterministic f64 kernel: MLPs with exact gradients,
//!   softmax, Adam, diagonal Gaussians, splittable seeded RNG.
//! - [`worldgen`] — fully-known synthetic worlds: a latent-space generator,
//!   Gaussian-mixture class data, trained target and evaluator classifiers,
//!   and a budget-enforcing query oracle.
//! - [`mdp`] — the attack's decision process: momentum state transitions,
//!   indicator rewards with an exploration bonus, and episode rollouts with
//!   exact query accounting.
//! - [`ppo`] — actor-critic PPO (clipped surrogate, GAE) plus the outer
//!   attack loop that tracks the best latent found.
//! - [`harness`] — campaign runner and the query-matched derivative-free
//!   baselines (random search, hill climbing).
//! - [`report`] — brute-force ground truth, top-k metrics, and all result
//!   file formats.

pub mod error;
pub mod harness;
pub mod mdp;
pub mod numkit;
pub mod ppo;
pub mod report;
pub mod worldgen;

#[cfg(test)]
pub(crate) mod testsupport;

pub use error::{Error, Result};
