//! Deterministic numerical kernel: matrices, tanh MLPs with exact analytic
//! gradients, softmax, Adam, diagonal-Gaussian sampling, and a splittable
//! seeded RNG. Everything is f64 and pure: same inputs (including RNG
//! state) give bit-identical outputs.

mod adam;
mod gaussian;
mod linalg;
mod mlp;
mod rng;

pub use adam::{Adam, AdamConfig};
pub use gaussian::{
    clamp_log_std, gaussian_entropy, gaussian_log_prob, gaussian_log_prob_grad, gaussian_sample,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use linalg::{argmax_lowest, dot, euclidean_distance, l2_norm, softmax, Matrix};
pub use mlp::{ForwardCache, LayerGrads, Linear, Mlp, MlpGrads};
pub use rng::{derive_seed, Rng};
