//! Diagonal-Gaussian sampling, log-density, its analytic gradients, and
//! entropy. The log-std is clamped to a fixed interval before use; callers
//! that keep their parameters inside the interval see exact gradients.

use crate::error::{Error, Result};
use crate::numkit::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[inline]
pub fn clamp_log_std(log_std: f64) -> f64 {
    log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

fn check_lengths(mean: &[f64], log_std: &[f64], what: &str) -> Result<()> {
    if mean.len() != log_std.len() {
        return Err(Error::shape(format!(
            "{what}: mean length {} vs log_std length {}",
            mean.len(),
            log_std.len()
        )));
    }
    Ok(())
}

/// Draws sample = mean + exp(log_std) ⊙ ε with ε standard normal, and
/// returns the exact log-density of the drawn point.
pub fn gaussian_sample(mean: &[f64], log_std: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
    check_lengths(mean, log_std, "gaussian_sample")?;
    let sample: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &ls)| m + clamp_log_std(ls).exp() * rng.normal())
        .collect();
    let log_prob = gaussian_log_prob(mean, log_std, &sample)?;
    Ok((sample, log_prob))
}

/// Sum over dimensions of the exact diagonal-Gaussian log-density.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> Result<f64> {
    check_lengths(mean, log_std, "gaussian_log_prob")?;
    if x.len() != mean.len() {
        return Err(Error::shape(format!(
            "gaussian_log_prob: x length {} vs mean length {}",
            x.len(),
            mean.len()
        )));
    }
    let half_ln_2pi = 0.5 * std::f64::consts::TAU.ln();
    let mut lp = 0.0;
    for i in 0..x.len() {
        let ls = clamp_log_std(log_std[i]);
        let z = (x[i] - mean[i]) / ls.exp();
        lp += -0.5 * z * z - ls - half_ln_2pi;
    }
    Ok(lp)
}

/// Gradients of `gaussian_log_prob` with respect to mean and log_std.
/// Where the clamp binds, the log_std gradient is zero.
pub fn gaussian_log_prob_grad(
    mean: &[f64],
    log_std: &[f64],
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(mean, log_std, "gaussian_log_prob_grad")?;
    if x.len() != mean.len() {
        return Err(Error::shape("gaussian_log_prob_grad: x length mismatch"));
    }
    let mut d_mean = vec![0.0; x.len()];
    let mut d_log_std = vec![0.0; x.len()];
    for i in 0..x.len() {
        let ls = clamp_log_std(log_std[i]);
        let inv_var = (-2.0 * ls).exp();
        let diff = x[i] - mean[i];
        d_mean[i] = diff * inv_var;
        let clamped = log_std[i] < LOG_STD_MIN || log_std[i] > LOG_STD_MAX;
        d_log_std[i] = if clamped { 0.0 } else { diff * diff * inv_var - 1.0 };
    }
    Ok((d_mean, d_log_std))
}

/// Entropy of the diagonal Gaussian: Σ (log_std + (1 + ln 2π)/2).
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    let per_dim_const = 0.5 * (1.0 + std::f64::consts::TAU.ln());
    log_std
        .iter()
        .map(|&ls| clamp_log_std(ls) + per_dim_const)
        .sum()
}
