//! Generalized advantage estimation over flat transition buffers.
//! Terminal flags cut the recursion, so a buffer may concatenate several
//! episodes back to back.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaeOutput {
    /// Raw (unnormalized) advantages, one per transition.
    pub advantages: Vec<f64>,
    /// Value-function regression targets: advantages + values.
    pub returns: Vec<f64>,
}

/// Backward GAE recursion:
///   delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
///   A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
/// `bootstrap_value` stands in for V(s_{t+1}) after the last transition.
///
/// Advantages come back raw; normalization happens per update batch in
/// [`crate::ppo::normalize_advantages`].
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminals: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<GaeOutput> {
    let n = rewards.len();
    if values.len() != n || terminals.len() != n {
        return Err(Error::shape(format!(
            "compute_gae: {} rewards, {} values, {} terminals",
            n,
            values.len(),
            terminals.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&gae_lambda) {
        return Err(Error::config("gamma and gae_lambda must lie in [0, 1]"));
    }

    let mut advantages = vec![0.0; n];
    let mut a_next = 0.0;
    for t in (0..n).rev() {
        let v_next = if t + 1 == n { bootstrap_value } else { values[t + 1] };
        let not_done = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * v_next * not_done - values[t];
        a_next = delta + gamma * gae_lambda * not_done * a_next;
        advantages[t] = a_next;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    Ok(GaeOutput {
        advantages,
        returns,
    })
}

/// In-place shift to mean 0 and scale to std 1, guarded for tiny batches
/// and degenerate spread.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    /// Brute-force double loop: A_t = sum_k (gamma*lambda)^k * delta_{t+k},
    /// stopping after the first terminal at or beyond t.
    fn gae_oracle(
        rewards: &[f64],
        values: &[f64],
        terminals: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let mut adv = vec![0.0; n];
        for t in 0..n {
            let mut coef = 1.0;
            let mut acc = 0.0;
            for k in t..n {
                let v_next = if k + 1 == n { bootstrap } else { values[k + 1] };
                let not_done = if terminals[k] { 0.0 } else { 1.0 };
                let delta = rewards[k] + gamma * v_next * not_done - values[k];
                acc += coef * delta;
                if terminals[k] {
                    break;
                }
                coef *= gamma * lambda;
            }
            adv[t] = acc;
        }
        adv
    }

    #[test]
    fn single_terminal_step_base_case() {
        let out = compute_gae(&[3.0], &[1.25], &[true], 99.0, 0.99, 0.95).unwrap();
        assert_eq!(out.advantages, vec![3.0 - 1.25]);
        assert_eq!(out.returns, vec![3.0]);
    }

    #[test]
    fn gamma_zero_reduces_to_reward_minus_value() {
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.5, 0.25, -1.0];
        let out = compute_gae(&rewards, &values, &[false, false, true], 0.7, 0.0, 0.95).unwrap();
        for t in 0..3 {
            assert_eq!(out.advantages[t], rewards[t] - values[t]);
        }
    }

    #[test]
    fn matches_brute_force_oracle_on_random_episodes() {
        let mut rng = Rng::new(1234);
        for _ in 0..100 {
            let n = 1 + rng.index(16);
            let rewards = rng.normal_vec(n);
            let values = rng.normal_vec(n);
            let mut terminals: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.2).collect();
            *terminals.last_mut().unwrap() = rng.uniform() < 0.7;
            let bootstrap = rng.normal();
            let gamma = rng.uniform();
            let lambda = rng.uniform();
            let out = compute_gae(&rewards, &values, &terminals, bootstrap, gamma, lambda).unwrap();
            let oracle = gae_oracle(&rewards, &values, &terminals, bootstrap, gamma, lambda);
            for (a, b) in out.advantages.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-10, "gae {a} vs oracle {b}");
            }
            for t in 0..n {
                assert_eq!(out.returns[t], out.advantages[t] + values[t]);
            }
        }
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        assert!(matches!(
            compute_gae(&[1.0], &[1.0, 2.0], &[true], 0.0, 0.9, 0.9),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn normalization_centers_and_scales() {
        let mut adv: Vec<f64> = (0..32).map(|i| i as f64 * 0.37 - 3.0).collect();
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalization_guards_degenerate_batches() {
        let mut single = vec![5.0];
        normalize_advantages(&mut single);
        assert_eq!(single, vec![0.0]);
        let mut constant = vec![2.0, 2.0, 2.0];
        normalize_advantages(&mut constant);
        assert!(constant.iter().all(|a| a.abs() < 1e-9));
    }
}
