//! Actor-critic PPO: a diagonal-Gaussian policy with a state-independent
//! learned log-std, GAE, the clipped surrogate objective with exact
//! analytic gradients, and the outer attack loop that keeps the best
//! latent vector found under the query budget.

mod attack;
mod gae;
mod update;

pub use attack::{current_score, run_attack, AttackOutcome, TracePoint};
pub use gae::{compute_gae, normalize_advantages, GaeOutput};
pub use update::{ppo_loss, ppo_update, AcGrads, PpoOptimizer, TrainingBatch, UpdateStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Latent, Policy};
use crate::numkit::{
    clamp_log_std, gaussian_log_prob, gaussian_sample, Mlp, Rng, LOG_STD_MAX, LOG_STD_MIN,
};

/// Policy mean network, global log-std vector, and value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    /// z_dim -> z_dim mean network.
    pub actor: Mlp,
    /// State-independent log standard deviations, length z_dim.
    pub log_std: Vec<f64>,
    /// z_dim -> 1 value network.
    pub critic: Mlp,
}

impl ActorCritic {
    pub fn init(
        z_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        log_std_init: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut actor_sizes = vec![z_dim];
        actor_sizes.extend_from_slice(actor_hidden);
        actor_sizes.push(z_dim);
        let mut critic_sizes = vec![z_dim];
        critic_sizes.extend_from_slice(critic_hidden);
        critic_sizes.push(1);
        let ac = ActorCritic {
            actor: Mlp::init(&actor_sizes, rng)?,
            log_std: vec![clamp_log_std(log_std_init); z_dim],
            critic: Mlp::init(&critic_sizes, rng)?,
        };
        ac.validate()?;
        Ok(ac)
    }

    pub fn z_dim(&self) -> usize {
        self.actor.in_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.actor.validate()?;
        self.critic.validate()?;
        if self.actor.out_dim() != self.actor.in_dim() {
            return Err(Error::shape("actor must map z_dim to z_dim"));
        }
        if self.critic.in_dim() != self.actor.in_dim() {
            return Err(Error::shape("critic input dim vs actor input dim"));
        }
        if self.critic.out_dim() != 1 {
            return Err(Error::shape("critic must have a single output"));
        }
        if self.log_std.len() != self.actor.in_dim() {
            return Err(Error::shape("log_std length vs z_dim"));
        }
        if self
            .log_std
            .iter()
            .any(|&ls| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&ls))
        {
            return Err(Error::config("log_std outside its clamp bounds"));
        }
        Ok(())
    }
}

/// Samples an action from the policy at `state`; returns the action, its
/// exact log-probability, and the critic's value estimate.
pub fn policy_act(ac: &ActorCritic, state: &[f64], rng: &mut Rng) -> Result<(Latent, f64, f64)> {
    let mean = ac.actor.forward_eval(state)?;
    let (action, log_prob) = gaussian_sample(&mean, &ac.log_std, rng)?;
    let value = ac.critic.forward_eval(state)?[0];
    Ok((action, log_prob, value))
}

impl Policy for ActorCritic {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<(Latent, f64, f64)> {
        policy_act(self, state, rng)
    }
}

/// PPO hyperparameters plus attack-loop shape. Every knob the algorithm
/// has lives here; none are hard-coded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub max_episodes: usize,
    pub episodes_per_update: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            update_epochs: 4,
            minibatch_size: 64,
            actor_lr: 3e-3,
            critic_lr: 3e-3,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            max_episodes: 10_000,
            episodes_per_update: 8,
            actor_hidden: vec![16],
            critic_hidden: vec![16],
            log_std_init: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0) {
            return Err(Error::config(format!(
                "ppo.clip_epsilon = {} must be > 0",
                self.clip_epsilon
            )));
        }
        for (name, v) in [("ppo.gamma", self.gamma), ("ppo.gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.update_epochs == 0 {
            return Err(Error::config("ppo.update_epochs must be >= 1"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::config("ppo.minibatch_size must be >= 1"));
        }
        for (name, v) in [("ppo.actor_lr", self.actor_lr), ("ppo.critic_lr", self.critic_lr)] {
            if !(v > 0.0) {
                return Err(Error::config(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(Error::config(format!(
                "ppo.entropy_coef = {} must be >= 0",
                self.entropy_coef
            )));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::config(format!(
                "ppo.max_grad_norm = {} must be > 0",
                self.max_grad_norm
            )));
        }
        if self.episodes_per_update == 0 {
            return Err(Error::config("ppo.episodes_per_update must be >= 1"));
        }
        if self.actor_hidden.iter().any(|&h| h == 0) || self.critic_hidden.iter().any(|&h| h == 0)
        {
            return Err(Error::config("ppo hidden layer sizes must be positive"));
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.log_std_init) {
            return Err(Error::config(format!(
                "ppo.log_std_init = {} outside [{LOG_STD_MIN}, {LOG_STD_MAX}]",
                self.log_std_init
            )));
        }
        Ok(())
    }
}

/// Recomputes the log-probability of `action` under the current policy at
/// `state`; used by the update to form the probability ratio.
pub(crate) fn policy_log_prob(ac: &ActorCritic, state: &[f64], action: &[f64]) -> Result<f64> {
    let mean = ac.actor.forward_eval(state)?;
    gaussian_log_prob(&mean, &ac.log_std, action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Linear, Matrix};

    fn small_ac(seed: u64) -> ActorCritic {
        let mut rng = Rng::new(seed);
        ActorCritic::init(2, &[8], &[8], 0.0, &mut rng).unwrap()
    }

    #[test]
    fn degenerate_std_act_stays_near_mean() {
        let mut ac = small_ac(1);
        ac.log_std = vec![LOG_STD_MIN; 2];
        let mut rng = Rng::new(2);
        let state = vec![0.3, -0.7];
        let mean = ac.actor.forward_eval(&state).unwrap();
        for _ in 0..50 {
            let (a, _, _) = policy_act(&ac, &state, &mut rng).unwrap();
            for (ai, mi) in a.iter().zip(&mean) {
                assert!((ai - mi).abs() < 5.0 * (-5.0f64).exp(), "{ai} vs {mi}");
            }
        }
    }

    #[test]
    fn act_log_prob_is_consistent_with_kernel_density() {
        let ac = small_ac(3);
        let mut rng = Rng::new(4);
        let state = vec![1.0, 0.5];
        for _ in 0..20 {
            let (a, lp, _) = policy_act(&ac, &state, &mut rng).unwrap();
            let mean = ac.actor.forward_eval(&state).unwrap();
            let expected = gaussian_log_prob(&mean, &ac.log_std, &a).unwrap();
            assert_eq!(lp, expected);
        }
    }

    #[test]
    fn zero_weight_critic_values_zero() {
        let mut ac = small_ac(5);
        ac.critic = Mlp {
            layers: vec![Linear {
                w: Matrix::zeros(1, 2),
                b: vec![0.0],
            }],
        };
        let mut rng = Rng::new(6);
        let (_, _, v) = policy_act(&ac, &[0.4, -0.2], &mut rng).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn config_validation_catches_bad_ranges() {
        let mut cfg = PpoConfig::default();
        cfg.gamma = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = PpoConfig::default();
        cfg.clip_epsilon = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(PpoConfig::default().validate().is_ok());
    }
}
