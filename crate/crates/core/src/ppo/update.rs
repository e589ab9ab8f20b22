//! The clipped-surrogate loss with exact analytic gradients, and the
//! minibatched update step that applies it.

use crate::error::{Error, Result};
use crate::mdp::EpisodeRollout;
use crate::numkit::{
    clamp_log_std, gaussian_entropy, gaussian_log_prob, gaussian_log_prob_grad, Adam, AdamConfig,
    MlpGrads, Rng, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::ppo::{compute_gae, normalize_advantages, ActorCritic, PpoConfig};

/// Transitions plus their advantage estimates, flattened for updates.
/// Advantages are already normalized over the update window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Builds the update batch for a window of rollouts: concatenates
    /// transitions, runs GAE with terminal cuts, and normalizes the
    /// advantages over the whole window.
    pub fn from_rollouts(rollouts: &[EpisodeRollout], gamma: f64, gae_lambda: f64) -> Result<Self> {
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut old_log_probs = Vec::new();
        let mut rewards = Vec::new();
        let mut values = Vec::new();
        let mut terminals = Vec::new();
        for rollout in rollouts {
            for t in &rollout.transitions {
                states.push(t.state.clone());
                actions.push(t.action.clone());
                old_log_probs.push(t.log_prob);
                rewards.push(t.reward);
                values.push(t.value);
                terminals.push(t.terminal);
            }
        }
        if states.is_empty() {
            return Err(Error::usage("ppo update with no collected transitions"));
        }
        let gae = compute_gae(&rewards, &values, &terminals, 0.0, gamma, gae_lambda)?;
        let mut advantages = gae.advantages;
        normalize_advantages(&mut advantages);
        Ok(TrainingBatch {
            states,
            actions,
            old_log_probs,
            advantages,
            returns: gae.returns,
        })
    }

    pub fn select(&self, indices: &[usize]) -> TrainingBatch {
        TrainingBatch {
            states: indices.iter().map(|&i| self.states[i].clone()).collect(),
            actions: indices.iter().map(|&i| self.actions[i].clone()).collect(),
            old_log_probs: indices.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: indices.iter().map(|&i| self.advantages[i]).collect(),
            returns: indices.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

/// Gradients for every actor-critic parameter group.
#[derive(Debug, Clone)]
pub struct AcGrads {
    pub actor: MlpGrads,
    pub log_std: Vec<f64>,
    pub critic: MlpGrads,
}

impl AcGrads {
    pub fn zeros_like(ac: &ActorCritic) -> Self {
        AcGrads {
            actor: MlpGrads::zeros_like(&ac.actor),
            log_std: vec![0.0; ac.log_std.len()],
            critic: MlpGrads::zeros_like(&ac.critic),
        }
    }

    pub fn global_norm(&self) -> f64 {
        (self.actor.sq_sum()
            + self.log_std.iter().map(|g| g * g).sum::<f64>()
            + self.critic.sq_sum())
        .sqrt()
    }

    /// Scales all gradients so the joint global norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm {
            let s = max_norm / norm;
            self.actor.scale(s);
            for g in &mut self.log_std {
                *g *= s;
            }
            self.critic.scale(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.critic.is_finite()
            && self.log_std.iter().all(|g| g.is_finite())
    }
}

/// Diagnostics from one update window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub actor_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
}

/// Clipped-surrogate PPO loss and its exact gradients over a batch.
///
/// loss = -mean(min(rho*A, clip(rho, 1-eps, 1+eps)*A))
///        + value_coef * mean((V(s) - return)^2)
///        - entropy_coef * entropy(log_std)
pub fn ppo_loss(ac: &ActorCritic, batch: &TrainingBatch, cfg: &PpoConfig) -> Result<(f64, AcGrads)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::usage("ppo_loss on an empty batch"));
    }
    let inv_n = 1.0 / n as f64;
    let eps = cfg.clip_epsilon;

    let mut grads = AcGrads::zeros_like(ac);
    let mut actor_loss = 0.0;
    let mut value_loss = 0.0;

    for i in 0..n {
        let state = &batch.states[i];
        let action = &batch.actions[i];
        let adv = batch.advantages[i];

        let (mean, actor_cache) = ac.actor.forward(state)?;
        let log_prob = gaussian_log_prob(&mean, &ac.log_std, action)?;
        let ratio = (log_prob - batch.old_log_probs[i]).exp();
        let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
        let surrogate = (ratio * adv).min(clipped_ratio * adv);
        actor_loss += -surrogate * inv_n;

        // The min kills the gradient exactly when clipping binds on the
        // chosen side: A > 0 with rho above the band, or A < 0 below it.
        let clipped_out = (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
        if !clipped_out && adv != 0.0 {
            // d(-rho*A/N)/dlogp = -A*rho/N, then chain into mean and log_std.
            let coeff = -adv * ratio * inv_n;
            let (d_mean, d_ls) = gaussian_log_prob_grad(&mean, &ac.log_std, action)?;
            let out_grad: Vec<f64> = d_mean.iter().map(|g| coeff * g).collect();
            let (actor_grads, _) = ac.actor.backward(&actor_cache, &out_grad)?;
            grads.actor.add(&actor_grads);
            for (gl, dl) in grads.log_std.iter_mut().zip(&d_ls) {
                *gl += coeff * dl;
            }
        }

        let (v_out, critic_cache) = ac.critic.forward(state)?;
        let v = v_out[0];
        let err = v - batch.returns[i];
        value_loss += err * err * inv_n;
        let dv = cfg.value_coef * 2.0 * err * inv_n;
        let (critic_grads, _) = ac.critic.backward(&critic_cache, &[dv])?;
        grads.critic.add(&critic_grads);
    }

    let entropy = gaussian_entropy(&ac.log_std);
    // Entropy is state-independent; its gradient is 1 per unclamped dim.
    for (gl, &ls) in grads.log_std.iter_mut().zip(&ac.log_std) {
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&ls) {
            *gl -= cfg.entropy_coef;
        }
    }

    let loss = actor_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
    Ok((loss, grads))
}

/// Adam state for the three parameter groups. The actor's learning rate
/// also drives the log-std vector.
#[derive(Debug, Clone)]
pub struct PpoOptimizer {
    actor: Adam,
    log_std: Adam,
    critic: Adam,
}

impl PpoOptimizer {
    pub fn new(ac: &ActorCritic, cfg: &PpoConfig) -> Self {
        PpoOptimizer {
            actor: Adam::new(ac.actor.param_count(), AdamConfig::with_lr(cfg.actor_lr)),
            log_std: Adam::new(ac.log_std.len(), AdamConfig::with_lr(cfg.actor_lr)),
            critic: Adam::new(ac.critic.param_count(), AdamConfig::with_lr(cfg.critic_lr)),
        }
    }

    fn step(&mut self, ac: &mut ActorCritic, grads: &AcGrads) -> Result<()> {
        let mut actor_flat = ac.actor.flatten();
        self.actor.step(&mut actor_flat, &grads.actor.flatten())?;
        ac.actor.assign_flat(&actor_flat)?;

        self.log_std.step(&mut ac.log_std, &grads.log_std)?;
        // Keep the stored parameter inside the clamp so sampling and
        // gradients stay exact.
        for ls in &mut ac.log_std {
            *ls = clamp_log_std(*ls);
        }

        let mut critic_flat = ac.critic.flatten();
        self.critic.step(&mut critic_flat, &grads.critic.flatten())?;
        ac.critic.assign_flat(&critic_flat)?;
        Ok(())
    }
}

/// Runs `update_epochs` passes of shuffled minibatches over the window's
/// transitions, clipping the joint gradient norm before each Adam step.
pub fn ppo_update(
    ac: &mut ActorCritic,
    rollouts: &[EpisodeRollout],
    cfg: &PpoConfig,
    opt: &mut PpoOptimizer,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    let batch = TrainingBatch::from_rollouts(rollouts, cfg.gamma, cfg.gae_lambda)?;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..cfg.update_epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.minibatch_size) {
            let minibatch = batch.select(chunk);
            let (loss, mut grads) = ppo_loss(ac, &minibatch, cfg)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite("ppo minibatch loss/gradients".into()));
            }
            grads.clip_global_norm(cfg.max_grad_norm);
            opt.step(ac, &grads)?;
        }
    }
    let stats = evaluate_stats(ac, &batch, cfg)?;
    if !stats.approx_kl.is_finite() || !stats.total_loss.is_finite() {
        return Err(Error::NonFinite("ppo update statistics".into()));
    }
    Ok(stats)
}

/// Post-update diagnostics over the full window batch.
fn evaluate_stats(ac: &ActorCritic, batch: &TrainingBatch, cfg: &PpoConfig) -> Result<UpdateStats> {
    let n = batch.len() as f64;
    let eps = cfg.clip_epsilon;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let mut actor_loss = 0.0;
    let mut value_loss = 0.0;
    for i in 0..batch.len() {
        let log_prob = super::policy_log_prob(ac, &batch.states[i], &batch.actions[i])?;
        let ratio = (log_prob - batch.old_log_probs[i]).exp();
        // Non-negative KL estimator: (rho - 1) - ln(rho).
        kl += (ratio - 1.0) - (log_prob - batch.old_log_probs[i]);
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        let adv = batch.advantages[i];
        let surrogate = (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv);
        actor_loss += -surrogate / n;
        let v = ac.critic.forward_eval(&batch.states[i])?[0];
        value_loss += (v - batch.returns[i]) * (v - batch.returns[i]) / n;
    }
    let entropy = gaussian_entropy(&ac.log_std);
    Ok(UpdateStats {
        approx_kl: kl / n,
        clip_fraction: clipped as f64 / n,
        actor_loss,
        value_loss,
        entropy,
        total_loss: actor_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Transition;
    use crate::numkit::{Linear, Matrix, Mlp};
    use crate::ppo::policy_log_prob;
    use crate::testsupport::{finite_diff, rel_err};

    fn small_ac(seed: u64) -> ActorCritic {
        let mut rng = Rng::new(seed);
        ActorCritic::init(2, &[6], &[6], -0.2, &mut rng).unwrap()
    }

    fn random_batch(ac: &ActorCritic, n: usize, seed: u64) -> TrainingBatch {
        let mut rng = Rng::new(seed);
        let mut batch = TrainingBatch {
            states: Vec::new(),
            actions: Vec::new(),
            old_log_probs: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        };
        for _ in 0..n {
            let s = rng.normal_vec(2);
            let a = rng.normal_vec(2);
            let lp = policy_log_prob(ac, &s, &a).unwrap() + rng.uniform_in(-0.3, 0.3);
            batch.states.push(s);
            batch.actions.push(a);
            batch.old_log_probs.push(lp);
            batch.advantages.push(rng.normal());
            batch.returns.push(rng.normal());
        }
        batch
    }

    #[test]
    fn empty_batch_is_usage_error() {
        let ac = small_ac(0);
        let batch = TrainingBatch {
            states: vec![],
            actions: vec![],
            old_log_probs: vec![],
            advantages: vec![],
            returns: vec![],
        };
        assert!(matches!(
            ppo_loss(&ac, &batch, &PpoConfig::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn on_policy_ratio_one_gives_negative_mean_advantage() {
        let ac = small_ac(1);
        let mut cfg = PpoConfig::default();
        cfg.value_coef = 0.0;
        cfg.entropy_coef = 0.0;
        let mut batch = random_batch(&ac, 8, 2);
        for i in 0..batch.len() {
            batch.old_log_probs[i] =
                policy_log_prob(&ac, &batch.states[i], &batch.actions[i]).unwrap();
        }
        let (loss, _) = ppo_loss(&ac, &batch, &cfg).unwrap();
        let mean_adv = batch.advantages.iter().sum::<f64>() / batch.len() as f64;
        assert!((loss - (-mean_adv)).abs() < 1e-12, "{loss} vs {}", -mean_adv);
    }

    #[test]
    fn clipped_positive_advantage_sample_has_zero_actor_gradient() {
        let ac = small_ac(3);
        let mut cfg = PpoConfig::default();
        cfg.value_coef = 0.0;
        cfg.entropy_coef = 0.0;
        let eps = cfg.clip_epsilon;

        let state = vec![0.5, -0.25];
        let action = vec![0.1, 0.9];
        let lp = policy_log_prob(&ac, &state, &action).unwrap();
        let batch = TrainingBatch {
            states: vec![state],
            actions: vec![action],
            // rho = exp(lp - old) = 1 + 2*eps: outside the band.
            old_log_probs: vec![lp - (1.0 + 2.0 * eps).ln()],
            advantages: vec![1.0],
            returns: vec![0.0],
        };
        let (loss, grads) = ppo_loss(&ac, &batch, &cfg).unwrap();
        // Loss uses the clipped value (1 + eps) * A.
        assert!((loss - (-(1.0 + eps))).abs() < 1e-12);
        assert!(grads.actor.flatten().iter().all(|&g| g == 0.0));
        assert!(grads.log_std.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        for seed in 0..10u64 {
            let ac = small_ac(seed + 50);
            let cfg = PpoConfig::default();
            let batch = random_batch(&ac, 6, seed + 900);
            let (_, grads) = ppo_loss(&ac, &batch, &cfg).unwrap();

            let mut analytic = grads.actor.flatten();
            analytic.extend_from_slice(&grads.log_std);
            analytic.extend_from_slice(&grads.critic.flatten());

            let mut flat0 = ac.actor.flatten();
            flat0.extend_from_slice(&ac.log_std);
            flat0.extend_from_slice(&ac.critic.flatten());
            let actor_len = ac.actor.param_count();
            let ls_len = ac.log_std.len();

            let numeric = finite_diff(&flat0, 1e-5, |flat| {
                let mut probe = ac.clone();
                probe.actor.assign_flat(&flat[..actor_len]).unwrap();
                probe.log_std = flat[actor_len..actor_len + ls_len].to_vec();
                probe.critic.assign_flat(&flat[actor_len + ls_len..]).unwrap();
                ppo_loss(&probe, &batch, &cfg).unwrap().0
            });

            for (k, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
                assert!(
                    rel_err(*a, *n) <= 1e-4,
                    "seed {seed}, param {k}: analytic {a} vs numeric {n}"
                );
            }
        }
    }

    fn zero_signal_rollout(ac: &ActorCritic, seed: u64) -> EpisodeRollout {
        // Zero rewards, zero stored values, zero-weight critic at the
        // caller: advantages and value errors vanish identically.
        let mut rng = Rng::new(seed);
        let mut transitions = Vec::new();
        for t in 0..6 {
            let s = rng.normal_vec(2);
            let a = rng.normal_vec(2);
            let lp = policy_log_prob(ac, &s, &a).unwrap();
            transitions.push(Transition {
                state: s.clone(),
                action: a,
                reward: 0.0,
                next_state: s,
                log_prob: lp,
                value: 0.0,
                terminal: t == 5,
            });
        }
        EpisodeRollout {
            transitions,
            responses: vec![],
            best: None,
            queries_used: 12,
            truncated: false,
        }
    }

    #[test]
    fn zero_advantage_zero_value_error_update_is_identity_without_entropy() {
        let mut ac = small_ac(7);
        ac.critic = Mlp {
            layers: vec![Linear {
                w: Matrix::zeros(1, 2),
                b: vec![0.0],
            }],
        };
        let mut cfg = PpoConfig::default();
        cfg.entropy_coef = 0.0;
        let rollouts = vec![zero_signal_rollout(&ac, 11)];
        let before = ac.clone();
        let mut opt = PpoOptimizer::new(&ac, &cfg);
        let stats = ppo_update(&mut ac, &rollouts, &cfg, &mut opt, &mut Rng::new(1)).unwrap();
        assert_eq!(ac, before);
        assert!(stats.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn entropy_term_alone_moves_only_log_std() {
        let mut ac = small_ac(7);
        ac.critic = Mlp {
            layers: vec![Linear {
                w: Matrix::zeros(1, 2),
                b: vec![0.0],
            }],
        };
        let cfg = PpoConfig::default(); // entropy_coef = 0.01
        let rollouts = vec![zero_signal_rollout(&ac, 11)];
        let before = ac.clone();
        let mut opt = PpoOptimizer::new(&ac, &cfg);
        ppo_update(&mut ac, &rollouts, &cfg, &mut opt, &mut Rng::new(1)).unwrap();
        assert_eq!(ac.actor, before.actor);
        assert_eq!(ac.critic, before.critic);
        // Entropy pushes log_std up.
        for (after, b4) in ac.log_std.iter().zip(&before.log_std) {
            assert!(after > b4);
        }
    }

    #[test]
    fn update_is_deterministic_and_clip_fraction_in_range() {
        let world_rollouts: Vec<EpisodeRollout> = (0..3)
            .map(|k| {
                let ac = small_ac(20);
                let mut rollout = zero_signal_rollout(&ac, 30 + k);
                for (i, t) in rollout.transitions.iter_mut().enumerate() {
                    t.reward = (i as f64) - 1.0 + k as f64 * 0.5;
                }
                rollout
            })
            .collect();
        let cfg = PpoConfig::default();

        let mut ac1 = small_ac(20);
        let mut opt1 = PpoOptimizer::new(&ac1, &cfg);
        let s1 = ppo_update(&mut ac1, &world_rollouts, &cfg, &mut opt1, &mut Rng::new(9)).unwrap();

        let mut ac2 = small_ac(20);
        let mut opt2 = PpoOptimizer::new(&ac2, &cfg);
        let s2 = ppo_update(&mut ac2, &world_rollouts, &cfg, &mut opt2, &mut Rng::new(9)).unwrap();

        assert_eq!(ac1, ac2);
        assert_eq!(s1, s2);
        assert!((0.0..=1.0).contains(&s1.clip_fraction));
        assert!(s1.approx_kl.is_finite());
    }

    #[test]
    fn gradient_clipping_bounds_global_norm() {
        let ac = small_ac(31);
        let batch = random_batch(&ac, 12, 77);
        let mut cfg = PpoConfig::default();
        cfg.value_coef = 10.0; // inflate gradients
        let (_, mut grads) = ppo_loss(&ac, &batch, &cfg).unwrap();
        grads.clip_global_norm(0.5);
        assert!(grads.global_norm() <= 0.5 + 1e-12);
    }
}
