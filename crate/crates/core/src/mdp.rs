//! The inversion decision process: standard-normal state initialization,
//! momentum state transitions, indicator rewards with an exploration
//! bonus, and episode rollouts against the black-box oracle with exact
//! query accounting (two queries per executed step).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Rng;
use crate::worldgen::{Oracle, OracleResponse, World};

/// A point in the generator's latent space; doubles as state and action.
pub type Latent = Vec<f64>;

/// The per-experiment reward/episode knobs, without the per-run target
/// class and latent dimension. Campaigns hold one of these and stamp out
/// an [`MdpConfig`] per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSettings {
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub beta: f64,
    pub max_steps: usize,
}

impl Default for MdpSettings {
    fn default() -> Self {
        MdpSettings {
            alpha: 0.7,
            lambda1: 2.0,
            lambda2: 2.0,
            lambda3: 8.0,
            beta: 1.0,
            max_steps: 8,
        }
    }
}

impl MdpSettings {
    pub fn for_class(&self, target_class: usize, z_dim: usize) -> MdpConfig {
        MdpConfig {
            target_class,
            alpha: self.alpha,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            beta: self.beta,
            max_steps: self.max_steps,
            z_dim,
        }
    }
}

/// Reward coefficients and episode shape for one target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpConfig {
    pub target_class: usize,
    /// Momentum blend: next state = alpha * state + (1 - alpha) * action.
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Exploration bonus paid when state and action labels differ.
    pub beta: f64,
    pub max_steps: usize,
    pub z_dim: usize,
}

impl MdpConfig {
    pub fn new(target_class: usize, z_dim: usize) -> Self {
        MdpConfig {
            target_class,
            alpha: 0.7,
            lambda1: 2.0,
            lambda2: 2.0,
            lambda3: 8.0,
            beta: 1.0,
            max_steps: 8,
            z_dim,
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "mdp.alpha = {} outside [0, 1]",
                self.alpha
            )));
        }
        for (name, v) in [
            ("mdp.lambda1", self.lambda1),
            ("mdp.lambda2", self.lambda2),
            ("mdp.lambda3", self.lambda3),
            ("mdp.beta", self.beta),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::config("mdp.max_steps must be >= 1"));
        }
        if self.z_dim == 0 {
            return Err(Error::config("mdp.z_dim must be >= 1"));
        }
        if self.target_class >= n_classes {
            return Err(Error::config(format!(
                "mdp.target_class = {} but the world has {} classes",
                self.target_class, n_classes
            )));
        }
        Ok(())
    }
}

/// One stored step of experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Latent,
    pub action: Latent,
    pub reward: f64,
    pub next_state: Latent,
    pub log_prob: f64,
    pub value: f64,
    pub terminal: bool,
}

/// The oracle's answers for one step's state and action points.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResponses {
    pub state: OracleResponse,
    pub action: OracleResponse,
}

/// A finished (possibly budget-truncated) episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRollout {
    pub transitions: Vec<Transition>,
    pub responses: Vec<StepResponses>,
    /// Best latent queried this episode with its target-class probability.
    pub best: Option<(Latent, f64)>,
    /// Successful oracle queries consumed by this episode.
    pub queries_used: u64,
    /// Set when the budget ran out mid-episode.
    pub truncated: bool,
}

impl EpisodeRollout {
    /// Target-class probability at the episode's best queried latent,
    /// or 0 if the budget died before the first query.
    pub fn episode_score(&self) -> f64 {
        self.best.as_ref().map_or(0.0, |(_, p)| *p)
    }
}

/// Decomposed step reward; `total` is exactly the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_class_state: f64,
    pub r_class_action: f64,
    pub r_explore: f64,
    pub total: f64,
}

/// Anything that can act: returns (action, log_prob, value estimate).
pub trait Policy {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<(Latent, f64, f64)>;
}

/// Initial state drawn from the standard normal prior.
pub fn init_state(z_dim: usize, rng: &mut Rng) -> Latent {
    rng.normal_vec(z_dim)
}

/// next = alpha * state + (1 - alpha) * action, exact per coordinate.
pub fn momentum_transition(state: &[f64], action: &[f64], alpha: f64) -> Result<Latent> {
    if state.len() != action.len() {
        return Err(Error::shape(format!(
            "momentum_transition: state length {} vs action length {}",
            state.len(),
            action.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha = {alpha} outside [0, 1]")));
    }
    Ok(state
        .iter()
        .zip(action)
        .map(|(s, a)| alpha * s + (1.0 - alpha) * a)
        .collect())
}

/// 1 iff the response's hard label equals the target class.
pub fn class_reward(resp: &OracleResponse, target_class: usize) -> Result<f64> {
    if target_class >= resp.probs.len() {
        return Err(Error::config(format!(
            "target class {} out of range for {} classes",
            target_class,
            resp.probs.len()
        )));
    }
    Ok(if resp.label == target_class { 1.0 } else { 0.0 })
}

/// beta iff the two hard labels differ.
pub fn explore_reward(resp_state: &OracleResponse, resp_action: &OracleResponse, beta: f64) -> f64 {
    if resp_state.label != resp_action.label {
        beta
    } else {
        0.0
    }
}

/// Weighted composite reward for one (state, action) pair.
pub fn step_reward(
    cfg: &MdpConfig,
    resp_state: &OracleResponse,
    resp_action: &OracleResponse,
) -> Result<RewardBreakdown> {
    let r_class_state = class_reward(resp_state, cfg.target_class)?;
    let r_class_action = class_reward(resp_action, cfg.target_class)?;
    let r_explore = explore_reward(resp_state, resp_action, cfg.beta);
    let total =
        cfg.lambda1 * r_class_state + cfg.lambda2 * r_class_action + cfg.lambda3 * r_explore;
    Ok(RewardBreakdown {
        r_class_state,
        r_class_action,
        r_explore,
        total,
    })
}

/// Runs one episode of at most `max_steps` steps against the oracle.
///
/// Each step queries the generator image of the current state and of the
/// sampled action (two queries), computes the composite reward, and blends
/// the state toward the action. If the budget dies mid-episode the rollout
/// is returned truncated rather than failing. The final stored transition
/// is always marked terminal.
pub fn rollout_episode(
    policy: &dyn Policy,
    world: &World,
    oracle: &Oracle,
    cfg: &MdpConfig,
    rng: &mut Rng,
) -> Result<EpisodeRollout> {
    cfg.validate(oracle.n_classes())?;
    if cfg.z_dim != world.z_dim {
        return Err(Error::shape(format!(
            "mdp z_dim {} vs world z_dim {}",
            cfg.z_dim, world.z_dim
        )));
    }

    let mut rollout = EpisodeRollout {
        transitions: Vec::with_capacity(cfg.max_steps),
        responses: Vec::with_capacity(cfg.max_steps),
        best: None,
        queries_used: 0,
        truncated: false,
    };

    let track_best = |rollout: &mut EpisodeRollout, z: &[f64], resp: &OracleResponse| {
        let p = resp.probs[cfg.target_class];
        if rollout.best.as_ref().map_or(true, |(_, bp)| p > *bp) {
            rollout.best = Some((z.to_vec(), p));
        }
    };

    let mut state = init_state(cfg.z_dim, rng);
    for t in 0..cfg.max_steps {
        let resp_state = match oracle.query(&world.generator.generate(&state)?) {
            Ok(r) => r,
            Err(Error::BudgetExhausted { .. }) => {
                rollout.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        rollout.queries_used += 1;
        track_best(&mut rollout, &state, &resp_state);

        let (action, log_prob, value) = policy.act(&state, rng)?;
        let resp_action = match oracle.query(&world.generator.generate(&action)?) {
            Ok(r) => r,
            Err(Error::BudgetExhausted { .. }) => {
                rollout.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        rollout.queries_used += 1;
        track_best(&mut rollout, &action, &resp_action);

        let reward = step_reward(cfg, &resp_state, &resp_action)?;
        let next_state = momentum_transition(&state, &action, cfg.alpha)?;
        rollout.transitions.push(Transition {
            state: state.clone(),
            action,
            reward: reward.total,
            next_state: next_state.clone(),
            log_prob,
            value,
            terminal: t + 1 == cfg.max_steps,
        });
        rollout.responses.push(StepResponses {
            state: resp_state,
            action: resp_action,
        });
        state = next_state;
    }

    // A truncated episode still ends: mark its last stored step terminal.
    if let Some(last) = rollout.transitions.last_mut() {
        if rollout.truncated {
            last.terminal = true;
        }
    }
    Ok(rollout)
}
