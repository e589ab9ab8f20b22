//! The outer attack loop: collect episodes, update the policy, and keep
//! the best-scoring latent vector seen, under exact query accounting.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{rollout_episode, EpisodeRollout, Latent, MdpConfig};
use crate::numkit::Rng;
use crate::ppo::{ppo_update, ActorCritic, PpoConfig, PpoOptimizer};
use crate::worldgen::{GeneratorSpec, Oracle, World};

/// Soft probability of the target class at G(z), bought with one oracle
/// query. This is the score the attack maximizes and the only continuous
/// signal available in the black-box setting.
pub fn current_score(
    oracle: &Oracle,
    generator: &GeneratorSpec,
    z: &[f64],
    target_class: usize,
) -> Result<f64> {
    let resp = oracle.query(&generator.generate(z)?)?;
    resp.probs
        .get(target_class)
        .copied()
        .ok_or_else(|| {
            Error::config(format!(
                "target class {} out of range for {} classes",
                target_class,
                resp.probs.len()
            ))
        })
}

/// One per-episode trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub episode: u64,
    /// Best verified score so far; non-decreasing by construction.
    pub best_score: f64,
    pub cumulative_queries: u64,
}

/// Result of one attack run (any method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub method: String,
    pub world_seed: u64,
    pub target_class: usize,
    pub seed: u64,
    pub best_latent: Latent,
    /// Maximum of the trace; 0 when no score was ever bought.
    pub best_score: f64,
    pub trace: Vec<TracePoint>,
    pub episodes_run: u64,
    pub queries_used: u64,
    /// Filled by evaluation (independent evaluator, k = 1 and 5).
    pub success_top1: Option<bool>,
    pub success_top5: Option<bool>,
    /// Timing only; excluded from reproducibility comparisons.
    pub wall_clock_seconds: f64,
}

impl AttackOutcome {
    fn start(method: &str, world: &World, target_class: usize, seed: u64) -> Self {
        AttackOutcome {
            method: method.to_string(),
            world_seed: world.creation_seed,
            target_class,
            seed,
            best_latent: vec![0.0; world.z_dim],
            best_score: 0.0,
            trace: Vec::new(),
            episodes_run: 0,
            queries_used: 0,
            success_top1: None,
            success_top5: None,
            wall_clock_seconds: 0.0,
        }
    }
}

/// Full PPO inversion attack against one target class.
///
/// Episodes are rolled out in windows of `episodes_per_update`; after each
/// window's policy update the window's best-observed latent is re-scored
/// with one query and `(z*, score_best)` advances only on a strict
/// improvement, so the per-episode trace is non-decreasing. The attack
/// stops at `max_episodes` or when the budget cannot fund another episode.
pub fn run_attack(
    world: &World,
    oracle: &Oracle,
    mdp_cfg: &MdpConfig,
    ppo_cfg: &PpoConfig,
    seed: u64,
) -> Result<AttackOutcome> {
    world.validate()?;
    mdp_cfg.validate(oracle.n_classes())?;
    ppo_cfg.validate()?;
    if mdp_cfg.z_dim != world.z_dim {
        return Err(Error::usage(format!(
            "mdp z_dim {} vs world z_dim {}",
            mdp_cfg.z_dim, world.z_dim
        )));
    }
    if oracle.data_dim() != world.data_dim {
        return Err(Error::usage("oracle target does not match this world"));
    }

    let started = Instant::now();
    let mut rng = Rng::new(seed);
    let mut ac = ActorCritic::init(
        world.z_dim,
        &ppo_cfg.actor_hidden,
        &ppo_cfg.critic_hidden,
        ppo_cfg.log_std_init,
        &mut rng,
    )?;
    let mut opt = PpoOptimizer::new(&ac, ppo_cfg);

    let mut outcome = AttackOutcome::start("ppo_mi", world, mdp_cfg.target_class, seed);
    let mut window: Vec<EpisodeRollout> = Vec::with_capacity(ppo_cfg.episodes_per_update);
    // Best (latent, observed score) since the last update, pending re-scoring.
    let mut candidate: Option<(Latent, f64)> = None;

    for episode in 0..ppo_cfg.max_episodes as u64 {
        if oracle.remaining().is_some_and(|r| r < 2) {
            break;
        }
        let mut episode_rng = rng.split();
        let rollout = rollout_episode(&ac, world, oracle, mdp_cfg, &mut episode_rng)?;
        outcome.episodes_run += 1;
        outcome.queries_used += rollout.queries_used;
        let truncated = rollout.truncated;

        if let Some((z, p)) = &rollout.best {
            if candidate.as_ref().is_none_or(|(_, cp)| *p > *cp) {
                candidate = Some((z.clone(), *p));
            }
        }
        if !rollout.transitions.is_empty() {
            window.push(rollout);
        }

        let no_more = truncated
            || episode + 1 == ppo_cfg.max_episodes as u64
            || oracle.remaining().is_some_and(|r| r < 2);
        if window.len() >= ppo_cfg.episodes_per_update || no_more {
            if !window.is_empty() {
                ppo_update(&mut ac, &window, ppo_cfg, &mut opt, &mut rng)?;
                window.clear();
            }
            if let Some((z, _)) = candidate.take() {
                match current_score(oracle, &world.generator, &z, mdp_cfg.target_class) {
                    Ok(score) => {
                        outcome.queries_used += 1;
                        if score > outcome.best_score {
                            outcome.best_score = score;
                            outcome.best_latent = z;
                        }
                    }
                    // Budget died before the verification query: the
                    // candidate is dropped, score_best stands.
                    Err(Error::BudgetExhausted { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }

        outcome.trace.push(TracePoint {
            episode,
            best_score: outcome.best_score,
            cumulative_queries: outcome.queries_used,
        });
        if no_more {
            break;
        }
    }

    outcome.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(outcome)
}
