//! Scratch calibration harness (not part of the deliverable test suite).

use invlab_core::harness::{run_hillclimb, run_random_search};
use invlab_core::mdp::MdpConfig;
use invlab_core::numkit::derive_seed;
use invlab_core::ppo::{run_attack, PpoConfig};
use invlab_core::report::{brute_force_optimum, evaluate_outcome, GridSpec};
use invlab_core::worldgen::{
    make_world, train_evaluator, train_target, Oracle, TrainConfig, WorldConfig,
};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("all");

    if which == "c5" || which == "all" {
        criterion5();
    }
    if which == "c6" || which == "all" {
        criterion6();
    }
    if which == "c10" || which == "all" {
        criterion10();
    }
}

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn ppo_cfg() -> PpoConfig {
    let mut cfg = PpoConfig::default();
    cfg.actor_lr = env_f64("ACTOR_LR", cfg.actor_lr);
    cfg.critic_lr = env_f64("CRITIC_LR", cfg.critic_lr);
    cfg.entropy_coef = env_f64("ENTROPY", cfg.entropy_coef);
    cfg.log_std_init = env_f64("LOG_STD_INIT", cfg.log_std_init);
    cfg.episodes_per_update = env_usize("EPU", cfg.episodes_per_update);
    cfg.minibatch_size = env_usize("MB", cfg.minibatch_size);
    cfg.update_epochs = env_usize("EPOCHS", cfg.update_epochs);
    eprintln!(
        "   [cfg] actor_lr={} critic_lr={} entropy={} log_std_init={} epu={} mb={} epochs={} max_steps(env MS)={}",
        cfg.actor_lr, cfg.critic_lr, cfg.entropy_coef, cfg.log_std_init,
        cfg.episodes_per_update, cfg.minibatch_size, cfg.update_epochs, env_usize("MS", 8)
    );
    cfg
}

fn mdp_cfg(target_class: usize, z_dim: usize) -> MdpConfig {
    let mut cfg = MdpConfig::new(target_class, z_dim);
    cfg.max_steps = env_usize("MS", cfg.max_steps);
    cfg.alpha = env_f64("ALPHA", cfg.alpha);
    cfg
}

fn criterion5() {
    println!("== criterion 5 probe: default world, budget 2000, 10 seeds, class 0");
    let t0 = Instant::now();
    let world = make_world(&WorldConfig::default(), 7).unwrap();
    let target = train_target(&world, &TrainConfig::default(), derive_seed(7, "target", &[])).unwrap();
    let evaluator =
        train_evaluator(&world, &TrainConfig::evaluator_default(), derive_seed(7, "evaluator", &[]))
            .unwrap();
    println!(
        "   target acc {:.4}, evaluator acc {:.4}",
        target.train_accuracy, evaluator.train_accuracy
    );
    let brute = brute_force_optimum(&world, &target, 0, &GridSpec::default_for(2)).unwrap();
    println!(
        "   p_opt {:.6} at {:?}; centroid0 {:?}",
        brute.p_opt, brute.z_opt, world.class_centroids[0]
    );

    let mdp_cfg = mdp_cfg(0, 2);
    let cfg = ppo_cfg();
    let mut successes = 0;
    let mut gaps = Vec::new();
    for seed in 0..10u64 {
        let oracle = Oracle::new(target.clone(), Some(2000)).unwrap();
        let outcome = run_attack(&world, &oracle, &mdp_cfg, &cfg, derive_seed(100, "ppo", &[seed])).unwrap();
        let rec = evaluate_outcome("probe", &outcome, &world, &target, &evaluator).unwrap();
        let gap = brute.p_opt - outcome.best_score;
        gaps.push(gap);
        if rec.top1_evaluator {
            successes += 1;
        }
        println!(
            "   seed {seed}: best {:.6} gap {:+.6} top1_eval {} episodes {} queries {}",
            outcome.best_score, gap, rec.top1_evaluator, outcome.episodes_run, outcome.queries_used
        );
    }
    let mean_gap: f64 = gaps.iter().sum::<f64>() / gaps.len() as f64;
    println!(
        "   => top1 {}/10 (need >=9), mean gap {:.6} (need <=0.05), {:.1}s",
        successes,
        mean_gap,
        t0.elapsed().as_secs_f64()
    );
}

fn criterion6() {
    println!("== criterion 6 probe: ppo vs random search, 10 world instances, budget 2000");
    let t0 = Instant::now();
    let mut ppo_wins = 0;
    for wseed in 0..10u64 {
        let world = make_world(&WorldConfig::default(), std::env::var("WBASE").ok().and_then(|v| v.parse().ok()).unwrap_or(1000u64) + wseed).unwrap();
        let target =
            train_target(&world, &TrainConfig::default(), derive_seed(wseed, "target", &[])).unwrap();
        let mdp_cfg = mdp_cfg(0, 2);
        let cfg = ppo_cfg();
        let mut ppo_scores = Vec::new();
        let mut rs_scores = Vec::new();
        for seed in 0..10u64 {
            let o1 = Oracle::new(target.clone(), Some(2000)).unwrap();
            let p = run_attack(&world, &o1, &mdp_cfg, &cfg, derive_seed(wseed, "p", &[seed])).unwrap();
            ppo_scores.push(p.best_score);
            let o2 = Oracle::new(target.clone(), Some(2000)).unwrap();
            let r = run_random_search(&world, &o2, 0, derive_seed(wseed, "r", &[seed])).unwrap();
            rs_scores.push(r.best_score);
        }
        let pm: f64 = ppo_scores.iter().sum::<f64>() / 10.0;
        let rm: f64 = rs_scores.iter().sum::<f64>() / 10.0;
        let win = pm >= rm;
        if win {
            ppo_wins += 1;
        }
        println!(
            "   world {wseed}: ppo mean {:.6} rs mean {:.6} diff {:+.2e} {}",
            pm,
            rm,
            pm - rm,
            if win { "WIN" } else { "LOSS" }
        );
    }
    println!(
        "   => ppo wins {}/10 (need >=8), {:.1}s",
        ppo_wins,
        t0.elapsed().as_secs_f64()
    );
}

fn criterion10() {
    println!("== criterion 10 probe: mlp world, budget 8000, top-5 eval, 10 seeds");
    let t0 = Instant::now();
    let world = make_world(&WorldConfig::mlp_preset(), 7).unwrap();
    let target = train_target(&world, &TrainConfig::default(), derive_seed(7, "target", &[])).unwrap();
    let evaluator =
        train_evaluator(&world, &TrainConfig::evaluator_default(), derive_seed(7, "evaluator", &[]))
            .unwrap();
    println!(
        "   target acc {:.4}, evaluator acc {:.4}",
        target.train_accuracy, evaluator.train_accuracy
    );
    let mdp_cfg = mdp_cfg(0, 4);
    let cfg = ppo_cfg();
    let mut top5 = 0;
    let mut top1 = 0;
    for seed in 0..10u64 {
        let oracle = Oracle::new(target.clone(), Some(8000)).unwrap();
        let outcome =
            run_attack(&world, &oracle, &mdp_cfg, &cfg, derive_seed(200, "ppo", &[seed])).unwrap();
        let rec = evaluate_outcome("probe", &outcome, &world, &target, &evaluator).unwrap();
        if rec.top5_evaluator {
            top5 += 1;
        }
        if rec.top1_evaluator {
            top1 += 1;
        }
        println!(
            "   seed {seed}: best {:.6} top1 {} top5 {} episodes {}",
            outcome.best_score, rec.top1_evaluator, rec.top5_evaluator, outcome.episodes_run
        );
    }
    println!(
        "   => top5 {}/10 (need >=7), top1 {}/10, {:.1}s",
        top5,
        top1,
        t0.elapsed().as_secs_f64()
    );
    // hillclimb reference
    let mut hc_top5 = 0;
    for seed in 0..10u64 {
        let oracle = Oracle::new(target.clone(), Some(8000)).unwrap();
        let outcome =
            run_hillclimb(&world, &oracle, 0, 0.3, derive_seed(201, "hc", &[seed])).unwrap();
        let rec = evaluate_outcome("probe", &outcome, &world, &target, &evaluator).unwrap();
        if rec.top5_evaluator {
            hc_top5 += 1;
        }
    }
    println!("   (hillclimb reference: top5 {hc_top5}/10)");
}
