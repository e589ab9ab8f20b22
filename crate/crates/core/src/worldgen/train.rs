//! Classifier training for targets and independent evaluators: minibatch
//! cross-entropy with Adam on the kernel MLPs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{argmax_lowest, softmax, Adam, AdamConfig, Mlp, MlpGrads, Rng};
use crate::worldgen::{sample_labeled_data, World};

/// A trained classifier over the world's data space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    pub classifier: Mlp,
    pub train_accuracy: f64,
    pub training_seed: u64,
}

impl TargetModel {
    pub fn n_classes(&self) -> usize {
        self.classifier.out_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.classifier.in_dim()
    }

    /// Direct (white-box) evaluation: hard label and soft probabilities.
    /// Attack methods never see this; they go through the oracle.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let logits = self.classifier.forward_eval(x)?;
        let probs = softmax(&logits)?;
        Ok((argmax_lowest(&probs), probs))
    }

    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        if !(0.0..=1.0).contains(&self.train_accuracy) {
            return Err(Error::config("train_accuracy outside [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_per_class: usize,
    pub accuracy_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![16],
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.01,
            n_per_class: 200,
            accuracy_floor: 0.95,
        }
    }
}

impl TrainConfig {
    /// Evaluator default: same recipe, different hidden width so the two
    /// classifiers are architecturally distinct.
    pub fn evaluator_default() -> Self {
        TrainConfig {
            hidden: vec![24],
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config(format!("{prefix}.batch_size must be >= 1")));
        }
        if self.n_per_class == 0 {
            return Err(Error::config(format!("{prefix}.n_per_class must be >= 1")));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!("{prefix}.learning_rate must be > 0")));
        }
        if !(0.0..=1.0).contains(&self.accuracy_floor) {
            return Err(Error::config(format!(
                "{prefix}.accuracy_floor must be in [0, 1]"
            )));
        }
        Ok(())
    }
}

/// Trains the attacked classifier. Fails if the accuracy floor is unmet
/// after the epoch budget.
pub fn train_target(world: &World, cfg: &TrainConfig, seed: u64) -> Result<TargetModel> {
    train_classifier(world, cfg, seed)
}

/// Trains the independent evaluator; callers pass a different config
/// (hidden width) and an independently derived seed.
pub fn train_evaluator(world: &World, cfg: &TrainConfig, seed: u64) -> Result<TargetModel> {
    train_classifier(world, cfg, seed)
}

fn train_classifier(world: &World, cfg: &TrainConfig, seed: u64) -> Result<TargetModel> {
    world.validate()?;
    cfg.validate("train")?;

    let mut rng = Rng::new(seed);
    let mut data_rng = rng.split();
    let data = sample_labeled_data(world, cfg.n_per_class, &mut data_rng)?;

    let mut sizes = vec![world.data_dim];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(world.n_classes);
    let mut init_rng = rng.split();
    let mut net = Mlp::init(&sizes, &mut init_rng)?;

    let mut flat = net.flatten();
    let mut adam = Adam::new(flat.len(), AdamConfig::with_lr(cfg.learning_rate));
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = MlpGrads::zeros_like(&net);
            for &idx in batch {
                let (logits, cache) = net.forward(&data.points[idx])?;
                let probs = softmax(&logits)?;
                // Cross-entropy with softmax: dL/dlogits = probs - onehot.
                let mut dlogits = probs;
                dlogits[data.labels[idx]] -= 1.0;
                for d in &mut dlogits {
                    *d /= batch.len() as f64;
                }
                let (g, _) = net.backward(&cache, &dlogits)?;
                grads.add(&g);
            }
            adam.step(&mut flat, &grads.flatten())?;
            net.assign_flat(&flat)?;
        }
    }

    let mut correct = 0usize;
    for (point, &label) in data.points.iter().zip(&data.labels) {
        let logits = net.forward_eval(point)?;
        if argmax_lowest(&logits) == label {
            correct += 1;
        }
    }
    let train_accuracy = correct as f64 / data.len() as f64;
    if train_accuracy < cfg.accuracy_floor {
        return Err(Error::Training(format!(
            "train accuracy {train_accuracy:.4} below floor {:.4} after {} epochs \
             (world seed {}, {} classes)",
            cfg.accuracy_floor, cfg.epochs, world.creation_seed, world.n_classes
        )));
    }

    Ok(TargetModel {
        classifier: net,
        train_accuracy,
        training_seed: seed,
    })
}

/// Fraction of fresh world samples on which a classifier matches the
/// sample label. Test/report helper, not part of the attack surface.
pub fn fresh_accuracy(model: &TargetModel, world: &World, n_per_class: usize, rng: &mut Rng) -> Result<f64> {
    let data = sample_labeled_data(world, n_per_class, rng)?;
    let mut correct = 0usize;
    for (point, &label) in data.points.iter().zip(&data.labels) {
        if model.predict(point)?.0 == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
