//! Synthetic attack worlds with fully-known ground truth.
//!
//! A world is a Gaussian mixture in data space whose class centroids are
//! images of latent anchor points under the world's generator, so every
//! class is reachable from latent space by construction. Classifiers are
//! trained on samples from the mixture; the only attack-facing surface is
//! the budgeted [`Oracle`].

mod oracle;
mod persist;
mod train;

pub use oracle::{Oracle, OracleResponse};
pub use persist::{WorldFile, SCHEMA_VERSION};
pub use train::{fresh_accuracy, train_evaluator, train_target, TargetModel, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{euclidean_distance, Matrix, Mlp, Rng};

/// Deterministic latent-to-data map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Identity { dim: usize },
    Linear { w: Matrix, b: Vec<f64> },
    Mlp { net: Mlp },
}

impl GeneratorSpec {
    pub fn z_dim(&self) -> usize {
        match self {
            GeneratorSpec::Identity { dim } => *dim,
            GeneratorSpec::Linear { w, .. } => w.cols(),
            GeneratorSpec::Mlp { net } => net.in_dim(),
        }
    }

    pub fn data_dim(&self) -> usize {
        match self {
            GeneratorSpec::Identity { dim } => *dim,
            GeneratorSpec::Linear { w, .. } => w.rows(),
            GeneratorSpec::Mlp { net } => net.out_dim(),
        }
    }

    /// G(z).
    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.z_dim() {
            return Err(Error::shape(format!(
                "generate: latent length {} vs z_dim {}",
                z.len(),
                self.z_dim()
            )));
        }
        match self {
            GeneratorSpec::Identity { .. } => Ok(z.to_vec()),
            GeneratorSpec::Linear { w, b } => {
                let mut y = w.matvec(z);
                for (yi, bi) in y.iter_mut().zip(b) {
                    *yi += bi;
                }
                Ok(y)
            }
            GeneratorSpec::Mlp { net } => net.forward_eval(z),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::Identity { dim } => {
                if *dim == 0 {
                    return Err(Error::config("identity generator with zero dimension"));
                }
            }
            GeneratorSpec::Linear { w, b } => {
                if b.len() != w.rows() {
                    return Err(Error::shape("linear generator: bias length vs rows"));
                }
                if !w.is_finite() || !b.iter().all(|v| v.is_finite()) {
                    return Err(Error::shape("linear generator: non-finite parameter"));
                }
            }
            GeneratorSpec::Mlp { net } => net.validate()?,
        }
        Ok(())
    }
}

/// Which generator `make_world` builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Identity,
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub z_dim: usize,
    pub data_dim: usize,
    pub n_classes: usize,
    pub class_spread: f64,
    pub generator: GeneratorKind,
    /// Hidden layer sizes for the mlp generator kind.
    pub generator_hidden: Vec<usize>,
}

impl Default for WorldConfig {
    /// The default world: 2-D identity generator, 4 separable classes.
    fn default() -> Self {
        WorldConfig {
            z_dim: 2,
            data_dim: 2,
            n_classes: 4,
            class_spread: 0.25,
            generator: GeneratorKind::Identity,
            generator_hidden: vec![16],
        }
    }
}

impl WorldConfig {
    /// A nonlinear preset: 4-D latent space mapped through a random MLP
    /// into 8-D data space with 8 classes.
    pub fn mlp_preset() -> Self {
        WorldConfig {
            z_dim: 4,
            data_dim: 8,
            n_classes: 8,
            class_spread: 0.25,
            generator: GeneratorKind::Mlp,
            generator_hidden: vec![16],
        }
    }
}

/// A fully-specified synthetic world. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub z_dim: usize,
    pub data_dim: usize,
    pub n_classes: usize,
    pub class_centroids: Vec<Vec<f64>>,
    pub class_spread: f64,
    pub generator: GeneratorSpec,
    pub creation_seed: u64,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        if self.z_dim == 0 || self.data_dim == 0 {
            return Err(Error::config("world dimensions must be positive"));
        }
        if self.class_spread <= 0.0 {
            return Err(Error::config("class_spread must be positive"));
        }
        if self.class_centroids.len() != self.n_classes {
            return Err(Error::config(format!(
                "{} centroids for {} classes",
                self.class_centroids.len(),
                self.n_classes
            )));
        }
        for c in &self.class_centroids {
            if c.len() != self.data_dim {
                return Err(Error::shape("centroid dimension vs data_dim"));
            }
            if !c.iter().all(|v| v.is_finite()) {
                return Err(Error::config("non-finite centroid"));
            }
        }
        for i in 0..self.class_centroids.len() {
            for j in i + 1..self.class_centroids.len() {
                if self.class_centroids[i] == self.class_centroids[j] {
                    return Err(Error::config(format!("centroids {i} and {j} coincide")));
                }
            }
        }
        self.generator.validate()?;
        if self.generator.z_dim() != self.z_dim || self.generator.data_dim() != self.data_dim {
            return Err(Error::shape("generator dimensions vs world dimensions"));
        }
        Ok(())
    }

    pub fn min_centroid_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.class_centroids.len() {
            for j in i + 1..self.class_centroids.len() {
                best = best.min(euclidean_distance(
                    &self.class_centroids[i],
                    &self.class_centroids[j],
                ));
            }
        }
        best
    }
}

/// Labeled data-space sample, class-major order.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Builds a world deterministically from (config, seed).
///
/// Class anchors are drawn in latent space and pushed through the
/// generator; if the resulting centroids are closer than 4x the class
/// spread everything is rescaled until they separate, keeping each
/// centroid an exact generator image so every class stays reachable.
pub fn make_world(cfg: &WorldConfig, seed: u64) -> Result<World> {
    if cfg.n_classes < 2 {
        return Err(Error::config(format!(
            "world.n_classes = {} but attack worlds need at least 2 classes",
            cfg.n_classes
        )));
    }
    if cfg.z_dim == 0 || cfg.data_dim == 0 {
        return Err(Error::config("world dimensions must be positive"));
    }
    if cfg.class_spread <= 0.0 {
        return Err(Error::config("world.class_spread must be positive"));
    }
    if cfg.generator == GeneratorKind::Identity && cfg.z_dim != cfg.data_dim {
        return Err(Error::config(format!(
            "identity generator requires z_dim = data_dim (got {} and {})",
            cfg.z_dim, cfg.data_dim
        )));
    }

    let mut rng = Rng::new(seed);
    let mut gen_rng = rng.split();
    let mut generator = match cfg.generator {
        GeneratorKind::Identity => GeneratorSpec::Identity { dim: cfg.z_dim },
        GeneratorKind::Linear => {
            let bound = (6.0 / (cfg.z_dim + cfg.data_dim) as f64).sqrt();
            let w = Matrix::from_fn(cfg.data_dim, cfg.z_dim, |_, _| {
                gen_rng.uniform_in(-bound, bound)
            });
            GeneratorSpec::Linear {
                w,
                b: vec![0.0; cfg.data_dim],
            }
        }
        GeneratorKind::Mlp => {
            let mut sizes = vec![cfg.z_dim];
            sizes.extend_from_slice(&cfg.generator_hidden);
            sizes.push(cfg.data_dim);
            GeneratorSpec::Mlp {
                net: Mlp::init(&sizes, &mut gen_rng)?,
            }
        }
    };

    let mut anchor_rng = rng.split();
    let mut anchors: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| anchor_rng.normal_vec(cfg.z_dim))
        .collect();
    let mut centroids: Vec<Vec<f64>> = anchors
        .iter()
        .map(|a| generator.generate(a))
        .collect::<Result<_>>()?;

    let required = 4.0 * cfg.class_spread;
    let min_dist = min_pairwise(&centroids);
    if min_dist == 0.0 {
        return Err(Error::config(
            "degenerate world seed: two class centroids coincide",
        ));
    }
    if min_dist < required {
        let s = required / min_dist;
        match &mut generator {
            // For the affine kinds, scaling the anchors scales the images.
            GeneratorSpec::Identity { .. } | GeneratorSpec::Linear { .. } => {
                for a in &mut anchors {
                    for v in a.iter_mut() {
                        *v *= s;
                    }
                }
            }
            // For the mlp kind, scale the linear output layer instead.
            GeneratorSpec::Mlp { net } => {
                let last = net.layers.len() - 1;
                net.layers[last].w.scale(s);
                for b in &mut net.layers[last].b {
                    *b *= s;
                }
            }
        }
        centroids = anchors
            .iter()
            .map(|a| generator.generate(a))
            .collect::<Result<_>>()?;
    }

    let world = World {
        z_dim: cfg.z_dim,
        data_dim: cfg.data_dim,
        n_classes: cfg.n_classes,
        class_centroids: centroids,
        class_spread: cfg.class_spread,
        generator,
        creation_seed: seed,
    };
    world.validate()?;
    debug_assert!(world.min_centroid_distance() >= required * (1.0 - 1e-12));
    Ok(world)
}

fn min_pairwise(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(euclidean_distance(&points[i], &points[j]));
        }
    }
    best
}

/// Draws `n_per_class` points per class from Gaussian(centroid, spread²·I).
pub fn sample_labeled_data(world: &World, n_per_class: usize, rng: &mut Rng) -> Result<LabeledData> {
    if n_per_class == 0 {
        return Err(Error::usage("sample_labeled_data: n_per_class must be >= 1"));
    }
    let total = world.n_classes * n_per_class;
    let mut points = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (class, centroid) in world.class_centroids.iter().enumerate() {
        for _ in 0..n_per_class {
            let point: Vec<f64> = centroid
                .iter()
                .map(|&c| c + world.class_spread * rng.normal())
                .collect();
            points.push(point);
            labels.push(class);
        }
    }
    Ok(LabeledData { points, labels })
}
