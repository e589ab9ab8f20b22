//! Experimenter-side ground truth and metrics: exhaustive latent-grid
//! search, top-k success, success-rate aggregation, and the result file
//! formats. Everything here evaluates classifiers directly and never
//! touches an oracle budget; attack code cannot reach these functions
//! because they require the white-box [`TargetModel`].

mod files;

pub use files::{
    emit_plot_data, outcomes_match_ignoring_timing, read_outcome, read_records, read_trace,
    write_outcome, write_records, write_trace, PlotRow, RECORDS_CSV_HEADER, TRACE_CSV_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppo::AttackOutcome;
use crate::worldgen::{GeneratorSpec, TargetModel, World};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// Axis-aligned evaluation grid over latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Per-dimension [lo, hi] bounds.
    pub bounds: Vec<[f64; 2]>,
    pub points_per_dim: usize,
}

impl GridSpec {
    /// The same [lo, hi] on every dimension.
    pub fn uniform(z_dim: usize, lo: f64, hi: f64, points_per_dim: usize) -> Self {
        GridSpec {
            bounds: vec![[lo, hi]; z_dim],
            points_per_dim,
        }
    }

    /// Default grid: [-3, 3] per dimension, 201 points, covering the bulk
    /// of the standard-normal prior.
    pub fn default_for(z_dim: usize) -> Self {
        GridSpec::uniform(z_dim, -3.0, 3.0, 201)
    }

    pub fn validate(&self, z_dim: usize) -> Result<()> {
        if self.bounds.len() != z_dim {
            return Err(Error::shape(format!(
                "grid has {} bounds for z_dim {}",
                self.bounds.len(),
                z_dim
            )));
        }
        if self.points_per_dim < 2 {
            return Err(Error::config("grid.points_per_dim must be >= 2"));
        }
        for (i, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::config(format!(
                    "grid bound {i}: lo {lo} must be < hi {hi}"
                )));
            }
        }
        let total = (self.points_per_dim as f64).powi(self.bounds.len() as i32);
        if total > 1e7 {
            return Err(Error::Capability(format!(
                "grid of {total:.0} points exceeds the 1e7 guard"
            )));
        }
        Ok(())
    }
}

/// Brute-force optimum of the target-class probability over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub world_seed: u64,
    pub target_class: usize,
    pub z_opt: Vec<f64>,
    pub p_opt: f64,
}

/// Exhaustively evaluates P(target_class | T(G(z))) on the grid by direct
/// white-box evaluation and returns the argmax (ties break to the
/// lexicographically lowest grid point). The experimenter's ground truth;
/// never available to attack methods and never budgeted.
pub fn brute_force_optimum(
    world: &World,
    target: &TargetModel,
    target_class: usize,
    grid: &GridSpec,
) -> Result<BruteForceResult> {
    if world.z_dim > 3 {
        return Err(Error::Capability(format!(
            "brute force supports z_dim <= 3, got {}",
            world.z_dim
        )));
    }
    grid.validate(world.z_dim)?;
    if target_class >= target.n_classes() {
        return Err(Error::usage(format!(
            "target class {target_class} out of range for {} classes",
            target.n_classes()
        )));
    }

    let steps: Vec<f64> = grid
        .bounds
        .iter()
        .map(|[lo, hi]| (hi - lo) / (grid.points_per_dim - 1) as f64)
        .collect();
    let mut index = vec![0usize; world.z_dim];
    let mut z = vec![0.0; world.z_dim];
    let mut best_z = Vec::new();
    let mut best_p = f64::NEG_INFINITY;

    // Odometer over grid indices; dimension 0 is most significant, so the
    // visit order is lexicographic in z and strict improvement keeps the
    // lowest-lexicographic argmax.
    loop {
        for d in 0..world.z_dim {
            z[d] = grid.bounds[d][0] + index[d] as f64 * steps[d];
        }
        let x = world.generator.generate(&z)?;
        let (_, probs) = target.predict(&x)?;
        let p = probs[target_class];
        if p > best_p {
            best_p = p;
            best_z = z.clone();
        }

        let mut d = world.z_dim;
        loop {
            if d == 0 {
                return Ok(BruteForceResult {
                    world_seed: world.creation_seed,
                    target_class,
                    z_opt: best_z,
                    p_opt: best_p,
                });
            }
            d -= 1;
            index[d] += 1;
            if index[d] < grid.points_per_dim {
                break;
            }
            index[d] = 0;
        }
    }
}

/// True iff `target_class` ranks among the `k` most probable classes at
/// G(z). Ranks tie-break toward lower class indices, so ties at the k-th
/// rank resolve deterministically.
pub fn top_k_success(
    model: &TargetModel,
    generator: &GeneratorSpec,
    z: &[f64],
    target_class: usize,
    k: usize,
) -> Result<bool> {
    let n = model.n_classes();
    if k == 0 || k > n {
        return Err(Error::usage(format!(
            "top-k with k = {k} outside 1..={n}"
        )));
    }
    if target_class >= n {
        return Err(Error::usage(format!(
            "target class {target_class} out of range for {n} classes"
        )));
    }
    let (_, probs) = model.predict(&generator.generate(z)?)?;
    let py = probs[target_class];
    let beaten_by = probs
        .iter()
        .enumerate()
        .filter(|&(c, &p)| c != target_class && (p > py || (p == py && c < target_class)))
        .count();
    Ok(beaten_by < k)
}

/// Which classifier judges success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorChoice {
    /// The attacked target model itself (circular but reported).
    Target,
    /// The independently trained evaluator.
    Independent,
}

/// Per-run evaluation record; the unit of the results files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub best_latent: Vec<f64>,
    /// Soft target-class probability under the attacked model at G(z*).
    pub score_target: f64,
    pub label_target: usize,
    pub label_evaluator: usize,
    pub top1_target: bool,
    pub top5_target: bool,
    pub top1_evaluator: bool,
    pub top5_evaluator: bool,
}

/// Evaluates one outcome's best latent under both classifiers. For worlds
/// with fewer than five classes the top-5 flag uses k = n_classes.
pub fn evaluate_outcome(
    run_id: &str,
    outcome: &AttackOutcome,
    world: &World,
    target: &TargetModel,
    evaluator: &TargetModel,
) -> Result<EvalRecord> {
    let y = outcome.target_class;
    let z = &outcome.best_latent;
    let x = world.generator.generate(z)?;
    let (label_target, probs_target) = target.predict(&x)?;
    let (label_evaluator, _) = evaluator.predict(&x)?;
    let k5 = 5.min(world.n_classes);
    Ok(EvalRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        run_id: run_id.to_string(),
        best_latent: z.clone(),
        score_target: probs_target[y],
        label_target,
        label_evaluator,
        top1_target: top_k_success(target, &world.generator, z, y, 1)?,
        top5_target: top_k_success(target, &world.generator, z, y, k5)?,
        top1_evaluator: top_k_success(evaluator, &world.generator, z, y, 1)?,
        top5_evaluator: top_k_success(evaluator, &world.generator, z, y, k5)?,
    })
}

/// Fraction of records whose top-k flag (for the chosen evaluator) is set.
/// Only k = 1 and k = 5 are recorded.
pub fn success_rate(records: &[EvalRecord], choice: EvaluatorChoice, k: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::usage("success_rate over zero records"));
    }
    let hits = records
        .iter()
        .map(|r| match (choice, k) {
            (EvaluatorChoice::Target, 1) => Ok(r.top1_target),
            (EvaluatorChoice::Target, 5) => Ok(r.top5_target),
            (EvaluatorChoice::Independent, 1) => Ok(r.top1_evaluator),
            (EvaluatorChoice::Independent, 5) => Ok(r.top5_evaluator),
            _ => Err(Error::usage(format!(
                "success_rate records only k = 1 and k = 5, got {k}"
            ))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / records.len() as f64)
}

/// p_opt - best_score against the brute-force reference for the same
/// world and class. Small negative values can only arise when an attack
/// out-resolves the finite grid.
pub fn optimality_gap(outcome: &AttackOutcome, brute: &BruteForceResult) -> Result<f64> {
    if outcome.world_seed != brute.world_seed {
        return Err(Error::usage(format!(
            "optimality gap across different worlds ({} vs {})",
            outcome.world_seed, brute.world_seed
        )));
    }
    if outcome.target_class != brute.target_class {
        return Err(Error::usage(format!(
            "optimality gap across different classes ({} vs {})",
            outcome.target_class, brute.target_class
        )));
    }
    Ok(brute.p_opt - outcome.best_score)
}
