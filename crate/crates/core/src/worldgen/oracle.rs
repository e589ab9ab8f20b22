//! The black-box query oracle: the only attack-facing view of a target
//! model. Returns hard label plus soft probabilities, never logits,
//! weights, or gradients, and enforces the query budget with a single
//! atomic check-and-increment so concurrent users cannot overspend.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{argmax_lowest, softmax};
use crate::worldgen::TargetModel;

/// One query's worth of attacker knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResponse {
    /// argmax of `probs`, ties to the lowest class index.
    pub label: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug)]
pub struct Oracle {
    model: TargetModel,
    count: AtomicU64,
    budget: Option<u64>,
}

impl Oracle {
    /// `budget` of `None` means unlimited.
    pub fn new(model: TargetModel, budget: Option<u64>) -> Result<Self> {
        if budget == Some(0) {
            return Err(Error::config("oracle budget must be positive or unlimited"));
        }
        Ok(Oracle {
            model,
            count: AtomicU64::new(0),
            budget,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.model.n_classes()
    }

    pub fn data_dim(&self) -> usize {
        self.model.in_dim()
    }

    /// Successful queries so far. Failed (budget-error) calls do not count.
    pub fn query_count(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    /// Queries left, or `None` for unlimited.
    pub fn remaining(&self) -> Option<u64> {
        self.budget
            .map(|b| b.saturating_sub(self.count.load(Ordering::SeqCst)))
    }

    /// One black-box query at a data-space point.
    pub fn query(&self, x: &[f64]) -> Result<OracleResponse> {
        if x.len() != self.model.in_dim() {
            return Err(Error::shape(format!(
                "oracle query: point length {} vs data dim {}",
                x.len(),
                self.model.in_dim()
            )));
        }
        if let Some(budget) = self.budget {
            // Check-and-increment as one atomic operation.
            if self
                .count
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| {
                    (c < budget).then_some(c + 1)
                })
                .is_err()
            {
                return Err(Error::BudgetExhausted { used: budget });
            }
        } else {
            self.count.fetch_add(1, Ordering::SeqCst);
        }
        let logits = self.model.classifier.forward_eval(x)?;
        let probs = softmax(&logits)?;
        Ok(OracleResponse {
            label: argmax_lowest(&probs),
            probs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use crate::worldgen::{make_world, train_target, TrainConfig, WorldConfig};

    fn trained_oracle(budget: Option<u64>) -> Oracle {
        let world = make_world(&WorldConfig::default(), 1).unwrap();
        let model = train_target(&world, &TrainConfig::default(), 2).unwrap();
        Oracle::new(model, budget).unwrap()
    }

    #[test]
    fn identical_queries_identical_responses_and_counted() {
        let oracle = trained_oracle(None);
        let x = vec![0.3, -0.8];
        let a = oracle.query(&x).unwrap();
        let b = oracle.query(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(oracle.query_count(), 2);
    }

    #[test]
    fn budget_of_one_rejects_second_query() {
        let oracle = trained_oracle(Some(1));
        let x = vec![0.0, 0.0];
        oracle.query(&x).unwrap();
        match oracle.query(&x) {
            Err(Error::BudgetExhausted { used }) => assert_eq!(used, 1),
            other => panic!("expected budget error, got {other:?}"),
        }
        // The failed call did not increment.
        assert_eq!(oracle.query_count(), 1);
    }

    #[test]
    fn label_is_argmax_of_probs() {
        let oracle = trained_oracle(None);
        let mut rng = Rng::new(5);
        for _ in 0..200 {
            let x = rng.normal_vec(2);
            let resp = oracle.query(&x).unwrap();
            assert_eq!(resp.label, argmax_lowest(&resp.probs));
            let sum: f64 = resp.probs.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn shape_error_does_not_consume_budget() {
        let oracle = trained_oracle(Some(5));
        assert!(matches!(oracle.query(&[1.0]), Err(Error::Shape(_))));
        assert_eq!(oracle.query_count(), 0);
    }

    #[test]
    fn zero_budget_is_config_error() {
        let world = make_world(&WorldConfig::default(), 1).unwrap();
        let model = train_target(&world, &TrainConfig::default(), 2).unwrap();
        assert!(matches!(Oracle::new(model, Some(0)), Err(Error::Config(_))));
    }

    #[test]
    fn concurrent_queries_never_overspend() {
        let oracle = std::sync::Arc::new(trained_oracle(Some(100)));
        let mut handles = Vec::new();
        for t in 0..4 {
            let oracle = oracle.clone();
            handles.push(std::thread::spawn(move || {
                let mut rng = Rng::new(t);
                let mut ok = 0u64;
                for _ in 0..50 {
                    if oracle.query(&rng.normal_vec(2)).is_ok() {
                        ok += 1;
                    }
                }
                ok
            }));
        }
        let total: u64 = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(total, 100);
        assert_eq!(oracle.query_count(), 100);
    }
}
