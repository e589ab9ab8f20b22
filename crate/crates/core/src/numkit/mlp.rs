//! Multilayer perceptrons with exact analytic gradients.
//!
//! Hidden layers use tanh, the output layer is linear. The forward pass
//! records every layer input so the backward pass is an exact reverse-mode
//! derivative of the forward map, checkable against finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::linalg::Matrix;
use crate::numkit::rng::Rng;

/// One affine layer: y = W x + b, W is out_dim x in_dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: Matrix::zeros(out_dim, in_dim),
            b: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }
}

/// Feed-forward network; tanh on every layer except the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Layer inputs recorded by `forward`; `acts[i]` feeds layer `i` and
/// `acts[len]` is the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
}

/// Gradient of some scalar with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

/// Gradients shaped exactly like an `Mlp`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl Mlp {
    /// Glorot-uniform initialization: weights in ±sqrt(6/(fan_in+fan_out)).
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::config("mlp needs at least input and output sizes"));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("mlp layer sizes must be positive"));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform_in(-bound, bound));
            layers.push(Linear {
                w,
                b: vec![0.0; fan_out],
            });
        }
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Checks the layer shape chain and entry finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::shape("mlp has no layers"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.b.len() != layer.out_dim() {
                return Err(Error::shape(format!(
                    "layer {i}: bias length {} vs out dim {}",
                    layer.b.len(),
                    layer.out_dim()
                )));
            }
            if !layer.w.is_finite() || !layer.b.iter().all(|v| v.is_finite()) {
                return Err(Error::shape(format!("layer {i}: non-finite parameter")));
            }
            if i + 1 < self.layers.len() && layer.out_dim() != self.layers[i + 1].in_dim() {
                return Err(Error::shape(format!(
                    "layer {i} out dim {} does not chain into layer {} in dim {}",
                    layer.out_dim(),
                    i + 1,
                    self.layers[i + 1].in_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.in_dim() {
            return Err(Error::shape(format!(
                "mlp forward: input length {} vs in dim {}",
                input.len(),
                self.in_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.w.matvec(acts.last().expect("non-empty"));
            for (zj, bj) in z.iter_mut().zip(&layer.b) {
                *zj += bj;
            }
            if i + 1 < self.layers.len() {
                for zj in &mut z {
                    *zj = zj.tanh();
                }
            }
            acts.push(z);
        }
        let output = acts.last().expect("non-empty").clone();
        Ok((output, ForwardCache { acts }))
    }

    /// Forward pass without keeping the cache.
    pub fn forward_eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    /// Exact reverse-mode gradients. `output_grad` is d(scalar)/d(output);
    /// returns parameter gradients and d(scalar)/d(input).
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        if cache.acts.len() != self.layers.len() + 1 {
            return Err(Error::shape("forward cache does not match this network"));
        }
        if output_grad.len() != self.out_dim() {
            return Err(Error::shape(format!(
                "mlp backward: output grad length {} vs out dim {}",
                output_grad.len(),
                self.out_dim()
            )));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = output_grad.to_vec();
        for i in (0..self.layers.len()).rev() {
            // For hidden layers g arrives w.r.t. tanh output; tanh' = 1 - y^2.
            let g_pre: Vec<f64> = if i + 1 < self.layers.len() {
                g.iter()
                    .zip(&cache.acts[i + 1])
                    .map(|(gj, yj)| gj * (1.0 - yj * yj))
                    .collect()
            } else {
                g
            };
            grads.layers[i].dw.add_outer(&g_pre, &cache.acts[i]);
            for (dbj, gj) in grads.layers[i].db.iter_mut().zip(&g_pre) {
                *dbj += gj;
            }
            g = self.layers[i].w.matvec_transpose(&g_pre);
        }
        Ok((grads, g))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data().len() + l.b.len())
            .sum()
    }

    /// Parameters as one flat vector: per layer, weights row-major then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.w.data());
            out.extend_from_slice(&layer.b);
        }
        out
    }

    /// Inverse of `flatten`.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "assign_flat: {} values vs {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let wlen = layer.w.data().len();
            layer.w.data_mut().copy_from_slice(&flat[off..off + wlen]);
            off += wlen;
            let blen = layer.b.len();
            layer.b.copy_from_slice(&flat[off..off + blen]);
            off += blen;
        }
        Ok(())
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrads {
                    dw: Matrix::zeros(l.out_dim(), l.in_dim()),
                    db: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        assert_eq!(self.layers.len(), other.layers.len(), "grad add: layer count");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.dw.data_mut().iter_mut().zip(b.dw.data()) {
                *x += y;
            }
            for (x, y) in a.db.iter_mut().zip(&b.db) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for layer in &mut self.layers {
            layer.dw.scale(s);
            for v in &mut layer.db {
                *v *= s;
            }
        }
    }

    pub fn sq_sum(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.dw.data().iter().map(|v| v * v).sum::<f64>()
                    + l.db.iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.dw.data());
            out.extend_from_slice(&layer.db);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.dw.is_finite() && l.db.iter().all(|v| v.is_finite()))
    }
}
