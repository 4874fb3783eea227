use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Gradients, MlpModel};
use crate::error::{usage, Error, Result};

/// Optimizer constants. Defaults are the usual β1 = 0.9, β2 = 0.999, ε = 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        let zeros = Gradients::zeros_like(model);
        AdamState {
            config,
            step: 0,
            m_w: zeros.weights.clone(),
            v_w: zeros.weights,
            m_b: zeros.bias.clone(),
            v_b: zeros.bias,
        }
    }

    /// Running first-moment estimate for the weights of `layer`.
    pub fn first_moment(&self, layer: usize) -> &Array2<f64> {
        &self.m_w[layer]
    }
}

/// One bias-corrected Adam update of `model` in place.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.weights.len() != model.layers().len() || state.m_w.len() != model.layers().len() {
        return Err(usage!("optimizer state does not match model"));
    }
    for (l, g) in model.layers().iter().zip(&grads.weights) {
        if l.weights.dim() != g.dim() {
            return Err(usage!("gradient shape {:?} != parameter shape {:?}", g.dim(), l.weights.dim()));
        }
    }
    if !grads.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            reason: format!("non-finite gradient at optimizer step {}", state.step + 1),
        });
    }
    state.step += 1;
    let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    };
    for (i, layer) in model.layers_mut().iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&grads.weights[i])
            .and(&mut state.m_w[i])
            .and(&mut state.v_w[i])
            .for_each(|p, &g, m, v| update(p, g, m, v));
        Zip::from(&mut layer.bias)
            .and(&grads.bias[i])
            .and(&mut state.m_b[i])
            .and(&mut state.v_b[i])
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}
