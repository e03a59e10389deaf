use serde::{Deserialize, Serialize};

use super::tensor::Parameters;
use crate::error::{MinaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.003,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P, config: AdamConfig) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        AdamState {
            config,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` from `grads`.
pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState) -> Result<()> {
    let grad_tensors = grads.tensors();
    let mut param_tensors = params.tensors_mut();
    if param_tensors.len() != grad_tensors.len() || param_tensors.len() != state.first_moment.len() {
        return Err(MinaError::Shape(
            "adam: parameter, gradient and state counts differ".into(),
        ));
    }
    for (i, (p, (name, g))) in param_tensors.iter().zip(&grad_tensors).enumerate() {
        if p.shape() != g.shape() || state.first_moment[i].len() != p.len() {
            return Err(MinaError::Shape(format!(
                "adam: `{name}` gradient {:?} vs parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let correction1 = 1.0 - beta1.powi(state.step as i32);
    let correction2 = 1.0 - beta2.powi(state.step as i32);
    for (i, p) in param_tensors.iter_mut().enumerate() {
        let g = grad_tensors[i].1.data();
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (k, theta) in p.data_mut().iter_mut().enumerate() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let m_hat = m[k] / correction1;
            let v_hat = v[k] / correction2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
