use serde::{Deserialize, Serialize};

use super::params::{ParamGrads, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.second[i]
    }
}

/// One bias-corrected Adam update.
///
/// Gradients are validated before anything is written, so a non-finite
/// gradient leaves both parameters and moments untouched.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &ParamGrads,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} parameters, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    if !(lr >= 0.0) {
        return Err(Error::Contract(format!("learning rate {lr} must be non-negative")));
    }
    for (id, g) in grads.iter() {
        if g.shape() != params.get(id).shape() {
            return Err(Error::Shape(format!(
                "gradient for `{}` has shape {:?}, parameter {:?}",
                params.name(id),
                g.shape(),
                params.get(id).shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGrad(params.name(id).to_string()));
        }
    }

    state.step += 1;
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (id, g) in grads.iter() {
        let i = id.index();
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let p = params.get_mut(id).data_mut();
        for (((pj, mj), vj), &gj) in p.iter_mut().zip(m).zip(v).zip(g.data()) {
            *mj = beta1 * *mj + (1.0 - beta1) * gj;
            *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
            let mhat = *mj / c1;
            let vhat = *vj / c2;
            *pj -= lr * mhat / (vhat.sqrt() + epsilon);
        }
    }
    Ok(())
}
