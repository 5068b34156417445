use crate::error::{Error, Result};
use crate::network::Params;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    /// Decoupled: `p <- p - lr * weight_decay * p` each step.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First and second moments per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl OptimState {
    pub fn new(params: &Params<f32>) -> Self {
        OptimState {
            step: 0,
            m: params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect(),
            v: params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect(),
        }
    }
}

/// One bias-corrected Adam update. `grads[i]` belongs to parameter `i`.
pub fn adam_step(
    params: &mut Params<f32>,
    grads: &[Option<&Tensor<f32>>],
    state: &mut OptimState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.tensors().len() {
        return Err(Error::MissingGrad(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.tensors().len()
        )));
    }
    if let Some(i) = grads.iter().position(Option::is_none) {
        return Err(Error::MissingGrad(format!("parameter {} has no gradient", params.names()[i])));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let step_size = (cfg.lr / bc1) as f32;
    let inv_bc2 = (1.0 / bc2) as f32;
    let decay = (cfg.lr * cfg.weight_decay) as f32;
    let eps = cfg.eps as f32;
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads[i].expect("checked above").data();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let gj = g[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let update = step_size * m[j] / ((v[j] * inv_bc2).sqrt() + eps);
            *x = *x - decay * *x - update;
        }
    }
    Ok(())
}
