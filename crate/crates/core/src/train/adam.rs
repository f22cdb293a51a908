use super::{Gradients, TrainConfig};
use crate::error::{Error, Result};
use crate::rdn::RdnModel;

/// First and second moment estimates, shaped like the model's tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &RdnModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update of every parameter. Rejects non-finite
/// gradients before touching the model.
pub fn adam_step(
    model: &mut RdnModel,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let names = model.tensors();
    if grads.tensors.len() != names.len() || state.m.len() != names.len() {
        return Err(Error::DimensionMismatch(
            "gradients or optimizer state do not match the model".into(),
        ));
    }
    for ((name, t), g) in names.iter().zip(&grads.tensors) {
        if g.len() != t.len() {
            return Err(Error::DimensionMismatch(format!("gradient for {name} has wrong length")));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {name}[{i}] is {} at Adam step {}",
                g[i],
                state.step + 1
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((param, g), m), v) in model
        .tensors_mut()
        .into_iter()
        .zip(&grads.tensors)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..param.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps_adam);
            param[i] = (param[i] as f64 - update) as f32;
        }
    }
    Ok(())
}
