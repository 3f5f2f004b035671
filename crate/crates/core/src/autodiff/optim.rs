use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::AutodiffError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rescale gradients so their global L2 norm is at most this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
        }
    }
}

impl AdamConfig {
    pub const DEFAULT_CLIP_NORM: f64 = 5.0;
}

/// First/second moment accumulators for one parameter list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let zeros: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }
}

/// Scales `grads` in place so their joint L2 norm does not exceed `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        for g in grads.iter_mut() {
            g.values_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
    norm
}

/// One bias-corrected Adam step over `params`.
pub fn adam_update(
    params: &mut [(String, &mut Tensor)],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), AutodiffError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(AutodiffError::Shape(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(AutodiffError::Shape(format!(
                "gradient for {name} has {} values, parameter has {}",
                g.len(),
                p.len()
            )));
        }
        if !g.is_finite() {
            return Err(AutodiffError::NonFiniteGradient(name.clone()));
        }
    }

    let mut clipped;
    let grads = match state.config.clip_norm {
        Some(max) => {
            clipped = grads.to_vec();
            clip_global_norm(&mut clipped, max);
            &clipped[..]
        }
        None => grads,
    };

    state.step += 1;
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
        ..
    } = state.config;
    let t = state.step as f64;
    let bias1 = 1.0 - beta1.powf(t);
    let bias2 = 1.0 - beta2.powf(t);

    for (i, (_, p)) in params.iter_mut().enumerate() {
        let g = grads[i].values();
        let m = state.first_moment[i].values_mut();
        let v = state.second_moment[i].values_mut();
        for (j, w) in p.values_mut().iter_mut().enumerate() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// Step decay `base · factor^⌊epoch / interval⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub interval: usize,
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            factor: 1.0,
            interval: 1,
        }
    }

    pub fn validate(&self) -> Result<(), AutodiffError> {
        if !(self.factor > 0.0 && self.factor <= 1.0) || self.interval == 0 || self.base < 0.0 {
            return Err(AutodiffError::Config(format!(
                "invalid learning-rate schedule {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    let decays = (epoch / schedule.interval.max(1)) as i32;
    schedule.base * schedule.factor.powi(decays)
}
