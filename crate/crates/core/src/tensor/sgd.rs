use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::{Error, Result};

/// SGD with momentum, L2 weight decay and a step learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// 0-based epochs at which the learning rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub epochs: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            weight_decay: 1e-4,
            decay_epochs: vec![16, 24],
            decay_factor: 0.1,
            epochs: 30,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(self.learning_rate) && finite_nonneg(self.momentum) && finite_nonneg(self.weight_decay)) {
            return Err(Error::Config("learning_rate, momentum and weight_decay must be non-negative".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay_factor must be in (0, 1], got {}", self.decay_factor)));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.decay_epochs.iter().filter(|&&e| epoch >= e).count();
        // repeated multiplication keeps 1e-2 * 0.1 == 1e-3 exact to the last ulp
        (0..drops).fold(self.learning_rate, |lr, _| lr * self.decay_factor)
    }
}

/// One update from the gradients stored in `params`:
/// `g' = g + wd·w`, `v ← μ·v + g'`, `w ← w − lr(epoch)·v`.
pub fn sgd_step(params: &mut ParamSet, cfg: &SgdConfig, epoch: usize) -> Result<()> {
    if let Some(bad) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient in parameter {:?}", bad.name)));
    }
    let lr = cfg.lr_at(epoch);
    for p in params.iter_mut() {
        let w = p.value.data_mut();
        let v = p.velocity.data_mut();
        let g = p.grad.data();
        for i in 0..w.len() {
            let eff = g[i] + cfg.weight_decay * w[i];
            v[i] = cfg.momentum * v[i] + eff;
            w[i] -= lr * v[i];
        }
    }
    Ok(())
}
