use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamGrads, ParamStore};

/// Plain SGD with global-norm clipping. Returns the pre-clip gradient norm.
pub fn sgd_step(store: &mut ParamStore, grads: &ParamGrads, lr: f64, clip_max_norm: f64) -> Result<f64> {
    if !(lr > 0.0) {
        return Err(Error::invalid(format!("learning rate {lr} must be positive")));
    }
    if let Some(bad) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of `{}`", store.name(bad))));
    }
    let norm = grads.global_norm();
    let scale = if norm > clip_max_norm { clip_max_norm / norm } else { 1.0 };
    for id in grads.ids() {
        let g = grads.get(id).unwrap();
        let p = store.get_mut(id).data_mut();
        if p.len() != g.len() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                lhs: vec![p.len()],
                rhs: vec![g.len()],
            });
        }
        for (w, gv) in p.iter_mut().zip(g) {
            *w -= lr * scale * gv;
        }
    }
    Ok(norm)
}

/// Whether the decay counter resets when the loss improves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayRule {
    /// Never reset: every non-improving epoch counts toward the stop threshold.
    #[default]
    Cumulative,
    /// Reset to zero on improvement.
    Patience,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrScheduleConfig {
    pub initial_lr: f64,
    pub decay: f64,
    pub stop_after: usize,
    pub rule: DecayRule,
}

impl Default for LrScheduleConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1.0,
            decay: 0.8,
            stop_after: 10,
            rule: DecayRule::Cumulative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Continue,
    Stop,
}

/// Learning-rate decay and early-stop state.
#[derive(Debug, Clone, PartialEq)]
pub struct LrState {
    pub config: LrScheduleConfig,
    pub epoch: usize,
    pub lr: f64,
    pub best: f64,
    pub counter: usize,
}

impl LrState {
    pub fn new(config: LrScheduleConfig) -> Result<Self> {
        if !(config.decay > 0.0 && config.decay < 1.0) {
            return Err(Error::invalid("decay factor must be in (0, 1)"));
        }
        if !(config.initial_lr > 0.0) {
            return Err(Error::invalid("initial learning rate must be positive"));
        }
        Ok(Self {
            config,
            epoch: 0,
            lr: config.initial_lr,
            best: f64::INFINITY,
            counter: 0,
        })
    }

    /// Feeds one completed epoch's loss.
    pub fn step(&mut self, epoch_loss: f64) -> Signal {
        self.epoch += 1;
        if epoch_loss >= self.best || epoch_loss.is_nan() {
            self.lr *= self.config.decay;
            self.counter += 1;
        } else {
            self.best = epoch_loss;
            if self.config.rule == DecayRule::Patience {
                self.counter = 0;
            }
        }
        if self.counter >= self.config.stop_after {
            Signal::Stop
        } else {
            Signal::Continue
        }
    }
}

/// Functional form of [`LrState::step`].
pub fn lr_schedule_step(mut state: LrState, epoch_loss: f64) -> (LrState, Signal) {
    let s = state.step(epoch_loss);
    (state, s)
}
