use std::f64::consts::PI;

use crate::autodiff::{ParamStore, Tensor};

use super::{TrainConfig, TrainError};

/// Linear warm-up from `lr / 10` to `lr` over `warmup_epochs`, then cosine
/// decay reaching `final_lr` at the last epoch.
pub fn lr_at(epoch: usize, c: &TrainConfig) -> Result<f64, TrainError> {
    if epoch >= c.max_epochs {
        return Err(TrainError::EpochOutOfRange {
            epoch,
            max_epochs: c.max_epochs,
        });
    }
    let start = c.lr / 10.0;
    if epoch < c.warmup_epochs {
        return Ok(start + (c.lr - start) * epoch as f64 / c.warmup_epochs as f64);
    }
    let last = c.max_epochs - 1;
    if last <= c.warmup_epochs {
        return Ok(c.lr);
    }
    let progress = (epoch - c.warmup_epochs) as f64 / (last - c.warmup_epochs) as f64;
    Ok(c.final_lr + 0.5 * (c.lr - c.final_lr) * (1.0 + (PI * progress).cos()))
}

/// Adam with decoupled weight decay applied to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update with gradients in store order.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let p = store.get_mut(id).data_mut();
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for i in 0..p.len() {
                p[i] *= 1.0 - lr * self.weight_decay;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strict improvement
/// of the monitored loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}
