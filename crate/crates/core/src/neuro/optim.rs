use serde::{Deserialize, Serialize};

use super::params::{Grads, Group, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Learning rate per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub early: f64,
    pub late: f64,
}

impl GroupRates {
    pub fn get(&self, g: Group) -> f64 {
        match g {
            Group::Early => self.early,
            Group::Late => self.late,
        }
    }

    pub fn scaled(&self, f: f64) -> GroupRates {
        GroupRates { early: self.early * f, late: self.late * f }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        AdamW { config, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One decoupled-weight-decay Adam update. A non-finite gradient aborts
    /// before any parameter is touched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, rates: GroupRates) -> Result<()> {
        if grads.0.len() != store.params.len() {
            return Err(Error::ShapeMismatch("gradient list does not match parameters".into()));
        }
        for (p, g) in store.params.iter().zip(&grads.0) {
            if let Some(index) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient { name: p.name.clone(), index });
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in store.params.iter_mut().zip(&grads.0).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let lr = rates.get(p.group);
            let decay = if p.decay { lr * c.weight_decay } else { 0.0 };
            for k in 0..g.len() {
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p.value[k] -= decay * p.value[k] + lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once the monitored metric has
/// failed to improve (relatively, by `threshold`) for more than `patience`
/// consecutive epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub scale: f64,
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    pub fn new(factor: f64, patience: usize) -> Self {
        Plateau { factor, patience, threshold: 1e-4, scale: 1.0, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Feeds one epoch's metric (lower is better); returns true on a reduction.
    pub fn observe(&mut self, metric: f64) -> bool {
        if metric < self.best * (1.0 - self.threshold) {
            self.best = metric;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.scale *= self.factor;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}
