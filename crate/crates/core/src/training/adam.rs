//! Bias-corrected first/second-moment adaptive updates, with moment
//! buffers that serialize into checkpoints for exact resume.

use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Error};
use crate::params::{ParamStore, ParamTensor};
use crate::sdfnet::Checkpoint;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Invalid(format!("{name} {b} must be in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Invalid(format!("eps {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// Moment buffers aligned with the store's canonical tensor order.
#[derive(Clone, Debug)]
pub struct AdamState {
    /// Update count; bias correction uses this.
    pub step: u64,
    names: Vec<String>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> AdamState {
        AdamState {
            step: 0,
            names: store.iter().map(|t| t.name.clone()).collect(),
            m: store.iter().map(|t| vec![0.0; t.values.len()]).collect(),
            v: store.iter().map(|t| vec![0.0; t.values.len()]).collect(),
        }
    }

    /// One update over every tensor. `grads` must be the canonical-order
    /// output of `Binding::gradients`.
    pub fn apply(
        &mut self,
        store: &mut ParamStore,
        grads: &[(String, Vec<f64>)],
        cfg: &AdamConfig,
    ) -> Result<(), Error> {
        if grads.len() != self.names.len() {
            return Err(Error::Invalid(format!(
                "optimizer holds {} tensors but got {} gradients",
                self.names.len(),
                grads.len()
            )));
        }
        for (i, (name, g)) in grads.iter().enumerate() {
            if *name != self.names[i] {
                return Err(Error::Invalid(format!(
                    "gradient order mismatch: expected {}, got {name}",
                    self.names[i]
                )));
            }
            if g.len() != self.m[i].len() {
                return Err(Error::Invalid(format!(
                    "gradient for {name} has {} values, expected {}",
                    g.len(),
                    self.m[i].len()
                )));
            }
        }
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (i, (name, g)) in grads.iter().enumerate() {
            let p = &mut store.get_mut(name).values;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Moment tensors for checkpointing, shapes borrowed from the store.
    pub fn to_tensors(&self, store: &ParamStore) -> Vec<ParamTensor> {
        let mut out = Vec::with_capacity(2 * self.names.len());
        for (i, name) in self.names.iter().enumerate() {
            let shape = store.get(name).shape.clone();
            out.push(ParamTensor {
                name: format!("adam.m.{name}"),
                values: self.m[i].clone(),
                shape: shape.clone(),
            });
            out.push(ParamTensor {
                name: format!("adam.v.{name}"),
                values: self.v[i].clone(),
                shape,
            });
        }
        out
    }

    /// Rebuild from a checkpoint that carries `adam.m.*` / `adam.v.*`
    /// tensors for every parameter in `store`.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        store: &ParamStore,
        step: u64,
    ) -> Result<AdamState, CheckpointError> {
        let mut names = Vec::with_capacity(store.len());
        let mut m = Vec::with_capacity(store.len());
        let mut v = Vec::with_capacity(store.len());
        for t in store.iter() {
            names.push(t.name.clone());
            m.push(ckpt.tensor(&format!("adam.m.{}", t.name))?.values.clone());
            v.push(ckpt.tensor(&format!("adam.v.{}", t.name))?.values.clone());
        }
        Ok(AdamState { step, names, m, v })
    }
}
