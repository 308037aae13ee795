//! Adam with bias-corrected moment estimates.

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: AdamState::default(),
        }
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }

    /// Applies one update. The moment buffers are sized on the first call;
    /// every later call must present the same parameter layout. A non-finite
    /// gradient aborts the step before anything is modified.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("adam", format!("{} params, {} grads", params.len(), grads.len())));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape("adam", format!("param {i}: {} values, {} grads", p.len(), g.len())));
            }
            if !g.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteGradient { name: format!("#{i}") });
            }
        }
        if self.state.t == 0 && self.state.m.is_empty() {
            self.state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.state.v = self.state.m.clone();
        } else if self.state.m.len() != params.len() || self.state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::shape("adam", "parameter layout changed between steps"));
        }

        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.state.t += 1;
        let t = self.state.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.state.m).zip(&mut self.state.v) {
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    /// Steps the given parameters of a store; `grads[i]` belongs to `ids[i]`.
    pub fn step_store(&mut self, store: &mut ParamStore, ids: &[ParamId], grads: &[Vec<f64>]) -> Result<()> {
        if let Some((id, _)) = ids
            .iter()
            .zip(grads)
            .find(|(_, g)| !g.iter().all(|x| x.is_finite()))
        {
            return Err(Error::NonFiniteGradient {
                name: store.get(*id).name.clone(),
            });
        }
        let mut values: Vec<Vec<f64>> = ids.iter().map(|&id| store.value(id).data().to_vec()).collect();
        {
            let mut views: Vec<&mut [f64]> = values.iter_mut().map(|v| v.as_mut_slice()).collect();
            let grad_views: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            self.step(&mut views, &grad_views)?;
        }
        for (&id, v) in ids.iter().zip(values) {
            store.value_mut(id).data_mut().copy_from_slice(&v);
        }
        Ok(())
    }
}
