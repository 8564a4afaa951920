//! Adam with per-parameter state keyed by name.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::layers::{Net, Param};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    /// Settings for the adversarial networks.
    pub fn gan() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.9, eps: 1e-8, weight_decay: 1e-6 }
    }

    /// Settings for the autoencoders and the language model.
    pub fn vae() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::vae()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T = f32> {
    pub config: AdamConfig,
    pub state: BTreeMap<String, Moments<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, state: BTreeMap::new() }
    }

    /// One bias-corrected update of `p` from its accumulated gradient.
    pub fn update(&mut self, name: &str, p: &mut Param<T>) -> Result<()> {
        if p.grad.shape() != p.value.shape() {
            return Err(Error::Shape(format!("gradient of `{name}` has shape {:?}", p.grad.shape())));
        }
        let c = self.config;
        let st = self.state.entry(String::from(name)).or_insert_with(|| Moments {
            m: Tensor::zeros(p.value.rows, p.value.cols),
            v: Tensor::zeros(p.value.rows, p.value.cols),
            step: 0,
        });
        if st.m.shape() != p.value.shape() {
            return Err(Error::Shape(format!("optimizer state of `{name}` has shape {:?}", st.m.shape())));
        }
        st.step += 1;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let bc1 = T::from_f64(1.0 - libm::pow(c.beta1, st.step as f64));
        let bc2 = T::from_f64(1.0 - libm::pow(c.beta2, st.step as f64));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);
        let wd = T::from_f64(c.weight_decay);
        for i in 0..p.value.data.len() {
            let g = p.grad.data[i] + wd * p.value.data[i];
            let m = b1 * st.m.data[i] + (T::one() - b1) * g;
            let v = b2 * st.v.data[i] + (T::one() - b2) * g * g;
            st.m.data[i] = m;
            st.v.data[i] = v;
            let mhat = m / bc1;
            let vhat = v / bc2;
            p.value.data[i] = p.value.data[i] - lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }

    /// Updates every parameter of `net` (names prefixed by `prefix`).
    pub fn step(&mut self, net: &mut Net<T>, prefix: &str) -> Result<()> {
        let mut result = Ok(());
        net.visit_params(prefix, &mut |name, p| {
            if result.is_ok() {
                result = self.update(name, p);
            }
        });
        result
    }

    /// Drops the state of every parameter whose name starts with `prefix`.
    pub fn forget(&mut self, prefix: &str) {
        self.state.retain(|k, _| !k.starts_with(prefix));
    }
}
