use crate::error::{Error, Result};
use crate::nnet::{Layer, Tensor};

/// Bias-corrected Adam with per-parameter first and second moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over parameters and gradients given in a fixed order.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("parameters", params.len(), grads.len()));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::shape("parameters", self.m.len(), params.len()));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[k].shape() {
                return Err(Error::shape("parameter", self.m[k].len(), g.len()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Updates every parameter of `layer` from its stored gradients.
    pub fn step(&mut self, layer: &mut dyn Layer, lr: f64) -> Result<()> {
        let mut params = Vec::new();
        let mut grads = Vec::new();
        layer.visit_params(&mut |_, p, g| {
            params.push(std::mem::replace(p, Tensor::zeros(&[0])));
            grads.push(g.clone());
        });
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        let result = self.update(&mut refs, &grad_refs, lr);
        let mut it = params.into_iter();
        layer.visit_params(&mut |_, p, _| *p = it.next().expect("same parameter count"));
        result
    }
}
