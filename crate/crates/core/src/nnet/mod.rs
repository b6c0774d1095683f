//! A small dense-tensor layer stack with hand-written backward passes.
//!
//! Graph activations are laid out as `[..., joints, channels]`; every
//! leading axis (batch, frames) is treated as an independent row.

mod gemm;
pub mod gradcheck;
pub mod suite;
mod layers;
mod lcn;
mod tensor;

use rand::Rng;

use crate::error::{Error, Result};

pub(crate) use gemm::{gemm, View};
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckOptions, GradCheckReport};
pub use layers::{softmax, BatchNorm, Dense, Dropout, GlobalAvgPool, LeakyRelu};
pub use lcn::Lcn;
pub use tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Visitor over `(name, parameter, gradient)` triples.
pub type ParamVisitor<'a> = dyn FnMut(&str, &mut Tensor, &mut Tensor) + 'a;
/// Visitor over non-trainable state such as running statistics.
pub type BufferVisitor<'a> = dyn FnMut(&str, &mut Tensor) + 'a;

pub trait Layer {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;

    /// Gradient of the loss w.r.t. this layer's input. Parameter gradients
    /// are overwritten, not accumulated.
    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor>;

    fn visit_params(&mut self, _f: &mut ParamVisitor<'_>) {}

    fn visit_buffers(&mut self, _f: &mut BufferVisitor<'_>) {}
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<(String, Box<dyn Layer + Send>)>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, name: &str, layer: impl Layer + Send + 'static) -> Self {
        self.layers.push((name.to_string(), Box::new(layer)));
        self
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut cur = x.clone();
        for (_, l) in &mut self.layers {
            cur = l.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mut g = grad_out.clone();
        for (_, l) in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        for (name, l) in &mut self.layers {
            l.visit_params(&mut |n, p, g| f(&format!("{name}.{n}"), p, g));
        }
    }

    fn visit_buffers(&mut self, f: &mut BufferVisitor<'_>) {
        for (name, l) in &mut self.layers {
            l.visit_buffers(&mut |n, b| f(&format!("{name}.{n}"), b));
        }
    }
}

/// Splits a `[..., nodes, channels]` shape into (rows, channels).
pub(crate) fn node_rows(shape: &[usize], nodes: usize, channels: usize) -> Result<usize> {
    if shape.len() < 2 {
        return Err(Error::shape("rank", 2, shape.len()));
    }
    let n = shape.len();
    if shape[n - 2] != nodes {
        return Err(Error::shape("joints", nodes, shape[n - 2]));
    }
    if shape[n - 1] != channels {
        return Err(Error::shape("channels", channels, shape[n - 1]));
    }
    Ok(shape[..n - 2].iter().product())
}

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches length")
}

pub(crate) fn missing_cache(layer: &str) -> Error {
    Error::State(format!("{layer}: backward called before forward"))
}
