use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gemm, glorot_uniform, missing_cache, BufferVisitor, Layer, Mode, ParamVisitor, Tensor, View};
use crate::error::{Error, Result};

fn last_axis(t: &Tensor) -> Result<(usize, usize)> {
    let c = *t.shape().last().ok_or(Error::shape("rank", 1, 0))?;
    if c == 0 {
        return Err(Error::shape("channels", 1, 0));
    }
    Ok((t.len() / c, c))
}

/// Per-channel normalization over every axis but the last.
pub struct BatchNorm {
    channels: usize,
    eps: f64,
    momentum: f64,
    gamma: Tensor,
    beta: Tensor,
    grad_gamma: Tensor,
    grad_beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    /// Scalar flag; nonzero once a training batch has been seen.
    tracked: Tensor,
    cache: Option<BnCache>,
}

struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self::with_options(channels, 1e-5, 0.9)
    }

    pub fn with_options(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            channels,
            eps,
            momentum,
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            tracked: Tensor::zeros(&[1]),
            cache: None,
        }
    }

    pub fn gamma_mut(&mut self) -> &mut Tensor {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut Tensor {
        &mut self.beta
    }

    pub fn running_mean(&self) -> &Tensor {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor {
        &self.running_var
    }
}

impl Layer for BatchNorm {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (rows, c) = last_axis(x)?;
        if c != self.channels {
            return Err(Error::shape("channels", self.channels, c));
        }
        let data = x.data();
        let (mean, var) = match mode {
            Mode::Train => {
                if rows == 0 {
                    return Err(Error::shape("rows", 1, 0));
                }
                let mut mean = vec![0.0; c];
                for row in data.chunks_exact(c) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; c];
                for row in data.chunks_exact(c) {
                    for k in 0..c {
                        let d = row[k] - mean[k];
                        var[k] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                let m = self.momentum;
                for k in 0..c {
                    self.running_mean[k] = m * self.running_mean[k] + (1.0 - m) * mean[k];
                    self.running_var[k] = m * self.running_var[k] + (1.0 - m) * var[k];
                }
                self.tracked[0] = 1.0;
                (mean, var)
            }
            Mode::Eval => {
                if self.tracked[0] == 0.0 {
                    return Err(Error::State(
                        "batch norm used for inference before any training batch".into(),
                    ));
                }
                (
                    self.running_mean.data().to_vec(),
                    self.running_var.data().to_vec(),
                )
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        for (r, row) in data.chunks_exact(c).enumerate() {
            for k in 0..c {
                let h = (row[k] - mean[k]) * inv_std[k];
                x_hat[r * c + k] = h;
                out[r * c + k] = self.gamma[k] * h + self.beta[k];
            }
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            mode,
        });
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batch norm"))?;
        let (rows, c) = last_axis(grad_out)?;
        if grad_out.shape() != cache.x_hat.shape() {
            return Err(Error::shape("grad", cache.x_hat.len(), grad_out.len()));
        }
        let g = grad_out.data();
        let xh = cache.x_hat.data();
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for r in 0..rows {
            for k in 0..c {
                sum_g[k] += g[r * c + k];
                sum_gx[k] += g[r * c + k] * xh[r * c + k];
            }
        }
        self.grad_beta.data_mut().copy_from_slice(&sum_g);
        self.grad_gamma.data_mut().copy_from_slice(&sum_gx);

        let mut grad_in = Tensor::zeros(grad_out.shape());
        let n = rows as f64;
        for r in 0..rows {
            for k in 0..c {
                let i = r * c + k;
                let scale = self.gamma[k] * cache.inv_std[k];
                grad_in[i] = match cache.mode {
                    Mode::Train => scale * (g[i] - sum_g[k] / n - xh[i] * sum_gx[k] / n),
                    Mode::Eval => scale * g[i],
                };
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        f("gamma", &mut self.gamma, &mut self.grad_gamma);
        f("beta", &mut self.beta, &mut self.grad_beta);
    }

    fn visit_buffers(&mut self, f: &mut BufferVisitor<'_>) {
        f("running_mean", &mut self.running_mean);
        f("running_var", &mut self.running_var);
        f("tracked", &mut self.tracked);
    }
}

pub struct LeakyRelu {
    slope: f64,
    cache: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, cache: None }
    }
}

impl Layer for LeakyRelu {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        self.cache = Some(x.clone());
        let s = self.slope;
        Ok(x.map(|v| if v > 0.0 { v } else { s * v }))
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("leaky relu"))?;
        if x.shape() != grad_out.shape() {
            return Err(Error::shape("grad", x.len(), grad_out.len()));
        }
        let data = x
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&v, &g)| if v > 0.0 { g } else { self.slope * g })
            .collect();
        Tensor::from_vec(x.shape(), data)
    }
}

/// Inverted dropout: kept units are scaled by 1/(1 - rate) during training so
/// that inference is the identity.
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        }
    }
}

impl Layer for Dropout {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::from_vec(x.shape(), data)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        match &self.mask {
            None => Ok(grad_out.clone()),
            Some(mask) => {
                if mask.len() != grad_out.len() {
                    return Err(Error::shape("grad", mask.len(), grad_out.len()));
                }
                let data = grad_out.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Tensor::from_vec(grad_out.shape(), data)
            }
        }
    }
}

/// Mean over every axis between the first (batch) and the last (channels).
#[derive(Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        if x.rank() < 3 {
            return Err(Error::shape("rank", 3, x.rank()));
        }
        let b = x.dim(0);
        let c = x.dim(x.rank() - 1);
        let pooled = x.len() / (b * c);
        let mut out = Tensor::zeros(&[b, c]);
        for (n, sample) in x.data().chunks_exact(pooled * c).enumerate() {
            for row in sample.chunks_exact(c) {
                for k in 0..c {
                    out[n * c + k] += row[k];
                }
            }
        }
        out.scale(1.0 / pooled as f64);
        self.input_shape = Some(x.shape().to_vec());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.as_ref().ok_or_else(|| missing_cache("pool"))?;
        let b = shape[0];
        let c = shape[shape.len() - 1];
        if grad_out.shape() != [b, c] {
            return Err(Error::shape("grad", b * c, grad_out.len()));
        }
        let mut grad_in = Tensor::zeros(shape);
        let pooled = grad_in.len() / (b * c);
        let inv = 1.0 / pooled as f64;
        for (n, sample) in grad_in.data_mut().chunks_exact_mut(pooled * c).enumerate() {
            for row in sample.chunks_exact_mut(c) {
                for k in 0..c {
                    row[k] = grad_out[n * c + k] * inv;
                }
            }
        }
        Ok(grad_in)
    }
}

/// Affine map `y = x Wᵀ + b` on `[batch, in]` inputs.
pub struct Dense {
    weight: Tensor,
    bias: Tensor,
    grad_weight: Tensor,
    grad_bias: Tensor,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let weight = glorot_uniform(rng, &[c_out, c_in], c_in, c_out);
        Self::with_params(weight, Tensor::zeros(&[c_out])).expect("consistent shapes")
    }

    pub fn with_params(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.dim(0)] {
            return Err(Error::shape("bias", weight.shape().first().copied().unwrap_or(0), bias.len()));
        }
        Ok(Self {
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            cache: None,
        })
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.dim(1), self.weight.dim(0))
    }
}

impl Layer for Dense {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (c_in, c_out) = self.dims();
        if x.rank() != 2 {
            return Err(Error::shape("rank", 2, x.rank()));
        }
        if x.dim(1) != c_in {
            return Err(Error::shape("features", c_in, x.dim(1)));
        }
        let b = x.dim(0);
        let mut out = Tensor::zeros(&[b, c_out]);
        for row in out.data_mut().chunks_exact_mut(c_out) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(
            b,
            c_in,
            c_out,
            1.0,
            x.data(),
            View::rows(0, c_in),
            self.weight.data(),
            View::transposed(0, c_in),
            1.0,
            out.data_mut(),
            View::rows(0, c_out),
        );
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("dense"))?;
        let (c_in, c_out) = self.dims();
        let b = x.dim(0);
        if grad_out.shape() != [b, c_out] {
            return Err(Error::shape("grad", b * c_out, grad_out.len()));
        }
        gemm(
            c_out,
            b,
            c_in,
            1.0,
            grad_out.data(),
            View::transposed(0, c_out),
            x.data(),
            View::rows(0, c_in),
            0.0,
            self.grad_weight.data_mut(),
            View::rows(0, c_in),
        );
        self.grad_bias.fill(0.0);
        for row in grad_out.data().chunks_exact(c_out) {
            for k in 0..c_out {
                self.grad_bias[k] += row[k];
            }
        }
        let mut grad_in = Tensor::zeros(&[b, c_in]);
        gemm(
            b,
            c_out,
            c_in,
            1.0,
            grad_out.data(),
            View::rows(0, c_out),
            self.weight.data(),
            View::rows(0, c_in),
            0.0,
            grad_in.data_mut(),
            View::rows(0, c_in),
        );
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        f("weight", &mut self.weight, &mut self.grad_weight);
        f("bias", &mut self.bias, &mut self.grad_bias);
    }
}

/// Row-wise softmax over the last axis.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = last_axis(logits)?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}
