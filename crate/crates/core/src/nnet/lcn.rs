//! Locally connected graph layer: every ordered (target, source) joint pair
//! owns its own weight matrix, scaled by the normalized adjacency entry.
//!
//! `h_i = Σ_{j ∈ N(i)} â_ij · W_ij · x_j`, where `N(i)` are the joints with
//! a nonzero adjacency entry. No activation is applied here.

use rand::Rng;

use super::{gemm, glorot_uniform, missing_cache, node_rows, Layer, Mode, ParamVisitor, Tensor, View};
use crate::error::Result;
use crate::skeleton::{SkeletonGraph, NUM_JOINTS};

pub struct Lcn {
    c_in: usize,
    c_out: usize,
    adjacency: [[f64; NUM_JOINTS]; NUM_JOINTS],
    /// `[target, source, c_out, c_in]`, all 81 pairs.
    weights: Tensor,
    grad: Tensor,
    cache: Option<Tensor>,
}

impl Lcn {
    pub fn new<R: Rng>(graph: &SkeletonGraph, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let mut weights = Tensor::zeros(&[NUM_JOINTS, NUM_JOINTS, c_out, c_in]);
        let block = c_out * c_in;
        for i in 0..NUM_JOINTS {
            for j in 0..NUM_JOINTS {
                if graph.adjacency_hat[i][j] != 0.0 {
                    let w = glorot_uniform(rng, &[c_out, c_in], c_in, c_out);
                    let off = (i * NUM_JOINTS + j) * block;
                    weights.data_mut()[off..off + block].copy_from_slice(w.data());
                }
            }
        }
        Self::with_weights(graph.adjacency_hat, weights).expect("consistent shape")
    }

    pub fn with_weights(adjacency: [[f64; NUM_JOINTS]; NUM_JOINTS], weights: Tensor) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 4 || s[0] != NUM_JOINTS || s[1] != NUM_JOINTS {
            return Err(crate::Error::shape("pairs", NUM_JOINTS * NUM_JOINTS, s.iter().take(2).product()));
        }
        let (c_out, c_in) = (s[2], s[3]);
        Ok(Self {
            c_in,
            c_out,
            adjacency,
            grad: Tensor::zeros(weights.shape()),
            weights,
            cache: None,
        })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weight_gradient(&self) -> &Tensor {
        &self.grad
    }

    fn pair_offset(&self, i: usize, j: usize) -> usize {
        (i * NUM_JOINTS + j) * self.c_out * self.c_in
    }
}

impl Layer for Lcn {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let rows = node_rows(x.shape(), NUM_JOINTS, self.c_in)?;
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.c_out;
        let mut out = Tensor::zeros(&shape);
        for i in 0..NUM_JOINTS {
            for j in 0..NUM_JOINTS {
                let a = self.adjacency[i][j];
                if a == 0.0 {
                    continue;
                }
                gemm(
                    rows,
                    self.c_in,
                    self.c_out,
                    a,
                    x.data(),
                    View::rows(j * self.c_in, NUM_JOINTS * self.c_in),
                    self.weights.data(),
                    View::transposed(self.pair_offset(i, j), self.c_in),
                    1.0,
                    out.data_mut(),
                    View::rows(i * self.c_out, NUM_JOINTS * self.c_out),
                );
            }
        }
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("lcn"))?;
        let rows = node_rows(grad_out.shape(), NUM_JOINTS, self.c_out)?;
        let mut grad_in = Tensor::zeros(x.shape());
        self.grad.fill(0.0);
        let (c_in, c_out) = (self.c_in, self.c_out);
        for i in 0..NUM_JOINTS {
            for j in 0..NUM_JOINTS {
                let a = self.adjacency[i][j];
                if a == 0.0 {
                    continue;
                }
                let off = self.pair_offset(i, j);
                // dW_ij = a · G_i^T X_j
                gemm(
                    c_out,
                    rows,
                    c_in,
                    a,
                    grad_out.data(),
                    View::rows(i * c_out, NUM_JOINTS * c_out).t(),
                    x.data(),
                    View::rows(j * c_in, NUM_JOINTS * c_in),
                    0.0,
                    self.grad.data_mut(),
                    View::rows(off, c_in),
                );
                // dX_j += a · G_i W_ij
                gemm(
                    rows,
                    c_out,
                    c_in,
                    a,
                    grad_out.data(),
                    View::rows(i * c_out, NUM_JOINTS * c_out),
                    self.weights.data(),
                    View::rows(off, c_in),
                    1.0,
                    grad_in.data_mut(),
                    View::rows(j * c_in, NUM_JOINTS * c_in),
                );
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        f("weights", &mut self.weights, &mut self.grad);
    }
}
