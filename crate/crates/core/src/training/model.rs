use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{
    softmax, BatchNorm, BufferVisitor, Dense, Dropout, GlobalAvgPool, Layer, Lcn, LeakyRelu, Mode,
    ParamVisitor, Tensor,
};
use crate::pcsf::{Pcsf, PcsfSpec};
use crate::pose::CHANNELS;
use crate::skeleton::{build_skeleton, NUM_JOINTS};

/// Network hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSpec {
    pub block1_channels: usize,
    pub block2_channels: usize,
    pub pcsf_channels: usize,
    pub p: f64,
    pub q: f64,
    pub leaky_slope: f64,
    pub dropout: f64,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            block1_channels: 64,
            block2_channels: 128,
            pcsf_channels: 128,
            p: 0.5,
            q: 0.25,
            leaky_slope: 0.2,
            dropout: 0.2,
        }
    }
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.block1_channels == 0 || self.block2_channels == 0 || self.pcsf_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if !(self.leaky_slope >= 0.0) {
            return Err(Error::Config("LeakyReLU slope must be >= 0".into()));
        }
        PcsfSpec::new(&build_skeleton(), self.block2_channels, self.pcsf_channels, self.p, self.q)?;
        Ok(())
    }
}

struct Block {
    lcn: Lcn,
    bn: BatchNorm,
    act: LeakyRelu,
    drop: Dropout,
}

impl Block {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.lcn.forward(x, mode)?;
        let h = self.bn.forward(&h, mode)?;
        let h = self.act.forward(&h, mode)?;
        self.drop.forward(&h, mode)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let g = self.drop.backward(g)?;
        let g = self.act.backward(&g)?;
        let g = self.bn.backward(&g)?;
        self.lcn.backward(&g)
    }
}

/// Two graph blocks, channel-squeezing fusion, pooling and a linear
/// classifier. `forward` maps `[B, T, 9, 3]` clips to `[B, K]` logits.
pub struct TremorNet {
    arch: ArchSpec,
    class_names: Vec<String>,
    block1: Block,
    block2: Block,
    pcsf: Pcsf,
    pool: GlobalAvgPool,
    head: Dense,
}

impl TremorNet {
    pub fn new(arch: ArchSpec, class_names: Vec<String>, seed: u64) -> Result<Self> {
        arch.validate()?;
        if class_names.len() < 2 {
            return Err(Error::Config("a classifier needs at least two classes".into()));
        }
        let graph = build_skeleton();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = PcsfSpec::new(&graph, arch.block2_channels, arch.pcsf_channels, arch.p, arch.q)?;
        let block = |c_in: usize, c_out: usize, rng: &mut ChaCha8Rng, drop_seed: u64| Block {
            lcn: Lcn::new(&graph, c_in, c_out, rng),
            bn: BatchNorm::new(c_out),
            act: LeakyRelu::new(arch.leaky_slope),
            drop: Dropout::new(arch.dropout, drop_seed),
        };
        let block1 = block(CHANNELS, arch.block1_channels, &mut rng, seed.wrapping_add(1));
        let block2 = block(arch.block1_channels, arch.block2_channels, &mut rng, seed.wrapping_add(2));
        let pcsf = Pcsf::new(spec, &mut rng);
        let head = Dense::new(arch.pcsf_channels, class_names.len(), &mut rng);
        Ok(Self {
            arch,
            class_names,
            block1,
            block2,
            pcsf,
            pool: GlobalAvgPool::new(),
            head,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn pcsf_spec(&self) -> &PcsfSpec {
        self.pcsf.spec()
    }

    /// Per-frame joint attention `[B, T, 9]` from the last forward pass.
    pub fn attention(&self) -> Option<&Tensor> {
        self.pcsf.attention()
    }

    /// Class probabilities `[B, K]` in inference mode.
    pub fn predict_proba(&mut self, x: &Tensor) -> Result<Tensor> {
        softmax(&self.forward(x, Mode::Eval)?)
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p, _| n += p.len());
        n
    }
}

impl Layer for TremorNet {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.rank() != 4 {
            return Err(Error::shape("rank", 4, x.rank()));
        }
        if x.dim(2) != NUM_JOINTS {
            return Err(Error::shape("joints", NUM_JOINTS, x.dim(2)));
        }
        let h = self.block1.forward(x, mode)?;
        let h = self.block2.forward(&h, mode)?;
        let h = self.pcsf.forward(&h, mode)?;
        let h = self.pool.forward(&h, mode)?;
        self.head.forward(&h, mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.head.backward(grad)?;
        let g = self.pool.backward(&g)?;
        let g = self.pcsf.backward(&g)?;
        let g = self.block2.backward(&g)?;
        self.block1.backward(&g)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        for (name, b) in [("block1", &mut self.block1), ("block2", &mut self.block2)] {
            b.lcn.visit_params(&mut |n, p, g| f(&format!("{name}.lcn.{n}"), p, g));
            b.bn.visit_params(&mut |n, p, g| f(&format!("{name}.bn.{n}"), p, g));
        }
        self.pcsf.visit_params(&mut |n, p, g| f(&format!("pcsf.{n}"), p, g));
        self.head.visit_params(&mut |n, p, g| f(&format!("head.{n}"), p, g));
    }

    fn visit_buffers(&mut self, f: &mut BufferVisitor<'_>) {
        for (name, b) in [("block1", &mut self.block1), ("block2", &mut self.block2)] {
            b.bn.visit_buffers(&mut |n, t| f(&format!("{name}.bn.{n}"), t));
        }
    }
}
