//! Finite-difference checks over every layer, both loss heads and a
//! toy-sized composed network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, softmax, BatchNorm, Dense, Dropout, GlobalAvgPool, GradCheckOptions, Layer, LeakyRelu, Lcn, Mode, Tensor};
use crate::error::{Error, Result};
use crate::pcsf::{Pcsf, PcsfSpec};
use crate::skeleton::{build_skeleton, NUM_JOINTS};
use crate::training::{cross_entropy, focal_loss, ArchSpec, TremorNet};

/// Tolerance for layers whose output is linear in inputs and parameters.
pub const LINEAR_TOLERANCE: f64 = 1e-6;
pub const NONLINEAR_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub max_rel_error: f64,
    /// Tensor holding the largest error: `input` or a parameter name.
    pub worst: String,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Clone, Copy)]
enum Head {
    CrossEntropy,
    Focal,
}

/// Softmax followed by a loss, exposed as a layer with a scalar output.
struct LossHead {
    head: Head,
    labels: Vec<usize>,
    grad: Option<Tensor>,
}

impl Layer for LossHead {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let probs = softmax(x)?;
        let (loss, grad) = match self.head {
            Head::CrossEntropy => cross_entropy(&probs, &self.labels)?,
            Head::Focal => {
                let alpha: Vec<f64> = (0..x.dim(1)).map(|c| 0.5 + 0.25 * c as f64).collect();
                focal_loss(&probs, &self.labels, 2.0, &alpha)?
            }
        };
        self.grad = Some(grad);
        Tensor::from_vec(&[1], vec![loss])
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mut g = self
            .grad
            .clone()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        g.scale(grad_out[0]);
        Ok(g)
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("shape matches length")
}

fn check(
    name: &'static str,
    layer: &mut dyn Layer,
    input: &Tensor,
    mode: Mode,
    tolerance: f64,
    seed: u64,
) -> Result<SuiteResult> {
    let defaults = GradCheckOptions::default();
    // Central differences carry no truncation error on linear maps, so a
    // wide step only shrinks rounding noise.
    let step = if tolerance <= LINEAR_TOLERANCE { 1e-3 } else { defaults.step };
    check_with_step(name, layer, input, mode, tolerance, seed, step, defaults.floor)
}

fn check_with_step(
    name: &'static str,
    layer: &mut dyn Layer,
    input: &Tensor,
    mode: Mode,
    tolerance: f64,
    seed: u64,
    step: f64,
    floor: f64,
) -> Result<SuiteResult> {
    let opts = GradCheckOptions {
        mode,
        step,
        floor,
        tolerance,
        seed,
        ..GradCheckOptions::default()
    };
    let report = grad_check(layer, input, &opts)?;
    let worst = report
        .entries
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .map(|e| e.name.clone())
        .unwrap_or_default();
    Ok(SuiteResult {
        name,
        max_rel_error: report.max_rel_error(),
        worst,
        tolerance,
    })
}

/// Runs the full suite; each entry carries its own tolerance.
pub fn gradient_suite(seed: u64) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = build_skeleton();
    let mut out = Vec::new();

    let x = random(&mut rng, &[2, 3, NUM_JOINTS, 3]);
    let mut lcn = Lcn::new(&graph, 3, 4, &mut rng);
    out.push(check("lcn", &mut lcn, &x, Mode::Eval, LINEAR_TOLERANCE, seed)?);

    let x = random(&mut rng, &[2, 3, NUM_JOINTS, 4]);
    let mut bn = BatchNorm::new(4);
    bn.gamma_mut().data_mut().iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
    bn.beta_mut().data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    out.push(check("batch_norm", &mut bn, &x, Mode::Train, NONLINEAR_TOLERANCE, seed)?);

    out.push(check("leaky_relu", &mut LeakyRelu::new(0.2), &x, Mode::Eval, NONLINEAR_TOLERANCE, seed)?);
    out.push(check("dropout_eval", &mut Dropout::new(0.2, seed), &x, Mode::Eval, LINEAR_TOLERANCE, seed)?);

    let x = random(&mut rng, &[2, 3, NUM_JOINTS, 8]);
    let spec = PcsfSpec::new(&graph, 8, 5, 0.5, 0.25)?;
    let mut pcsf = Pcsf::new(spec, &mut rng);
    out.push(check("pcsf", &mut pcsf, &x, Mode::Eval, LINEAR_TOLERANCE, seed)?);

    out.push(check("global_avg_pool", &mut GlobalAvgPool::new(), &x, Mode::Eval, LINEAR_TOLERANCE, seed)?);

    let x = random(&mut rng, &[4, 6]);
    let mut dense = Dense::new(6, 3, &mut rng);
    out.push(check("dense", &mut dense, &x, Mode::Eval, LINEAR_TOLERANCE, seed)?);

    let logits = random(&mut rng, &[5, 3]);
    let labels = vec![0, 1, 2, 1, 0];
    for (name, head) in [("softmax_cross_entropy", Head::CrossEntropy), ("softmax_focal", Head::Focal)] {
        let mut layer = LossHead {
            head,
            labels: labels.clone(),
            grad: None,
        };
        out.push(check(name, &mut layer, &logits, Mode::Eval, NONLINEAR_TOLERANCE, seed)?);
    }

    let arch = ArchSpec {
        block1_channels: 4,
        block2_channels: 8,
        pcsf_channels: 5,
        ..ArchSpec::default()
    };
    let mut net = TremorNet::new(arch, vec!["a".into(), "b".into()], seed)?;
    let x = random(&mut rng, &[2, 4, NUM_JOINTS, 3]);
    net.forward(&x, Mode::Train)?;
    // A smaller step keeps probes clear of activation kinks; the raised floor
    // stops near-zero gradients from turning rounding noise into large ratios.
    out.push(check_with_step("network", &mut net, &x, Mode::Eval, NONLINEAR_TOLERANCE, seed, 1e-6, 1e-6)?);

    Ok(out)
}
