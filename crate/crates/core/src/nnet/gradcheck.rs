//! Central finite-difference verification of analytic gradients.
//!
//! The scalar objective is `L = Σ out ⊙ R` for a fixed random projection
//! `R`, so `∂L/∂out = R` is fed to `backward`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, Mode, Tensor};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Upper bound on checked coordinates per tensor.
    pub max_coords: usize,
    pub tolerance: f64,
    /// Smallest denominator of the relative error.
    pub floor: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: 1000,
            tolerance: 1e-4,
            floor: 1e-8,
            seed: 0,
            mode: Mode::Eval,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_with_floor(analytic, numeric, 1e-8)
}

pub fn relative_error_with_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn objective(layer: &mut dyn Layer, x: &Tensor, proj: &Tensor, mode: Mode) -> Result<f64> {
    Ok(layer.forward(x, mode)?.dot(proj))
}

fn coords(rng: &mut ChaCha8Rng, len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut v = sample(rng, len, max).into_vec();
        v.sort_unstable();
        v
    }
}

fn nth_param(layer: &mut dyn Layer, index: usize, f: &mut dyn FnMut(&mut Tensor)) {
    let mut k = 0;
    layer.visit_params(&mut |_, p, _| {
        if k == index {
            f(p);
        }
        k += 1;
    });
}

/// Compares analytic input and parameter gradients of `layer` at `input`
/// against central differences.
pub fn grad_check(
    layer: &mut dyn Layer,
    input: &Tensor,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let out = layer.forward(input, opts.mode)?;
    let proj = Tensor::from_vec(
        out.shape(),
        (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let grad_in = layer.backward(&proj)?;
    let mut analytic: Vec<(String, Tensor)> = Vec::new();
    layer.visit_params(&mut |name, _, g| analytic.push((name.to_string(), g.clone())));

    let h = opts.step;
    let mut entries = Vec::new();

    let mut x = input.clone();
    let mut worst = 0.0f64;
    let picked = coords(&mut rng, x.len(), opts.max_coords);
    for &c in &picked {
        let orig = x[c];
        x[c] = orig + h;
        let plus = objective(layer, &x, &proj, opts.mode)?;
        x[c] = orig - h;
        let minus = objective(layer, &x, &proj, opts.mode)?;
        x[c] = orig;
        worst = worst.max(relative_error_with_floor(grad_in[c], (plus - minus) / (2.0 * h), opts.floor));
    }
    entries.push(GradCheckEntry {
        name: "input".into(),
        checked: picked.len(),
        max_rel_error: worst,
    });

    for (index, (name, grad)) in analytic.iter().enumerate() {
        let picked = coords(&mut rng, grad.len(), opts.max_coords);
        let mut worst = 0.0f64;
        for &c in &picked {
            let mut orig = 0.0;
            nth_param(layer, index, &mut |p| {
                orig = p[c];
                p[c] = orig + h;
            });
            let plus = objective(layer, input, &proj, opts.mode)?;
            nth_param(layer, index, &mut |p| p[c] = orig - h);
            let minus = objective(layer, input, &proj, opts.mode)?;
            nth_param(layer, index, &mut |p| p[c] = orig);
            worst = worst.max(relative_error_with_floor(grad[c], (plus - minus) / (2.0 * h), opts.floor));
        }
        entries.push(GradCheckEntry {
            name: name.clone(),
            checked: picked.len(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport {
        entries,
        tolerance: opts.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{BatchNorm, Dense, Dropout, GlobalAvgPool, LeakyRelu, Lcn, Sequential};
    use crate::skeleton::{build_skeleton, NUM_JOINTS};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn dense_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Dense::new(4, 3, &mut rng);
        let r = grad_check(&mut d, &random(&[5, 4], 2), &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error() < 1e-7, "{r:?}");
    }

    #[test]
    fn lcn_passes() {
        let g = build_skeleton();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = Lcn::new(&g, 3, 4, &mut rng);
        let r = grad_check(&mut l, &random(&[2, 4, NUM_JOINTS, 3], 4), &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error() < 1e-6, "{r:?}");
    }

    #[test]
    fn batch_norm_passes_in_both_modes() {
        let mut bn = BatchNorm::new(3);
        bn.gamma_mut().data_mut().copy_from_slice(&[1.5, -0.7, 0.9]);
        bn.beta_mut().data_mut().copy_from_slice(&[0.1, 0.2, -0.3]);
        let x = random(&[2, 4, NUM_JOINTS, 3], 5);
        let opts = GradCheckOptions {
            mode: Mode::Train,
            ..Default::default()
        };
        let r = grad_check(&mut bn, &x, &opts).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = grad_check(&mut bn, &x, &GradCheckOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn activations_and_pooling_pass() {
        let x = random(&[2, 3, NUM_JOINTS, 2], 6);
        let opts = GradCheckOptions::default();
        assert!(grad_check(&mut LeakyRelu::new(0.2), &x, &opts).unwrap().passed());
        assert!(grad_check(&mut Dropout::new(0.2, 0), &x, &opts).unwrap().passed());
        assert!(grad_check(&mut GlobalAvgPool::new(), &x, &opts).unwrap().passed());
    }

    #[test]
    fn zero_everything_has_zero_error() {
        let w = Tensor::zeros(&[3, 2]);
        let mut d = Dense::with_params(w, Tensor::zeros(&[3])).unwrap();
        let r = grad_check(&mut d, &Tensor::zeros(&[2, 2]), &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error() < 1e-9, "{r:?}");
    }

    #[test]
    fn sampling_caps_checked_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Sequential::new().push("dense", Dense::new(40, 30, &mut rng));
        let opts = GradCheckOptions {
            max_coords: 50,
            ..Default::default()
        };
        let r = grad_check(&mut d, &random(&[2, 40], 2), &opts).unwrap();
        assert!(r.entries.iter().all(|e| e.checked <= 50));
        assert_eq!(r.entries[1].name, "dense.weight");
    }
}
