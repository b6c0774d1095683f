//! Losses, optimizer, network assembly and the seeded training loop.

mod adam;
mod checkpoint;
mod loss;
mod model;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use loss::{cross_entropy, focal_loss, inverse_frequency_alpha};
pub use model::{ArchSpec, TremorNet};

use crate::error::{Error, Result};
use crate::nnet::{softmax, Layer, Mode, Tensor};
use crate::pose::{ClipSample, CHANNELS};
use crate::skeleton::NUM_JOINTS;
use crate::task::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Cross-entropy for two classes, focal loss otherwise.
    Auto,
    CrossEntropy,
    Focal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub focal_gamma: f64,
    /// Per-class focal weights; inverse class frequency when absent.
    pub focal_alpha: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            lr_decay: 0.1,
            decay_every: 200,
            batch_size: 8,
            epochs: 500,
            loss: LossKind::Auto,
            focal_gamma: 2.0,
            focal_alpha: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr decay must be in (0, 1], got {}", self.lr_decay)));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay interval must be at least one epoch".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(Error::Config("focal gamma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// Clips with task class indices.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub clips: Vec<ClipSample>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Keeps the clips that carry a label for `task`.
    pub fn for_task(clips: &[ClipSample], task: Task) -> Self {
        let (clips, labels) = clips
            .iter()
            .filter_map(|c| task.label(&c.labels).map(|l| (c.clone(), l)))
            .unzip();
        Self {
            clips,
            labels,
            class_names: task.class_names(),
        }
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Stacks clips into a `[B, T, 9, 3]` tensor.
pub fn batch_tensor<'a>(clips: impl IntoIterator<Item = &'a ClipSample>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut frames = None;
    let mut b = 0;
    for clip in clips {
        match frames {
            None => frames = Some(clip.frames),
            Some(t) if t != clip.frames => return Err(Error::shape("frames", t, clip.frames)),
            _ => {}
        }
        if clip.features.len() != clip.frames * NUM_JOINTS * CHANNELS {
            return Err(Error::shape(
                "features",
                clip.frames * NUM_JOINTS * CHANNELS,
                clip.features.len(),
            ));
        }
        data.extend_from_slice(&clip.features);
        b += 1;
    }
    let t = frames.ok_or_else(|| Error::Argument("empty batch".into()))?;
    Tensor::from_vec(&[b, t, NUM_JOINTS, CHANNELS], data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

pub struct TrainOutcome {
    pub model: TremorNet,
    pub loss_curve: Vec<EpochRecord>,
}

enum Objective {
    CrossEntropy,
    Focal { gamma: f64, alpha: Vec<f64> },
}

impl Objective {
    fn eval(&self, probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
        match self {
            Objective::CrossEntropy => cross_entropy(probs, labels),
            Objective::Focal { gamma, alpha } => focal_loss(probs, labels, *gamma, alpha),
        }
    }
}

pub fn train(data: &Dataset, config: &TrainConfig, arch: &ArchSpec) -> Result<TrainOutcome> {
    train_with_progress(data, config, arch, |_| {})
}

/// As [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    data: &Dataset,
    config: &TrainConfig,
    arch: &ArchSpec,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let k = data.num_classes();
    let counts = data.class_counts();
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!(
            "class {} has no training clips",
            data.class_names[missing]
        )));
    }
    let objective = match (config.loss, k) {
        (LossKind::CrossEntropy, _) | (LossKind::Auto, 2) => Objective::CrossEntropy,
        _ => Objective::Focal {
            gamma: config.focal_gamma,
            alpha: match &config.focal_alpha {
                Some(a) if a.len() != k => return Err(Error::shape("classes", k, a.len())),
                Some(a) => a.clone(),
                None => inverse_frequency_alpha(&data.labels, k),
            },
        },
    };

    let mut model = TremorNet::new(arch.clone(), data.class_names.clone(), config.seed)?;
    let mut adam = Adam::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = batch_tensor(chunk.iter().map(|&i| &data.clips[i]))?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let logits = model.forward(&x, Mode::Train)?;
            let probs = softmax(&logits)?;
            let (loss, grad) = objective.eval(&probs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Data(format!("non-finite loss at epoch {epoch}")));
            }
            model.backward(&grad)?;
            adam.step(&mut model, lr)?;
            total += loss * chunk.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            lr,
            mean_loss: total / data.len() as f64,
        };
        progress(&record);
        curve.push(record);
    }
    Ok(TrainOutcome {
        model,
        loss_curve: curve,
    })
}

pub fn write_loss_curve(path: impl AsRef<Path>, curve: &[EpochRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,lr,mean_loss")?;
    for r in curve {
        writeln!(w, "{},{},{}", r.epoch, r.lr, r.mean_loss)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{TremorType, VideoLabels};
    use rand::Rng;

    fn clip(label: TremorType, seed: u64, frames: usize) -> ClipSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = if label == TremorType::PT { 1.0 } else { -1.0 };
        ClipSample {
            features: (0..frames * NUM_JOINTS * CHANNELS)
                .map(|_| shift + rng.gen_range(-0.5..0.5))
                .collect(),
            frames,
            labels: VideoLabels {
                tremor_type: label,
                ..VideoLabels::default()
            },
            subject_id: format!("s{seed}"),
            video_id: format!("v{seed}"),
            start_frame: 0,
        }
    }

    fn toy_arch() -> ArchSpec {
        ArchSpec {
            block1_channels: 4,
            block2_channels: 8,
            pcsf_channels: 4,
            ..ArchSpec::default()
        }
    }

    fn toy_data() -> Dataset {
        let clips: Vec<ClipSample> = (0..6)
            .map(|i| clip(if i % 2 == 0 { TremorType::PT } else { TremorType::NT }, i, 5))
            .collect();
        Dataset::for_task(&clips, Task::TypeBinary)
    }

    #[test]
    fn schedule_decays_stepwise() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 0.01);
        assert_eq!(c.lr_at(199), 0.01);
        assert!((c.lr_at(200) - 0.001).abs() < 1e-18);
        assert!((c.lr_at(499) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for c in [
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { lr_decay: 0.0, ..Default::default() },
            TrainConfig { lr_decay: 1.5, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let config = TrainConfig {
            epochs: 30,
            batch_size: 4,
            ..Default::default()
        };
        let a = train(&toy_data(), &config, &toy_arch()).unwrap();
        let b = train(&toy_data(), &config, &toy_arch()).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert!(a.loss_curve.iter().all(|r| r.mean_loss.is_finite()));
        assert!(a.loss_curve.last().unwrap().mean_loss < a.loss_curve[0].mean_loss);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let config = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let mut out = train(&toy_data(), &config, &toy_arch()).unwrap();
        assert!(out.loss_curve.is_empty());
        let mut fresh = TremorNet::new(toy_arch(), Task::TypeBinary.class_names(), 0).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        out.model.visit_params(&mut |_, p, _| a.extend_from_slice(p.data()));
        fresh.visit_params(&mut |_, p, _| b.extend_from_slice(p.data()));
        assert_eq!(a, b);
    }

    #[test]
    fn missing_class_is_named() {
        let clips: Vec<ClipSample> = (0..3).map(|i| clip(TremorType::NT, i, 5)).collect();
        let data = Dataset::for_task(&clips, Task::TypeBinary);
        match train(&data, &TrainConfig::default(), &toy_arch()) {
            Err(Error::Config(msg)) => assert!(msg.contains("PT"), "{msg}"),
            other => panic!("{:?}", other.err()),
        }
    }

    #[test]
    fn multiclass_uses_focal_loss() {
        let clips: Vec<ClipSample> = [TremorType::PT, TremorType::ET, TremorType::DT, TremorType::FT, TremorType::NT]
            .iter()
            .enumerate()
            .map(|(i, &t)| clip(t, i as u64, 4))
            .collect();
        let data = Dataset::for_task(&clips, Task::TypeMulti);
        let config = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let out = train(&data, &config, &toy_arch()).unwrap();
        assert_eq!(out.model.num_classes(), 5);
        assert_eq!(out.loss_curve.len(), 3);
    }

    #[test]
    fn mixed_clip_lengths_are_shape_errors() {
        let clips = [clip(TremorType::PT, 0, 4), clip(TremorType::NT, 1, 5)];
        assert!(matches!(batch_tensor(clips.iter()), Err(Error::Shape { axis: "frames", .. })));
    }
}
