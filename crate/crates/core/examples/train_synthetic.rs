//! Trains the graph network on every clip of a synthetic tremor set, saves
//! a checkpoint, reloads it and classifies each video by majority vote.
//!
//! Usage: `cargo run --release --example train_synthetic -- [EPOCHS]`

use tremor::evaluation::predict_videos;
use tremor::pose::ClipSample;
use tremor::synthetic::{generate, ingest_videos, SynthSpec};
use tremor::task::Task;
use tremor::training::{load_checkpoint, save_checkpoint, train, ArchSpec, Dataset, TrainConfig};

fn main() -> tremor::Result<()> {
    let epochs = std::env::args().nth(1).map_or(100, |s| s.parse().expect("epochs is an integer"));
    let spec = SynthSpec {
        n_subjects: 6,
        ..SynthSpec::default()
    };
    let clips = ingest_videos(&generate(&spec)?, spec.fps, 100)?.clips;
    let data = Dataset::for_task(&clips, Task::TypeBinary);
    let config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let outcome = train(&data, &config, &ArchSpec::default())?;
    for r in outcome.loss_curve.iter().step_by((epochs / 10).max(1)) {
        println!("epoch {:>4}  lr {:.4}  loss {:.5}", r.epoch, r.lr, r.mean_loss);
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    let mut model = outcome.model;
    save_checkpoint(&path, &mut model)?;
    let mut model = load_checkpoint(&path)?;
    let refs: Vec<&ClipSample> = data.clips.iter().collect();
    let (videos, _, _) = predict_videos(&mut model, &refs)?;
    for (video, predicted, _) in videos {
        let truth = data.clips.iter().position(|c| c.video_id == video).map(|i| data.labels[i]);
        let names = model.class_names();
        println!("{video}: predicted {} (truth {})", names[predicted], truth.map_or("?", |t| &names[t]));
    }
    Ok(())
}
