//! Leave-one-subject-out evaluation on the synthetic tremor-vs-no-tremor
//! set with the default configuration, printing pooled metrics and the
//! per-joint attention profile.
//!
//! Usage: `cargo run --release --example loocv_synthetic -- [EPOCHS] [JOBS]`

use std::time::Instant;

use tremor::config::RunConfig;
use tremor::evaluation::run_loocv;
use tremor::skeleton::JointId;
use tremor::synthetic::{generate, ingest_videos, SynthSpec};
use tremor::task::Task;

fn main() -> tremor::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    if let Some(e) = args.next() {
        cfg.train.epochs = e.parse().expect("epochs is an integer");
    }
    let jobs = args.next().map_or(1, |j| j.parse().expect("jobs is an integer"));

    let spec = SynthSpec::default();
    let clips = ingest_videos(&generate(&spec)?, cfg.fps, cfg.clip_len)?.clips;
    let start = Instant::now();
    let report = run_loocv(&clips, Task::TypeBinary, &cfg.loocv(jobs))?;
    println!("{} folds in {:.0}s", report.folds.len(), start.elapsed().as_secs_f64());
    for f in &report.folds {
        let calls: Vec<String> = f
            .videos
            .iter()
            .map(|v| format!("{} {}->{}", v.video_id, report.class_names[v.truth], report.class_names[v.predicted]))
            .collect();
        println!("  held out {}: {}", f.held_out_subject, calls.join(", "));
    }
    let m = report.pooled_metrics;
    println!(
        "pooled AC {:.3} SE {:.3} SP {:.3} F1 {:.3}",
        m.accuracy, m.sensitivity, m.specificity, m.f1
    );
    for (j, a) in JointId::ALL.iter().zip(report.attention) {
        println!("  {:<10} {a:.4}", j.name());
    }
    Ok(())
}
