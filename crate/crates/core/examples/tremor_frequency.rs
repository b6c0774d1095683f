//! Dominant wrist frequency of synthetic tremor videos compared with the
//! frequencies they were generated at.

use tremor::evm::BandSpec;
use tremor::frequency::{frequency_mae, is_reliable, video_frequency, wrist_frequencies};
use tremor::pose::PoseSequence;
use tremor::synthetic::{generate, SynthSpec};

fn main() -> tremor::Result<()> {
    let spec = SynthSpec {
        n_subjects: 8,
        tremor_subjects: Some(6),
        frames_per_video: 300,
        noise_sigma: 0.3,
        ..SynthSpec::default()
    };
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for v in generate(&spec)? {
        let seq = PoseSequence::from_raw(&v.raw, spec.fps, v.labels)?;
        let rows = wrist_frequencies(&seq, BandSpec::TREMOR)?;
        let found = video_frequency(&rows);
        let show = |f: Option<f64>| f.map_or("none".to_string(), |hz| format!("{hz:.2} Hz"));
        println!("{}  generated {:>8}  estimated {:>8}", v.raw.video_id, show(v.tremor_hz), show(found));
        if let (Some(e), Some(t)) = (found, v.tremor_hz) {
            est.push(e);
            truth.push(t);
        }
    }
    let reliable = est.iter().zip(&truth).filter(|(e, t)| is_reliable(**e, **t)).count();
    println!("MAE {:.3} Hz, reliable {reliable}/{}", frequency_mae(&est, &truth)?, est.len());
    Ok(())
}
