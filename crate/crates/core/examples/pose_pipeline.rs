//! Keypoint ingestion end to end: synthetic COCO keypoints and labels are
//! written to disk, parsed, reduced to the upper body, normalized, sliced
//! into clips and stored in the binary clips format.

use tremor::pose::{ingest, load_keypoint_file, load_labels, read_clips, write_clips};
use tremor::skeleton::JointId;
use tremor::synthetic::{generate, write_dataset, SynthSpec};

fn main() -> tremor::Result<()> {
    let dir = tempfile::tempdir()?;
    let spec = SynthSpec {
        n_subjects: 4,
        frames_per_video: 250,
        ..SynthSpec::default()
    };
    write_dataset(dir.path(), &generate(&spec)?)?;

    let raws = load_keypoint_file(dir.path().join("keypoints.json"))?;
    let labels = load_labels(dir.path().join("labels.csv"))?;
    let summary = ingest(&raws, &labels, spec.fps, 100)?;
    println!(
        "{} videos from {} subjects -> {} clips of 100 frames ({} frames left over)",
        summary.videos,
        summary.subjects,
        summary.clips.len(),
        summary.dropped_frames
    );

    let clip = &summary.clips[0];
    println!("first clip {} frame 0 (origin at the mean of neck and hips):", clip.video_id);
    for j in JointId::ALL {
        println!(
            "  {:<10} x {:+.4} y {:+.4} c {:.2}",
            j.name(),
            clip.value(0, j, 0),
            clip.value(0, j, 1),
            clip.value(0, j, 2)
        );
    }

    let path = dir.path().join("clips.bin");
    write_clips(&path, &summary.clips)?;
    let back = read_clips(&path)?;
    println!("clips file round trip exact: {}", back == summary.clips);
    Ok(())
}
