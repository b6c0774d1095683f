//! Leave-one-subject-out evaluation: fold construction, clip voting,
//! metrics, and report files.

mod metrics;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, mean_metrics, ConfusionMatrix, Metrics};

use crate::error::{Error, Result};
use crate::nnet::Tensor;
use crate::pcsf::aggregate_attention;
use crate::pose::ClipSample;
use crate::skeleton::{JointId, NUM_JOINTS};
use crate::task::Task;
use crate::training::{batch_tensor, train, ArchSpec, Dataset, TrainConfig, TremorNet};

/// Clip indices on each side of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub held_out_subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per distinct subject, in sorted subject order.
pub fn make_folds(clips: &[ClipSample]) -> Result<Vec<FoldPlan>> {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for c in clips {
        if c.subject_id.is_empty() {
            return Err(Error::Data(format!("clip of video {} has no subject", c.video_id)));
        }
        match owner.insert(&c.video_id, &c.subject_id) {
            Some(prev) if prev != c.subject_id => {
                return Err(Error::Data(format!(
                    "video {} belongs to subjects {prev} and {}",
                    c.video_id, c.subject_id
                )))
            }
            _ => {}
        }
    }
    let subjects: BTreeSet<&str> = clips.iter().map(|c| c.subject_id.as_str()).collect();
    if subjects.len() < 2 {
        return Err(Error::Config(format!(
            "leave-one-subject-out needs at least two subjects, found {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train) = (0..clips.len()).partition(|&i| clips[i].subject_id == s);
            FoldPlan {
                held_out_subject: s.to_string(),
                train,
                test,
            }
        })
        .collect())
}

/// Checks that no held-out subject or video leaks into training.
pub fn assert_fold_isolation(clips: &[ClipSample], fold: &FoldPlan) -> Result<()> {
    let test_videos: BTreeSet<&str> = fold.test.iter().map(|&i| clips[i].video_id.as_str()).collect();
    for &i in &fold.train {
        let c = &clips[i];
        if c.subject_id == fold.held_out_subject || test_videos.contains(c.video_id.as_str()) {
            return Err(Error::State(format!(
                "fold {}: training clip from video {} leaks test data",
                fold.held_out_subject, c.video_id
            )));
        }
    }
    if fold.train.len() + fold.test.len() != clips.len() {
        return Err(Error::State(format!(
            "fold {}: sides do not cover every clip",
            fold.held_out_subject
        )));
    }
    Ok(())
}

/// Majority class; ties go to the largest summed probability, then to the
/// lowest class index.
pub fn vote_video(clip_predictions: &[(usize, Vec<f64>)]) -> Result<usize> {
    if clip_predictions.is_empty() {
        return Err(Error::Argument("cannot vote over zero clips".into()));
    }
    let k = clip_predictions
        .iter()
        .map(|(c, p)| p.len().max(c + 1))
        .max()
        .unwrap_or(0);
    let mut votes = vec![0usize; k];
    let mut mass = vec![0.0; k];
    for (c, probs) in clip_predictions {
        votes[*c] += 1;
        mass.iter_mut().zip(probs).for_each(|(m, p)| *m += p);
    }
    let best_votes = *votes.iter().max().expect("k >= 1");
    let mut winner = None::<usize>;
    for c in (0..k).filter(|&c| votes[c] == best_votes) {
        match winner {
            Some(w) if mass[c] <= mass[w] => {}
            _ => winner = Some(c),
        }
    }
    Ok(winner.expect("at least one class has the top vote count"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoPrediction {
    pub video_id: String,
    pub truth: usize,
    pub predicted: usize,
    pub clip_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub held_out_subject: String,
    pub train_clips: usize,
    pub test_clips: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub videos: Vec<VideoPrediction>,
    attention_sum: Vec<f64>,
    attention_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: Task,
    pub class_names: Vec<String>,
    pub folds: Vec<FoldReport>,
    pub pooled: ConfusionMatrix,
    pub pooled_metrics: Metrics,
    pub mean_metrics: Metrics,
    /// Mean per-joint attention over every test clip and frame.
    pub attention: [f64; NUM_JOINTS],
}

impl EvalReport {
    pub fn videos_evaluated(&self) -> usize {
        self.folds.iter().map(|f| f.videos.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvConfig {
    pub train: TrainConfig,
    pub arch: ArchSpec,
    /// Worker threads for folds; results do not depend on it.
    pub jobs: usize,
}

impl Default for LoocvConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            arch: ArchSpec::default(),
            jobs: 1,
        }
    }
}

/// Per-video predictions of a trained model, with the attention sum over
/// every clip frame.
pub fn predict_videos(
    model: &mut TremorNet,
    clips: &[&ClipSample],
) -> Result<(Vec<(String, usize, Vec<(usize, Vec<f64>)>)>, Vec<f64>, usize)> {
    let mut by_video: BTreeMap<&str, Vec<&ClipSample>> = BTreeMap::new();
    for c in clips {
        by_video.entry(&c.video_id).or_default().push(c);
    }
    let k = model.num_classes();
    let mut attention_sum = vec![0.0; NUM_JOINTS];
    let mut attention_rows = 0;
    let mut out = Vec::new();
    for (video, vclips) in by_video {
        let x = batch_tensor(vclips.iter().copied())?;
        let probs = model.predict_proba(&x)?;
        let att: &Tensor = model.attention().expect("forward sets attention");
        let rows = att.len() / NUM_JOINTS;
        let profile = aggregate_attention(att)?;
        for (s, p) in attention_sum.iter_mut().zip(profile) {
            *s += p * rows as f64;
        }
        attention_rows += rows;
        let preds: Vec<(usize, Vec<f64>)> = probs
            .data()
            .chunks(k)
            .map(|row| {
                let cls = row
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &p)| if p > row[best] { i } else { best });
                (cls, row.to_vec())
            })
            .collect();
        let voted = vote_video(&preds)?;
        out.push((video.to_string(), voted, preds));
    }
    Ok((out, attention_sum, attention_rows))
}

fn run_fold(
    clips: &[ClipSample],
    fold: &FoldPlan,
    index: usize,
    task: Task,
    config: &LoocvConfig,
) -> Result<FoldReport> {
    assert_fold_isolation(clips, fold)?;
    let train_clips: Vec<ClipSample> = fold.train.iter().map(|&i| clips[i].clone()).collect();
    let data = Dataset::for_task(&train_clips, task);
    let train_config = TrainConfig {
        seed: config.train.seed.wrapping_add(index as u64),
        ..config.train.clone()
    };
    log::info!(
        "fold {index} (subject {}): {} train clips, {} test clips",
        fold.held_out_subject,
        data.len(),
        fold.test.len()
    );
    let mut model = train(&data, &train_config, &config.arch)?.model;
    let test: Vec<&ClipSample> = fold.test.iter().map(|&i| &clips[i]).collect();
    let (videos, attention_sum, attention_rows) = predict_videos(&mut model, &test)?;
    let mut confusion = ConfusionMatrix::new(task.num_classes());
    let mut predictions = Vec::new();
    for (video_id, predicted, preds) in videos {
        let labels = &test.iter().find(|c| c.video_id == video_id).expect("video from test").labels;
        let truth = task.label(labels).ok_or_else(|| Error::MissingLabel(video_id.clone()))?;
        confusion.add(truth, predicted);
        predictions.push(VideoPrediction {
            video_id,
            truth,
            predicted,
            clip_classes: preds.into_iter().map(|(c, _)| c).collect(),
        });
    }
    Ok(FoldReport {
        held_out_subject: fold.held_out_subject.clone(),
        train_clips: data.len(),
        test_clips: test.len(),
        metrics: compute_metrics(&confusion, task.positive_class())?,
        confusion,
        videos: predictions,
        attention_sum,
        attention_rows,
    })
}

/// Trains one model per held-out subject and pools the video-level
/// confusion across folds. Clips without a label for `task` are dropped.
pub fn run_loocv(clips: &[ClipSample], task: Task, config: &LoocvConfig) -> Result<EvalReport> {
    config.train.validate()?;
    config.arch.validate()?;
    let clips: Vec<ClipSample> = clips.iter().filter(|c| task.label(&c.labels).is_some()).cloned().collect();
    let folds = make_folds(&clips)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let reports: Vec<FoldReport> = pool.install(|| {
        folds
            .par_iter()
            .enumerate()
            .map(|(i, f)| run_fold(&clips, f, i, task, config))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut pooled = ConfusionMatrix::new(task.num_classes());
    let mut attention_sum = [0.0; NUM_JOINTS];
    let mut rows = 0;
    for r in &reports {
        pooled.merge(&r.confusion)?;
        attention_sum.iter_mut().zip(&r.attention_sum).for_each(|(a, b)| *a += b);
        rows += r.attention_rows;
    }
    let attention = attention_sum.map(|s| s / rows.max(1) as f64);
    let fold_metrics: Vec<Metrics> = reports.iter().map(|r| r.metrics).collect();
    Ok(EvalReport {
        task,
        class_names: task.class_names(),
        pooled_metrics: compute_metrics(&pooled, task.positive_class())?,
        mean_metrics: mean_metrics(&fold_metrics).expect("at least two folds"),
        pooled,
        folds: reports,
        attention,
    })
}

fn metric_row(w: &mut impl Write, fold: &str, task: Task, m: &Metrics) -> std::io::Result<()> {
    writeln!(
        w,
        "{fold},{task},{},{},{},{}",
        m.accuracy, m.sensitivity, m.specificity, m.f1
    )
}

/// `fold,task,AC,SE,SP,F1` with one row per fold, then `pooled` and `mean`.
pub fn write_report_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "fold,task,AC,SE,SP,F1")?;
    for f in &report.folds {
        metric_row(&mut w, &f.held_out_subject, report.task, &f.metrics)?;
    }
    metric_row(&mut w, "pooled", report.task, &report.pooled_metrics)?;
    metric_row(&mut w, "mean", report.task, &report.mean_metrics)?;
    w.flush()?;
    Ok(())
}

/// Rows are true classes, columns predicted classes.
pub fn write_confusion_csv(path: impl AsRef<Path>, cm: &ConfusionMatrix, class_names: &[String]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "true\\predicted,{}", class_names.join(","))?;
    for (name, row) in class_names.iter().zip(cm.rows()) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{name},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_attention_csv(path: impl AsRef<Path>, profile: &[f64; NUM_JOINTS]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "joint_name,score")?;
    for j in JointId::ALL {
        writeln!(w, "{},{}", j.name(), profile[j.index()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_attention_csv(path: impl AsRef<Path>) -> Result<[f64; NUM_JOINTS]> {
    let text = std::fs::read_to_string(path)?;
    let mut profile = [f64::NAN; NUM_JOINTS];
    for (i, line) in text.lines().enumerate().skip(1) {
        let (name, score) = line.split_once(',').ok_or_else(|| Error::Schema {
            record: i,
            message: "expected joint_name,score".into(),
        })?;
        let joint = JointId::from_name(name).ok_or_else(|| Error::Parse {
            record: i,
            message: format!("unknown joint {name:?}"),
        })?;
        profile[joint.index()] = score.parse().map_err(|_| Error::Parse {
            record: i,
            message: format!("bad score {score:?}"),
        })?;
    }
    if profile.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("attention file does not list every joint".into()));
    }
    Ok(profile)
}

/// `video_id,subject,truth,predicted,clip_classes` for every evaluated video.
pub fn write_predictions_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "video_id,subject,truth,predicted,clip_classes")?;
    for f in &report.folds {
        for v in &f.videos {
            let clips: Vec<&str> = v.clip_classes.iter().map(|&c| report.class_names[c].as_str()).collect();
            writeln!(
                w,
                "{},{},{},{},{}",
                v.video_id,
                f.held_out_subject,
                report.class_names[v.truth],
                report.class_names[v.predicted],
                clips.join(" ")
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes report, confusion, attention and prediction CSVs into `dir`.
pub fn write_eval_outputs(dir: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_report_csv(dir.join("report.csv"), report)?;
    write_confusion_csv(dir.join("confusion.csv"), &report.pooled, &report.class_names)?;
    write_attention_csv(dir.join("attention.csv"), &report.attention)?;
    write_predictions_csv(dir.join("predictions.csv"), report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{TremorType, VideoLabels, CHANNELS};
    use proptest::prelude::*;

    fn clip(subject: &str, video: &str, t: TremorType) -> ClipSample {
        ClipSample {
            features: vec![0.0; 2 * NUM_JOINTS * CHANNELS],
            frames: 2,
            labels: VideoLabels {
                tremor_type: t,
                ..VideoLabels::default()
            },
            subject_id: subject.into(),
            video_id: video.into(),
            start_frame: 0,
        }
    }

    #[test]
    fn two_subjects_three_videos_each() {
        let clips: Vec<ClipSample> = (0..2)
            .flat_map(|s| (0..3).map(move |v| clip(&format!("s{s}"), &format!("s{s}v{v}"), TremorType::PT)))
            .collect();
        let folds = make_folds(&clips).unwrap();
        assert_eq!(folds.len(), 2);
        for f in &folds {
            assert_eq!(f.train.len() + f.test.len(), clips.len());
            assert_eq!(f.test.len(), 3);
            assert_fold_isolation(&clips, f).unwrap();
        }
        assert_eq!(folds[0].test, folds[1].train);
    }

    #[test]
    fn single_subject_is_config_error() {
        let clips = vec![clip("a", "v1", TremorType::PT), clip("a", "v2", TremorType::NT)];
        assert!(matches!(make_folds(&clips), Err(Error::Config(_))));
    }

    #[test]
    fn fold_counts_follow_subjects() {
        for n in [39, 55] {
            let clips: Vec<ClipSample> = (0..n)
                .flat_map(|s| (0..2).map(move |v| clip(&format!("s{s:02}"), &format!("s{s:02}v{v}"), TremorType::ET)))
                .collect();
            assert_eq!(make_folds(&clips).unwrap().len(), n);
        }
    }

    #[test]
    fn leaking_plan_is_detected() {
        let clips = vec![clip("a", "v1", TremorType::PT), clip("b", "v2", TremorType::NT)];
        let bad = FoldPlan {
            held_out_subject: "a".into(),
            train: vec![0, 1],
            test: vec![0],
        };
        assert!(matches!(assert_fold_isolation(&clips, &bad), Err(Error::State(_))));
    }

    #[test]
    fn voting_examples() {
        let pt = |p: f64| (0, vec![p, 1.0 - p]);
        let et = |p: f64| (1, vec![1.0 - p, p]);
        assert_eq!(vote_video(&[pt(0.6), pt(0.7), et(0.9)]).unwrap(), 0);
        assert_eq!(vote_video(&[(0, vec![0.9, 0.1]), (1, vec![0.4, 0.6])]).unwrap(), 0);
        assert_eq!(vote_video(&[(1, vec![0.45, 0.55]), (0, vec![0.55, 0.45])]).unwrap(), 0);
        assert_eq!(vote_video(&[et(0.8)]).unwrap(), 1);
        assert!(vote_video(&[]).is_err());
    }

    #[test]
    fn vote_tie_uses_summed_probability() {
        // PT mass 1.3 against ET mass 0.9 among tied classes
        let preds = vec![(0, vec![0.8, 0.2]), (1, vec![0.5, 0.5]), (0, vec![0.5, 0.5]), (1, vec![0.0, 0.2])];
        assert_eq!(vote_video(&preds).unwrap(), 0);
    }

    proptest! {
        #[test]
        fn voting_is_permutation_invariant(raw in proptest::collection::vec((0usize..3, 0.0f64..1.0, 0.0f64..1.0), 1..8), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let preds: Vec<(usize, Vec<f64>)> = raw.iter().map(|&(c, a, b)| {
                let mut p = vec![a, b, 1.0];
                p[c] += 1.0;
                let s: f64 = p.iter().sum();
                (c, p.iter().map(|v| v / s).collect())
            }).collect();
            let mut shuffled = preds.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(vote_video(&preds).unwrap(), vote_video(&shuffled).unwrap());
        }
    }

    #[test]
    fn attention_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p: [f64; NUM_JOINTS] = std::array::from_fn(|i| (i + 1) as f64 / 45.0);
        write_attention_csv(dir.path().join("a.csv"), &p).unwrap();
        assert_eq!(read_attention_csv(dir.path().join("a.csv")).unwrap(), p);
    }
}
