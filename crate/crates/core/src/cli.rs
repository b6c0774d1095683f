//! The `tremor` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error (bad
//! argument, configuration or sampling rate), 3 data error. Failures also
//! print one JSON object on standard error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, CONFIG_FILE};
use crate::error::{Error, Result};
use crate::evaluation::{predict_videos, read_attention_csv, run_loocv, write_attention_csv, write_eval_outputs};
use crate::evm::{check_nyquist, magnify, read_tremvid, write_tremvid, BandSpec};
use crate::frequency::{is_reliable, video_frequency, wrist_frequencies, write_freq_rows, FreqRow};
use crate::nnet::suite::gradient_suite;
use crate::pose::{ingest, load_keypoint_file, load_labels, read_clips, write_clips, ClipSample, PoseSequence, VideoLabels};
use crate::skeleton::JointId;
use crate::synthetic::{generate, write_dataset, SynthSpec};
use crate::task::Task;
use crate::training::{load_checkpoint, save_checkpoint, train, write_loss_curve, Dataset, LossKind};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nformats: checkpoint TREMCKPT v1, clips TREMCLIP v1, video TREMVID0, ",
    "keypoints JSON/CSV, labels CSV, config TOML"
);

#[derive(Debug, Parser)]
#[command(name = "tremor", version = VERSION, about = "Pose-based tremor analysis")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a frame rate can resolve a frequency.
    CheckNyquist {
        #[arg(long)]
        fps: f64,
        #[arg(long)]
        fmax: f64,
    },
    /// Amplify band-limited motion in a TREMVID0 video.
    Magnify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        low: Option<f64>,
        #[arg(long)]
        high: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Turn keypoints and labels into a binary clips file.
    Ingest {
        #[arg(long)]
        keypoints: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        clip_len: Option<usize>,
    },
    /// Write a synthetic keypoint dataset.
    Synth {
        /// TOML generator spec; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one model on every clip.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Leave-one-subject-out evaluation.
    Loocv {
        #[command(flatten)]
        run: RunArgs,
        /// Folds trained in parallel; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Classify the videos of a keypoint file with a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        clip_len: Option<usize>,
    },
    /// Print the per-joint attention profile of a run directory.
    Attention {
        #[arg(long)]
        run: PathBuf,
    },
    /// Dominant wrist frequencies, with MAE against references.
    Freq {
        #[arg(long)]
        keypoints: Option<PathBuf>,
        /// Band as `LOW:HIGH` in Hz.
        #[arg(long)]
        band: Option<String>,
        /// CSV of `video_id,reference_hz`.
        #[arg(long)]
        refs: Option<PathBuf>,
        #[arg(long)]
        fps: Option<f64>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and loss.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub clips: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    /// Parent directory; outputs go to `<out>/<config hash>/`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub focal_gamma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pcsf_channels: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        set(&mut cfg.inputs.clips, self.clips.clone().map(Some));
        set(&mut cfg.task, self.task);
        set(&mut cfg.train.epochs, self.epochs);
        set(&mut cfg.train.lr, self.lr);
        set(&mut cfg.train.lr_decay, self.lr_decay);
        set(&mut cfg.train.decay_every, self.decay_every);
        set(&mut cfg.train.batch_size, self.batch_size);
        set(&mut cfg.train.focal_gamma, self.focal_gamma);
        set(&mut cfg.train.seed, self.seed);
        set(&mut cfg.arch.pcsf_channels, self.pcsf_channels);
        set(&mut cfg.arch.p, self.p);
        set(&mut cfg.arch.q, self.q);
        if let Some(loss) = &self.loss {
            cfg.train.loss = match loss.as_str() {
                "auto" => LossKind::Auto,
                "cross-entropy" => LossKind::CrossEntropy,
                "focal" => LossKind::Focal,
                other => {
                    return Err(Error::Argument(format!(
                        "unknown loss {other:?}; expected auto, cross-entropy or focal"
                    )))
                }
            };
        }
        Ok(())
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::Config(_) | Error::Nyquist(_) | Error::Shape { .. } | Error::State(_) => 2,
        _ => 3,
    }
}

fn error_line(kind: &str, message: &str, code: i32) -> String {
    serde_json::json!({ "error": kind, "message": message, "exit_code": code }).to_string()
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("{}", error_line("usage", &first, 1));
            return 1;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            eprintln!("{}", error_line(e.kind(), &e.to_string(), code));
            code
        }
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn required(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Config(format!("no {what} input given by flag or config")))
}

pub fn parse_band(text: &str) -> Result<BandSpec> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| Error::Argument(format!("band {text:?} is not LOW:HIGH")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Argument(format!("band bound {s:?} is not a number")))
    };
    BandSpec::new(parse(lo)?, parse(hi)?)
}

/// Runs a parsed command; `Ok` carries the exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let mut cfg = base_config(cli)?;
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::CheckNyquist { fps, fmax } => {
            let verdict = check_nyquist(*fps, *fmax)?;
            writeln!(out, "{}", if verdict.valid { "valid" } else { "invalid" })?;
            if !verdict.valid {
                return Err(Error::Nyquist(verdict));
            }
        }
        Command::Magnify {
            input,
            output,
            low,
            high,
            alpha,
            levels,
        } => {
            set(&mut cfg.band.f_lo, *low);
            set(&mut cfg.band.f_hi, *high);
            set(&mut cfg.magnify.alpha, *alpha);
            set(&mut cfg.magnify.pyramid_levels, *levels);
            cfg.band.validate()?;
            let seq = read_tremvid(input)?;
            let verdict = check_nyquist(seq.fps, cfg.band.f_hi)?;
            if !verdict.valid {
                return Err(Error::Nyquist(verdict));
            }
            write_tremvid(output, &magnify(&seq, cfg.band, cfg.magnify)?)?;
            writeln!(out, "{} frames {}x{} written to {}", seq.num_frames(), seq.width, seq.height, output.display())?;
        }
        Command::Ingest {
            keypoints,
            labels,
            out: dest,
            fps,
            clip_len,
        } => {
            set(&mut cfg.inputs.keypoints, keypoints.clone().map(Some));
            set(&mut cfg.inputs.labels, labels.clone().map(Some));
            set(&mut cfg.fps, *fps);
            set(&mut cfg.clip_len, *clip_len);
            cfg.validate()?;
            let raws = load_keypoint_file(required(&cfg.inputs.keypoints, "keypoints")?)?;
            let labels = load_labels(required(&cfg.inputs.labels, "labels")?)?;
            let summary = ingest(&raws, &labels, cfg.fps, cfg.clip_len)?;
            write_clips(dest, &summary.clips)?;
            writeln!(
                out,
                "clips {} videos {} subjects {} dropped_frames {}",
                summary.clips.len(),
                summary.videos,
                summary.subjects,
                summary.dropped_frames
            )?;
        }
        Command::Synth { spec, out_dir } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    toml::from_str::<SynthSpec>(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => SynthSpec::default(),
            };
            let videos = generate(&spec)?;
            write_dataset(out_dir, &videos)?;
            let text = toml::to_string_pretty(&spec).map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(out_dir.join("synth.toml"), text)?;
            let tremor = videos.iter().filter(|v| v.tremor_hz.is_some()).count();
            writeln!(
                out,
                "videos {} subjects {} tremor_videos {} written to {}",
                videos.len(),
                spec.n_subjects,
                tremor,
                out_dir.display()
            )?;
        }
        Command::Train { run } => {
            run.apply(&mut cfg)?;
            cfg.validate()?;
            let dir = prepare_run_dir(&run.out, &cfg)?;
            let clips = read_clips(required(&cfg.inputs.clips, "clips")?)?;
            let data = Dataset::for_task(&clips, cfg.task);
            let outcome = train(&data, &cfg.train, &cfg.arch)?;
            let mut model = outcome.model;
            save_checkpoint(dir.join(CHECKPOINT_FILE), &mut model)?;
            write_loss_curve(dir.join(LOSS_FILE), &outcome.loss_curve)?;
            let refs: Vec<&ClipSample> = data.clips.iter().collect();
            let (_, sum, rows) = predict_videos(&mut model, &refs)?;
            let mut profile = [0.0; crate::skeleton::NUM_JOINTS];
            profile.iter_mut().zip(&sum).for_each(|(p, s)| *p = s / rows.max(1) as f64);
            write_attention_csv(dir.join("attention.csv"), &profile)?;
            let last = outcome.loss_curve.last().map_or(f64::NAN, |r| r.mean_loss);
            writeln!(out, "{}", dir.display())?;
            writeln!(out, "clips {} epochs {} final_loss {last}", data.len(), cfg.train.epochs)?;
        }
        Command::Loocv { run, jobs } => {
            run.apply(&mut cfg)?;
            cfg.validate()?;
            let clips = read_clips(required(&cfg.inputs.clips, "clips")?)?;
            let report = run_loocv(&clips, cfg.task, &cfg.loocv(*jobs))?;
            let dir = prepare_run_dir(&run.out, &cfg)?;
            write_eval_outputs(&dir, &report)?;
            let m = report.pooled_metrics;
            writeln!(out, "{}", dir.display())?;
            writeln!(
                out,
                "folds {} videos {} AC {:.4} SE {:.4} SP {:.4} F1 {:.4}",
                report.folds.len(),
                report.videos_evaluated(),
                m.accuracy,
                m.sensitivity,
                m.specificity,
                m.f1
            )?;
        }
        Command::Predict {
            checkpoint,
            keypoints,
            fps,
            clip_len,
        } => {
            set(&mut cfg.fps, *fps);
            set(&mut cfg.clip_len, *clip_len);
            cfg.validate()?;
            let mut model = load_checkpoint(checkpoint)?;
            let raws = load_keypoint_file(keypoints)?;
            let summary = ingest(&raws, &HashMap::new(), cfg.fps, cfg.clip_len)?;
            let refs: Vec<&ClipSample> = summary.clips.iter().collect();
            let names = model.class_names().to_vec();
            let (videos, _, _) = predict_videos(&mut model, &refs)?;
            writeln!(out, "video_id,predicted,clips,votes")?;
            for (video, predicted, preds) in videos {
                let mut counts = vec![0usize; names.len()];
                preds.iter().for_each(|(c, _)| counts[*c] += 1);
                let votes: Vec<String> = names
                    .iter()
                    .zip(&counts)
                    .map(|(n, c)| format!("{n}:{c}"))
                    .collect();
                writeln!(out, "{video},{},{},{}", names[predicted], preds.len(), votes.join(" "))?;
            }
        }
        Command::Attention { run } => {
            let profile = read_attention_csv(run.join("attention.csv"))?;
            writeln!(out, "joint,attention")?;
            for (j, a) in JointId::ALL.iter().zip(profile) {
                writeln!(out, "{},{a}", j.name())?;
            }
        }
        Command::Freq {
            keypoints,
            band,
            refs,
            fps,
            out: dest,
        } => {
            set(&mut cfg.inputs.keypoints, keypoints.clone().map(Some));
            set(&mut cfg.inputs.references, refs.clone().map(Some));
            set(&mut cfg.fps, *fps);
            if let Some(b) = band {
                cfg.band = parse_band(b)?;
            }
            cfg.validate()?;
            let raws = load_keypoint_file(required(&cfg.inputs.keypoints, "keypoints")?)?;
            let mut rows: Vec<FreqRow> = Vec::new();
            for raw in &raws {
                let seq = PoseSequence::from_raw(raw, cfg.fps, VideoLabels::default())?;
                rows.extend(wrist_frequencies(&seq, cfg.band)?);
            }
            match dest {
                Some(path) => write_freq_rows(std::fs::File::create(path)?, &rows)?,
                None => write_freq_rows(&mut out, &rows)?,
            }
            if let Some(path) = &cfg.inputs.references {
                let summary = reference_summary(&rows, &crate::frequency::load_references(path)?)?;
                eprintln!("{summary}");
            }
        }
        Command::Gradcheck { seed } => {
            let results = gradient_suite(*seed)?;
            writeln!(out, "entry,max_rel_error,tolerance,worst,status")?;
            let mut failed = 0;
            for r in &results {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                failed += usize::from(!r.passed());
                writeln!(out, "{},{:.3e},{:.0e},{},{status}", r.name, r.max_rel_error, r.tolerance, r.worst)?;
            }
            if failed > 0 {
                return Err(Error::State(format!("{failed} gradient checks above tolerance")));
            }
        }
    }
    Ok(0)
}

/// Writes the config into `<parent>/<hash>/` and returns that directory.
fn prepare_run_dir(parent: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = parent.join(cfg.hash());
    std::fs::create_dir_all(&dir)?;
    cfg.save(dir.join(CONFIG_FILE))?;
    Ok(dir)
}

fn reference_summary(rows: &[FreqRow], refs: &HashMap<String, f64>) -> Result<String> {
    let mut by_video: std::collections::BTreeMap<&str, Vec<FreqRow>> = Default::default();
    for r in rows {
        by_video.entry(&r.video_id).or_default().push(r.clone());
    }
    let (mut est, mut truth, mut missing) = (Vec::new(), Vec::new(), 0);
    for (video, vrows) in &by_video {
        let Some(&reference) = refs.get(*video) else { continue };
        match video_frequency(vrows) {
            Some(hz) => {
                est.push(hz);
                truth.push(reference);
            }
            None => missing += 1,
        }
    }
    let reliable = est.iter().zip(&truth).filter(|(e, t)| is_reliable(**e, **t)).count();
    let mae = crate::frequency::frequency_mae(&est, &truth)?;
    Ok(format!(
        "compared {} videos, mae_hz {mae:.4}, reliable {reliable}/{}, no estimate {missing}",
        est.len(),
        est.len()
    ))
}
