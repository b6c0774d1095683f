//! Dominant tremor frequency from keypoint trajectories.
//!
//! Each coordinate series is detrended, Hann-windowed and turned into a
//! one-sided periodogram; the strongest bin inside the tremor band wins.

use std::collections::HashMap;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evm::{check_nyquist, BandSpec};
use crate::pose::PoseSequence;
use crate::skeleton::JointId;

pub const MIN_SAMPLES: usize = 64;
/// In-band power below this fraction of total power means no tremor.
pub const NO_TREMOR_RATIO: f64 = 1e-12;
/// Deviations below this fraction of the signal magnitude are rounding
/// residue, not motion.
pub const RESIDUE_TOLERANCE: f64 = 1e-10;
/// Estimates this close to the reference count as reliable.
pub const RELIABLE_HZ: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyEstimate {
    pub dominant_hz: f64,
    pub power: f64,
    pub band: BandSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Tremor(FrequencyEstimate),
    NoTremor,
}

impl Verdict {
    pub fn estimate(&self) -> Option<&FrequencyEstimate> {
        match self {
            Verdict::Tremor(e) => Some(e),
            Verdict::NoTremor => None,
        }
    }

    fn power(&self) -> f64 {
        self.estimate().map_or(0.0, |e| e.power)
    }
}

/// One-sided periodogram `|X_k|^2`, `k = 0..=N/2`, of the detrended,
/// Hann-windowed signal.
pub fn periodogram(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = if n > 1 {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
            } else {
                1.0
            };
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

pub fn dominant_frequency(signal: &[f64], fps: f64, band: BandSpec) -> Result<Verdict> {
    band.validate()?;
    if signal.len() < MIN_SAMPLES {
        return Err(Error::Argument(format!(
            "frequency estimation needs at least {MIN_SAMPLES} samples, got {}",
            signal.len()
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("signal contains non-finite values".into()));
    }
    let verdict = check_nyquist(fps, band.f_hi)?;
    if !verdict.valid {
        return Err(Error::Nyquist(verdict));
    }
    let n = signal.len();
    let power = periodogram(signal);
    let total: f64 = power.iter().sum();
    // detrending a constant leaves rounding residue far above eps * |x|
    let scale = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (n as f64 * RESIDUE_TOLERANCE * scale).powi(2);
    let bin_hz = fps / n as f64;
    let mut best: Option<(usize, f64)> = None;
    let mut in_band = 0.0;
    for (k, &p) in power.iter().enumerate() {
        if band.contains(k as f64 * bin_hz) {
            in_band += p;
            if best.map_or(true, |(_, bp)| p > bp) {
                best = Some((k, p));
            }
        }
    }
    match best {
        Some((k, p)) if total > floor && in_band >= NO_TREMOR_RATIO * total => {
            Ok(Verdict::Tremor(FrequencyEstimate {
                dominant_hz: k as f64 * bin_hz,
                power: p,
                band,
            }))
        }
        _ => Ok(Verdict::NoTremor),
    }
}

/// Analyzes x and y separately and keeps the stronger in-band peak.
pub fn trajectory_frequency(xs: &[f64], ys: &[f64], fps: f64, band: BandSpec) -> Result<Verdict> {
    let vx = dominant_frequency(xs, fps, band)?;
    let vy = dominant_frequency(ys, fps, band)?;
    Ok(if vy.power() > vx.power() { vy } else { vx })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqRow {
    pub video_id: String,
    pub joint: JointId,
    pub verdict: Verdict,
}

/// Frequency verdicts for both wrists of a video.
pub fn wrist_frequencies(seq: &PoseSequence, band: BandSpec) -> Result<Vec<FreqRow>> {
    [JointId::R_WRIST, JointId::L_WRIST]
        .into_iter()
        .map(|joint| {
            let (xs, ys) = seq.joint_trajectory(joint);
            Ok(FreqRow {
                video_id: seq.video_id.clone(),
                joint,
                verdict: trajectory_frequency(&xs, &ys, seq.fps, band)?,
            })
        })
        .collect()
}

/// The strongest wrist estimate of a video, if any wrist shows tremor.
pub fn video_frequency(rows: &[FreqRow]) -> Option<f64> {
    rows.iter()
        .filter_map(|r| r.verdict.estimate())
        .max_by(|a, b| a.power.total_cmp(&b.power))
        .map(|e| e.dominant_hz)
}

pub fn frequency_mae(estimates: &[f64], references: &[f64]) -> Result<f64> {
    if estimates.len() != references.len() {
        return Err(Error::Argument(format!(
            "{} estimates but {} references",
            estimates.len(),
            references.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::Argument("no frequencies to compare".into()));
    }
    let sum: f64 = estimates.iter().zip(references).map(|(e, r)| (e - r).abs()).sum();
    Ok(sum / estimates.len() as f64)
}

pub fn is_reliable(estimate_hz: f64, reference_hz: f64) -> bool {
    (estimate_hz - reference_hz).abs() <= RELIABLE_HZ
}

pub fn write_freq_csv(path: impl AsRef<Path>, rows: &[FreqRow]) -> Result<()> {
    write_freq_rows(std::fs::File::create(path)?, rows)
}

/// `video_id,joint,dominant_hz,power,verdict`, one row per wrist.
pub fn write_freq_rows(out: impl std::io::Write, rows: &[FreqRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["video_id", "joint", "dominant_hz", "power", "verdict"])
        .map_err(csv_err)?;
    for r in rows {
        let (hz, power, verdict) = match r.verdict {
            Verdict::Tremor(e) => (e.dominant_hz.to_string(), e.power.to_string(), "tremor"),
            Verdict::NoTremor => (String::new(), String::new(), "no-tremor"),
        };
        w.write_record([r.video_id.as_str(), r.joint.name(), &hz, &power, verdict])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reference frequencies keyed by video id, from `video_id,reference_hz`.
pub fn load_references(path: impl AsRef<Path>) -> Result<HashMap<String, f64>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            record: i,
            message: e.to_string(),
        })?;
        if rec.len() != 2 {
            return Err(Error::Schema {
                record: i,
                message: format!("expected 2 columns, got {}", rec.len()),
            });
        }
        let hz: f64 = rec[1].trim().parse().map_err(|_| Error::Parse {
            record: i,
            message: format!("bad frequency {:?}", &rec[1]),
        })?;
        out.insert(rec[0].to_string(), hz);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}
