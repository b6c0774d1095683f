//! Eulerian motion magnification of grayscale frame sequences.
//!
//! Frames are blurred and decimated with a binomial pyramid, every pixel of
//! the coarse level is band-passed in time with an ideal DFT filter, and the
//! amplified band is upsampled and added back onto the input.

mod container;

use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use container::{read_tremvid, write_tremvid, TREMVID_MAGIC};

/// Grayscale video with pixel values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Frame-major, then row-major pixels.
    pub data: Vec<f64>,
}

impl FrameSequence {
    pub fn new(width: usize, height: usize, fps: f64, frames: Vec<Vec<f64>>) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Argument(format!("fps must be positive, got {fps}")));
        }
        let mut data = Vec::with_capacity(width * height * frames.len());
        for (t, f) in frames.iter().enumerate() {
            if f.len() != width * height {
                return Err(Error::Argument(format!(
                    "frame {t} has {} pixels, expected {width}x{height}",
                    f.len()
                )));
            }
            data.extend_from_slice(f);
        }
        let seq = Self {
            width,
            height,
            fps,
            data,
        };
        seq.check_finite()?;
        Ok(seq)
    }

    /// Builds a sequence by evaluating `f(t, x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        fps: f64,
        frames: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * frames);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(t, x, y));
                }
            }
        }
        Self {
            width,
            height,
            fps,
            data,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.width * self.height
    }

    pub fn num_frames(&self) -> usize {
        if self.frame_len() == 0 {
            0
        } else {
            self.data.len() / self.frame_len()
        }
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn pixel(&self, t: usize, x: usize, y: usize) -> f64 {
        self.data[t * self.frame_len() + y * self.width + x]
    }

    /// Time series of one pixel.
    pub fn pixel_series(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.num_frames()).map(|t| self.pixel(t, x, y)).collect()
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Data("non-finite pixel value".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl BandSpec {
    /// The 3-7 Hz band where parkinsonian tremor usually lives.
    pub const TREMOR: BandSpec = BandSpec {
        f_lo: 3.0,
        f_hi: 7.0,
    };

    pub fn new(f_lo: f64, f_hi: f64) -> Result<Self> {
        let b = Self { f_lo, f_hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_lo > 0.0 && self.f_lo < self.f_hi && self.f_hi.is_finite() {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "band must satisfy 0 < low < high, got [{}, {}]",
                self.f_lo, self.f_hi
            )))
        }
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_lo && f <= self.f_hi
    }
}

impl Default for BandSpec {
    fn default() -> Self {
        Self::TREMOR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnifyParams {
    pub alpha: f64,
    pub pyramid_levels: usize,
}

impl Default for MagnifyParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            pyramid_levels: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NyquistVerdict {
    pub fps: f64,
    pub f_max: f64,
    pub valid: bool,
}

impl fmt::Display for NyquistVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let relation = if self.valid { ">=" } else { "<" };
        write!(
            f,
            "{}: {} Hz {} 2 x {} Hz",
            if self.valid { "valid" } else { "invalid" },
            self.fps,
            relation,
            self.f_max
        )
    }
}

/// A frame rate can resolve motion up to `f_max` only if it is at least
/// twice that frequency.
pub fn check_nyquist(fps: f64, f_max: f64) -> Result<NyquistVerdict> {
    if !(fps > 0.0 && fps.is_finite()) || !(f_max > 0.0 && f_max.is_finite()) {
        return Err(Error::Argument(format!(
            "fps and f_max must be positive, got {fps} and {f_max}"
        )));
    }
    Ok(NyquistVerdict {
        fps,
        f_max,
        valid: fps >= 2.0 * f_max,
    })
}

fn require_nyquist(fps: f64, f_max: f64) -> Result<()> {
    let v = check_nyquist(fps, f_max)?;
    if v.valid {
        Ok(())
    } else {
        Err(Error::Nyquist(v))
    }
}

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn blur_and_decimate(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in BINOMIAL.iter().enumerate() {
                acc += wk * row[clamp(x as isize + k as isize - 2, w)];
            }
            horiz[y * w + x] = acc;
        }
    }
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(nw * nh);
    for y in (0..h).step_by(2) {
        for x in (0..w).step_by(2) {
            let mut acc = 0.0;
            for (k, wk) in BINOMIAL.iter().enumerate() {
                acc += wk * horiz[clamp(y as isize + k as isize - 2, h) * w + x];
            }
            out.push(acc);
        }
    }
    (out, nw, nh)
}

/// Binomial blur plus 2x decimation, `levels` times, clamp-to-edge borders.
pub fn gaussian_downsample(seq: &FrameSequence, levels: usize) -> Result<FrameSequence> {
    let (mut w, mut h) = (seq.width, seq.height);
    for _ in 0..levels {
        w = w.div_ceil(2);
        h = h.div_ceil(2);
        if w < 2 || h < 2 {
            return Err(Error::Argument(format!(
                "{levels} pyramid levels reduce {}x{} below 2 pixels",
                seq.width, seq.height
            )));
        }
    }
    if levels == 0 {
        return Ok(seq.clone());
    }
    let mut data = Vec::with_capacity(w * h * seq.num_frames());
    for t in 0..seq.num_frames() {
        let (mut cur, mut cw, mut ch) = (seq.frame(t).to_vec(), seq.width, seq.height);
        for _ in 0..levels {
            (cur, cw, ch) = blur_and_decimate(&cur, cw, ch);
        }
        data.extend_from_slice(&cur);
    }
    Ok(FrameSequence {
        width: w,
        height: h,
        fps: seq.fps,
        data,
    })
}

/// Ideal band-pass along time: every DFT bin whose frequency magnitude lies
/// outside `[f_lo, f_hi]` is zeroed.
pub fn temporal_bandpass(seq: &FrameSequence, band: BandSpec) -> Result<FrameSequence> {
    band.validate()?;
    require_nyquist(seq.fps, band.f_hi)?;
    let n = seq.num_frames();
    if n < 8 {
        return Err(Error::Argument(format!(
            "temporal filtering needs at least 8 frames, got {n}"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let keep: Vec<bool> = (0..n)
        .map(|k| {
            let bin = k.min(n - k) as f64;
            band.contains(bin * seq.fps / n as f64)
        })
        .collect();

    let stride = seq.frame_len();
    let mut out = vec![0.0; seq.data.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for p in 0..stride {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(seq.data[t * stride + p], 0.0);
        }
        forward.process(&mut buf);
        for (b, &k) in buf.iter_mut().zip(&keep) {
            if !k {
                *b = Complex::new(0.0, 0.0);
            }
        }
        inverse.process(&mut buf);
        for (t, b) in buf.iter().enumerate() {
            out[t * stride + p] = b.re / n as f64;
        }
    }
    Ok(FrameSequence {
        width: seq.width,
        height: seq.height,
        fps: seq.fps,
        data: out,
    })
}

fn upsample_bilinear(src: &[f64], sw: usize, sh: usize, w: usize, h: usize, scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = (y as f64 / scale).min((sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f64;
        for x in 0..w {
            let sx = (x as f64 / scale).min((sw - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = sx - x0 as f64;
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bottom = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

pub fn magnify(seq: &FrameSequence, band: BandSpec, params: MagnifyParams) -> Result<FrameSequence> {
    if !(params.alpha >= 0.0 && params.alpha.is_finite()) {
        return Err(Error::Argument(format!(
            "alpha must be a finite non-negative number, got {}",
            params.alpha
        )));
    }
    if params.pyramid_levels < 1 {
        return Err(Error::Argument("at least one pyramid level is required".into()));
    }
    let scale = 1usize
        .checked_shl(params.pyramid_levels as u32)
        .filter(|&s| s <= seq.width.min(seq.height))
        .ok_or_else(|| {
            Error::Argument(format!(
                "2^{} exceeds the smaller frame dimension of {}x{}",
                params.pyramid_levels, seq.width, seq.height
            ))
        })?;
    seq.check_finite()?;
    let coarse = gaussian_downsample(seq, params.pyramid_levels)?;
    let band_signal = temporal_bandpass(&coarse, band)?;

    let mut data = Vec::with_capacity(seq.data.len());
    for t in 0..seq.num_frames() {
        let up = upsample_bilinear(
            band_signal.frame(t),
            band_signal.width,
            band_signal.height,
            seq.width,
            seq.height,
            scale as f64,
        );
        data.extend(
            seq.frame(t)
                .iter()
                .zip(&up)
                .map(|(&v, &b)| (v + params.alpha * b).clamp(0.0, 1.0)),
        );
    }
    Ok(FrameSequence {
        width: seq.width,
        height: seq.height,
        fps: seq.fps,
        data,
    })
}
