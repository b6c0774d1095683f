//! Motion magnification of a flickering test video: a 5 Hz component is
//! amplified while a 10 Hz one passes through, and the result is stored
//! in the 8-bit TREMVID0 container.

use std::f64::consts::PI;

use tremor::evm::{magnify, read_tremvid, write_tremvid, BandSpec, FrameSequence, MagnifyParams};

fn tone_amplitude(series: &[f64], fps: f64, hz: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (t, v) in series.iter().enumerate() {
        let phase = 2.0 * PI * hz * t as f64 / fps;
        re += v * phase.cos();
        im -= v * phase.sin();
    }
    2.0 * (re * re + im * im).sqrt() / series.len() as f64
}

fn main() -> tremor::Result<()> {
    let fps = 30.0;
    let wave = |hz: f64, t: usize| (2.0 * PI * hz * t as f64 / fps).sin();
    let seq = FrameSequence::from_fn(64, 64, fps, 300, |t, x, _| {
        0.5 + 0.01 * wave(5.0, t) + 0.01 * wave(10.0, t) + 0.001 * x as f64
    });
    let params = MagnifyParams {
        alpha: 10.0,
        pyramid_levels: 3,
    };
    let out = magnify(&seq, BandSpec::TREMOR, params)?;
    let (before, after) = (seq.pixel_series(20, 40), out.pixel_series(20, 40));
    for hz in [5.0, 10.0] {
        let gain = tone_amplitude(&after, fps, hz) / tone_amplitude(&before, fps, hz);
        println!("{hz:>4} Hz gain {gain:.4}");
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("magnified.tremvid");
    write_tremvid(&path, &out)?;
    let back = read_tremvid(&path)?;
    let quantization = back.data.iter().zip(&out.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!(
        "wrote {} ({} frames {}x{}), 8-bit quantization error {:.5} (limit {:.5})",
        path.display(),
        back.num_frames(),
        back.width,
        back.height,
        quantization,
        0.5 / 255.0
    );
    Ok(())
}
