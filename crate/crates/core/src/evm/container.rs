//! Raw grayscale video container.
//!
//! `TREMVID0`, u32 width, u32 height, u32 frame count, f32 fps (all
//! little-endian), then `frame_count * width * height` u8 pixels, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FrameSequence;
use crate::binio::*;
use crate::error::{Error, Result};

pub const TREMVID_MAGIC: &[u8; 8] = b"TREMVID0";

pub fn read_tremvid(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = BufReader::new(File::open(path)?);
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != TREMVID_MAGIC {
        return Err(fail("bad magic".into()));
    }
    let width = read_u32(&mut r)? as usize;
    let height = read_u32(&mut r)? as usize;
    let frames = read_u32(&mut r)? as usize;
    let fps = read_f32(&mut r)? as f64;
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(fail(format!("fps {fps} is not positive")));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected = width * height * frames;
    if bytes.len() != expected {
        return Err(fail(format!(
            "{} pixel bytes, header promises {expected}",
            bytes.len()
        )));
    }
    Ok(FrameSequence {
        width,
        height,
        fps,
        data: bytes.into_iter().map(|b| b as f64 / 255.0).collect(),
    })
}

pub fn write_tremvid(path: impl AsRef<Path>, seq: &FrameSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TREMVID_MAGIC)?;
    write_u32(&mut w, seq.width as u32)?;
    write_u32(&mut w, seq.height as u32)?;
    write_u32(&mut w, seq.num_frames() as u32)?;
    write_f32(&mut w, seq.fps as f32)?;
    let bytes: Vec<u8> = seq
        .data
        .iter()
        .map(|v| (v * 255.0).round_ties_even().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.tremvid");
        let seq = FrameSequence::from_fn(3, 2, 30.0, 2, |t, x, y| ((t * 6 + y * 3 + x) * 10) as f64 / 255.0);
        write_tremvid(&p, &seq).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"TREMVID0");
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &30.0f32.to_le_bytes());
        assert_eq!(bytes[24..].to_vec(), (0..12).map(|i| i * 10).collect::<Vec<u8>>());
        assert_eq!(read_tremvid(&p).unwrap(), seq);
    }

    #[test]
    fn quantization_rounds_half_to_even() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.tremvid");
        // 0.5/255 and 1.5/255 land exactly on .5 after scaling
        let seq = FrameSequence {
            width: 4,
            height: 1,
            fps: 25.0,
            data: vec![0.5 / 255.0, 1.5 / 255.0, -0.2, 1.3],
        };
        write_tremvid(&p, &seq).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[24..], &[0, 2, 0, 255]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.tremvid");
        let seq = FrameSequence::from_fn(4, 4, 30.0, 3, |_, _, _| 0.5);
        write_tremvid(&p, &seq).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_tremvid(&p), Err(Error::Format { .. })));
    }
}
