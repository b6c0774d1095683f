//! Binary clip container written by `ingest`.
//!
//! Layout (little-endian): magic `TREMCLIP`, u32 version, u32 clip count,
//! then per clip: str video_id, str subject_id, u8 tremor type code,
//! u8 left rating (255 = absent), u8 right rating (255 = absent),
//! u64 start frame, u32 frame count, frames × 9 × 3 f64 features.
//! Strings are a u32 byte length followed by UTF-8 bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ClipSample, TremorType, VideoLabels, CHANNELS};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::skeleton::NUM_JOINTS;

pub const CLIPS_MAGIC: &[u8; 8] = b"TREMCLIP";
pub const CLIPS_VERSION: u32 = 1;
const ABSENT: u8 = 255;

pub fn write_clips(path: impl AsRef<Path>, clips: &[ClipSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CLIPS_MAGIC)?;
    write_u32(&mut w, CLIPS_VERSION)?;
    write_u32(&mut w, clips.len() as u32)?;
    for c in clips {
        write_str(&mut w, &c.video_id)?;
        write_str(&mut w, &c.subject_id)?;
        w.write_all(&[
            c.labels.tremor_type.code(),
            c.labels.rating_left.unwrap_or(ABSENT),
            c.labels.rating_right.unwrap_or(ABSENT),
        ])?;
        write_u64(&mut w, c.start_frame)?;
        write_u32(&mut w, c.frames as u32)?;
        write_f64s(&mut w, &c.features)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_clips(path: impl AsRef<Path>) -> Result<Vec<ClipSample>> {
    let path = path.as_ref();
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = BufReader::new(File::open(path)?);
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != CLIPS_MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CLIPS_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut clips = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let video_id = read_str(&mut r)?;
        let subject_id = read_str(&mut r)?;
        let code = read_u8(&mut r)?;
        let tremor_type =
            TremorType::from_code(code).ok_or_else(|| fail(format!("bad tremor code {code}")))?;
        let rating = |v: u8| (v != ABSENT).then_some(v);
        let rating_left = rating(read_u8(&mut r)?);
        let rating_right = rating(read_u8(&mut r)?);
        let start_frame = read_u64(&mut r)?;
        let frames = read_u32(&mut r)? as usize;
        let features = read_f64s(&mut r, frames * NUM_JOINTS * CHANNELS)?;
        clips.push(ClipSample {
            features,
            frames,
            labels: VideoLabels {
                tremor_type,
                rating_left,
                rating_right,
            },
            subject_id,
            video_id,
            start_frame,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(fail("trailing bytes after last clip".into()));
    }
    Ok(clips)
}
