//! Keypoint interchange format (JSON array, JSON lines, or CSV) and the
//! labels CSV.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::{Keypoint2D, RawFrame, RawSequence, VideoLabels, COCO_KEYPOINTS};
use crate::error::{Error, Result};

const VALUES_PER_FRAME: usize = COCO_KEYPOINTS * 3;

#[derive(Debug, Deserialize)]
struct JsonRecord {
    video_id: String,
    subject_id: String,
    frame_index: u64,
    keypoints: Vec<f64>,
}

struct Record {
    video_id: String,
    subject_id: String,
    frame_index: u64,
    values: Vec<f64>,
}

/// Reads a keypoint file into one raw sequence per video, in order of first
/// appearance, with frames sorted by index.
pub fn load_keypoint_file(path: impl AsRef<Path>) -> Result<Vec<RawSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let records = if is_csv {
        parse_csv(&text)?
    } else {
        parse_json(&text)?
    };
    group_records(records)
}

fn parse_json(text: &str) -> Result<Vec<Record>> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    let values: Vec<Value> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            record: 0,
            message: e.to_string(),
        })?
    } else {
        // one JSON object per line
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str(line).map_err(|e| Error::Parse {
                    record: i,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?
    };
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let rec: JsonRecord = serde_json::from_value(v).map_err(|e| Error::Parse {
                record: i,
                message: e.to_string(),
            })?;
            check_values(i, &rec.keypoints)?;
            Ok(Record {
                video_id: rec.video_id,
                subject_id: rec.subject_id,
                frame_index: rec.frame_index,
                values: rec.keypoints,
            })
        })
        .collect()
}

fn parse_csv(text: &str) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            record: 0,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.len() != 3 + VALUES_PER_FRAME {
        return Err(Error::Schema {
            record: 0,
            message: format!(
                "header has {} columns, expected {}",
                headers.len(),
                3 + VALUES_PER_FRAME
            ),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            record: i,
            message: e.to_string(),
        })?;
        if row.len() < 3 {
            return Err(Error::Parse {
                record: i,
                message: format!("only {} fields", row.len()),
            });
        }
        let frame_index = row[2].parse::<u64>().map_err(|e| Error::Parse {
            record: i,
            message: format!("frame_index: {e}"),
        })?;
        let values = row
            .iter()
            .skip(3)
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    record: i,
                    message: format!("keypoint value {s:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        check_values(i, &values)?;
        out.push(Record {
            video_id: row[0].to_string(),
            subject_id: row[1].to_string(),
            frame_index,
            values,
        });
    }
    Ok(out)
}

fn check_values(record: usize, values: &[f64]) -> Result<()> {
    if values.len() != VALUES_PER_FRAME {
        return Err(Error::Schema {
            record,
            message: format!(
                "{} keypoint values ({} keypoints), expected {VALUES_PER_FRAME} ({COCO_KEYPOINTS} keypoints)",
                values.len(),
                values.len() as f64 / 3.0
            ),
        });
    }
    for (k, kp) in values.chunks_exact(3).enumerate() {
        if !kp[0].is_finite() || !kp[1].is_finite() {
            return Err(Error::Data(format!(
                "record {record}: keypoint {k} has a non-finite coordinate"
            )));
        }
        if !(0.0..=1.0).contains(&kp[2]) {
            return Err(Error::Data(format!(
                "record {record}: keypoint {k} confidence {} outside [0, 1]",
                kp[2]
            )));
        }
    }
    Ok(())
}

fn group_records(records: Vec<Record>) -> Result<Vec<RawSequence>> {
    let mut order: Vec<RawSequence> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in records {
        let slot = *index.entry(rec.video_id.clone()).or_insert_with(|| {
            order.push(RawSequence {
                video_id: rec.video_id.clone(),
                subject_id: rec.subject_id.clone(),
                frames: Vec::new(),
            });
            order.len() - 1
        });
        let seq = &mut order[slot];
        if seq.subject_id != rec.subject_id {
            return Err(Error::Data(format!(
                "video {} appears with subjects {} and {}",
                rec.video_id, seq.subject_id, rec.subject_id
            )));
        }
        let keypoints = std::array::from_fn(|k| {
            Keypoint2D::new(
                rec.values[3 * k],
                rec.values[3 * k + 1],
                rec.values[3 * k + 2],
            )
        });
        seq.frames.push(RawFrame {
            frame_index: rec.frame_index,
            keypoints,
        });
    }
    for seq in &mut order {
        seq.frames.sort_by_key(|f| f.frame_index);
        if let Some(w) = seq
            .frames
            .windows(2)
            .find(|w| w[0].frame_index == w[1].frame_index)
        {
            return Err(Error::Data(format!(
                "video {}: duplicate frame index {}",
                seq.video_id, w[0].frame_index
            )));
        }
    }
    Ok(order)
}

fn flat_values(frame: &RawFrame) -> Vec<f64> {
    frame
        .keypoints
        .iter()
        .flat_map(|k| [k.x, k.y, k.c])
        .collect()
}

pub fn write_keypoints_json(path: impl AsRef<Path>, seqs: &[RawSequence]) -> Result<()> {
    let records: Vec<Value> = seqs
        .iter()
        .flat_map(|s| {
            s.frames.iter().map(move |f| {
                serde_json::json!({
                    "video_id": s.video_id,
                    "subject_id": s.subject_id,
                    "frame_index": f.frame_index,
                    "keypoints": flat_values(f),
                })
            })
        })
        .collect();
    let text = serde_json::to_string(&records).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn write_keypoints_csv(path: impl AsRef<Path>, seqs: &[RawSequence]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![
        "video_id".to_string(),
        "subject_id".to_string(),
        "frame_index".to_string(),
    ];
    for k in 0..COCO_KEYPOINTS {
        for axis in ["x", "y", "c"] {
            header.push(format!("k{k}_{axis}"));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for s in seqs {
        for f in &s.frames {
            let mut row = vec![
                s.video_id.clone(),
                s.subject_id.clone(),
                f.frame_index.to_string(),
            ];
            row.extend(flat_values(f).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub subject_id: String,
    pub labels: VideoLabels,
}

fn parse_rating(record: usize, s: &str) -> Result<Option<u8>> {
    if s.is_empty() {
        return Ok(None);
    }
    let v: u8 = s.parse().map_err(|_| Error::Parse {
        record,
        message: format!("rating {s:?} is not an integer"),
    })?;
    if v > 7 {
        return Err(Error::Data(format!("record {record}: rating {v} outside 0..=7")));
    }
    Ok(Some(v))
}

/// Labels CSV: `video_id, subject_id, tremor_type, rating_left, rating_right`.
pub fn load_labels(path: impl AsRef<Path>) -> Result<HashMap<String, LabelRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            record: i,
            message: e.to_string(),
        })?;
        if row.len() != 5 {
            return Err(Error::Schema {
                record: i,
                message: format!("{} label columns, expected 5", row.len()),
            });
        }
        let labels = VideoLabels {
            tremor_type: row[2].parse().map_err(|e: Error| Error::Parse {
                record: i,
                message: e.to_string(),
            })?,
            rating_left: parse_rating(i, &row[3])?,
            rating_right: parse_rating(i, &row[4])?,
        };
        out.insert(
            row[0].to_string(),
            LabelRecord {
                subject_id: row[1].to_string(),
                labels,
            },
        );
    }
    Ok(out)
}

pub fn write_labels(
    path: impl AsRef<Path>,
    rows: &[(String, String, VideoLabels)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "video_id",
        "subject_id",
        "tremor_type",
        "rating_left",
        "rating_right",
    ])
    .map_err(csv_err)?;
    let rating = |r: Option<u8>| r.map(|v| v.to_string()).unwrap_or_default();
    for (video, subject, l) in rows {
        w.write_record([
            video.clone(),
            subject.clone(),
            l.tremor_type.to_string(),
            rating(l.rating_left),
            rating(l.rating_right),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
