//! Keypoint ingestion: upper-body selection, origin normalization,
//! clip slicing and label handling.

mod clips_file;
mod io;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{JointId, NUM_JOINTS};

pub use clips_file::{read_clips, write_clips, CLIPS_MAGIC, CLIPS_VERSION};
pub use io::{
    load_keypoint_file, load_labels, write_keypoints_csv, write_keypoints_json, write_labels,
    LabelRecord,
};

pub const COCO_KEYPOINTS: usize = 17;
pub const CHANNELS: usize = 3;
pub const DEFAULT_CLIP_LEN: usize = 100;
/// Mean joint confidence below which a frame counts as not visible.
pub const MIN_VISIBLE_CONFIDENCE: f64 = 0.05;

pub mod coco {
    pub const NOSE: usize = 0;
    pub const L_SHOULDER: usize = 5;
    pub const R_SHOULDER: usize = 6;
    pub const L_ELBOW: usize = 7;
    pub const R_ELBOW: usize = 8;
    pub const L_WRIST: usize = 9;
    pub const R_WRIST: usize = 10;
    pub const L_HIP: usize = 11;
    pub const R_HIP: usize = 12;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint2D {
    pub x: f64,
    pub y: f64,
    pub c: f64,
}

impl Keypoint2D {
    pub fn new(x: f64, y: f64, c: f64) -> Self {
        Self { x, y, c }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && (0.0..=1.0).contains(&self.c)
    }
}

/// One frame of the full 17-keypoint COCO body layout, before selection.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub frame_index: u64,
    pub keypoints: [Keypoint2D; COCO_KEYPOINTS],
}

/// All raw frames of one video as read from a keypoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSequence {
    pub video_id: String,
    pub subject_id: String,
    pub frames: Vec<RawFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFrame {
    pub frame_index: u64,
    pub joints: [Keypoint2D; NUM_JOINTS],
}

impl PoseFrame {
    pub fn joint(&self, j: JointId) -> Keypoint2D {
        self.joints[j.index()]
    }

    pub fn mean_confidence(&self) -> f64 {
        self.joints.iter().map(|k| k.c).sum::<f64>() / NUM_JOINTS as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TremorType {
    PT,
    ET,
    FT,
    DT,
    NT,
    Other,
    Unlabeled,
}

impl TremorType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        use TremorType::*;
        [PT, ET, FT, DT, NT, Other, Unlabeled]
            .get(code as usize)
            .copied()
    }
}

impl fmt::Display for TremorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TremorType::PT => "PT",
            TremorType::ET => "ET",
            TremorType::FT => "FT",
            TremorType::DT => "DT",
            TremorType::NT => "NT",
            TremorType::Other => "OTHER",
            TremorType::Unlabeled => "UNLABELED",
        };
        f.write_str(s)
    }
}

impl FromStr for TremorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "PT" => TremorType::PT,
            "ET" => TremorType::ET,
            "FT" => TremorType::FT,
            "DT" => TremorType::DT,
            "NT" => TremorType::NT,
            "OTHER" => TremorType::Other,
            "" | "UNLABELED" => TremorType::Unlabeled,
            other => return Err(Error::Data(format!("unknown tremor type {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoLabels {
    pub tremor_type: TremorType,
    pub rating_left: Option<u8>,
    pub rating_right: Option<u8>,
}

impl Default for VideoLabels {
    fn default() -> Self {
        Self {
            tremor_type: TremorType::Unlabeled,
            rating_left: None,
            rating_right: None,
        }
    }
}

impl VideoLabels {
    pub fn merged_rating(&self) -> Result<u8> {
        merge_hand_ratings(self.rating_left, self.rating_right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub frames: Vec<PoseFrame>,
    pub fps: f64,
    pub subject_id: String,
    pub video_id: String,
    pub labels: VideoLabels,
}

impl PoseSequence {
    /// Selects the upper body of every raw frame. Does not normalize.
    pub fn from_raw(raw: &RawSequence, fps: f64, labels: VideoLabels) -> Result<Self> {
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(Error::Argument(format!("fps must be positive, got {fps}")));
        }
        for r in [labels.rating_left, labels.rating_right].into_iter().flatten() {
            if r > 7 {
                return Err(Error::Data(format!(
                    "video {}: rating {r} outside 0..=7",
                    raw.video_id
                )));
            }
        }
        if raw
            .frames
            .windows(2)
            .any(|w| w[1].frame_index <= w[0].frame_index)
        {
            return Err(Error::Data(format!(
                "video {}: frame indices not strictly increasing",
                raw.video_id
            )));
        }
        Ok(Self {
            frames: raw.frames.iter().map(select_upper_body).collect(),
            fps,
            subject_id: raw.subject_id.clone(),
            video_id: raw.video_id.clone(),
            labels,
        })
    }

    pub fn normalized(mut self) -> Self {
        for f in &mut self.frames {
            *f = normalize_pose(f);
        }
        self
    }

    /// Coordinate series of one joint: (xs, ys).
    pub fn joint_trajectory(&self, joint: JointId) -> (Vec<f64>, Vec<f64>) {
        self.frames
            .iter()
            .map(|f| (f.joint(joint).x, f.joint(joint).y))
            .unzip()
    }
}

/// A fixed-length training unit. Features are laid out frame-major:
/// `[frame][joint][channel]` with channels `(x, y, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSample {
    pub features: Vec<f64>,
    pub frames: usize,
    pub labels: VideoLabels,
    pub subject_id: String,
    pub video_id: String,
    pub start_frame: u64,
}

impl ClipSample {
    pub fn value(&self, frame: usize, joint: JointId, channel: usize) -> f64 {
        self.features[(frame * NUM_JOINTS + joint.index()) * CHANNELS + channel]
    }
}

pub fn select_upper_body(raw: &RawFrame) -> PoseFrame {
    let k = &raw.keypoints;
    let ls = k[coco::L_SHOULDER];
    let rs = k[coco::R_SHOULDER];
    let neck = Keypoint2D::new((ls.x + rs.x) / 2.0, (ls.y + rs.y) / 2.0, ls.c.min(rs.c));
    PoseFrame {
        frame_index: raw.frame_index,
        joints: [
            neck,
            rs,
            k[coco::R_ELBOW],
            k[coco::R_WRIST],
            ls,
            k[coco::L_ELBOW],
            k[coco::L_WRIST],
            k[coco::R_HIP],
            k[coco::L_HIP],
        ],
    }
}

/// Origin at the mean of neck and both hips; confidences untouched.
pub fn normalize_pose(frame: &PoseFrame) -> PoseFrame {
    let anchors = [JointId::NECK, JointId::R_HIP, JointId::L_HIP];
    let ox = anchors.iter().map(|&j| frame.joint(j).x).sum::<f64>() / 3.0;
    let oy = anchors.iter().map(|&j| frame.joint(j).y).sum::<f64>() / 3.0;
    let mut out = *frame;
    for kp in &mut out.joints {
        kp.x -= ox;
        kp.y -= oy;
    }
    out
}

pub fn is_visible(frame: &PoseFrame) -> bool {
    frame.mean_confidence() >= MIN_VISIBLE_CONFIDENCE
}

/// Maximal runs of visible frames with consecutive indices, as index ranges
/// into `seq.frames`.
pub fn visible_runs(seq: &PoseSequence) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for (i, f) in seq.frames.iter().enumerate() {
        let continues = start.is_some()
            && i > 0
            && seq.frames[i - 1].frame_index + 1 == f.frame_index;
        if !is_visible(f) {
            if let Some(s) = start.take() {
                runs.push(s..i);
            }
            continue;
        }
        match start {
            Some(s) if !continues => {
                runs.push(s..i);
                start = Some(i);
            }
            None => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(s..seq.frames.len());
    }
    runs
}

/// Non-overlapping clips from each visible run; remainders are dropped.
pub fn slice_clips(seq: &PoseSequence, clip_len: usize) -> Result<Vec<ClipSample>> {
    if clip_len == 0 {
        return Err(Error::Argument("clip length must be at least 1".into()));
    }
    let mut clips = Vec::new();
    for run in visible_runs(seq) {
        let frames = &seq.frames[run];
        for chunk in frames.chunks_exact(clip_len) {
            let mut features = Vec::with_capacity(clip_len * NUM_JOINTS * CHANNELS);
            for f in chunk {
                for kp in &f.joints {
                    features.extend_from_slice(&[kp.x, kp.y, kp.c]);
                }
            }
            clips.push(ClipSample {
                features,
                frames: clip_len,
                labels: seq.labels,
                subject_id: seq.subject_id.clone(),
                video_id: seq.video_id.clone(),
                start_frame: chunk[0].frame_index,
            });
        }
    }
    Ok(clips)
}

pub fn merge_hand_ratings(left: Option<u8>, right: Option<u8>) -> Result<u8> {
    match (left, right) {
        (Some(l), Some(r)) => Ok(l.max(r)),
        (Some(v), None) | (None, Some(v)) => Ok(v),
        (None, None) => Err(Error::MissingLabel(
            "both hand ratings are absent".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RatingScheme {
    /// Ratings 1, 2, 3 only.
    ThreeOnly,
    /// Ratings 1, 2 and everything from 3 up.
    ThreePlus,
}

pub fn group_ratings(rating: u8, scheme: RatingScheme) -> Option<usize> {
    match (scheme, rating) {
        (_, 0) => None,
        (RatingScheme::ThreeOnly, 1..=3) => Some(rating as usize - 1),
        (RatingScheme::ThreeOnly, _) => None,
        (RatingScheme::ThreePlus, 1 | 2) => Some(rating as usize - 1),
        (RatingScheme::ThreePlus, _) => Some(2),
    }
}

/// Summary of an ingestion pass.
#[derive(Debug, Clone, Default)]
pub struct IngestSummary {
    pub clips: Vec<ClipSample>,
    pub videos: usize,
    pub subjects: usize,
    pub dropped_frames: usize,
}

/// Select, normalize and slice a batch of raw videos.
pub fn ingest(
    raws: &[RawSequence],
    labels: &std::collections::HashMap<String, LabelRecord>,
    fps: f64,
    clip_len: usize,
) -> Result<IngestSummary> {
    let mut summary = IngestSummary::default();
    let mut subjects = BTreeSet::new();
    for raw in raws {
        let video_labels = match labels.get(&raw.video_id) {
            Some(rec) => {
                if rec.subject_id != raw.subject_id {
                    return Err(Error::Data(format!(
                        "video {}: subject {} in keypoints but {} in labels",
                        raw.video_id, raw.subject_id, rec.subject_id
                    )));
                }
                rec.labels
            }
            None => VideoLabels::default(),
        };
        let seq = PoseSequence::from_raw(raw, fps, video_labels)?.normalized();
        let clips = slice_clips(&seq, clip_len)?;
        summary.dropped_frames += seq.frames.len() - clips.len() * clip_len;
        if !clips.is_empty() {
            summary.videos += 1;
            subjects.insert(seq.subject_id.clone());
        }
        summary.clips.extend(clips);
    }
    summary.subjects = subjects.len();
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_with(f: impl Fn(usize) -> Keypoint2D) -> RawFrame {
        RawFrame {
            frame_index: 0,
            keypoints: std::array::from_fn(f),
        }
    }

    fn seq_from_indices(indices: &[u64]) -> PoseSequence {
        let frames = indices
            .iter()
            .map(|&i| PoseFrame {
                frame_index: i,
                joints: [Keypoint2D::new(i as f64, 0.0, 0.9); NUM_JOINTS],
            })
            .collect();
        PoseSequence {
            frames,
            fps: 30.0,
            subject_id: "s".into(),
            video_id: "v".into(),
            labels: VideoLabels::default(),
        }
    }

    #[test]
    fn neck_is_shoulder_midpoint_with_min_confidence() {
        let raw = raw_with(|i| match i {
            coco::L_SHOULDER => Keypoint2D::new(0.0, 0.0, 0.9),
            coco::R_SHOULDER => Keypoint2D::new(2.0, 0.0, 0.7),
            _ => Keypoint2D::default(),
        });
        let f = select_upper_body(&raw);
        assert_eq!(f.joint(JointId::NECK), Keypoint2D::new(1.0, 0.0, 0.7));
        assert_eq!(f.joints.len(), NUM_JOINTS);
    }

    #[test]
    fn selection_maps_coco_indices() {
        let raw = raw_with(|i| Keypoint2D::new(i as f64, 0.0, 1.0));
        let f = select_upper_body(&raw);
        let xs: Vec<f64> = f.joints.iter().map(|k| k.x).collect();
        assert_eq!(xs, vec![5.5, 6.0, 8.0, 10.0, 5.0, 7.0, 9.0, 12.0, 11.0]);
    }

    #[test]
    fn normalize_example() {
        let mut joints = [Keypoint2D::new(5.0, 5.0, 0.5); NUM_JOINTS];
        joints[0] = Keypoint2D::new(2.0, 2.0, 0.3);
        joints[7] = Keypoint2D::new(1.0, 1.0, 0.3);
        joints[8] = Keypoint2D::new(3.0, 3.0, 0.3);
        let out = normalize_pose(&PoseFrame {
            frame_index: 0,
            joints,
        });
        assert_eq!(out.joint(JointId::NECK), Keypoint2D::new(0.0, 0.0, 0.3));
        assert_eq!(out.joints[1], Keypoint2D::new(3.0, 3.0, 0.5));
    }

    #[test]
    fn centered_frame_is_unchanged() {
        let mut joints = [Keypoint2D::new(4.0, -1.0, 0.5); NUM_JOINTS];
        joints[0] = Keypoint2D::new(0.0, 0.0, 0.5);
        joints[7] = Keypoint2D::new(-1.0, 2.0, 0.5);
        joints[8] = Keypoint2D::new(1.0, -2.0, 0.5);
        let f = PoseFrame {
            frame_index: 3,
            joints,
        };
        assert_eq!(normalize_pose(&f), f);
    }

    #[test]
    fn slicing_examples() {
        let s = seq_from_indices(&(0..250).collect::<Vec<_>>());
        assert_eq!(slice_clips(&s, 100).unwrap().len(), 2);

        let mut idx: Vec<u64> = (0..99).collect();
        idx.extend(200..320);
        let clips = slice_clips(&seq_from_indices(&idx), 100).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].start_frame, 200);

        let s = seq_from_indices(&(0..100).collect::<Vec<_>>());
        let clips = slice_clips(&s, 100).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].features.len(), 100 * NUM_JOINTS * CHANNELS);

        assert!(slice_clips(&s, 0).is_err());
        assert!(slice_clips(&seq_from_indices(&[]), 100).unwrap().is_empty());
    }

    #[test]
    fn invisible_frames_split_runs() {
        let mut s = seq_from_indices(&(0..200).collect::<Vec<_>>());
        for j in &mut s.frames[150].joints {
            j.c = 0.01;
        }
        let runs = visible_runs(&s);
        assert_eq!(runs, vec![0..150, 151..200]);
        assert_eq!(slice_clips(&s, 100).unwrap().len(), 1);
    }

    #[test]
    fn rating_merge_and_grouping() {
        assert_eq!(merge_hand_ratings(Some(2), Some(3)).unwrap(), 3);
        assert_eq!(merge_hand_ratings(Some(0), Some(0)).unwrap(), 0);
        assert_eq!(merge_hand_ratings(Some(7), None).unwrap(), 7);
        assert!(matches!(
            merge_hand_ratings(None, None),
            Err(Error::MissingLabel(_))
        ));

        assert_eq!(group_ratings(5, RatingScheme::ThreePlus), Some(2));
        assert_eq!(group_ratings(5, RatingScheme::ThreeOnly), None);
        assert_eq!(group_ratings(1, RatingScheme::ThreePlus), Some(0));
        assert_eq!(group_ratings(3, RatingScheme::ThreeOnly), Some(2));
        assert_eq!(group_ratings(0, RatingScheme::ThreeOnly), None);
        assert_eq!(group_ratings(0, RatingScheme::ThreePlus), None);
    }

    #[test]
    fn tremor_type_codes_round_trip() {
        for code in 0..7 {
            let t = TremorType::from_code(code).unwrap();
            assert_eq!(t.code(), code);
            assert_eq!(t.to_string().parse::<TremorType>().unwrap(), t);
        }
        assert!(TremorType::from_code(7).is_none());
    }

    fn arb_frame() -> impl Strategy<Value = PoseFrame> {
        prop::array::uniform9((-500.0..500.0f64, -500.0..500.0f64, 0.0..=1.0f64)).prop_map(
            |joints| PoseFrame {
                frame_index: 0,
                joints: joints.map(|(x, y, c)| Keypoint2D::new(x, y, c)),
            },
        )
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(f in arb_frame()) {
            let once = normalize_pose(&f);
            let twice = normalize_pose(&once);
            for (a, b) in once.joints.iter().zip(&twice.joints) {
                prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
                prop_assert_eq!(a.c, b.c);
            }
        }

        #[test]
        fn normalization_is_translation_invariant(
            f in arb_frame(), tx in -1e3..1e3f64, ty in -1e3..1e3f64
        ) {
            let mut moved = f;
            for kp in &mut moved.joints {
                kp.x += tx;
                kp.y += ty;
            }
            let a = normalize_pose(&f);
            let b = normalize_pose(&moved);
            for (p, q) in a.joints.iter().zip(&b.joints) {
                prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
            }
        }

        #[test]
        fn clip_count_matches_runs(gaps in prop::collection::vec(0u64..3, 1..400)) {
            // gap of 0 keeps consecutive indices, anything else breaks the run
            let mut idx = Vec::new();
            let mut next = 0u64;
            for g in &gaps {
                next += g;
                idx.push(next);
                next += 1;
            }
            let s = seq_from_indices(&idx);
            let expected: usize = visible_runs(&s).iter().map(|r| r.len() / 10).sum();
            let clips = slice_clips(&s, 10).unwrap();
            prop_assert_eq!(clips.len(), expected);
            for c in &clips {
                // no clip crosses a gap: the x channel encodes the frame index
                let first = c.value(0, JointId::NECK, 0);
                for t in 0..10 {
                    prop_assert_eq!(c.value(t, JointId::NECK, 0), first + t as f64);
                }
            }
        }

        #[test]
        fn merge_is_commutative_and_dominating(a in 0u8..8, b in 0u8..8) {
            let m = merge_hand_ratings(Some(a), Some(b)).unwrap();
            prop_assert_eq!(m, merge_hand_ratings(Some(b), Some(a)).unwrap());
            prop_assert!(m >= a && m >= b);
        }

        #[test]
        fn selection_ignores_head_and_legs(
            noise in prop::collection::vec(-1e3..1e3f64, 30)
        ) {
            let base = raw_with(|i| Keypoint2D::new(i as f64, 2.0 * i as f64, 0.5));
            let mut perturbed = base.clone();
            let ignored = [0usize, 1, 2, 3, 4, 13, 14, 15, 16];
            for (n, &k) in ignored.iter().enumerate() {
                perturbed.keypoints[k].x = noise[2 * n];
                perturbed.keypoints[k].y = noise[2 * n + 1];
            }
            prop_assert_eq!(select_upper_body(&base), select_upper_body(&perturbed));
        }
    }
}
