//! Classification tasks and how video labels map to class indices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{group_ratings, RatingScheme, TremorType, VideoLabels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Task {
    /// Parkinsonian tremor against every other labeled type.
    TypeBinary,
    /// PT, ET, DT, FT, NT.
    TypeMulti,
    /// Ratings 1, 2, 3.
    Rating3,
    /// Ratings 1, 2 and 3 or higher.
    Rating3Plus,
}

const MULTI_ORDER: [TremorType; 5] = [
    TremorType::PT,
    TremorType::ET,
    TremorType::DT,
    TremorType::FT,
    TremorType::NT,
];

impl Task {
    pub const ALL: [Task; 4] = [Task::TypeBinary, Task::TypeMulti, Task::Rating3, Task::Rating3Plus];

    pub fn class_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            Task::TypeBinary => &["non-PT", "PT"],
            Task::TypeMulti => &["PT", "ET", "DT", "FT", "NT"],
            Task::Rating3 => &["1", "2", "3"],
            Task::Rating3Plus => &["1", "2", "3+"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    /// Class treated as positive for binary metrics.
    pub fn positive_class(self) -> Option<usize> {
        match self {
            Task::TypeBinary => Some(1),
            _ => None,
        }
    }

    /// Class index of a video, or `None` when the video is excluded from
    /// this task (uncertain type, missing or out-of-scheme rating).
    pub fn label(self, labels: &VideoLabels) -> Option<usize> {
        match self {
            Task::TypeBinary => match labels.tremor_type {
                TremorType::Other | TremorType::Unlabeled => None,
                TremorType::PT => Some(1),
                _ => Some(0),
            },
            Task::TypeMulti => MULTI_ORDER.iter().position(|&t| t == labels.tremor_type),
            Task::Rating3 => labels
                .merged_rating()
                .ok()
                .and_then(|r| group_ratings(r, RatingScheme::ThreeOnly)),
            Task::Rating3Plus => labels
                .merged_rating()
                .ok()
                .and_then(|r| group_ratings(r, RatingScheme::ThreePlus)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::TypeBinary => "type-binary",
            Task::TypeMulti => "type-multi",
            Task::Rating3 => "rating-3",
            Task::Rating3Plus => "rating-3plus",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown task {s:?}; expected one of type-binary, type-multi, rating-3, rating-3plus"
                ))
            })
    }
}
