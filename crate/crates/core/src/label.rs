//! Class vocabularies shared across modules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Pixel-level binary cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cover {
    Forest,
    NonForest,
}

/// Segment-level reference label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SegmentLabel {
    Forest,
    NonForest,
    Undefined,
}

/// A volunteer answer, and the alphabet of consensus labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Answer {
    Forest,
    NonForest,
    Undefined,
    /// "Segment too small".
    Small,
}

impl Answer {
    pub const ALL: [Answer; 4] = [
        Answer::Forest,
        Answer::NonForest,
        Answer::Undefined,
        Answer::Small,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Forest => "Forest",
            Answer::NonForest => "NonForest",
            Answer::Undefined => "Undefined",
            Answer::Small => "Small",
        }
    }

    /// Whether this answer agrees with a segment reference label.
    pub fn matches(self, reference: SegmentLabel) -> bool {
        Answer::from(reference) == self
    }
}

impl From<Cover> for Answer {
    fn from(c: Cover) -> Self {
        match c {
            Cover::Forest => Answer::Forest,
            Cover::NonForest => Answer::NonForest,
        }
    }
}

impl From<SegmentLabel> for Answer {
    fn from(l: SegmentLabel) -> Self {
        match l {
            SegmentLabel::Forest => Answer::Forest,
            SegmentLabel::NonForest => Answer::NonForest,
            SegmentLabel::Undefined => Answer::Undefined,
        }
    }
}

impl From<Cover> for SegmentLabel {
    fn from(c: Cover) -> Self {
        match c {
            Cover::Forest => SegmentLabel::Forest,
            Cover::NonForest => SegmentLabel::NonForest,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Answer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Forest" => Ok(Answer::Forest),
            "NonForest" => Ok(Answer::NonForest),
            "Undefined" => Ok(Answer::Undefined),
            "Small" => Ok(Answer::Small),
            other => Err(Error::Schema(format!("unknown answer label {other:?}"))),
        }
    }
}

impl fmt::Display for SegmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Answer::from(*self).fmt(f)
    }
}

impl FromStr for SegmentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<Answer>()? {
            Answer::Forest => Ok(SegmentLabel::Forest),
            Answer::NonForest => Ok(SegmentLabel::NonForest),
            Answer::Undefined => Ok(SegmentLabel::Undefined),
            Answer::Small => Err(Error::Schema("\"Small\" is not a reference label".into())),
        }
    }
}

impl fmt::Display for Cover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Answer::from(*self).fmt(f)
    }
}

impl FromStr for Cover {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Forest" => Ok(Cover::Forest),
            "NonForest" => Ok(Cover::NonForest),
            other => Err(Error::Schema(format!("unknown cover label {other:?}"))),
        }
    }
}
