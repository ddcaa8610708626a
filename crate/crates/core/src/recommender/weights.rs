use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::FeedbackType;
use crate::error::{Error, Result};
use crate::recommender::TrainSample;

/// Scalar loss weight per feedback type, indexed by [`FeedbackType::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackWeights([f64; 6]);

impl FeedbackWeights {
    /// Weights in the order just watch, like, comment, collect, skip, dislike.
    pub const fn new(weights: [f64; 6]) -> Self {
        FeedbackWeights(weights)
    }

    pub fn get(&self, feedback: FeedbackType) -> f64 {
        self.0[feedback.index()]
    }

    pub fn as_array(&self) -> [f64; 6] {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightStrategy {
    #[default]
    Default,
    /// Watch-or-skip only: every positive action counts as a watch (1) and
    /// every negative one as a skip (0).
    Simple,
    Progressive,
    Reversed,
}

impl WeightStrategy {
    pub const ALL: [WeightStrategy; 4] = [
        WeightStrategy::Default,
        WeightStrategy::Simple,
        WeightStrategy::Progressive,
        WeightStrategy::Reversed,
    ];

    pub fn weights(self) -> FeedbackWeights {
        FeedbackWeights::new(match self {
            WeightStrategy::Default => [1.0, 2.0, 2.0, 2.0, 0.0, -1.0],
            WeightStrategy::Simple => [1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
            WeightStrategy::Progressive => [1.0, 2.0, 3.0, 4.0, -1.0, -2.0],
            WeightStrategy::Reversed => [2.0, 1.0, 1.0, 1.0, 0.0, -1.0],
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightStrategy::Default => "default",
            WeightStrategy::Simple => "simple",
            WeightStrategy::Progressive => "progressive",
            WeightStrategy::Reversed => "reversed",
        }
    }
}

impl fmt::Display for WeightStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightStrategy::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown weight strategy {s:?}")))
    }
}

/// How signed weights become (label, weight) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Positive feedback gets label 1; negative feedback (dislike, or any type
    /// with a negative weight) gets label 0 with the absolute weight.
    #[default]
    LabelFlip,
    /// Label 1 for every record with the signed weight, as written in the
    /// loss. The negative-weight terms are unbounded below apart from the
    /// prediction clamp.
    Literal,
}

/// Converts one feedback event into a training sample. Zero-weight feedback
/// produces no sample.
pub fn feedback_to_sample(
    feedback: FeedbackType,
    user: usize,
    item: usize,
    weights: &FeedbackWeights,
    mode: LabelMode,
) -> Option<TrainSample> {
    let w = weights.get(feedback);
    if w == 0.0 {
        return None;
    }
    let (label, weight) = match mode {
        LabelMode::Literal => (1.0, w),
        LabelMode::LabelFlip => {
            if w < 0.0 || !feedback.is_positive() {
                (0.0, w.abs())
            } else {
                (1.0, w)
            }
        }
    };
    Some(TrainSample {
        user,
        item,
        features: Vec::new(),
        label,
        weight,
        source: feedback,
    })
}
