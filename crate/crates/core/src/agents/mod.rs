//! User agents: given a profile, a watch history and one recommended item,
//! decide a feedback action.
//!
//! Three backends implement [`FeedbackAgent`]:
//!
//! - [`RuleAgent`], a deterministic persona model driven by a seeded stream;
//! - [`LlmAgent`], which prompts a chat-completion endpoint;
//! - [`TranscriptAgent`], which replays the responses an `LlmAgent` recorded.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{VideoItem, LEVELS};
use crate::error::{Error, Result};
use crate::personas::UserProfile;

mod llm;
mod prompt;
mod rule;
mod transcript;

pub use llm::{
    llm_decide, Attempt, ChatEndpoint, LlmAgent, LlmConfig, LlmOutcome, ENV_API_KEY, ENV_BASE_URL,
    ENV_MODEL, SYSTEM_MESSAGE,
};
pub use prompt::{build_prompt, parse_response};
pub use rule::{affinity, feedback_for_draw, rule_decide, RuleAgent};
pub use transcript::{load_transcript, save_transcript, TranscriptAgent, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackType {
    JustWatch,
    WatchAndLike,
    WatchAndComment,
    WatchAndCollect,
    Skip,
    Dislike,
}

impl FeedbackType {
    pub const ALL: [FeedbackType; 6] = [
        FeedbackType::JustWatch,
        FeedbackType::WatchAndLike,
        FeedbackType::WatchAndComment,
        FeedbackType::WatchAndCollect,
        FeedbackType::Skip,
        FeedbackType::Dislike,
    ];

    /// Label used in prompts and model responses.
    pub fn label(self) -> &'static str {
        match self {
            FeedbackType::JustWatch => "JUST WATCH",
            FeedbackType::WatchAndLike => "WATCH AND LIKE",
            FeedbackType::WatchAndComment => "WATCH AND COMMENT",
            FeedbackType::WatchAndCollect => "WATCH AND COLLECT",
            FeedbackType::Skip => "SKIP",
            FeedbackType::Dislike => "DISLIKE",
        }
    }

    pub fn is_positive(self) -> bool {
        !matches!(self, FeedbackType::Skip | FeedbackType::Dislike)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeedbackType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeedbackType {
    type Err = Error;

    /// Case-insensitive; spaces and underscores are interchangeable.
    fn from_str(s: &str) -> Result<Self> {
        let normalized = s
            .trim()
            .replace('_', " ")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_ascii_uppercase();
        FeedbackType::ALL
            .into_iter()
            .find(|f| f.label() == normalized)
            .ok_or_else(|| Error::UnknownFeedback(s.to_string()))
    }
}

/// One agent response to one shown item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub user_id: String,
    pub item_id: String,
    pub iteration: usize,
    pub feedback: FeedbackType,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub item_id: String,
    pub summary: String,
    pub categories: [String; LEVELS],
    pub feedback: FeedbackType,
}

impl HistoryEntry {
    pub fn new(item: &VideoItem, summary: String, feedback: FeedbackType) -> Self {
        HistoryEntry {
            item_id: item.item_id.clone(),
            summary,
            categories: item.categories().map(str::to_string),
            feedback,
        }
    }
}

/// Chronological watch history, truncated to the most recent `window` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentHistory {
    window: usize,
    entries: VecDeque<HistoryEntry>,
}

pub const DEFAULT_HISTORY_WINDOW: usize = 20;

impl AgentHistory {
    pub fn new(window: usize) -> Self {
        AgentHistory {
            window,
            entries: VecDeque::with_capacity(window),
        }
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        if self.window == 0 {
            return;
        }
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub feedback: FeedbackType,
    pub explanation: String,
}

/// Everything an agent may look at when deciding on one item.
#[derive(Debug, Clone, Copy)]
pub struct DecisionRequest<'a> {
    pub profile: &'a UserProfile,
    pub profile_text: &'a str,
    pub history: &'a AgentHistory,
    pub item: &'a VideoItem,
    pub item_summary: &'a str,
    pub iteration: usize,
}

pub trait FeedbackAgent: Send + Sync {
    /// `rng` is the user's own stream; agents that need no randomness ignore it.
    fn decide(&self, request: &DecisionRequest<'_>, rng: &mut ChaCha8Rng) -> Result<Decision>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_and_negative_partition() {
        let positive: Vec<_> = FeedbackType::ALL
            .into_iter()
            .filter(|f| f.is_positive())
            .collect();
        assert_eq!(
            positive,
            [
                FeedbackType::JustWatch,
                FeedbackType::WatchAndLike,
                FeedbackType::WatchAndComment,
                FeedbackType::WatchAndCollect
            ]
        );
    }

    #[test]
    fn parse_labels_loosely() {
        assert_eq!(
            "watch_and_like".parse::<FeedbackType>().unwrap(),
            FeedbackType::WatchAndLike
        );
        assert_eq!(
            " Just  Watch ".parse::<FeedbackType>().unwrap(),
            FeedbackType::JustWatch
        );
        assert!("watch".parse::<FeedbackType>().is_err());
    }

    #[test]
    fn history_keeps_most_recent() {
        let item = VideoItem {
            item_id: "x".into(),
            title: "t".into(),
            tag: String::new(),
            category_l1: "a".into(),
            category_l2: "b".into(),
            category_l3: "c".into(),
            creator_popularity: 0,
        };
        let mut history = AgentHistory::new(3);
        for i in 0..5 {
            let mut it = item.clone();
            it.item_id = format!("v{i}");
            history.push(HistoryEntry::new(&it, String::new(), FeedbackType::Skip));
        }
        let ids: Vec<_> = history.entries().map(|e| e.item_id.as_str()).collect();
        assert_eq!(ids, ["v2", "v3", "v4"]);
    }
}
