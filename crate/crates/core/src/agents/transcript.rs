use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::llm::{resolve_attempts, Attempt};
use crate::agents::{Decision, DecisionRequest, FeedbackAgent};
use crate::error::{Error, Result};

/// One recorded request attempt of an LLM-backed run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub user_id: String,
    pub iteration: usize,
    pub item_id: String,
    pub attempt: usize,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

impl TranscriptEntry {
    fn as_attempt(&self) -> Attempt {
        Attempt {
            response: self.response.clone(),
            error: self.error.clone(),
        }
    }
}

pub fn save_transcript(entries: &[TranscriptEntry], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for entry in entries {
        serde_json::to_writer(&mut writer, entry)?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_transcript(path: &Path) -> Result<Vec<TranscriptEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(entries)
}

type Key = (String, usize, String);

/// Replays recorded LLM replies offline, resolving each decision exactly as
/// the live agent did.
#[derive(Debug, Clone, Default)]
pub struct TranscriptAgent {
    replies: HashMap<Key, Vec<Attempt>>,
}

impl TranscriptAgent {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut replies: HashMap<Key, Vec<(usize, Attempt)>> = HashMap::new();
        for entry in entries {
            let key = (
                entry.user_id.clone(),
                entry.iteration,
                entry.item_id.clone(),
            );
            replies
                .entry(key)
                .or_default()
                .push((entry.attempt, entry.as_attempt()));
        }
        let replies = replies
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_by_key(|(attempt, _)| *attempt);
                (k, v.into_iter().map(|(_, a)| a).collect())
            })
            .collect();
        TranscriptAgent { replies }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(TranscriptAgent::new(load_transcript(path)?))
    }
}

impl FeedbackAgent for TranscriptAgent {
    fn decide(&self, request: &DecisionRequest<'_>, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        let key = (
            request.profile.user_id.clone(),
            request.iteration,
            request.item.item_id.clone(),
        );
        let attempts = self.replies.get(&key).ok_or_else(|| {
            Error::CorruptLog(format!(
                "no transcript entry for user {} iteration {} item {}",
                key.0, key.1, key.2
            ))
        })?;
        Ok(resolve_attempts(attempts))
    }
}
