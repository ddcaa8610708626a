use crate::agents::{AgentHistory, FeedbackType};
use crate::error::{Error, Result};

const FEEDBACK_PREFIX: &str = "FEEDBACK:";
const REASON_PREFIX: &str = "REASON:";

fn option_hint(feedback: FeedbackType) -> &'static str {
    match feedback {
        FeedbackType::JustWatch => "you watch it, but only passively",
        FeedbackType::WatchAndLike => "you watch it and like it",
        FeedbackType::WatchAndComment => "you watch it and are engaged enough to comment",
        FeedbackType::WatchAndCollect => {
            "you watch it and save it because it has lasting value to you"
        }
        FeedbackType::Skip => "you skip it",
        FeedbackType::Dislike => "you dislike it",
    }
}

/// Builds the user message for one decision.
///
/// The layout is fixed: profile, history (oldest first), the item, the six
/// options, and the required `FEEDBACK:` / `REASON:` answer format.
pub fn build_prompt(profile_text: &str, history: &AgentHistory, item_summary: &str) -> String {
    let mut out = String::new();
    out.push_str("You are the following user of a short-video platform.\n\n");
    out.push_str("## Your profile\n");
    out.push_str(profile_text.trim_end());
    out.push_str("\n\n## Your recent watch history and feedback (oldest first)\n");
    if history.is_empty() {
        out.push_str("(no videos watched yet)\n");
    }
    for (n, entry) in history.entries().enumerate() {
        out.push_str(&format!(
            "{}. {} -> {}\n",
            n + 1,
            entry.summary.replace('\n', "; "),
            entry.feedback.label()
        ));
    }
    out.push_str("\n## Recommended video\n");
    out.push_str(item_summary.trim_end());
    out.push_str(
        "\n\n## Task\nDecide how you respond to this video given its content and your \
         demographics, motivation, initial interests and watch history. Choose exactly one option:\n",
    );
    for feedback in FeedbackType::ALL {
        out.push_str(&format!(
            "- {}: {}\n",
            feedback.label(),
            option_hint(feedback)
        ));
    }
    out.push_str(
        "\nAnswer with exactly two lines and nothing else:\n\
         FEEDBACK: <one option from the list>\n\
         REASON: <one sentence explaining your choice>\n",
    );
    out
}

fn normalize_label(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Extracts the first `FEEDBACK:` label naming one of the six options and the
/// `REASON:` text. Prefixes are matched case-insensitively anywhere in the
/// text.
pub fn parse_response(text: &str) -> Result<(FeedbackType, String)> {
    // ASCII uppercasing keeps byte offsets aligned with `text`.
    let upper = text.to_ascii_uppercase();
    let mut cursor = 0;
    while let Some(found) = upper[cursor..].find(FEEDBACK_PREFIX) {
        let start = cursor + found + FEEDBACK_PREFIX.len();
        let rest = &upper[start..];
        let end = [rest.find('\n'), rest.find(REASON_PREFIX)]
            .into_iter()
            .flatten()
            .min()
            .unwrap_or(rest.len());
        if let Ok(feedback) = normalize_label(&rest[..end]).parse::<FeedbackType>() {
            let reason = upper[start..]
                .find(REASON_PREFIX)
                .map(|r| {
                    text[start + r + REASON_PREFIX.len()..]
                        .trim_matches(|c: char| c == '*' || c.is_whitespace())
                        .to_string()
                })
                .unwrap_or_default();
            return Ok((feedback, reason));
        }
        cursor = start;
    }
    Err(Error::Unparseable)
}
