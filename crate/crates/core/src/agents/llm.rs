//! Chat-completion backed agent.
//!
//! Requests use the common `messages` schema: a fixed system message plus the
//! decision prompt as the single user message, POSTed to
//! `{base_url}/chat/completions`. The reply text is read from
//! `choices[0].message.content`.

use std::sync::Mutex;
use std::time::Duration;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::prompt::{build_prompt, parse_response};
use crate::agents::transcript::TranscriptEntry;
use crate::agents::{Decision, DecisionRequest, FeedbackAgent, FeedbackType};
use crate::error::{Error, Result};

pub const SYSTEM_MESSAGE: &str = "You are role-playing a real user of a short-video app. \
Stay in character, judge each recommended video as that user would, and always answer in \
the exact format you are asked for.";

pub const ENV_API_KEY: &str = "BUBBLESIM_API_KEY";
pub const ENV_BASE_URL: &str = "BUBBLESIM_LLM_BASE_URL";
pub const ENV_MODEL: &str = "BUBBLESIM_LLM_MODEL";

/// Endpoint settings as stored in a run config. Credentials are never part
/// of it: the key is read from the environment variable named by
/// `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Total attempts per decision, including the first.
    pub max_attempts: usize,
    pub backoff_ms: u64,
    /// Upper bound on concurrent user sessions.
    pub max_in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: ENV_API_KEY.into(),
            temperature: 0.7,
            timeout_secs: 60,
            max_attempts: 3,
            backoff_ms: 500,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

pub struct ChatEndpoint {
    base_url: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
    backoff: Duration,
    agent: ureq::Agent,
}

impl ChatEndpoint {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        ChatEndpoint {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            temperature: LlmConfig::default().temperature,
            backoff: Duration::from_millis(LlmConfig::default().backoff_ms),
            agent,
        }
    }

    /// Builds an endpoint from config, letting the environment override the
    /// base URL and model and supply the API key.
    pub fn from_config(config: &LlmConfig) -> Self {
        let base_url = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| config.base_url.clone());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| config.model.clone());
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        ChatEndpoint::new(
            &base_url,
            &model,
            api_key,
            Duration::from_secs(config.timeout_secs),
        )
        .with_temperature(config.temperature)
        .with_backoff(Duration::from_millis(config.backoff_ms))
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }

    /// One request, no retries.
    pub fn complete(&self, system: &str, user: &str) -> Result<String> {
        let body = ChatRequest {
            model: &self.model,
            messages: [
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: user,
                },
            ],
            temperature: self.temperature,
        };
        let mut request = self.agent.post(&self.url());
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Transport("response has no message content".into()))
    }
}

/// Outcome of a single request attempt: the raw reply or the transport error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmOutcome {
    pub decision: Decision,
    pub attempts: Vec<Attempt>,
}

/// First parseable reply wins; otherwise falls back to `Skip`.
pub(crate) fn resolve_attempts<'a>(attempts: impl IntoIterator<Item = &'a Attempt>) -> Decision {
    let mut any_reply = false;
    for attempt in attempts {
        if let Some(text) = &attempt.response {
            any_reply = true;
            if let Ok((feedback, explanation)) = parse_response(text) {
                return Decision {
                    feedback,
                    explanation,
                };
            }
        }
    }
    Decision {
        feedback: FeedbackType::Skip,
        explanation: if any_reply {
            "unparseable".into()
        } else {
            "backend unavailable".into()
        },
    }
}

/// Sends `prompt` up to `max_attempts` times until a reply parses.
///
/// Transport failures back off exponentially; unparseable replies are
/// retried immediately. When every attempt fails the decision is `Skip`.
pub fn llm_decide(endpoint: &ChatEndpoint, prompt: &str, max_attempts: usize) -> LlmOutcome {
    let max_attempts = max_attempts.max(1);
    let mut attempts = Vec::with_capacity(max_attempts);
    let mut transport_failures = 0u32;
    let mut parsed = false;
    for k in 0..max_attempts {
        match endpoint.complete(SYSTEM_MESSAGE, prompt) {
            Ok(text) => {
                parsed = parse_response(&text).is_ok();
                attempts.push(Attempt {
                    response: Some(text),
                    error: None,
                });
                if parsed {
                    break;
                }
                log::debug!("unparseable reply on attempt {}", k + 1);
            }
            Err(e) => {
                log::warn!("llm request failed on attempt {}: {e}", k + 1);
                attempts.push(Attempt {
                    response: None,
                    error: Some(e.to_string()),
                });
                if k + 1 < max_attempts {
                    std::thread::sleep(endpoint.backoff * 2u32.saturating_pow(transport_failures));
                }
                transport_failures += 1;
            }
        }
    }
    let decision = resolve_attempts(&attempts);
    if !parsed {
        log::error!(
            "no usable reply after {} attempts, recording {}",
            attempts.len(),
            decision.feedback
        );
    }
    LlmOutcome { decision, attempts }
}

/// Agent that asks a chat-completion endpoint, recording every attempt.
pub struct LlmAgent {
    endpoint: ChatEndpoint,
    max_attempts: usize,
    transcript: Mutex<Vec<TranscriptEntry>>,
}

impl LlmAgent {
    pub fn new(endpoint: ChatEndpoint, max_attempts: usize) -> Self {
        LlmAgent {
            endpoint,
            max_attempts,
            transcript: Mutex::new(Vec::new()),
        }
    }

    /// Recorded attempts grouped by (iteration, user). The sort is stable, so
    /// each user's entries keep their presentation order.
    pub fn take_transcript(&self) -> Vec<TranscriptEntry> {
        let mut entries = std::mem::take(&mut *self.transcript.lock().expect("transcript lock"));
        entries.sort_by(|a, b| (a.iteration, &a.user_id).cmp(&(b.iteration, &b.user_id)));
        entries
    }
}

impl FeedbackAgent for LlmAgent {
    fn decide(&self, request: &DecisionRequest<'_>, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        let prompt = build_prompt(request.profile_text, request.history, request.item_summary);
        let outcome = llm_decide(&self.endpoint, &prompt, self.max_attempts);
        let mut transcript = self.transcript.lock().expect("transcript lock");
        for (attempt, a) in outcome.attempts.into_iter().enumerate() {
            transcript.push(TranscriptEntry {
                user_id: request.profile.user_id.clone(),
                iteration: request.iteration,
                item_id: request.item.item_id.clone(),
                attempt,
                prompt: prompt.clone(),
                response: a.response,
                error: a.error,
            });
        }
        Ok(outcome.decision)
    }
}
