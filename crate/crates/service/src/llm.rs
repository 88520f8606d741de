//! Chat backends for geometry generation: an OpenAI-compatible HTTP client
//! and a scripted stand-in for tests and offline use.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BASE_URL_ENV: &str = "LMDEM_LLM_BASE_URL";
pub const MODEL_ENV: &str = "LMDEM_LLM_MODEL";
pub const API_KEY_ENV: &str = "LMDEM_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Non-success HTTP status from the backend.
    #[error("backend returned HTTP {0}")]
    Status(u16),
    #[error("backend unreachable: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("no backend configured (set {BASE_URL_ENV})")]
    NotConfigured,
    #[error("scripted backend has no replies left")]
    ScriptExhausted,
}

impl BackendError {
    /// HTTP status for display, 0 when there was no response.
    pub fn status(&self) -> u16 {
        match self {
            BackendError::Status(s) => *s,
            _ => 0,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    /// Reply text for the conversation so far.
    fn complete(&self, messages: &[Message]) -> Result<String, BackendError>;
}

/// Base URL, model name and key for an OpenAI-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    /// Not serialized; read from the environment.
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl BackendConfig {
    /// `None` when no base URL is set.
    pub fn from_env() -> Option<Self> {
        let base_url = std::env::var(BASE_URL_ENV).ok().filter(|v| !v.is_empty())?;
        Some(Self {
            base_url,
            model: std::env::var(MODEL_ENV).unwrap_or_else(|_| "gpt-4o".into()),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|v| !v.is_empty()),
        })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// `POST {base}/chat/completions`.
pub struct OpenAiBackend {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl OpenAiBackend {
    pub fn new(config: BackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let body = ChatRequest {
            model: &self.config.model,
            messages,
        };
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => BackendError::Status(code),
            other => BackendError::Transport(other.to_string()),
        })?;
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices in response".into()))
    }
}

/// Replies from a fixed script, in order, and keeps every request it saw.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, u16>>>,
    requests: Mutex<Vec<Vec<Message>>>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().map(|r| Ok(r.into())).collect()),
            requests: Mutex::default(),
        }
    }

    /// Queues a reply.
    pub fn push(&self, reply: impl Into<String>) {
        self.replies.lock().unwrap().push_back(Ok(reply.into()));
    }

    /// Queues an HTTP failure.
    pub fn push_status(&self, status: u16) {
        self.replies.lock().unwrap().push_back(Err(status));
    }

    pub fn requests(&self) -> Vec<Vec<Message>> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        self.requests.lock().unwrap().push(messages.to_vec());
        match self.replies.lock().unwrap().pop_front() {
            Some(Ok(reply)) => Ok(reply),
            Some(Err(status)) => Err(BackendError::Status(status)),
            None => Err(BackendError::ScriptExhausted),
        }
    }
}

/// Stands in when no backend is configured.
pub struct Unconfigured;

impl ChatBackend for Unconfigured {
    fn complete(&self, _: &[Message]) -> Result<String, BackendError> {
        Err(BackendError::NotConfigured)
    }
}

/// Contents of the first ```-fenced block, without the info string.
pub fn extract_fenced_block(text: &str) -> Option<String> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    let block = body[..end].trim_end_matches([' ', '\t']);
    let block = block.strip_suffix('\n').unwrap_or(block);
    (!block.trim().is_empty()).then(|| block.to_string() + "\n")
}
