//! OpenAI-compatible chat-completions client.

use std::thread;
use std::time::Duration;

use base64::Engine;
use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ModelAdapter, Query, Reply, TransportError};

pub const API_KEY_ENV: &str = "G2M_API_KEY";
pub const API_BASE_ENV: &str = "G2M_API_BASE";
pub const MODEL_ENV: &str = "G2M_MODEL";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

/// Where the transcription instructions go in the chat request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptRole {
    /// Instructions as a system message, image alone in the user turn.
    System,
    /// Instructions and image together in one user turn.
    #[default]
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 6,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Exponential delay before retry `attempt` (1-based), with up to 50%
    /// added jitter.
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << (attempt - 1).min(16));
        let capped = exp.min(self.max_delay);
        capped + capped.mul_f64(rng.gen_range(0.0..0.5))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; requests go to `<base>/chat/completions`.
    pub base_url: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub role: PromptRole,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            role: PromptRole::default(),
        }
    }

    /// Reads `G2M_API_BASE`, `G2M_API_KEY` and `G2M_MODEL`; explicit
    /// arguments win over the environment.
    pub fn from_env(base_url: Option<&str>, model: Option<&str>) -> Result<Self, TransportError> {
        let base = base_url
            .map(str::to_string)
            .or_else(|| std::env::var(API_BASE_ENV).ok())
            .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
        let model = model
            .map(str::to_string)
            .or_else(|| std::env::var(MODEL_ENV).ok())
            .ok_or_else(|| TransportError::Config(format!("no model given and {MODEL_ENV} unset")))?;
        let mut config = Self::new(base, model);
        config.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(config)
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct HttpAdapter {
    config: HttpConfig,
    client: Client,
}

impl HttpAdapter {
    pub fn new(config: HttpConfig) -> Result<Self, TransportError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| TransportError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// Request body for one query: greedy decoding, PNG as a data URL.
    pub fn request_body(&self, query: &Query<'_>) -> Value {
        let png = base64::engine::general_purpose::STANDARD.encode(query.image_png);
        let image = json!({
            "type": "image_url",
            "image_url": {"url": format!("data:image/png;base64,{png}")}
        });
        let messages = match self.config.role {
            PromptRole::User => json!([{
                "role": "user",
                "content": [{"type": "text", "text": query.prompt}, image]
            }]),
            PromptRole::System => json!([
                {"role": "system", "content": query.prompt},
                {"role": "user", "content": [image]}
            ]),
        };
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": 0,
            "max_tokens": query.max_tokens,
        })
    }
}

fn retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

/// Reply text from a chat-completions body. Bodies that are not
/// chat-completions JSON are returned unchanged.
pub fn extract_text(body: &str) -> String {
    let Ok(value) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    let Some(content) = value.pointer("/choices/0/message/content") else {
        return body.to_string();
    };
    match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

impl ModelAdapter for HttpAdapter {
    fn label(&self) -> String {
        format!("http:{}@{}", self.config.model, self.config.base_url)
    }

    fn query(&self, query: &Query<'_>) -> Result<Reply, TransportError> {
        let body = self.request_body(query);
        let policy = self.config.retry;
        let mut rng = rand::thread_rng();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let mut request = self.client.post(self.config.endpoint()).json(&body);
            if let Some(key) = &self.config.api_key {
                request = request.bearer_auth(key);
            }
            let failure = match request.send() {
                Ok(response) => {
                    let status = response.status();
                    let text = response.text().map_err(|e| TransportError::Network {
                        message: e.to_string(),
                        attempts: attempt,
                    });
                    match text {
                        Ok(text) if status.is_success() => {
                            return Ok(Reply {
                                text: extract_text(&text),
                                attempts: attempt,
                            })
                        }
                        Ok(text) => {
                            let err = TransportError::Status {
                                status: status.as_u16(),
                                body: text,
                                attempts: attempt,
                            };
                            if !retryable(status) {
                                return Err(err);
                            }
                            err
                        }
                        Err(err) => err,
                    }
                }
                Err(e) => TransportError::Network {
                    message: e.to_string(),
                    attempts: attempt,
                },
            };
            if attempt >= policy.max_attempts {
                return Err(failure);
            }
            thread::sleep(policy.delay(attempt, &mut rng));
        }
    }
}
