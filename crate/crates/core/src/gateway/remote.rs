//! Chat-completion provider over HTTP.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::frontend::MethodSnippet;

use super::{GatewayError, IntentionProvider, ProviderConfig, API_KEY_VAR};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

/// Earliest instant the next remote request may start, shared by every
/// provider in the process.
static NEXT_SLOT: Mutex<Option<Instant>> = Mutex::new(None);

fn wait_for_slot(rpm: u32) {
    let interval = Duration::from_secs(60) / rpm.max(1);
    let start = {
        let mut next = NEXT_SLOT.lock().unwrap_or_else(|e| e.into_inner());
        let now = Instant::now();
        let start = next.map_or(now, |t| t.max(now));
        *next = Some(start + interval);
        start
    };
    let now = Instant::now();
    if start > now {
        thread::sleep(start - now);
    }
}

pub struct RemoteProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    attempts: u32,
    initial_backoff: Duration,
    requests_per_minute: Option<u32>,
}

impl RemoteProvider {
    /// Builds the provider, reading the credential from the environment.
    pub fn from_config(config: &ProviderConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            return Err(GatewayError::Config(format!("{API_KEY_VAR} is not set")));
        }
        Self::new(config, api_key)
    }

    pub fn new(config: &ProviderConfig, api_key: Option<String>) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            api_key,
            attempts: config.max_retries.max(1),
            initial_backoff: Duration::from_millis(config.initial_backoff_ms),
            requests_per_minute: config.requests_per_minute,
        })
    }

    fn send(&self, request_id: &str, prompt: &str) -> Result<Attempt, String> {
        if let Some(rpm) = self.requests_per_minute {
            wait_for_slot(rpm);
        }
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: 0.0,
        };
        let mut req = self
            .client
            .post(&self.endpoint)
            .header("X-Request-Id", request_id)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.text().map_err(|e| e.to_string())?;
        if status.is_success() {
            Ok(Attempt::Done(text))
        } else if status.is_server_error() || status.as_u16() == 429 {
            Err(format!("HTTP {status}"))
        } else {
            Ok(Attempt::Rejected(format!("HTTP {status}: {}", text.trim())))
        }
    }
}

enum Attempt {
    Done(String),
    Rejected(String),
}

impl IntentionProvider for RemoteProvider {
    fn complete(&self, snippet: &MethodSnippet, prompt: &str) -> Result<String, GatewayError> {
        let request_id = uuid::Uuid::new_v4().to_string();
        let mut backoff = self.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.send(&request_id, prompt) {
                Ok(Attempt::Done(body)) => {
                    let parsed: ChatResponse =
                        serde_json::from_str(&body).map_err(|e| GatewayError::Response {
                            request_id: request_id.clone(),
                            message: e.to_string(),
                        })?;
                    return parsed
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .ok_or_else(|| GatewayError::Response {
                            request_id,
                            message: "no message content in response".into(),
                        });
                }
                Ok(Attempt::Rejected(message)) => {
                    return Err(GatewayError::Response {
                        request_id,
                        message,
                    })
                }
                Err(message) => {
                    log::warn!(
                        "request {request_id} for {} attempt {attempt} failed: {message}",
                        snippet.symbol()
                    );
                    last = message;
                    if attempt < self.attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(GatewayError::Transport {
            request_id,
            attempts: self.attempts,
            message: last,
        })
    }
}
