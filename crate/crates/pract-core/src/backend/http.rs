//! Blocking HTTP client for chat-completion endpoints.
//!
//! Speaks the standard wire shape: a `messages` array in the request, the
//! first choice's message content out. Retries transient failures with
//! exponential backoff; 4xx statuses other than 429 are never retried.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendConfig, BackendError, ChatMessage, API_KEY_ENV};

pub struct HttpBackend {
    endpoint_url: String,
    model_name: String,
    temperature: f64,
    max_output_tokens: u32,
    retries: u32,
    backoff_ms: u64,
    api_key: String,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl HttpBackend {
    /// Builds a client, reading the API key from `PRACT_API_KEY`.
    pub fn from_env(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| BackendError::MissingApiKey)?;
        Self::with_api_key(cfg, api_key)
    }

    pub fn with_api_key(cfg: &BackendConfig, api_key: String) -> Result<Self, BackendError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Network {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self {
            endpoint_url: cfg.endpoint_url.clone().expect("validated"),
            model_name: cfg.model_name.clone().expect("validated"),
            temperature: cfg.temperature,
            max_output_tokens: cfg.max_output_tokens,
            retries: cfg.retries,
            backoff_ms: cfg.backoff_ms,
            api_key,
            client,
            calls: AtomicU64::new(0),
        })
    }

    fn request_once(&self, body: &serde_json::Value) -> Result<String, AttemptError> {
        let response = self
            .client
            .post(&self.endpoint_url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;

        let status = response.status();
        let text = response
            .text()
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;

        if !status.is_success() {
            let code = status.as_u16();
            let retryable = code == 429 || !status.is_client_error();
            return if retryable {
                Err(AttemptError::RetryableStatus { code, body: text })
            } else {
                Err(AttemptError::Fatal { code, body: text })
            };
        }

        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Malformed(format!("{e}; body: {text}")))?;
        parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| AttemptError::Malformed("response has no choices[0].message.content".into()))
    }
}

enum AttemptError {
    Retryable(String),
    RetryableStatus { code: u16, body: String },
    Fatal { code: u16, body: String },
    Malformed(String),
}

impl Backend for HttpBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if messages.is_empty() {
            return Err(BackendError::EmptyMessages);
        }
        let body = json!({
            "model": self.model_name,
            "messages": messages
                .iter()
                .map(|m| json!({"role": m.role.to_string(), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        });

        let max_attempts = self.retries + 1;
        let mut last: Option<AttemptError> = None;
        for attempt in 0..max_attempts {
            if attempt > 0 {
                let delay = self.backoff_ms.saturating_mul(1 << (attempt - 1).min(8));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.request_once(&body) {
                Ok(text) => return Ok(text),
                Err(AttemptError::Fatal { code, body }) => {
                    return Err(BackendError::Status {
                        status: code,
                        attempts: attempt + 1,
                        body,
                    })
                }
                Err(AttemptError::Malformed(m)) => {
                    return Err(BackendError::MalformedResponse(m))
                }
                Err(e) => last = Some(e),
            }
        }
        match last {
            Some(AttemptError::RetryableStatus { code, body }) => Err(BackendError::Status {
                status: code,
                attempts: max_attempts,
                body,
            }),
            Some(AttemptError::Retryable(message)) => Err(BackendError::Network {
                attempts: max_attempts,
                message,
            }),
            _ => Err(BackendError::Network {
                attempts: max_attempts,
                message: "no attempt recorded".into(),
            }),
        }
    }

    fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}
