//! OpenAI-compatible chat completions backend.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::backend::{BackendError, Completion, LlmBackend, LlmCall};

pub const API_KEY_ENV: &str = "CMOFORGE_API_KEY";
pub const ENDPOINT_ENV: &str = "CMOFORGE_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    /// Extra tries after a transport error, 429 or 5xx.
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 1.0,
            max_tokens: 256,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LiveError {
    #[error("environment variable {API_KEY_ENV} is not set")]
    MissingApiKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP surface so tests can count requests without a network.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<HttpResponse, String>;
}

#[derive(Debug, Default)]
pub struct UreqTransport;

impl HttpTransport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<HttpResponse, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    api_key: String,
    transport: Box<dyn HttpTransport>,
    calls: AtomicU64,
}

impl LiveBackend {
    pub fn new(config: LiveConfig, api_key: impl Into<String>, transport: Box<dyn HttpTransport>) -> Self {
        Self {
            config,
            api_key: api_key.into(),
            transport,
            calls: AtomicU64::new(0),
        }
    }

    /// Reads the key (and an optional endpoint override) from the environment.
    pub fn from_env(mut config: LiveConfig) -> Result<Self, LiveError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(LiveError::MissingApiKey)?;
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.is_empty() {
                config.endpoint = endpoint;
            }
        }
        Ok(Self::new(config, key, Box::new(UreqTransport)))
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }
}

fn extract(body: &str) -> Result<Completion, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| BackendError::Transport(format!("bad JSON body: {e}")))?;
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))?;
    Ok(Completion {
        text: text.to_string(),
        prompt_tokens: v["usage"]["prompt_tokens"].as_u64(),
        completion_tokens: v["usage"]["completion_tokens"].as_u64(),
    })
}

impl LlmBackend for LiveBackend {
    fn complete(&self, call: &LlmCall<'_>) -> Result<Completion, BackendError> {
        let body = self.request_body(call.prompt);
        let url = self.url();
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let mut last = String::new();
        for i in 0..=self.config.max_retries {
            if i > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (i - 1).min(16)));
            }
            self.calls.fetch_add(1, Ordering::Relaxed);
            match self.transport.post_json(&url, &self.api_key, &body, timeout) {
                Ok(r) if r.status == 200 => return extract(&r.body),
                Ok(r) if r.status == 429 || r.status >= 500 => last = format!("HTTP {}", r.status),
                Ok(r) => return Err(BackendError::Transport(format!("HTTP {}: {}", r.status, r.body))),
                Err(e) => last = e,
            }
            log::debug!("live call failed ({last}), try {} of {}", i + 1, self.config.max_retries + 1);
        }
        Err(BackendError::Transport(last))
    }

    fn identity(&self) -> String {
        format!("live:{}", self.config.model)
    }

    fn live_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
