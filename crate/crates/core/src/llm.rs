//! Chat-completion client for the optional LLM backend.

use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

pub const LLM_URL_ENV: &str = "ROADCHAT_LLM_URL";
pub const LLM_MODEL_ENV: &str = "ROADCHAT_LLM_MODEL";
pub const LLM_API_KEY_ENV: &str = "ROADCHAT_LLM_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("LLM endpoint returned an unexpected body: {0}")]
    BadResponse(String),
}

/// Anything that can answer one system+user exchange with text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl LlmConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        LlmConfig {
            base_url: base_url.into(),
            model: "default".into(),
            api_key: None,
            timeout: Duration::from_secs(60),
        }
    }

    /// Reads the endpoint from the environment; `None` when no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(LLM_URL_ENV).ok().filter(|u| !u.is_empty())?;
        let mut cfg = LlmConfig::new(url);
        if let Ok(model) = std::env::var(LLM_MODEL_ENV) {
            cfg.model = model;
        }
        cfg.api_key = std::env::var(LLM_API_KEY_ENV).ok();
        Some(cfg)
    }

    fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpChat {
    config: LlmConfig,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        Ok(HttpChat { config, client })
    }
}

pub fn request_body(model: &str, system: &str, user: &str) -> Value {
    json!({
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    })
}

pub fn reply_text(body: &Value) -> Result<String, LlmError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse(body.to_string()))
}

impl ChatTransport for HttpChat {
    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let mut req = self
            .client
            .post(self.config.endpoint())
            .json(&request_body(&self.config.model, system, user));
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        let body: Value = resp
            .json()
            .map_err(|e| LlmError::BadResponse(e.to_string()))?;
        reply_text(&body)
    }
}
