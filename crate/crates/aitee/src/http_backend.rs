//! Chat-completions client for OpenAI-compatible endpoints (llama.cpp,
//! Ollama, vLLM, hosted APIs).

use std::sync::OnceLock;
use std::time::Duration;

use aitee_core::tutor::{BackendDescriptor, BackendError, LlmBackend, PromptBundle, Role, Turn};
use serde_json::{json, Value};

use crate::config::BackendConfig;

pub struct HttpChatBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
    max_context_tokens: usize,
    // built on first use: the blocking client must not be created or
    // dropped on an async worker thread
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpChatBackend {
    pub fn new(cfg: &BackendConfig) -> Self {
        HttpChatBackend {
            url: cfg.url.clone(),
            model: cfg.model.clone(),
            api_key: std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(cfg.timeout_secs),
            max_context_tokens: cfg.max_context_tokens,
            client: OnceLock::new(),
        }
    }
}

/// Request body: system prompt, alternating history, newest message.
pub fn chat_request(model: &str, prompt: &PromptBundle, history: &[Turn]) -> Value {
    let mut messages = vec![json!({"role": "system", "content": prompt.system})];
    for t in history {
        let role = match t.role {
            Role::Student => "user",
            Role::Tutor => "assistant",
        };
        messages.push(json!({"role": role, "content": t.text}));
    }
    messages.push(json!({"role": "user", "content": prompt.user}));
    json!({"model": model, "messages": messages, "stream": false})
}

pub fn parse_chat_response(body: &Value) -> Result<String, BackendError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::BadResponse("missing choices[0].message.content".into()))
}

impl LlmBackend for HttpChatBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: format!("http:{}", self.model),
            max_context_tokens: self.max_context_tokens,
        }
    }

    fn complete(&self, prompt: &PromptBundle, history: &[Turn]) -> Result<String, BackendError> {
        let client = self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(self.timeout)
                .build()
                .unwrap_or_default()
        });
        let mut req = client.post(&self.url).json(&chat_request(&self.model, prompt, history));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(self.timeout)
            } else {
                BackendError::Unavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("HTTP {status}")));
        }
        let body: Value = resp
            .json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        parse_chat_response(&body)
    }
}
