//! Completion backends. HTTP adapters live in the service crate; this module
//! holds the trait and the deterministic mocks.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::prompts::PromptBundle;
use super::session::Turn;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    /// Prompt budget in estimated tokens.
    pub max_context_tokens: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed backend response: {0}")]
    BadResponse(String),
}

pub trait LlmBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// One completion for `prompt` after `history`. `prompt.user` is the
    /// newest message.
    fn complete(&self, prompt: &PromptBundle, history: &[Turn]) -> Result<String, BackendError>;
}

/// Replies with a hash of everything it was sent.
#[derive(Debug, Clone)]
pub struct EchoHashBackend {
    pub max_context_tokens: usize,
}

impl Default for EchoHashBackend {
    fn default() -> Self {
        EchoHashBackend {
            max_context_tokens: 32_000,
        }
    }
}

pub fn prompt_digest(prompt: &PromptBundle, history: &[Turn]) -> String {
    let mut h = Sha256::new();
    h.update(prompt.system.as_bytes());
    h.update([0]);
    for t in history {
        h.update(t.role.as_str().as_bytes());
        h.update([0]);
        h.update(t.text.as_bytes());
        h.update([0]);
    }
    h.update(prompt.user.as_bytes());
    hex::encode(h.finalize())
}

impl LlmBackend for EchoHashBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "mock-echo".into(),
            max_context_tokens: self.max_context_tokens,
        }
    }

    fn complete(&self, prompt: &PromptBundle, history: &[Turn]) -> Result<String, BackendError> {
        Ok(format!("Which step comes next? [{}]", &prompt_digest(prompt, history)[..16]))
    }
}

/// Returns canned replies in order, cycling when the script runs out.
#[derive(Debug)]
pub struct ScriptedBackend {
    replies: Vec<String>,
    next: AtomicUsize,
    pub max_context_tokens: usize,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedBackend {
            replies,
            next: AtomicUsize::new(0),
            max_context_tokens: 32_000,
        }
    }

    /// Script file: one reply per line, `\n` inside a line stands for a
    /// line break, blank lines and `#` comments are skipped.
    pub fn from_script(text: &str) -> Self {
        let replies = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| l.replace("\\n", "\n"))
            .collect();
        Self::new(replies)
    }

    pub fn calls(&self) -> usize {
        self.next.load(Ordering::SeqCst)
    }
}

impl LlmBackend for ScriptedBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "mock-scripted".into(),
            max_context_tokens: self.max_context_tokens,
        }
    }

    fn complete(&self, _prompt: &PromptBundle, _history: &[Turn]) -> Result<String, BackendError> {
        if self.replies.is_empty() {
            return Err(BackendError::Unavailable("empty script".into()));
        }
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        Ok(self.replies[i % self.replies.len()].clone())
    }
}

type ReplyFn = dyn Fn(&PromptBundle, &[Turn]) -> Result<String, BackendError> + Send + Sync;

/// Backend driven by a closure, for tests with known behavior.
pub struct FnBackend {
    name: String,
    f: Box<ReplyFn>,
    pub max_context_tokens: usize,
}

impl FnBackend {
    pub fn new(
        name: &str,
        f: impl Fn(&PromptBundle, &[Turn]) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        FnBackend {
            name: name.to_string(),
            f: Box::new(f),
            max_context_tokens: 32_000,
        }
    }
}

impl LlmBackend for FnBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: self.name.clone(),
            max_context_tokens: self.max_context_tokens,
        }
    }

    fn complete(&self, prompt: &PromptBundle, history: &[Turn]) -> Result<String, BackendError> {
        (self.f)(prompt, history)
    }
}

/// Records every prompt it receives and delegates to an inner backend.
pub struct RecordingBackend<B> {
    pub inner: B,
    log: Mutex<Vec<(PromptBundle, Vec<Turn>)>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<(PromptBundle, Vec<Turn>)> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn descriptor(&self) -> BackendDescriptor {
        self.inner.descriptor()
    }

    fn complete(&self, prompt: &PromptBundle, history: &[Turn]) -> Result<String, BackendError> {
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push((prompt.clone(), history.to_vec()));
        self.inner.complete(prompt, history)
    }
}
