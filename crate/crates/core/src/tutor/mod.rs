//! Prompt assembly, dialogue sessions and the didactic harness.

pub mod backend;
pub mod harness;
pub mod prompts;
pub mod session;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{BackendDescriptor, BackendError, LlmBackend};
pub use prompts::{assemble_description_prompt, assemble_tutor_system_prompt, DescriptionMode, PromptBundle};
pub use session::{respond, DialogueSession, Role, SessionContext, SessionEvent, Turn};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TutorError {
    #[error("few-shot count must be 1 to {max}, got {0}", max = prompts::MAX_SHOTS)]
    BadShotCount(usize),
    #[error("unknown description mode `{0}`")]
    BadMode(String),
    #[error("message is empty")]
    EmptyMessage,
    #[error("the tutor has not answered the previous message yet")]
    TurnOrder,
    #[error("prompt needs {needed} tokens, backend allows {limit}")]
    ContextOverflow { needed: usize, limit: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("session log: {0}")]
    CorruptLog(String),
    #[error("dialogue script line {line}: {message}")]
    BadScript { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TutorConfig {
    /// Answer language named in the language guideline.
    pub language: String,
    pub description_mode: DescriptionMode,
}

impl Default for TutorConfig {
    fn default() -> Self {
        TutorConfig {
            language: prompts::DEFAULT_LANGUAGE.to_string(),
            description_mode: DescriptionMode::default(),
        }
    }
}
