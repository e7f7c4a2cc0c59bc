//! Service configuration: one TOML file plus `AITEE_*` environment overrides.

use std::path::{Path, PathBuf};

use aitee_core::reconstruct::ReconstructConfig;
use aitee_core::tutor::prompts::MAX_SHOTS;
use aitee_core::tutor::{DescriptionMode, TutorConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: PathBuf,
    pub kb_dir: PathBuf,
    pub data_dir: PathBuf,
    /// Built UI bundle served at `/`. Nothing is served when unset.
    pub ui_dir: Option<PathBuf>,
    pub bind: String,
    pub retrieval_k: usize,
    pub language: String,
    /// `baseline`, `cot`, `cot-fewshot-N` or `cot-fewshot-ctx-N`.
    pub description_mode: String,
    pub backend: BackendConfig,
    pub reconstruct: ReconstructConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Deterministic replies derived from a prompt hash.
    Mock,
    /// Canned replies from `backend.script`.
    Scripted,
    /// OpenAI-style chat-completions endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_context_tokens: usize,
    pub script: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            url: "http://127.0.0.1:11434/v1/chat/completions".into(),
            model: "llama3.1:70b".into(),
            api_key_env: "AITEE_API_KEY".into(),
            timeout_secs: 120,
            max_context_tokens: 8000,
            script: None,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: "models/reference.gnn".into(),
            kb_dir: "kb".into(),
            data_dir: "data/sessions".into(),
            ui_dir: None,
            bind: "127.0.0.1:8080".into(),
            retrieval_k: 1,
            language: "German".into(),
            description_mode: DescriptionMode::default().to_string(),
            backend: BackendConfig::default(),
            reconstruct: ReconstructConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("{var}: {message}")]
    Env { var: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::File {
            path: "<config>".into(),
            message: e.to_string(),
        })
    }

    /// Reads `path` when given, otherwise starts from defaults, then applies
    /// the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::File {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                Self::from_toml(&text).map_err(|e| match e {
                    ConfigError::File { message, .. } => ConfigError::File {
                        path: p.display().to_string(),
                        message,
                    },
                    other => other,
                })?
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let num = |var: &str, v: String| {
            v.parse::<u64>().map_err(|e| ConfigError::Env {
                var: var.to_string(),
                message: e.to_string(),
            })
        };
        if let Some(v) = get("AITEE_MODEL") {
            self.model = v.into();
        }
        if let Some(v) = get("AITEE_KB_DIR") {
            self.kb_dir = v.into();
        }
        if let Some(v) = get("AITEE_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("AITEE_UI_DIR") {
            self.ui_dir = Some(v.into());
        }
        if let Some(v) = get("AITEE_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("AITEE_RETRIEVAL_K") {
            self.retrieval_k = num("AITEE_RETRIEVAL_K", v)? as usize;
        }
        if let Some(v) = get("AITEE_LANGUAGE") {
            self.language = v;
        }
        if let Some(v) = get("AITEE_DESCRIPTION_MODE") {
            self.description_mode = v;
        }
        if let Some(v) = get("AITEE_BACKEND") {
            self.backend.kind = match v.as_str() {
                "mock" => BackendKind::Mock,
                "scripted" => BackendKind::Scripted,
                "http" => BackendKind::Http,
                _ => {
                    return Err(ConfigError::Env {
                        var: "AITEE_BACKEND".into(),
                        message: format!("expected mock, scripted or http, got `{v}`"),
                    })
                }
            };
        }
        if let Some(v) = get("AITEE_BACKEND_URL") {
            self.backend.url = v;
        }
        if let Some(v) = get("AITEE_BACKEND_MODEL") {
            self.backend.model = v;
        }
        if let Some(v) = get("AITEE_BACKEND_SCRIPT") {
            self.backend.script = Some(v.into());
        }
        if let Some(v) = get("AITEE_BACKEND_TIMEOUT") {
            self.backend.timeout_secs = num("AITEE_BACKEND_TIMEOUT", v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.retrieval_k == 0 {
            return Err(ConfigError::Invalid("retrieval_k must be at least 1".into()));
        }
        self.description_mode()?;
        if self.backend.kind == BackendKind::Scripted && self.backend.script.is_none() {
            return Err(ConfigError::Invalid("scripted backend needs backend.script".into()));
        }
        Ok(())
    }

    pub fn description_mode(&self) -> Result<DescriptionMode, ConfigError> {
        let mode: DescriptionMode = self
            .description_mode
            .parse()
            .map_err(|e: aitee_core::tutor::TutorError| ConfigError::Invalid(e.to_string()))?;
        if mode != DescriptionMode::Baseline && mode != DescriptionMode::Cot && !(1..=MAX_SHOTS).contains(&mode.shots()) {
            return Err(ConfigError::Invalid(format!("few-shot count must be 1 to {MAX_SHOTS}")));
        }
        Ok(mode)
    }

    pub fn tutor(&self) -> TutorConfig {
        TutorConfig {
            language: self.language.clone(),
            description_mode: self.description_mode().unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn defaults_survive_empty_file() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
        Config::default().validate().unwrap();
    }

    #[test]
    fn file_then_env() {
        let mut cfg = Config::from_toml(
            r#"
            retrieval_k = 3
            language = "English"
            [backend]
            kind = "http"
            model = "qwen2.5:72b"
            [reconstruct]
            tau0 = 12.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.retrieval_k, 3);
        assert_eq!(cfg.backend.kind, BackendKind::Http);
        assert_eq!(cfg.backend.timeout_secs, 120);
        assert_eq!(cfg.reconstruct.tau0, 12.0);
        let env = HashMap::from([("AITEE_RETRIEVAL_K", "2"), ("AITEE_BACKEND", "mock")]);
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.retrieval_k, 2);
        assert_eq!(cfg.backend.kind, BackendKind::Mock);
        assert_eq!(cfg.language, "English");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("nonsense = 1").is_err());
        let mut cfg = Config::default();
        assert!(cfg.apply_env(|k| (k == "AITEE_RETRIEVAL_K").then(|| "x".into())).is_err());
        cfg.retrieval_k = 0;
        assert!(cfg.validate().is_err());
        let cfg = Config {
            description_mode: "cot-fewshot-9".into(),
            ..Config::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = Config {
            description_mode: "poetry".into(),
            ..Config::default()
        };
        assert!(cfg.validate().is_err());
    }
}
