//! Service layer: configuration, the shared engine, the HTTP API, the
//! chat-completions backend and the command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod http_backend;
pub mod store;

pub use config::Config;
pub use engine::Engine;
pub use error::{ApiError, EngineError};
