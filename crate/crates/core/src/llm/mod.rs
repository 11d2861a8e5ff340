//! Chat-completion backends for planning and perception, with record and
//! replay fixtures so the external path can be tested offline.

mod fixture;
mod remote;
mod scripted;
mod transport;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::{FixtureRecord, FixtureStore, RecordingTransport, ReplayTransport};
pub use remote::{
    extract_json, render_template, RemotePerception, RemotePlanner, PERCEPTION_TEMPLATE, PERCEPTION_TEMPLATE_VERSION,
    PLANNER_TEMPLATE, PLANNER_TEMPLATE_VERSION,
};
pub use scripted::{record_episode, Flaw, ScriptedResponder};
pub use transport::{ChatMessage, ChatRequest, ChatTransport, HttpTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMode {
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub mode: FixtureMode,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<FixtureConfig>,
}

fn default_auth_env() -> String {
    "OPENAI_API_KEY".to_string()
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    1
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            auth_env: default_auth_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            temperature: 0.0,
            fixture: None,
        }
    }

    /// Serves every request from a fixture file; no network.
    pub fn replay(path: impl Into<PathBuf>) -> Self {
        Self {
            fixture: Some(FixtureConfig {
                mode: FixtureMode::Replay,
                path: path.into(),
            }),
            ..Self::new("replay://", "replay")
        }
    }

    pub fn check(&self) -> Result<(), LlmError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(LlmError::Config("timeout must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config("temperature must lie in [0, 2]".into()));
        }
        Ok(())
    }

    /// Builds the transport this configuration describes.
    pub fn transport(&self) -> Result<Box<dyn ChatTransport + Send>, LlmError> {
        self.check()?;
        match &self.fixture {
            Some(FixtureConfig {
                mode: FixtureMode::Replay,
                path,
            }) => Ok(Box::new(ReplayTransport::load(path)?)),
            Some(FixtureConfig {
                mode: FixtureMode::Record,
                path,
            }) => Ok(Box::new(RecordingTransport::new(HttpTransport::from_config(self)?, path))),
            None => Ok(Box::new(HttpTransport::from_config(self)?)),
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("response does not match the schema: {0}")]
    Schema(String),
    #[error("no recorded response for request {0}")]
    CacheMiss(String),
    #[error("fixture file: {0}")]
    Io(#[from] std::io::Error),
}
