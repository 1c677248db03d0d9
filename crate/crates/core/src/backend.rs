//! Generation backends.
//!
//! [`MockBackend`] decodes token by token with a [`ScriptedPolicy`] standing
//! in for the model, and can apply a LogitMatch mask at every step. The HTTP
//! backend (feature `http`) talks to OpenAI-compatible chat endpoints and has
//! no access to logits, so it only serves unconstrained strategies.

#[cfg(feature = "http")]
mod http;
mod mock;
mod policy;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::logitmatch::{LogitMatch, Mode};
use crate::span::RawPrediction;
use crate::strategies::PromptBundle;
use crate::tokenmodel::TokenId;

#[cfg(feature = "http")]
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use mock::{verify_trace, MockBackend, TraceError};
pub use policy::{hostility, ScriptedPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: Option<u32>,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for DecodingParams {
    /// Greedy decoding.
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            top_k: None,
            max_tokens: 1024,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub enum Constraint {
    #[default]
    None,
    /// Every step is masked by this engine, starting from its initial state.
    LogitMatch(Arc<LogitMatch>),
}

impl Constraint {
    pub fn is_none(&self) -> bool {
        matches!(self, Constraint::None)
    }
}

#[derive(Clone, Debug)]
pub struct GenerationRequest {
    pub example_id: String,
    /// Strategy tag recorded on the prediction.
    pub strategy: String,
    pub prompt: PromptBundle,
    pub decoding: DecodingParams,
    pub constraint: Constraint,
}

/// One decode step as recorded by the mock backend.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    /// Engine mode before the step; `None` when unconstrained.
    pub mode: Option<Mode>,
    pub allowed_count: usize,
    pub chosen_token: TokenId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Generation {
    pub output_text: String,
    /// Emitted token ids; empty when the backend only reports a count.
    pub tokens: Vec<TokenId>,
    pub token_count: usize,
    pub truncated: bool,
    /// Empty for backends without per-step access.
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend `{0}` cannot apply per-step masks")]
    Unsupported(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("scripted token {token} at step {step} is not allowed by the mask")]
    ScriptRejected { step: usize, token: TokenId },
    #[error("transport error: {0}")]
    Transport(String),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn supports_masks(&self) -> bool;

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError>;
}

/// Rejects requests a backend cannot serve before anything is sent.
pub fn check_request(backend: &dyn Backend, request: &GenerationRequest) -> Result<(), BackendError> {
    if request.decoding.max_tokens == 0 {
        return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
    }
    if !request.constraint.is_none() && !backend.supports_masks() {
        return Err(BackendError::Unsupported(backend.name().to_string()));
    }
    Ok(())
}

/// Runs one request. Transport failures become a prediction with `error`
/// set; configuration problems are returned as errors.
pub fn generate(
    backend: &dyn Backend,
    request: &GenerationRequest,
) -> Result<(RawPrediction, Vec<TraceStep>), BackendError> {
    check_request(backend, request)?;
    let mut prediction = RawPrediction {
        example_id: request.example_id.clone(),
        strategy: request.strategy.clone(),
        ..RawPrediction::default()
    };
    match backend.generate(request) {
        Ok(g) => {
            prediction.output_text = g.output_text;
            prediction.token_count = g.token_count;
            prediction.truncated = g.truncated;
            Ok((prediction, g.trace))
        }
        Err(BackendError::Transport(message)) => {
            prediction.error = Some(message);
            Ok((prediction, Vec::new()))
        }
        Err(e) => Err(e),
    }
}
