//! Model backends behind one blocking interface.
//!
//! A [`ModelClient`] turns [`PromptParts`] into response text. Requests also
//! carry an optional ground-truth [`Hint`]; remote backends ignore it, while the
//! scripted oracle answers from it alone.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::builder::OptionSlot;
use crate::corpus::Concept;
use crate::prompt::PromptParts;

mod moe;
mod oracle;
mod remote;

pub use moe::{moe_vote, MoeOutcome, Vote};
pub use oracle::{OracleClient, OracleConfig};
pub use remote::{ImageMode, RemoteClient, RemoteConfig, TokenBucket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub max_images: usize,
    pub supports_system_text: bool,
}

/// Ground truth for the current call, visible only to test doubles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Hint {
    Association { correct: OptionSlot },
    Deduction { shared: BTreeSet<Concept>, vocabulary: Vec<Concept> },
    Verify { present: bool },
}

/// Which call this is within a run; seeds the oracle's per-call randomness so
/// answers do not depend on scheduling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CallKey {
    pub round: u64,
    pub step: u64,
    pub phase: u32,
    pub attempt: u32,
}

impl CallKey {
    pub const ASSOCIATION: u32 = 0;
    pub const DEDUCTION: u32 = 1;
    pub const VERIFY: u32 = 2;

    pub fn new(round: u64, step: u64, phase: u32) -> Self {
        Self { round, step, phase, attempt: 0 }
    }

    pub fn retry(self) -> Self {
        Self { attempt: self.attempt + 1, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub parts: PromptParts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<Hint>,
    pub key: CallKey,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("request needs {images} images but backend accepts at most {max}")]
    TooManyImages { images: usize, max: usize },
    #[error("deadline of {0:?} exceeded")]
    Timeout(Duration),
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("transport failure: {message}")]
    Transport { message: String, retryable: bool },
    #[error("backend refused request ({status}): {message}")]
    Refused { status: u16, message: String },
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl ModelError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ModelError::Timeout(_) | ModelError::RateLimited { .. } => true,
            ModelError::Transport { retryable, .. } => *retryable,
            _ => false,
        }
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            ModelError::RateLimited { retry_after } => *retry_after,
            _ => None,
        }
    }
}

pub trait ModelClient: Send + Sync {
    fn id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// Returns the backend's text. Implementations must give up by `deadline`.
    fn complete(&self, request: &CompletionRequest, deadline: Duration) -> Result<String, ModelError>;
}

/// Checks the image budget, then delegates to the client.
pub fn complete(
    client: &dyn ModelClient,
    request: &CompletionRequest,
    deadline: Duration,
) -> Result<String, ModelError> {
    let max = client.capabilities().max_images;
    let images = request.parts.images.len();
    if images > max {
        return Err(ModelError::TooManyImages { images, max });
    }
    client.complete(request, deadline)
}

type Script = dyn Fn(&CompletionRequest) -> Result<String, ModelError> + Send + Sync;

/// Client driven by a closure; used for verifier and fault-injection tests.
pub struct ScriptedClient {
    id: String,
    max_images: usize,
    script: Box<Script>,
    calls: std::sync::atomic::AtomicUsize,
}

impl ScriptedClient {
    pub fn new<F>(id: &str, script: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, ModelError> + Send + Sync + 'static,
    {
        Self {
            id: id.to_string(),
            max_images: 8,
            script: Box::new(script),
            calls: std::sync::atomic::AtomicUsize::new(0),
        }
    }

    /// Always answers `text`.
    pub fn constant(id: &str, text: &str) -> Self {
        let text = text.to_string();
        Self::new(id, move |_| Ok(text.clone()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl ModelClient for ScriptedClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            max_images: self.max_images,
            supports_system_text: false,
        }
    }

    fn complete(&self, request: &CompletionRequest, _deadline: Duration) -> Result<String, ModelError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        (self.script)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_budget_checked_before_call() {
        let client = ScriptedClient::constant("s", "Image1");
        let parts = PromptParts::new(
            String::new(),
            "q".into(),
            "<image>".repeat(9),
            "o".into(),
            (0..9).map(|i| format!("{i}.jpg")).collect(),
        )
        .unwrap();
        let req = CompletionRequest { parts, hint: None, key: CallKey::default() };
        assert_eq!(
            complete(&client, &req, Duration::from_secs(1)),
            Err(ModelError::TooManyImages { images: 9, max: 8 })
        );
        assert_eq!(client.calls(), 0);
    }

    #[test]
    fn retry_metadata() {
        let e = ModelError::RateLimited { retry_after: Some(Duration::from_secs(2)) };
        assert!(e.is_retryable());
        assert_eq!(e.retry_after(), Some(Duration::from_secs(2)));
        assert!(!ModelError::Refused { status: 400, message: String::new() }.is_retryable());
    }
}
