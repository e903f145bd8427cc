//! Text-completion backends: the trait, generation parameters, stop-sequence
//! trimming, and content-addressed cache keys.
//!
//! Submodules provide an HTTP client for completions-style APIs
//! ([`http`]), deterministic mocks for offline runs and tests ([`mock`]),
//! and a persistent response cache ([`cache`]).

pub mod cache;
pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::promptkit::RenderedPrompt;

/// Decoding controls sent with every request.
///
/// `temperature: None` leaves the server default in place; `Some(0.0)` is
/// the greedy preset. `stop` is the per-kind stop sequence and is also used
/// client-side to trim the continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub min_new_tokens: u32,
    pub max_new_tokens: u32,
    pub temperature: Option<f64>,
    pub stop: String,
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            min_new_tokens: 5,
            max_new_tokens: 200,
            temperature: None,
            stop: String::new(),
            seed: None,
        }
    }
}

impl GenerationParams {
    /// Default parameters with the given stop sequence.
    pub fn with_stop(stop: &str) -> Self {
        GenerationParams {
            stop: stop.to_string(),
            ..GenerationParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.min_new_tokens > self.max_new_tokens {
            return Err(BackendError::InvalidParams {
                message: format!(
                    "min_new_tokens {} exceeds max_new_tokens {}",
                    self.min_new_tokens, self.max_new_tokens
                ),
            });
        }
        Ok(())
    }
}

/// One model continuation, before and after stop-trimming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    /// Untruncated continuation as returned by the backend, kept for audit.
    pub raw_text: String,
    /// Continuation cut at the first stop-sequence occurrence.
    pub text: String,
    /// Digest of the prompt text this continuation answers.
    pub prompt_hash: String,
    pub backend_id: String,
    pub latency_ms: u64,
    /// Whether this came from the response cache rather than a live call.
    pub from_cache: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid generation parameters: {message}")]
    InvalidParams { message: String },
    #[error("request failed after {attempts} attempts for prompt {prompt_hash}: {message}")]
    Transport {
        prompt_hash: String,
        attempts: u32,
        message: String,
    },
    #[error("HTTP {status} after {attempts} attempts for prompt {prompt_hash}")]
    HttpStatus {
        prompt_hash: String,
        status: u16,
        attempts: u32,
    },
    #[error("response for prompt {prompt_hash} does not match the completions schema: {message}")]
    SchemaMismatch {
        prompt_hash: String,
        message: String,
    },
    #[error("mock backend has no scripted response for prompt {prompt_hash}")]
    Unscripted { prompt_hash: String },
    #[error("mock oracle does not know item `{item_id}`")]
    UnknownItem { item_id: String },
    #[error(transparent)]
    Cache(#[from] cache::CacheError),
    #[error("backend configuration: {message}")]
    Config { message: String },
}

/// A completion-style model endpoint. Implementations must be safe to call
/// from several threads at once.
pub trait Backend: Send + Sync {
    /// Stable identity used in cache keys and provenance (e.g. a model
    /// name); two backends with different behavior must have different ids.
    fn id(&self) -> &str;

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        (**self).complete(prompt, params)
    }
}

/// Hex SHA-256 of a prompt text; the identity completions are keyed by in
/// scripted mocks and error reports.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Content address of one (prompt, params, backend) request. Each field is
/// length-prefixed before hashing so field boundaries cannot be confused.
pub fn cache_key(prompt: &RenderedPrompt, params: &GenerationParams, backend_id: &str) -> String {
    let params_json = serde_json::to_string(params).expect("params serialize");
    let mut hasher = Sha256::new();
    for field in [
        prompt.text.as_bytes(),
        params_json.as_bytes(),
        backend_id.as_bytes(),
    ] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field);
    }
    hex::encode(hasher.finalize())
}

/// Cut `raw` at the first occurrence of `stop`; an empty stop is a no-op.
pub fn stop_trim(raw: &str, stop: &str) -> String {
    if stop.is_empty() {
        return raw.to_string();
    }
    match raw.find(stop) {
        Some(pos) => raw[..pos].to_string(),
        None => raw.to_string(),
    }
}

/// Stop-trim with the minimum-generation workaround: when the continuation
/// begins with the stop sequence itself (servers without a min-tokens
/// parameter may immediately start the next exemplar), that one leading
/// occurrence is stripped and the remainder trimmed normally, so a model
/// that answered after a spurious lead-in is not read as empty.
pub fn effective_text(raw: &str, stop: &str) -> String {
    let trimmed = stop_trim(raw, stop);
    if !trimmed.is_empty() || stop.is_empty() {
        return trimmed;
    }
    match raw.strip_prefix(stop) {
        Some(rest) => stop_trim(rest, stop),
        None => trimmed, // raw itself was empty
    }
}
