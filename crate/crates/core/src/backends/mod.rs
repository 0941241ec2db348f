//! Backend abstraction for the decision/answer generator and the expert
//! executor, with mock, live HTTP, cached, rate-limited, retrying, recording
//! and replaying implementations.
//!
//! Every implementation is `Send + Sync` and safe to call from many
//! evaluation workers at once.

mod cache;
mod live;
mod middleware;
mod mock;
mod transcript;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{BackendBinding, ImageRef, Modality, Provider, RunConfig, Sampling};
use crate::prompting::RenderedPrompt;

pub use cache::{CacheEntry, CacheStats, CachedBackend, ResponseCache};
pub use live::{GeminiBackend, OpenAiBackend};
pub use middleware::{RateLimited, RetryPolicy, Retrying, Sleeper};
pub use mock::{MockBackend, MockRule, MockScript};
pub use transcript::{Recorder, ReplayBackend, Transcript, TranscriptEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub model_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
    pub sampling: Sampling,
}

impl BackendRequest {
    pub fn new(model_id: impl Into<String>, prompt: RenderedPrompt, sampling: Sampling) -> Self {
        BackendRequest {
            model_id: model_id.into(),
            text: prompt.text,
            image: prompt.image,
            sampling,
        }
    }

    pub fn prompt_sha256(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    pub fn image_sha256(&self) -> Option<&str> {
        self.image.as_ref().map(|i| i.sha256.as_str())
    }

    /// Content key over (model, prompt digest, image digest, sampling).
    /// Depends only on those values, so it is stable across runs and platforms.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"cantor-cache-v1\0");
        h.update(self.model_id.as_bytes());
        h.update([0u8]);
        h.update(self.prompt_sha256().as_bytes());
        h.update([0u8]);
        h.update(self.image_sha256().unwrap_or("-").as_bytes());
        h.update([0u8]);
        h.update(self.sampling.temperature.to_bits().to_le_bytes());
        h.update(self.sampling.max_tokens.to_le_bytes());
        match self.sampling.seed {
            Some(seed) => {
                h.update([1u8]);
                h.update(seed.to_le_bytes());
            }
            None => h.update([0u8]),
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    Live,
    Cache,
    Replay,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    /// Backend-reported latency. Cached and replayed responses keep the original value.
    pub latency_ms: u64,
    pub source: ResponseSource,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transient backend error: {0}")]
    Transient(String),
    #[error("backend error: {0}")]
    Permanent(String),
    #[error("backend {backend} is text-only but the request carries an image")]
    ModalityMismatch { backend: String },
    #[error("replay miss: no transcript entry for prompt {prompt_sha256} (key {key})")]
    ReplayMiss { key: String, prompt_sha256: String },
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn modality(&self) -> Modality;
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;

    fn check_modality(&self, request: &BackendRequest) -> Result<(), BackendError> {
        if request.image.is_some() && self.modality() == Modality::Text {
            return Err(BackendError::ModalityMismatch {
                backend: self.name().to_string(),
            });
        }
        Ok(())
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn modality(&self) -> Modality {
        (**self).modality()
    }
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn modality(&self) -> Modality {
        (**self).modality()
    }
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

pub type SharedBackend = Arc<dyn Backend>;

#[derive(Debug, thiserror::Error)]
pub enum BackendSetupError {
    #[error("missing API key: set {0}")]
    MissingApiKey(String),
    #[error("mock script {path}: {message}")]
    MockScript { path: String, message: String },
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error("transcript: {0}")]
    Transcript(String),
}

/// The three role bindings: decision generator, expert executor, answer generator.
#[derive(Clone)]
pub struct BackendSet {
    pub decision: SharedBackend,
    pub expert: SharedBackend,
    pub synthesis: SharedBackend,
}

impl BackendSet {
    pub fn uniform(backend: SharedBackend) -> Self {
        BackendSet {
            decision: backend.clone(),
            expert: backend.clone(),
            synthesis: backend,
        }
    }

    /// Builds every binding in `config`, sharing one response cache when enabled.
    pub fn from_config(config: &RunConfig) -> Result<BackendSet, BackendSetupError> {
        let cache = if config.cache.enabled {
            Some(Arc::new(ResponseCache::open(config.cache.resolved_dir())?))
        } else {
            None
        };
        Ok(BackendSet {
            decision: build_backend(&config.decision_backend, cache.clone())?,
            expert: build_backend(&config.expert_backend, cache.clone())?,
            synthesis: build_backend(&config.synthesis_backend, cache)?,
        })
    }

    pub fn map(&self, f: impl Fn(&SharedBackend) -> SharedBackend) -> BackendSet {
        BackendSet {
            decision: f(&self.decision),
            expert: f(&self.expert),
            synthesis: f(&self.synthesis),
        }
    }

    /// Wraps every role so successful calls are appended to one transcript.
    pub fn recording(&self, recorder: Arc<transcript::TranscriptWriter>) -> BackendSet {
        self.map(|b| Arc::new(Recorder::new(b.clone(), recorder.clone())) as SharedBackend)
    }

    /// Every role answers from the transcript only.
    pub fn replaying(transcript: Arc<Transcript>, config: &RunConfig) -> BackendSet {
        let make = |b: &BackendBinding, role: &str| -> SharedBackend {
            Arc::new(ReplayBackend::new(format!("replay:{role}"), b.modality, transcript.clone()))
        };
        BackendSet {
            decision: make(&config.decision_backend, "decision"),
            expert: make(&config.expert_backend, "expert"),
            synthesis: make(&config.synthesis_backend, "synthesis"),
        }
    }
}

pub use transcript::TranscriptWriter;

/// Builds one binding: provider adapter, then rate limiting, retry, and cache.
pub fn build_backend(
    binding: &BackendBinding,
    cache: Option<Arc<ResponseCache>>,
) -> Result<SharedBackend, BackendSetupError> {
    let base: SharedBackend = match binding.provider {
        Provider::Mock => {
            let mock = match &binding.mock_script {
                Some(path) => {
                    let script = MockScript::load(path).map_err(|e| BackendSetupError::MockScript {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                    MockBackend::from_script(&binding.model_id, binding.modality, script)
                }
                None => MockBackend::new(&binding.model_id).with_modality(binding.modality),
            };
            Arc::new(mock)
        }
        Provider::Openai | Provider::Gemini => {
            let var = format!("CANTOR_API_KEY_{}", binding.provider.env_key());
            let key = std::env::var(&var).map_err(|_| BackendSetupError::MissingApiKey(var))?;
            let live: SharedBackend = if binding.provider == Provider::Openai {
                Arc::new(OpenAiBackend::new(binding, key))
            } else {
                Arc::new(GeminiBackend::new(binding, key))
            };
            let limited = RateLimited::new(live, binding.max_in_flight, binding.requests_per_second);
            Arc::new(Retrying::new(limited, RetryPolicy::from(&binding.retry)))
        }
    };
    Ok(match cache {
        Some(cache) => Arc::new(CachedBackend::new(base, cache)),
        None => base,
    })
}
