use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::Modality;

use super::{Backend, BackendError, BackendRequest, BackendResponse, ResponseSource};

type Responder = Arc<dyn Fn(&BackendRequest) -> Option<Result<String, BackendError>> + Send + Sync>;

/// A scripted reply, chosen by the first matching rule.
#[derive(Clone)]
pub struct MockRule {
    matcher: Matcher,
    reply: Result<String, BackendError>,
    latency_ms: u64,
    delay: Option<Duration>,
}

#[derive(Clone)]
enum Matcher {
    PromptDigest(String),
    Contains(String),
}

impl MockRule {
    pub fn on_digest(sha256: impl Into<String>, reply: impl Into<String>) -> Self {
        Self::new(Matcher::PromptDigest(sha256.into()), Ok(reply.into()))
    }

    pub fn on_contains(needle: impl Into<String>, reply: impl Into<String>) -> Self {
        Self::new(Matcher::Contains(needle.into()), Ok(reply.into()))
    }

    pub fn fail_on_contains(needle: impl Into<String>, error: BackendError) -> Self {
        Self::new(Matcher::Contains(needle.into()), Err(error))
    }

    fn new(matcher: Matcher, reply: Result<String, BackendError>) -> Self {
        MockRule {
            matcher,
            reply,
            latency_ms: 0,
            delay: None,
        }
    }

    /// Latency reported in the response (not slept).
    pub fn latency_ms(mut self, ms: u64) -> Self {
        self.latency_ms = ms;
        self
    }

    /// Real sleep before replying, for scheduling tests.
    pub fn sleep(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }
}

/// Deterministic scripted backend.
///
/// Lookup order: rules in insertion order, then responder functions, then the
/// default reply. No match is a permanent error.
#[derive(Clone)]
pub struct MockBackend {
    name: String,
    modality: Modality,
    rules: Vec<MockRule>,
    responders: Vec<Responder>,
    default: Option<String>,
    calls: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<BackendRequest>>>,
}

impl MockBackend {
    pub fn new(name: impl Into<String>) -> Self {
        MockBackend {
            name: name.into(),
            modality: Modality::Multimodal,
            rules: Vec::new(),
            responders: Vec::new(),
            default: None,
            calls: Arc::new(AtomicUsize::new(0)),
            log: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.default = Some(reply.into());
        self
    }

    /// Computes a reply from the request; `None` falls through to the default.
    pub fn with_responder<F>(mut self, f: F) -> Self
    where
        F: Fn(&BackendRequest) -> Option<Result<String, BackendError>> + Send + Sync + 'static,
    {
        self.responders.push(Arc::new(f));
        self
    }

    pub fn from_script(name: &str, modality: Modality, script: MockScript) -> Self {
        let mut mock = MockBackend::new(name).with_modality(modality);
        for r in script.rules {
            let rule = match (r.prompt_sha256, r.contains) {
                (Some(d), _) => MockRule::on_digest(d, r.response),
                (None, Some(c)) => MockRule::on_contains(c, r.response),
                (None, None) => MockRule::on_contains("", r.response),
            };
            mock = mock.with_rule(rule.latency_ms(r.latency_ms));
        }
        if let Some(d) = script.default {
            mock = mock.with_default(d);
        }
        mock
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<BackendRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn modality(&self) -> Modality {
        self.modality
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.check_modality(request)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("mock log poisoned").push(request.clone());

        let ok = |text: String, latency_ms: u64| {
            if text.is_empty() {
                return Err(BackendError::Permanent("mock reply is empty".into()));
            }
            Ok(BackendResponse {
                text,
                usage: None,
                latency_ms,
                source: ResponseSource::Mock,
            })
        };

        let digest = request.prompt_sha256();
        for rule in &self.rules {
            let hit = match &rule.matcher {
                Matcher::PromptDigest(d) => *d == digest,
                Matcher::Contains(needle) => request.text.contains(needle.as_str()),
            };
            if hit {
                if let Some(delay) = rule.delay {
                    std::thread::sleep(delay);
                }
                return rule.reply.clone().and_then(|t| ok(t, rule.latency_ms));
            }
        }
        for f in &self.responders {
            if let Some(reply) = f(request) {
                return reply.and_then(|t| ok(t, 0));
            }
        }
        match &self.default {
            Some(d) => ok(d.clone(), 0),
            None => Err(BackendError::Permanent(format!(
                "mock {} has no reply for prompt {digest}",
                self.name
            ))),
        }
    }
}

/// File form of a mock backend, for use from config files.
///
/// ```json
/// {"rules": [{"contains": "Task Allocation", "response": "..."}], "default": "Answer: (A)"}
/// ```
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockScriptRule>,
    #[serde(default)]
    pub default: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockScriptRule {
    #[serde(default)]
    pub prompt_sha256: Option<String>,
    #[serde(default)]
    pub contains: Option<String>,
    pub response: String,
    #[serde(default)]
    pub latency_ms: u64,
}

impl MockScript {
    pub fn load(path: impl AsRef<Path>) -> Result<MockScript, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
