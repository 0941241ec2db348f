use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExpertModuleId, VisualLevel};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    #[default]
    Multimodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    #[default]
    Mock,
    /// Any OpenAI-compatible chat-completions endpoint.
    Openai,
    Gemini,
}

impl Provider {
    pub fn env_key(self) -> &'static str {
        match self {
            Provider::Mock => "MOCK",
            Provider::Openai => "OPENAI",
            Provider::Gemini => "GEMINI",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: 4,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
            multiplier: 2.0,
        }
    }
}

/// Binds one pipeline role to a concrete model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendBinding {
    pub provider: Provider,
    pub model_id: String,
    pub modality: Modality,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Script file for the mock provider.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    pub max_in_flight: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requests_per_second: Option<f64>,
    pub timeout_secs: u64,
    pub retry: RetryConfig,
}

impl Default for BackendBinding {
    fn default() -> Self {
        BackendBinding {
            provider: Provider::Mock,
            model_id: "mock".into(),
            modality: Modality::Multimodal,
            endpoint: None,
            mock_script: None,
            max_in_flight: 1,
            requests_per_second: None,
            timeout_secs: 120,
            retry: RetryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            temperature: 0.0,
            max_tokens: 1024,
            seed: None,
        }
    }
}

/// What the parser does with sub-tasks naming an unknown or disabled module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisabledModulePolicy {
    Error,
    #[default]
    Skip,
    FallbackToVisionIq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Decision, expert execution, synthesis.
    #[default]
    Cantor,
    /// One direct "think step by step" call, no experts.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Scienceqa,
    Mathvista,
}

impl DatasetKind {
    pub fn key(self) -> &'static str {
        match self {
            DatasetKind::Scienceqa => "scienceqa",
            DatasetKind::Mathvista => "mathvista",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CacheConfig {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl CacheConfig {
    /// Configured directory, else `$CANTOR_CACHE_DIR`, else `.cantor-cache`.
    pub fn resolved_dir(&self) -> PathBuf {
        self.dir
            .clone()
            .or_else(|| std::env::var_os("CANTOR_CACHE_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".cantor-cache"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub decision_backend: BackendBinding,
    pub expert_backend: BackendBinding,
    pub synthesis_backend: BackendBinding,
    pub enabled_modules: BTreeSet<ExpertModuleId>,
    pub mode: PipelineMode,
    /// Overrides each record's own visual level when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visual_level: Option<VisualLevel>,
    pub sampling: Sampling,
    pub disabled_module_policy: DisabledModulePolicy,
    pub cache: CacheConfig,
    pub parallelism: usize,
    pub dataset: DatasetKind,
    /// Number of in-context examples; `None` uses the whole pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_context_examples: Option<usize>,
    /// Give text-only synthesis backends the caption in place of the image.
    pub synthesis_caption: bool,
    /// Accept only canonical decision headers and bracketed task lines.
    pub strict_parsing: bool,
    /// Re-prompt the decision backend once when no sub-task can be extracted.
    pub decision_retry: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            decision_backend: BackendBinding::default(),
            expert_backend: BackendBinding::default(),
            synthesis_backend: BackendBinding::default(),
            enabled_modules: ExpertModuleId::ALL.into_iter().collect(),
            mode: PipelineMode::Cantor,
            visual_level: None,
            sampling: Sampling::default(),
            disabled_module_policy: DisabledModulePolicy::Skip,
            cache: CacheConfig::default(),
            parallelism: 1,
            dataset: DatasetKind::Scienceqa,
            in_context_examples: None,
            synthesis_caption: true,
            strict_parsing: false,
            decision_retry: true,
            prompts_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        if self.mode == PipelineMode::Cantor && self.enabled_modules.is_empty() {
            return Err(ConfigError::Invalid(
                "enabled_modules must be non-empty outside baseline mode".into(),
            ));
        }
        for (role, b) in [
            ("decision_backend", &self.decision_backend),
            ("expert_backend", &self.expert_backend),
            ("synthesis_backend", &self.synthesis_backend),
        ] {
            if b.max_in_flight == 0 {
                return Err(ConfigError::Invalid(format!("{role}.max_in_flight must be at least 1")));
            }
            if b.retry.max_attempts == 0 {
                return Err(ConfigError::Invalid(format!("{role}.retry.max_attempts must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(config)
    }

    /// Loads a TOML file and applies `key.path=value` overrides on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut tree, ov)?;
        }
        let config: RunConfig = toml::Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("RunConfig serializes to TOML")
    }

    /// SHA-256 over the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("RunConfig serializes to JSON");
        hex::encode(Sha256::digest(json))
    }
}

fn apply_override(tree: &mut toml::Table, raw: &str) -> Result<(), ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(raw.to_string()));
    }
    let value = value.trim();
    // Bare words that are not valid TOML (e.g. `mode=baseline`) become strings.
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    let mut cursor = tree;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
