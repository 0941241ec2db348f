use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::RunConfig;

use super::batch::QueryFailure;
use super::QueryTrace;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// Config snapshot and outcome summary of one run. Contains no timestamps,
/// so two runs of the same inputs write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub config_digest: String,
    pub prompt_digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Every submitted record, in input order.
    pub record_ids: Vec<String>,
    pub completed: Vec<String>,
    pub failures: BTreeMap<String, QueryFailure>,
    pub interrupted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

impl RunManifest {
    pub fn is_partial(&self) -> bool {
        self.interrupted || !self.failures.is_empty() || self.completed.len() < self.record_ids.len()
    }
}

/// Default run id: derived from the config and the record ids, so reruns land in the same place.
pub fn default_run_id(config: &RunConfig, record_ids: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(config.digest().as_bytes());
    for id in record_ids {
        h.update([0u8]);
        h.update(id.as_bytes());
    }
    format!("{}-{}", config.dataset.key(), &hex::encode(h.finalize())[..12])
}

/// Record ids become file names; anything outside `[A-Za-z0-9._-]` is replaced.
pub fn trace_file_name(record_id: &str) -> String {
    let safe: String = record_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

/// `runs/<run_id>/` with `traces/<record_id>.json`, `manifest.json`, and reports.
#[derive(Debug, Clone)]
pub struct RunStore {
    dir: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

impl RunStore {
    pub fn create(runs_dir: impl AsRef<Path>, run_id: &str) -> Result<RunStore, StoreError> {
        let dir = runs_dir.as_ref().join(run_id);
        let traces = dir.join("traces");
        std::fs::create_dir_all(&traces).map_err(io_err(&traces))?;
        Ok(RunStore { dir })
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<RunStore, StoreError> {
        let dir = dir.into();
        let manifest = dir.join("manifest.json");
        if !manifest.is_file() {
            return Err(StoreError::Io {
                path: manifest,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a run directory"),
            });
        }
        Ok(RunStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn trace_path(&self, record_id: &str) -> PathBuf {
        self.dir.join("traces").join(trace_file_name(record_id))
    }

    pub fn write_trace(&self, trace: &QueryTrace) -> Result<(), StoreError> {
        self.write_json(&self.trace_path(&trace.record_id), trace)
    }

    pub fn read_trace(&self, record_id: &str) -> Result<QueryTrace, StoreError> {
        read_json(&self.trace_path(record_id))
    }

    /// Traces of every completed record, in manifest order.
    pub fn load_traces(&self) -> Result<Vec<QueryTrace>, StoreError> {
        let manifest = self.read_manifest()?;
        manifest.completed.iter().map(|id| self.read_trace(id)).collect()
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        self.write_json(&self.dir.join("manifest.json"), manifest)
    }

    pub fn read_manifest(&self) -> Result<RunManifest, StoreError> {
        read_json(&self.dir.join("manifest.json"))
    }

    pub fn write_file(&self, name: &str, contents: &str) -> Result<PathBuf, StoreError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), StoreError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io_err(path))
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}
