use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::domain::{Modality, Sampling};

use super::{Backend, BackendError, BackendRequest, BackendResponse, ResponseSource, SharedBackend};

/// One recorded exchange. A transcript is a JSONL file of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub model_id: String,
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_sha256: Option<String>,
    pub sampling: Sampling,
    pub response_text: String,
    pub latency_ms: u64,
}

impl TranscriptEntry {
    pub fn new(request: &BackendRequest, response: &BackendResponse) -> Self {
        TranscriptEntry {
            key: request.cache_key(),
            model_id: request.model_id.clone(),
            prompt_sha256: request.prompt_sha256(),
            image_sha256: request.image_sha256().map(str::to_string),
            sampling: request.sampling.clone(),
            response_text: response.text.clone(),
            latency_ms: response.latency_ms,
        }
    }
}

/// Loaded transcript, indexed by request key. The first entry for a key wins.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: BTreeMap<String, TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Transcript> {
        let file = File::open(path.as_ref())?;
        let mut t = Transcript::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })?;
            t.insert(entry);
        }
        Ok(t)
    }

    pub fn insert(&mut self, entry: TranscriptEntry) {
        self.entries.entry(entry.key.clone()).or_insert(entry);
    }

    pub fn get(&self, key: &str) -> Option<&TranscriptEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries.values()
    }
}

/// Appends entries as they arrive so an interrupted run keeps what it recorded.
/// `finish` rewrites the file sorted by key, which makes the transcript of a
/// run independent of worker scheduling.
pub struct TranscriptWriter {
    path: PathBuf,
    state: Mutex<(File, BTreeMap<String, TranscriptEntry>)>,
}

impl TranscriptWriter {
    pub fn create(path: impl Into<PathBuf>) -> std::io::Result<TranscriptWriter> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(&path)?;
        Ok(TranscriptWriter {
            path,
            state: Mutex::new((file, BTreeMap::new())),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: TranscriptEntry) -> std::io::Result<()> {
        let mut state = self.state.lock().expect("transcript writer poisoned");
        if state.1.contains_key(&entry.key) {
            return Ok(());
        }
        let mut line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
        line.push('\n');
        state.0.write_all(line.as_bytes())?;
        state.1.insert(entry.key.clone(), entry);
        Ok(())
    }

    pub fn finish(&self) -> std::io::Result<usize> {
        let state = self.state.lock().expect("transcript writer poisoned");
        let mut out = String::new();
        for e in state.1.values() {
            out.push_str(&serde_json::to_string(e).map_err(std::io::Error::other)?);
            out.push('\n');
        }
        let tmp = self.path.with_extension("jsonl.tmp");
        std::fs::write(&tmp, out)?;
        std::fs::rename(&tmp, &self.path)?;
        Ok(state.1.len())
    }
}

pub struct Recorder {
    inner: SharedBackend,
    writer: Arc<TranscriptWriter>,
}

impl Recorder {
    pub fn new(inner: SharedBackend, writer: Arc<TranscriptWriter>) -> Self {
        Recorder { inner, writer }
    }
}

impl Backend for Recorder {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn modality(&self) -> Modality {
        self.inner.modality()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let response = self.inner.complete(request)?;
        self.writer
            .append(TranscriptEntry::new(request, &response))
            .map_err(|e| BackendError::Permanent(format!("transcript write failed: {e}")))?;
        Ok(response)
    }
}

/// Answers only from a transcript; never touches the network.
pub struct ReplayBackend {
    name: String,
    modality: Modality,
    transcript: Arc<Transcript>,
}

impl ReplayBackend {
    pub fn new(name: impl Into<String>, modality: Modality, transcript: Arc<Transcript>) -> Self {
        ReplayBackend {
            name: name.into(),
            modality,
            transcript,
        }
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn modality(&self) -> Modality {
        self.modality
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.check_modality(request)?;
        let key = request.cache_key();
        match self.transcript.get(&key) {
            Some(e) => Ok(BackendResponse {
                text: e.response_text.clone(),
                usage: None,
                latency_ms: e.latency_ms,
                source: ResponseSource::Replay,
            }),
            None => Err(BackendError::ReplayMiss {
                prompt_sha256: request.prompt_sha256(),
                key,
            }),
        }
    }
}
