//! Scoring, module-usage statistics, ablation matrices, visual-level sweeps,
//! and report rendering.

mod ablation;
mod render;
mod sweep;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::answer_extract::Verdict;
use crate::domain::{ExpertModuleId, QueryRecord};
use crate::pipeline::QueryTrace;

pub use ablation::{ablation_matrix, AblationCell, AblationMatrix, AblationRow, AblationRun, ModeRun};
pub use render::{emit_report, render_csv, render_json, render_markdown, ReportFormat};
pub use sweep::{visual_level_sweep, LevelTraces, SweepRow, SweepTable};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no trace for record(s): {}", .0.join(", "))]
    MissingTrace(Vec<String>),
    #[error("trace(s) reference unknown record(s): {}", .0.join(", "))]
    UnknownRecord(Vec<String>),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Score {
    pub count: usize,
    pub correct: usize,
    pub unscored: usize,
    /// `correct / count`; unscored answers count as incorrect.
    pub accuracy: f64,
}

impl Score {
    fn add(&mut self, verdict: Verdict) {
        self.count += 1;
        match verdict {
            Verdict::Correct => self.correct += 1,
            Verdict::Unscored => self.unscored += 1,
            Verdict::Incorrect => {}
        }
        self.accuracy = self.correct as f64 / self.count as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct UsageGroup {
    pub calls: usize,
    /// Share of this group's expert calls per module; all zero when `calls == 0`.
    pub proportions: BTreeMap<ExpertModuleId, f64>,
    pub zero_denominator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModuleUsage {
    pub calls: BTreeMap<ExpertModuleId, usize>,
    /// family → tag value → usage.
    pub by_tag: BTreeMap<String, BTreeMap<String, UsageGroup>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TimingSummary {
    pub backend_calls: usize,
    /// Backend-reported latency, not wall-clock, so replayed runs report the same figures.
    pub total_latency_ms: u64,
    pub mean_latency_ms_per_query: f64,
}

/// Accuracy, per-tag breakdown, module usage, and timing of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub config_digest: String,
    pub overall: Score,
    /// family → tag value → score. Tags with no records are absent.
    pub tags: BTreeMap<String, BTreeMap<String, Score>>,
    pub module_usage: ModuleUsage,
    pub timing: TimingSummary,
}

fn index_traces<'a>(traces: &'a [QueryTrace], records: &[QueryRecord]) -> Result<HashMap<&'a str, &'a QueryTrace>, EvalError> {
    let by_id: HashMap<&str, &QueryTrace> = traces.iter().map(|t| (t.record_id.as_str(), t)).collect();
    let known: std::collections::HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let unknown: Vec<String> = traces
        .iter()
        .filter(|t| !known.contains(t.record_id.as_str()))
        .map(|t| t.record_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownRecord(unknown));
    }
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingTrace(missing));
    }
    Ok(by_id)
}

/// Scores every record by its trace's verdict. Every record needs a trace.
pub fn score_run(run_id: &str, traces: &[QueryTrace], records: &[QueryRecord]) -> Result<RunReport, EvalError> {
    let by_id = index_traces(traces, records)?;
    let mut overall = Score::default();
    let mut tags: BTreeMap<String, BTreeMap<String, Score>> = BTreeMap::new();
    let mut timing = TimingSummary::default();
    for r in records {
        let t = by_id[r.id.as_str()];
        overall.add(t.verdict);
        for fam in r.categories.families() {
            for v in r.categories.values(fam) {
                tags.entry(fam.to_string()).or_default().entry(v.clone()).or_default().add(t.verdict);
            }
        }
        timing.backend_calls += t.call_count();
        timing.total_latency_ms += t.backend_latency_ms();
    }
    if !records.is_empty() {
        timing.mean_latency_ms_per_query = timing.total_latency_ms as f64 / records.len() as f64;
    }
    let mut module_usage = ModuleUsage::default();
    for t in traces {
        for e in t.experts.iter().filter(|e| e.issued()) {
            *module_usage.calls.entry(e.answer.sub_task.module).or_default() += 1;
        }
    }
    for fam in tags.keys() {
        module_usage.by_tag.insert(fam.clone(), module_usage_stats(traces, records, fam));
    }
    let config_digest = traces.first().map(|t| t.config_digest.clone()).unwrap_or_default();
    Ok(RunReport { run_id: run_id.to_string(), config_digest, overall, tags, module_usage, timing })
}

/// Per tag value of `family`: share of issued expert calls going to each module.
pub fn module_usage_stats(traces: &[QueryTrace], records: &[QueryRecord], family: &str) -> BTreeMap<String, UsageGroup> {
    let by_id: HashMap<&str, &QueryTrace> = traces.iter().map(|t| (t.record_id.as_str(), t)).collect();
    let mut counts: BTreeMap<String, BTreeMap<ExpertModuleId, usize>> = BTreeMap::new();
    for r in records {
        let Some(t) = by_id.get(r.id.as_str()) else { continue };
        for v in r.categories.values(family) {
            let group = counts.entry(v.clone()).or_default();
            for e in t.experts.iter().filter(|e| e.issued()) {
                *group.entry(e.answer.sub_task.module).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(value, per_module)| {
            let calls: usize = per_module.values().sum();
            let proportions = ExpertModuleId::ALL
                .iter()
                .map(|m| {
                    let n = per_module.get(m).copied().unwrap_or(0);
                    (*m, if calls == 0 { 0.0 } else { n as f64 / calls as f64 })
                })
                .collect();
            (value, UsageGroup { calls, proportions, zero_denominator: calls == 0 })
        })
        .collect()
}
