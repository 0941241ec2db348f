//! Per-query orchestration: decision generation, expert modularization, and
//! answer synthesis, each captured in a [`QueryTrace`].

mod batch;
mod parallel;
mod store;
mod trace;

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::answer_extract::{compare_answer, extract_answer};
use crate::backends::{Backend, BackendError, BackendRequest, BackendResponse, BackendSet};
use crate::decision_parser::{parse_decision, ParseError, ParseOptions};
use crate::domain::{
    validate_query, ExpertModuleId, Modality, PipelineMode, QueryRecord, RunConfig, SubAnswer, SubTask,
    SupplementaryInfo, Violation, VisualLevel,
};
use crate::prompting::{
    build_baseline_prompt, build_decision_prompt, build_expert_prompt, build_synthesis_prompt,
    select_in_context_examples, PromptError, PromptSet, RenderedPrompt,
};

pub use batch::{run_batch, BatchOutcome, FailureKind, QueryFailure, QueryOutcome};
pub use parallel::{parallel_map, parallel_map_cancellable};
pub use store::{default_run_id, read_json, trace_file_name, RunManifest, RunStore, StoreError};
pub use trace::{CallTiming, DecisionStage, ExpertCall, QueryTrace, SynthesisStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decision,
    Expert,
    Synthesis,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("record {record_id} is invalid: {violations:?}")]
    InvalidRecord { record_id: String, violations: Vec<Violation> },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{stage:?} backend failed: {source}")]
    Backend { stage: Stage, source: BackendError },
    #[error("decision could not be parsed: {0}")]
    Parse(#[from] ParseError),
}

impl PipelineError {
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            PipelineError::Backend { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Derives the config for one ablation setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "module", rename_all = "snake_case")]
pub enum AblationMode {
    Baseline,
    Full,
    EnableOnly(ExpertModuleId),
    DisableOnly(ExpertModuleId),
}

impl AblationMode {
    /// Baseline, full, then enable-only and disable-only for each module.
    pub fn all() -> Vec<AblationMode> {
        let mut modes = vec![AblationMode::Baseline, AblationMode::Full];
        modes.extend(ExpertModuleId::ALL.iter().map(|&m| AblationMode::EnableOnly(m)));
        modes.extend(ExpertModuleId::ALL.iter().map(|&m| AblationMode::DisableOnly(m)));
        modes
    }

    pub fn key(&self) -> String {
        match self {
            AblationMode::Baseline => "baseline".into(),
            AblationMode::Full => "full".into(),
            AblationMode::EnableOnly(m) => format!("enable_only-{}", m.key()),
            AblationMode::DisableOnly(m) => format!("disable_only-{}", m.key()),
        }
    }
}

pub fn apply_ablation(base: &RunConfig, mode: AblationMode) -> RunConfig {
    let mut config = base.clone();
    config.mode = PipelineMode::Cantor;
    match mode {
        AblationMode::Baseline => config.mode = PipelineMode::Baseline,
        AblationMode::Full => config.enabled_modules = ExpertModuleId::ALL.into_iter().collect(),
        AblationMode::EnableOnly(m) => config.enabled_modules = BTreeSet::from([m]),
        AblationMode::DisableOnly(m) => {
            config.enabled_modules = ExpertModuleId::ALL.into_iter().filter(|&x| x != m).collect()
        }
    }
    config
}

/// Renders the supplementary information from pairs in sub-task order.
/// Only `Ok` pairs are rendered, numbered by their position among rendered pairs.
pub fn assemble_supplementary(pairs: Vec<SubAnswer>) -> SupplementaryInfo {
    let rendered = pairs
        .iter()
        .filter(|p| p.is_ok())
        .enumerate()
        .map(|(i, p)| {
            format!(
                "Sub-task {n}: {}\nAnswer {n}: {}",
                build_expert_prompt(&p.sub_task),
                p.text.trim(),
                n = i + 1
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    SupplementaryInfo { pairs, rendered }
}

fn timed_call(backend: &dyn Backend, request: &BackendRequest) -> (Result<BackendResponse, BackendError>, CallTiming) {
    let start = Instant::now();
    let result = backend.complete(request);
    let timing = CallTiming {
        wall_ms: start.elapsed().as_millis() as u64,
        source: result.as_ref().ok().map(|r| r.source),
    };
    (result, timing)
}

/// Expert request for one sub-task. Multimodal experts get the record's image;
/// text-only experts get the detailed caption after the bracketed prompt.
fn expert_request(sub_task: &SubTask, record: &QueryRecord, config: &RunConfig) -> BackendRequest {
    let mut prompt = RenderedPrompt::text_only(build_expert_prompt(sub_task));
    match config.expert_backend.modality {
        Modality::Multimodal => prompt.image = record.image().cloned(),
        Modality::Text => {
            if let Some(c) = record.caption(VisualLevel::DetailedCaption) {
                prompt.text = format!("{}\nImage caption: {}", prompt.text, c.trim());
            }
        }
    }
    BackendRequest::new(&config.expert_backend.model_id, prompt, config.sampling.clone())
}

/// Runs every sub-task against the expert backend. Results come back in
/// sub-task order; failures are captured per sub-task, never raised.
/// Sub-tasks for modules outside the enabled set are skipped without a call.
pub fn run_modularization(
    sub_tasks: &[SubTask],
    record: &QueryRecord,
    config: &RunConfig,
    expert: &dyn Backend,
) -> Vec<ExpertCall> {
    parallel_map(sub_tasks, config.parallelism, |_, st| {
        if !config.enabled_modules.contains(&st.module) {
            return ExpertCall {
                prompt: String::new(),
                image_sha256: None,
                answer: SubAnswer::skipped(st.clone()),
                latency_ms: 0,
                timing: CallTiming::default(),
            };
        }
        let request = expert_request(st, record, config);
        let (result, timing) = timed_call(expert, &request);
        let (answer, latency_ms) = match result {
            Ok(r) => (SubAnswer::ok(st.clone(), r.text), r.latency_ms),
            Err(e) => (SubAnswer::failed(st.clone(), e.to_string()), 0),
        };
        ExpertCall {
            image_sha256: request.image_sha256().map(str::to_string),
            prompt: request.text,
            answer,
            latency_ms,
            timing,
        }
    })
}

/// A configured pipeline: config, prompt resources, and role backends.
pub struct Pipeline {
    config: RunConfig,
    config_digest: String,
    prompts: PromptSet,
    backends: BackendSet,
    examples: Vec<String>,
}

impl Pipeline {
    pub fn new(config: RunConfig, prompts: PromptSet, backends: BackendSet) -> Result<Pipeline, PipelineError> {
        let examples = match config.mode {
            PipelineMode::Cantor => select_in_context_examples(&prompts, config.dataset, config.in_context_examples)?,
            PipelineMode::Baseline => Vec::new(),
        };
        Ok(Pipeline {
            config_digest: config.digest(),
            config,
            prompts,
            backends,
            examples,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn examples(&self) -> &[String] {
        &self.examples
    }

    pub fn run_query(&self, record: &QueryRecord) -> Result<QueryTrace, PipelineError> {
        let violations = validate_query(record);
        if !violations.is_empty() {
            return Err(PipelineError::InvalidRecord {
                record_id: record.id.clone(),
                violations,
            });
        }
        let start = Instant::now();
        let (decision, experts, supplementary) = match self.config.mode {
            PipelineMode::Baseline => (None, Vec::new(), SupplementaryInfo::default()),
            PipelineMode::Cantor => {
                let stage = self.decide(record)?;
                let experts = if stage.decision.sub_tasks.is_empty() {
                    Vec::new()
                } else {
                    run_modularization(&stage.decision.sub_tasks, record, &self.config, &*self.backends.expert)
                };
                let supp = assemble_supplementary(experts.iter().map(|e| e.answer.clone()).collect());
                (Some(stage), experts, supp)
            }
        };

        let prompt = match self.config.mode {
            PipelineMode::Baseline => build_baseline_prompt(record, &self.config, &self.prompts)?,
            PipelineMode::Cantor => build_synthesis_prompt(record, &supplementary, &self.config, &self.prompts)?.1,
        };
        let request = BackendRequest::new(&self.config.synthesis_backend.model_id, prompt, self.config.sampling.clone());
        let (result, timing) = timed_call(&*self.backends.synthesis, &request);
        let response = result.map_err(|source| PipelineError::Backend {
            stage: Stage::Synthesis,
            source,
        })?;
        let answer = extract_answer(&response.text, record, false);
        let verdict = compare_answer(&answer, &record.gold);
        Ok(QueryTrace {
            record_id: record.id.clone(),
            mode: self.config.mode,
            decision,
            experts,
            supplementary,
            synthesis: SynthesisStage {
                prompt_sha256: request.prompt_sha256(),
                prompt: request.text,
                response: response.text,
                latency_ms: response.latency_ms,
                timing,
            },
            answer,
            verdict,
            config_digest: self.config_digest.clone(),
            config: self.config.clone(),
            total_wall_ms: start.elapsed().as_millis() as u64,
        })
    }

    /// Decision prompt, decision call, and parse, with one format re-prompt
    /// when the reply has no usable task list.
    fn decide(&self, record: &QueryRecord) -> Result<DecisionStage, PipelineError> {
        let (_, prompt) = build_decision_prompt(record, &self.config, &self.prompts, &self.examples)?;
        let prompt_sha256 = prompt.sha256();
        let mut request =
            BackendRequest::new(&self.config.decision_backend.model_id, prompt, self.config.sampling.clone());
        let options = ParseOptions {
            strict: self.config.strict_parsing,
        };
        let mut responses = Vec::new();
        let mut latency_ms = 0;
        let mut timing = CallTiming::default();
        loop {
            let (result, t) = timed_call(&*self.backends.decision, &request);
            timing.wall_ms += t.wall_ms;
            timing.source = t.source;
            let response = result.map_err(|source| PipelineError::Backend {
                stage: Stage::Decision,
                source,
            })?;
            latency_ms += response.latency_ms;
            responses.push(response.text);
            let raw = responses.last().expect("just pushed");
            match parse_decision(raw, &self.config.enabled_modules, self.config.disabled_module_policy, options) {
                Ok((decision, mut diagnostics)) => {
                    diagnostics.retries = (responses.len() - 1) as u32;
                    return Ok(DecisionStage {
                        prompt_sha256,
                        responses,
                        decision,
                        diagnostics,
                        latency_ms,
                        timing,
                    });
                }
                Err(e @ (ParseError::EmptyInput | ParseError::NoTasksFound))
                    if self.config.decision_retry && responses.len() == 1 =>
                {
                    let _ = e;
                    request.text = format!("{}\n{}\n", request.text.trim_end(), self.prompts.reprompt);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}
