use serde::{Deserialize, Serialize};

use super::ExpertModuleId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSelection {
    pub module: ExpertModuleId,
    pub reason: String,
}

/// One instruction assigned to one expert module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTask {
    pub module: ExpertModuleId,
    /// Single line, trimmed, non-empty.
    pub instruction: String,
    /// 0-based position in the decision's task list.
    pub ordinal: usize,
}

impl SubTask {
    pub fn new(module: ExpertModuleId, instruction: impl Into<String>, ordinal: usize) -> Self {
        SubTask {
            module,
            instruction: instruction.into(),
            ordinal,
        }
    }
}

/// Structured output of the decision stage: principle analysis, module
/// selections with reasons, and the ordered sub-task list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Decision {
    pub principle_analysis: String,
    pub module_selections: Vec<ModuleSelection>,
    pub sub_tasks: Vec<SubTask>,
    /// Unmodified model output.
    pub raw: String,
}

impl Decision {
    /// Equality on the structured fields only (`raw` ignored).
    pub fn same_structure(&self, other: &Decision) -> bool {
        self.principle_analysis == other.principle_analysis
            && self.module_selections == other.module_selections
            && self.sub_tasks == other.sub_tasks
    }

    /// Every sub-task's module is listed among the selections.
    pub fn selections_cover_tasks(&self) -> bool {
        self.sub_tasks
            .iter()
            .all(|t| self.module_selections.iter().any(|s| s.module == t.module))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubAnswerStatus {
    Ok,
    BackendError,
    SkippedDisabledModule,
}

/// Result of one expert invocation. Carries its sub-task, so a list of
/// `SubAnswer`s is the ordered list of (sub-task, sub-answer) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubAnswer {
    pub sub_task: SubTask,
    pub text: String,
    pub status: SubAnswerStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SubAnswer {
    pub fn ok(sub_task: SubTask, text: impl Into<String>) -> Self {
        SubAnswer {
            sub_task,
            text: text.into(),
            status: SubAnswerStatus::Ok,
            error: None,
        }
    }

    pub fn failed(sub_task: SubTask, error: impl Into<String>) -> Self {
        SubAnswer {
            sub_task,
            text: String::new(),
            status: SubAnswerStatus::BackendError,
            error: Some(error.into()),
        }
    }

    pub fn skipped(sub_task: SubTask) -> Self {
        SubAnswer {
            sub_task,
            text: String::new(),
            status: SubAnswerStatus::SkippedDisabledModule,
            error: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == SubAnswerStatus::Ok
    }
}

/// Ordered (sub-task, sub-answer) pairs plus their rendered text form.
/// Only `Ok` pairs are rendered; the rest stay in `pairs` for analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SupplementaryInfo {
    pub pairs: Vec<SubAnswer>,
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FreeFormValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FinalAnswer {
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_form: Option<FreeFormValue>,
    pub raw: String,
    /// Set when no answer could be extracted; the prediction is then unscored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_error: Option<String>,
}

impl FinalAnswer {
    pub fn is_scorable(&self) -> bool {
        self.choice_index.is_some() != self.free_form.is_some()
    }
}
