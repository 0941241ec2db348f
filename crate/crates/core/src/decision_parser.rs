//! Parsing of the decision backend's free text into a structured [`Decision`],
//! and the canonical serializer that inverts it.
//!
//! The output is split into three regions by section headers:
//!
//! | region | accepted headers (case-insensitive, optional numbering/markdown) |
//! |---|---|
//! | principle analysis | `Principle Analysis` |
//! | module selection | `Module Selection`, `Module Selection & Reason(s)`, `... and Reason` |
//! | task allocation | `Task`, `Tasks`, `Task Allocation`, `Task Assignment`, `Sub-tasks` |
//!
//! Sub-tasks are read from `[<Module>: <instruction>]` lines, or from
//! `<Module>: <instruction>` lines inside the task region when `<Module>`
//! names a known module. In strict mode only the canonical headers and the
//! bracketed form are accepted.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::domain::{
    normalize_module_name, Decision, DisabledModulePolicy, ExpertModuleId, ModuleSelection,
    SubTask,
};

pub const PRINCIPLE_HEADER: &str = "Principle Analysis";
pub const SELECTION_HEADER: &str = "Module Selection & Reason";
pub const TASKS_HEADER: &str = "Task Allocation";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("decision text is empty")]
    EmptyInput,
    #[error("no sub-task could be extracted from the decision")]
    NoTasksFound,
    #[error("decision references unknown module `{name}`")]
    UnknownModule { name: String },
    #[error("decision references disabled module {module}")]
    DisabledModule { module: ExpertModuleId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningCode {
    /// No section header found; tasks were read from bracketed lines anywhere.
    NoSections,
    /// Headers found but no task section; tasks read from bracketed lines anywhere.
    NoTaskSection,
    UnknownModule,
    DisabledModuleSkipped,
    FallbackReassigned,
    /// A task's module was missing from the selections and was added.
    SelectionAdded,
    SelectionDropped,
    EmptyInstruction,
    UnparsedLine,
}

impl WarningCode {
    pub fn is_recovery(self) -> bool {
        matches!(
            self,
            WarningCode::NoSections
                | WarningCode::NoTaskSection
                | WarningCode::FallbackReassigned
                | WarningCode::SelectionAdded
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub code: WarningCode,
    pub message: String,
    /// Byte range in the raw text.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ParseDiagnostics {
    pub warnings: Vec<ParseWarning>,
    pub unknown_modules: Vec<String>,
    pub recovered: bool,
    /// Re-prompts issued before this parse succeeded.
    #[serde(default)]
    pub retries: u32,
}

impl ParseDiagnostics {
    fn warn(&mut self, code: WarningCode, message: impl Into<String>, span: Range<usize>) {
        self.recovered |= code.is_recovery();
        self.warnings.push(ParseWarning {
            code,
            message: message.into(),
            span,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseOptions {
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Principle,
    Selection,
    Tasks,
}

struct Line<'a> {
    text: &'a str,
    span: Range<usize>,
}

fn lines_with_spans(raw: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for piece in raw.split_inclusive('\n') {
        let end = start + piece.len();
        let text = piece.trim_end_matches(['\n', '\r']);
        out.push(Line {
            text,
            span: start..start + text.len(),
        });
        start = end;
    }
    out
}

fn strip_markup(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '#' | '>' | '`'))
}

/// Removes list bullets and numbering such as `- `, `* `, `1. `, `2) `.
fn strip_bullet(s: &str) -> &str {
    let s = s.trim_start();
    if let Some(rest) = s.strip_prefix(['-', '*', '•', '+']) {
        if rest.starts_with(char::is_whitespace) {
            return rest.trim_start();
        }
    }
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 && digits <= 3 {
        let rest = &s[digits..];
        if let Some(after) = rest.strip_prefix(['.', ')']) {
            if after.is_empty() || after.starts_with(char::is_whitespace) {
                return after.trim_start();
            }
        }
    }
    s
}

fn fold(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn header_for(name: &str, strict: bool) -> Option<Section> {
    if strict {
        return match name.trim() {
            PRINCIPLE_HEADER => Some(Section::Principle),
            SELECTION_HEADER => Some(Section::Selection),
            TASKS_HEADER => Some(Section::Tasks),
            _ => None,
        };
    }
    match fold(name).as_str() {
        "principleanalysis" | "principlesanalysis" => Some(Section::Principle),
        "moduleselection"
        | "moduleselections"
        | "moduleselectionreason"
        | "moduleselectionreasons"
        | "moduleselectionandreason"
        | "moduleselectionandreasons" => Some(Section::Selection),
        "task" | "tasks" | "taskallocation" | "taskallocations" | "taskassignment"
        | "taskassignments" | "subtasks" | "subtaskallocation" => Some(Section::Tasks),
        _ => None,
    }
}

/// Recognizes a header line; returns the section and any inline content after it.
fn match_header(line: &str, strict: bool) -> Option<(Section, &str)> {
    let stripped = if strict { line.trim() } else { strip_bullet(strip_markup(line)) };
    if stripped.is_empty() || stripped.starts_with('[') {
        return None;
    }
    let (name, rest) = match stripped.split_once(':') {
        Some((n, r)) => (n, r),
        None => (stripped, ""),
    };
    let name = if strict { name } else { strip_markup(name) };
    if name.chars().count() > 40 {
        return None;
    }
    let section = header_for(name, strict)?;
    let rest = if strict { rest.trim() } else { strip_markup(rest) };
    Some((section, rest))
}

struct TaskCandidate {
    name: String,
    instruction: String,
    span: Range<usize>,
}

/// `[Name: instruction]` covering the whole (bullet-stripped) line.
fn bracketed_task(line: &str) -> Option<(String, String)> {
    let body = line.trim().strip_prefix('[')?.strip_suffix(']')?;
    let (name, instruction) = body.split_once(':')?;
    let name = strip_markup(name);
    if name.is_empty() || name.contains(['[', ']']) || name.chars().count() > 60 {
        return None;
    }
    Some((name.to_string(), instruction.trim().to_string()))
}

/// All `[Name: instruction]` items on one line, innermost brackets only.
fn inline_bracketed(line: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut rest = line;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        let body = &after[..close];
        if !body.contains('[') {
            if let Some((name, instr)) = body.split_once(':') {
                let name = strip_markup(name);
                if !name.is_empty() && name.chars().count() <= 60 {
                    out.push((name.to_string(), instr.trim().to_string()));
                }
            }
            rest = &after[close + 1..];
        } else {
            rest = after;
        }
    }
    out
}

fn task_from_line(line: &str, in_task_section: bool, strict: bool) -> Vec<(String, String)> {
    let content = if strict { line.trim() } else { strip_bullet(line) };
    if let Some(t) = bracketed_task(content) {
        return vec![t];
    }
    if strict {
        return Vec::new();
    }
    let inline = inline_bracketed(content);
    if !inline.is_empty() {
        return inline;
    }
    if in_task_section {
        if let Some((name, instr)) = content.split_once(':') {
            if normalize_module_name(strip_markup(name)).is_some() {
                return vec![(strip_markup(name).to_string(), instr.trim().to_string())];
            }
        }
    }
    Vec::new()
}

/// Parses raw decision text.
///
/// Unknown or disabled module references follow `policy`: `Error` fails the
/// parse, `Skip` drops the sub-task with a warning, `FallbackToVisionIq`
/// reassigns it to the VisionIQ Analyst (or drops it if that module is
/// disabled too). Fails with `NoTasksFound` only when no task line exists at
/// all; tasks that were all skipped give an empty task list.
pub fn parse_decision(
    raw: &str,
    enabled: &BTreeSet<ExpertModuleId>,
    policy: DisabledModulePolicy,
    options: ParseOptions,
) -> Result<(Decision, ParseDiagnostics), ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let strict = options.strict;
    let mut diag = ParseDiagnostics::default();
    let lines = lines_with_spans(raw);

    let mut section = Section::Preamble;
    let mut seen = BTreeSet::new();
    let mut principle: Vec<&str> = Vec::new();
    let mut selection_lines: Vec<(&str, Range<usize>)> = Vec::new();
    let mut candidates: Vec<TaskCandidate> = Vec::new();
    let mut loose: Vec<TaskCandidate> = Vec::new();

    for line in &lines {
        if let Some((s, rest)) = match_header(line.text, strict) {
            section = s;
            seen.insert(s as u8);
            if !rest.is_empty() {
                match s {
                    Section::Principle => principle.push(rest),
                    Section::Selection => selection_lines.push((rest, line.span.clone())),
                    Section::Tasks => {
                        for (name, instruction) in task_from_line(rest, true, strict) {
                            candidates.push(TaskCandidate { name, instruction, span: line.span.clone() });
                        }
                    }
                    Section::Preamble => {}
                }
            }
            continue;
        }
        match section {
            Section::Principle => principle.push(line.text),
            Section::Selection => selection_lines.push((line.text, line.span.clone())),
            Section::Tasks => {
                let found = task_from_line(line.text, true, strict);
                if found.is_empty() && !line.text.trim().is_empty() {
                    diag.warn(WarningCode::UnparsedLine, "line in task section is not a sub-task", line.span.clone());
                }
                for (name, instruction) in found {
                    candidates.push(TaskCandidate { name, instruction, span: line.span.clone() });
                }
            }
            Section::Preamble => {}
        }
        if section != Section::Tasks {
            for (name, instruction) in task_from_line(line.text, false, strict) {
                loose.push(TaskCandidate { name, instruction, span: line.span.clone() });
            }
        }
    }

    if !seen.contains(&(Section::Tasks as u8)) && !strict {
        if !loose.is_empty() {
            let code = if seen.is_empty() { WarningCode::NoSections } else { WarningCode::NoTaskSection };
            diag.warn(code, "sub-tasks read from bracketed lines outside a task section", 0..raw.len());
        }
        candidates = loose;
    }
    if candidates.is_empty() {
        return Err(ParseError::NoTasksFound);
    }

    let mut sub_tasks = Vec::new();
    for cand in candidates {
        if cand.instruction.is_empty() || cand.instruction.contains('\n') {
            diag.warn(WarningCode::EmptyInstruction, format!("empty instruction for `{}`", cand.name), cand.span);
            continue;
        }
        let module = match normalize_module_name(&cand.name) {
            Some(m) if enabled.contains(&m) => Some(m),
            Some(m) => match policy {
                DisabledModulePolicy::Error => return Err(ParseError::DisabledModule { module: m }),
                DisabledModulePolicy::Skip => {
                    diag.warn(WarningCode::DisabledModuleSkipped, format!("{m} is disabled"), cand.span);
                    None
                }
                DisabledModulePolicy::FallbackToVisionIq => fallback(&mut diag, enabled, &cand),
            },
            None => {
                diag.unknown_modules.push(cand.name.clone());
                diag.warn(WarningCode::UnknownModule, format!("unknown module `{}`", cand.name), cand.span.clone());
                match policy {
                    DisabledModulePolicy::Error => {
                        return Err(ParseError::UnknownModule { name: cand.name })
                    }
                    DisabledModulePolicy::Skip => None,
                    DisabledModulePolicy::FallbackToVisionIq => fallback(&mut diag, enabled, &cand),
                }
            }
        };
        if let Some(module) = module {
            let ordinal = sub_tasks.len();
            sub_tasks.push(SubTask::new(module, cand.instruction, ordinal));
        }
    }

    let mut module_selections = parse_selections(&selection_lines, enabled, policy, strict, &mut diag)?;
    for task in &sub_tasks {
        if !module_selections.iter().any(|s| s.module == task.module) {
            diag.warn(
                WarningCode::SelectionAdded,
                format!("{} used by a sub-task but not selected", task.module),
                0..0,
            );
            module_selections.push(ModuleSelection { module: task.module, reason: String::new() });
        }
    }

    let decision = Decision {
        principle_analysis: principle.join("\n").trim().to_string(),
        module_selections,
        sub_tasks,
        raw: raw.to_string(),
    };
    Ok((decision, diag))
}

fn fallback(
    diag: &mut ParseDiagnostics,
    enabled: &BTreeSet<ExpertModuleId>,
    cand: &TaskCandidate,
) -> Option<ExpertModuleId> {
    if enabled.contains(&ExpertModuleId::VisionIQAnalyst) {
        diag.warn(
            WarningCode::FallbackReassigned,
            format!("`{}` reassigned to VisionIQ Analyst", cand.name),
            cand.span.clone(),
        );
        Some(ExpertModuleId::VisionIQAnalyst)
    } else {
        diag.warn(
            WarningCode::DisabledModuleSkipped,
            format!("`{}` dropped: fallback module is disabled", cand.name),
            cand.span.clone(),
        );
        None
    }
}

fn parse_selections(
    lines: &[(&str, Range<usize>)],
    enabled: &BTreeSet<ExpertModuleId>,
    policy: DisabledModulePolicy,
    strict: bool,
    diag: &mut ParseDiagnostics,
) -> Result<Vec<ModuleSelection>, ParseError> {
    let mut out: Vec<ModuleSelection> = Vec::new();
    let mut last_kept = false;
    for (text, span) in lines {
        let content = strip_bullet(text).trim();
        if content.is_empty() {
            continue;
        }
        let content = content
            .strip_prefix('[')
            .and_then(|c| c.strip_suffix(']'))
            .unwrap_or(content);
        let (name, reason) = match content.split_once(':').or_else(|| content.split_once(" - ")) {
            Some((n, r)) => (strip_markup(n), r.trim()),
            None => (strip_markup(content), ""),
        };
        match normalize_module_name(name) {
            Some(m) if enabled.contains(&m) => {
                out.push(ModuleSelection { module: m, reason: reason.to_string() });
                last_kept = true;
            }
            Some(m) => {
                if policy == DisabledModulePolicy::Error {
                    return Err(ParseError::DisabledModule { module: m });
                }
                diag.warn(WarningCode::SelectionDropped, format!("{m} is disabled"), span.clone());
                last_kept = false;
            }
            None if !strict && last_kept => {
                // continuation of the previous reason
                let prev = out.last_mut().expect("last_kept implies a selection");
                if !prev.reason.is_empty() {
                    prev.reason.push(' ');
                }
                prev.reason.push_str(content);
            }
            None => {
                diag.warn(WarningCode::UnparsedLine, "selection line names no known module", span.clone());
            }
        }
    }
    Ok(out)
}

/// Canonical text form. `parse_decision` of the output reproduces the
/// structured fields of `d` (the `raw` field excluded).
pub fn serialize_decision(d: &Decision) -> String {
    let mut out = format!("{PRINCIPLE_HEADER}:\n");
    if !d.principle_analysis.is_empty() {
        out.push_str(&d.principle_analysis);
        out.push('\n');
    }
    out.push_str(&format!("\n{SELECTION_HEADER}:\n"));
    for s in &d.module_selections {
        if s.reason.is_empty() {
            out.push_str(&format!("- {}:\n", s.module.display_name()));
        } else {
            out.push_str(&format!("- {}: {}\n", s.module.display_name(), s.reason));
        }
    }
    out.push_str(&format!("\n{TASKS_HEADER}:\n"));
    for t in &d.sub_tasks {
        out.push_str(&crate::prompting::build_expert_prompt(t));
        out.push('\n');
    }
    out
}
