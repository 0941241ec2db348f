//! Prompt construction for the three stages: the decision prompt, the
//! per-sub-task expert prompt, and the synthesis prompt. Also the baseline
//! and caption prompts.
//!
//! Rendering is a pure function of its inputs. All backend variants share the
//! same templates; only the visual slot differs (image marker plus attached
//! image for multimodal backends, caption text for text-only ones).

mod resources;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    DatasetKind, ImageRef, Modality, QueryRecord, RunConfig, SubTask, SupplementaryInfo,
    VisualLevel,
};

pub use resources::{PromptExample, PromptSet, SYNTHESIS_INSTRUCTION_RESOURCE};

/// Placeholder written where an attached image belongs in the text.
pub const IMAGE_MARKER: &str = "<image>";

/// Written in place of the supplementary block when there is nothing to add.
pub const NO_SUPPLEMENTARY_MARKER: &str = "No supplementary information is available.";

const DETAILED_CAPTION_PROMPT: &str = "Please provide the detailed title of this image as much as possible";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("record {record_id}: no {level} caption available")]
    MissingCaption { record_id: String, level: VisualLevel },
    #[error("record {record_id}: image level requested but the record has no image")]
    MissingImage { record_id: String },
    #[error("in-context example pool for {0:?} is empty")]
    EmptyPool(DatasetKind),
    #[error("cannot read prompt resource {path}: {source}")]
    Resource {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Prompt text plus an optional image attachment. Text goes first, the image second.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
}

impl RenderedPrompt {
    pub fn text_only(text: impl Into<String>) -> Self {
        RenderedPrompt {
            text: text.into(),
            image: None,
        }
    }

    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.text.as_bytes());
        if let Some(img) = &self.image {
            h.update([0u8]);
            h.update(img.sha256.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// What goes in the visual slot of a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VisualSlot {
    None,
    Caption(String),
    Image(ImageRef),
}

/// Resolves the visual slot for a record at the requested level (or the
/// record's own level) for a backend of the given modality. Text-only
/// backends get the detailed caption where an image was requested.
pub fn resolve_visual(
    record: &QueryRecord,
    level: Option<VisualLevel>,
    modality: Modality,
) -> Result<VisualSlot, PromptError> {
    let level = level.unwrap_or_else(|| record.visual.level());
    let caption = |level: VisualLevel| {
        record
            .caption(level)
            .map(|c| VisualSlot::Caption(c.to_string()))
            .ok_or_else(|| PromptError::MissingCaption {
                record_id: record.id.clone(),
                level,
            })
    };
    match (level, modality) {
        (VisualLevel::None, _) => Ok(VisualSlot::None),
        (VisualLevel::RoughCaption | VisualLevel::DetailedCaption, _) => caption(level),
        (VisualLevel::Image, Modality::Text) => caption(VisualLevel::DetailedCaption),
        (VisualLevel::Image, Modality::Multimodal) => record
            .image()
            .map(|img| VisualSlot::Image(img.clone()))
            .ok_or_else(|| PromptError::MissingImage {
                record_id: record.id.clone(),
            }),
    }
}

fn option_letter(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

/// Question, context, options, and visual slot, one per line.
pub fn render_query_block(record: &QueryRecord, slot: &VisualSlot) -> String {
    let mut out = format!("Question: {}", record.question.trim());
    if !record.context.trim().is_empty() {
        out.push_str("\nContext: ");
        out.push_str(record.context.trim());
    }
    if !record.options.is_empty() {
        let opts: Vec<String> = record
            .options
            .iter()
            .enumerate()
            .map(|(i, o)| format!("({}) {}", option_letter(i), o.trim()))
            .collect();
        out.push_str("\nOptions: ");
        out.push_str(&opts.join(" "));
    }
    match slot {
        VisualSlot::None => {}
        VisualSlot::Caption(c) => {
            out.push_str("\nImage caption: ");
            out.push_str(c.trim());
        }
        VisualSlot::Image(_) => {
            out.push_str("\nImage: ");
            out.push_str(IMAGE_MARKER);
        }
    }
    out
}

fn slot_image(slot: VisualSlot) -> Option<ImageRef> {
    match slot {
        VisualSlot::Image(img) => Some(img),
        _ => None,
    }
}

/// The five parts of the decision prompt plus the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionPromptSpec {
    pub role_preamble: String,
    /// Enabled modules only, in canonical order, as `(display name, description)`.
    pub module_descriptions: Vec<(String, String)>,
    pub rationale_instruction: String,
    pub task_allocation_instruction: String,
    pub format_instruction: String,
    pub in_context_examples: Vec<String>,
    pub query_block: String,
    pub image: Option<ImageRef>,
}

impl DecisionPromptSpec {
    pub fn render(&self) -> RenderedPrompt {
        let mut text = String::new();
        text.push_str(&self.role_preamble);
        text.push_str("\n\nExpert modules:\n");
        for (name, desc) in &self.module_descriptions {
            text.push_str(name);
            text.push_str(": ");
            text.push_str(desc);
            text.push('\n');
        }
        text.push('\n');
        text.push_str(&self.rationale_instruction);
        text.push_str("\n\n");
        text.push_str(&self.task_allocation_instruction);
        text.push_str("\n\n");
        text.push_str(&self.format_instruction);
        if !self.in_context_examples.is_empty() {
            text.push_str("\n\nHere are some examples:");
            for (i, ex) in self.in_context_examples.iter().enumerate() {
                text.push_str(&format!("\n\nExample {}:\n{}", i + 1, ex));
            }
        }
        text.push_str("\n\nNow make a decision for the following query.\n");
        text.push_str(&self.query_block);
        text.push('\n');
        RenderedPrompt {
            text,
            image: self.image.clone(),
        }
    }
}

/// Builds the decision-generation prompt. Only enabled modules are described;
/// the visual slot follows `config.visual_level` and the decision backend's modality.
pub fn build_decision_prompt(
    record: &QueryRecord,
    config: &RunConfig,
    prompts: &PromptSet,
    examples: &[String],
) -> Result<(DecisionPromptSpec, RenderedPrompt), PromptError> {
    let slot = resolve_visual(record, config.visual_level, config.decision_backend.modality)?;
    let query_block = render_query_block(record, &slot);
    let module_descriptions = prompts
        .module_descriptions
        .iter()
        .filter(|(m, _)| config.enabled_modules.contains(m))
        .map(|(m, d)| (m.display_name().to_string(), d.clone()))
        .collect();
    let spec = DecisionPromptSpec {
        role_preamble: prompts.decision_preamble.clone(),
        module_descriptions,
        rationale_instruction: prompts.rationale.clone(),
        task_allocation_instruction: prompts.allocation.clone(),
        format_instruction: prompts.decision_format.clone(),
        in_context_examples: examples.to_vec(),
        query_block,
        image: slot_image(slot),
    };
    let rendered = spec.render();
    Ok((spec, rendered))
}

/// `[<Display Name>: <instruction>]`
pub fn build_expert_prompt(sub_task: &SubTask) -> String {
    format!("[{}: {}]", sub_task.module.display_name(), sub_task.instruction)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisPromptSpec {
    pub instruction: String,
    pub query_block: String,
    pub supplementary: String,
    pub answer_format_instruction: String,
    pub image: Option<ImageRef>,
}

impl SynthesisPromptSpec {
    pub fn render(&self) -> RenderedPrompt {
        let supplementary = if self.supplementary.trim().is_empty() {
            NO_SUPPLEMENTARY_MARKER
        } else {
            self.supplementary.as_str()
        };
        let text = format!(
            "{}\n\n{}\n\nSupplementary information:\n{}\n\n{}\n",
            self.instruction, self.query_block, supplementary, self.answer_format_instruction
        );
        RenderedPrompt {
            text,
            image: self.image.clone(),
        }
    }
}

fn answer_format<'a>(record: &QueryRecord, prompts: &'a PromptSet) -> &'a str {
    if record.options.is_empty() {
        &prompts.answer_format_free
    } else {
        &prompts.answer_format_choice
    }
}

fn answer_slot(record: &QueryRecord, config: &RunConfig) -> Result<VisualSlot, PromptError> {
    let modality = config.synthesis_backend.modality;
    if modality == Modality::Text && !config.synthesis_caption {
        return Ok(VisualSlot::None);
    }
    resolve_visual(record, config.visual_level, modality)
}

/// Builds the answer-synthesis prompt: instruction, query, supplementary
/// information, then the rationale-before-answer format requirement.
pub fn build_synthesis_prompt(
    record: &QueryRecord,
    supp: &SupplementaryInfo,
    config: &RunConfig,
    prompts: &PromptSet,
) -> Result<(SynthesisPromptSpec, RenderedPrompt), PromptError> {
    let slot = answer_slot(record, config)?;
    let spec = SynthesisPromptSpec {
        instruction: prompts.synthesis_instruction.clone(),
        query_block: render_query_block(record, &slot),
        supplementary: supp.rendered.clone(),
        answer_format_instruction: answer_format(record, prompts).to_string(),
        image: slot_image(slot),
    };
    let rendered = spec.render();
    Ok((spec, rendered))
}

/// Direct question-to-answer prompt used by baseline mode.
pub fn build_baseline_prompt(
    record: &QueryRecord,
    config: &RunConfig,
    prompts: &PromptSet,
) -> Result<RenderedPrompt, PromptError> {
    let slot = answer_slot(record, config)?;
    let text = format!(
        "{}\n\n{} {}\n",
        render_query_block(record, &slot),
        prompts.baseline,
        answer_format(record, prompts)
    );
    Ok(RenderedPrompt {
        text,
        image: slot_image(slot),
    })
}

/// The prompt used to generate detailed captions with a multimodal backend.
pub fn build_caption_prompt() -> &'static str {
    DETAILED_CAPTION_PROMPT
}

/// First `count` examples of the dataset's pool, in pool order. `None` takes the whole pool.
pub fn select_in_context_examples(
    prompts: &PromptSet,
    dataset: DatasetKind,
    count: Option<usize>,
) -> Result<Vec<String>, PromptError> {
    let pool = prompts
        .examples
        .get(&dataset)
        .filter(|p| !p.is_empty())
        .ok_or(PromptError::EmptyPool(dataset))?;
    let n = count.unwrap_or(pool.len()).min(pool.len());
    Ok(pool[..n].iter().map(|e| e.text.clone()).collect())
}
