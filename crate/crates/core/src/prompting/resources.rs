use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::domain::{DatasetKind, ExpertModuleId, VisualLevel};

use super::PromptError;

/// All prompt texts used by the pipeline.
///
/// The shipped set is compiled in from `prompts/`; [`PromptSet::load_dir`]
/// reads the same layout from disk so texts can be edited without a rebuild:
///
/// ```text
/// decision_preamble.txt  module_desc/<module key>.txt  rationale.txt
/// allocation.txt  decision_format.txt  synthesis_E.txt
/// answer_format_choice.txt  answer_format_free.txt  baseline.txt
/// caption.txt  caption_rough.txt  reprompt.txt
/// examples/{scienceqa,mathvista}/*.txt
/// ```
///
/// Leading lines starting with `#` are header comments and are stripped, as
/// is trailing whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub decision_preamble: String,
    pub module_descriptions: BTreeMap<ExpertModuleId, String>,
    pub rationale: String,
    pub allocation: String,
    pub decision_format: String,
    pub synthesis_instruction: String,
    pub answer_format_choice: String,
    pub answer_format_free: String,
    pub baseline: String,
    pub caption_detailed: String,
    pub caption_rough: String,
    pub reprompt: String,
    pub examples: BTreeMap<DatasetKind, Vec<PromptExample>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptExample {
    pub name: String,
    pub text: String,
}

macro_rules! builtin {
    ($path:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/prompts/", $path))
    };
}

const BUILTIN_EXAMPLES: &[(DatasetKind, &str, &str)] = &[
    (DatasetKind::Scienceqa, "01_particles.txt", builtin!("examples/scienceqa/01_particles.txt")),
    (DatasetKind::Scienceqa, "02_magnets.txt", builtin!("examples/scienceqa/02_magnets.txt")),
    (DatasetKind::Scienceqa, "03_map.txt", builtin!("examples/scienceqa/03_map.txt")),
    (DatasetKind::Mathvista, "01_bar_chart.txt", builtin!("examples/mathvista/01_bar_chart.txt")),
    (DatasetKind::Mathvista, "02_geometry.txt", builtin!("examples/mathvista/02_geometry.txt")),
];

/// Raw text of the shipped synthesis instruction resource.
pub const SYNTHESIS_INSTRUCTION_RESOURCE: &str = builtin!("synthesis_E.txt");

pub(crate) fn normalize_resource(raw: &str) -> String {
    let mut lines = raw.lines().peekable();
    while lines.peek().is_some_and(|l| l.starts_with('#')) {
        lines.next();
    }
    let body: Vec<&str> = lines.collect();
    body.join("\n").trim_matches(['\n', '\r']).trim_end().to_string()
}

impl PromptSet {
    pub fn builtin() -> PromptSet {
        let module_descriptions = ExpertModuleId::ALL
            .into_iter()
            .map(|m| {
                let raw = match m {
                    ExpertModuleId::TextIntelExtractor => builtin!("module_desc/text_intel_extractor.txt"),
                    ExpertModuleId::ObjectQuantLocator => builtin!("module_desc/object_quant_locator.txt"),
                    ExpertModuleId::VisionIQAnalyst => builtin!("module_desc/vision_iq_analyst.txt"),
                    ExpertModuleId::ChartSenseExpert => builtin!("module_desc/chart_sense_expert.txt"),
                };
                (m, normalize_resource(raw))
            })
            .collect();
        let mut examples: BTreeMap<DatasetKind, Vec<PromptExample>> = BTreeMap::new();
        for (kind, name, raw) in BUILTIN_EXAMPLES {
            examples.entry(*kind).or_default().push(PromptExample {
                name: name.to_string(),
                text: normalize_resource(raw),
            });
        }
        PromptSet {
            decision_preamble: normalize_resource(builtin!("decision_preamble.txt")),
            module_descriptions,
            rationale: normalize_resource(builtin!("rationale.txt")),
            allocation: normalize_resource(builtin!("allocation.txt")),
            decision_format: normalize_resource(builtin!("decision_format.txt")),
            synthesis_instruction: normalize_resource(SYNTHESIS_INSTRUCTION_RESOURCE),
            answer_format_choice: normalize_resource(builtin!("answer_format_choice.txt")),
            answer_format_free: normalize_resource(builtin!("answer_format_free.txt")),
            baseline: normalize_resource(builtin!("baseline.txt")),
            caption_detailed: normalize_resource(builtin!("caption.txt")),
            caption_rough: normalize_resource(builtin!("caption_rough.txt")),
            reprompt: normalize_resource(builtin!("reprompt.txt")),
            examples,
        }
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<PromptSet, PromptError> {
        let dir = dir.as_ref();
        let read = |rel: &str| -> Result<String, PromptError> {
            let path = dir.join(rel);
            std::fs::read_to_string(&path)
                .map(|s| normalize_resource(&s))
                .map_err(|source| PromptError::Resource { path, source })
        };
        let mut module_descriptions = BTreeMap::new();
        for m in ExpertModuleId::ALL {
            module_descriptions.insert(m, read(&format!("module_desc/{}.txt", m.key()))?);
        }
        let mut examples = BTreeMap::new();
        for kind in [DatasetKind::Scienceqa, DatasetKind::Mathvista] {
            let pool_dir = dir.join("examples").join(kind.key());
            let mut files: Vec<PathBuf> = match std::fs::read_dir(&pool_dir) {
                Ok(entries) => entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                    .collect(),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                Err(source) => return Err(PromptError::Resource { path: pool_dir, source }),
            };
            files.sort();
            let mut pool = Vec::new();
            for path in files {
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| PromptError::Resource { path: path.clone(), source })?;
                pool.push(PromptExample {
                    name: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                    text: normalize_resource(&text),
                });
            }
            examples.insert(kind, pool);
        }
        Ok(PromptSet {
            decision_preamble: read("decision_preamble.txt")?,
            module_descriptions,
            rationale: read("rationale.txt")?,
            allocation: read("allocation.txt")?,
            decision_format: read("decision_format.txt")?,
            synthesis_instruction: read("synthesis_E.txt")?,
            answer_format_choice: read("answer_format_choice.txt")?,
            answer_format_free: read("answer_format_free.txt")?,
            baseline: read("baseline.txt")?,
            caption_detailed: read("caption.txt")?,
            caption_rough: read("caption_rough.txt")?,
            reprompt: read("reprompt.txt")?,
            examples,
        })
    }

    /// Writes this set to `dir` in the layout [`PromptSet::load_dir`] reads.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("module_desc"))?;
        for (rel, text) in self.resources() {
            let path = dir.join(&rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, format!("{text}\n"))?;
        }
        Ok(())
    }

    /// Caption prompt for a caption level.
    pub fn caption_prompt(&self, level: VisualLevel) -> Option<&str> {
        match level {
            VisualLevel::RoughCaption => Some(&self.caption_rough),
            VisualLevel::DetailedCaption => Some(&self.caption_detailed),
            _ => None,
        }
    }

    fn resources(&self) -> Vec<(String, &str)> {
        let mut out: Vec<(String, &str)> = vec![
            ("decision_preamble.txt".into(), &self.decision_preamble),
            ("rationale.txt".into(), &self.rationale),
            ("allocation.txt".into(), &self.allocation),
            ("decision_format.txt".into(), &self.decision_format),
            ("synthesis_E.txt".into(), &self.synthesis_instruction),
            ("answer_format_choice.txt".into(), &self.answer_format_choice),
            ("answer_format_free.txt".into(), &self.answer_format_free),
            ("baseline.txt".into(), &self.baseline),
            ("caption.txt".into(), &self.caption_detailed),
            ("caption_rough.txt".into(), &self.caption_rough),
            ("reprompt.txt".into(), &self.reprompt),
        ];
        for (m, text) in &self.module_descriptions {
            out.push((format!("module_desc/{}.txt", m.key()), text));
        }
        for (kind, pool) in &self.examples {
            for ex in pool {
                out.push((format!("examples/{}/{}", kind.key(), ex.name), &ex.text));
            }
        }
        out
    }

    /// SHA-256 of every resource, keyed by relative path. Recorded in run manifests.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.resources()
            .into_iter()
            .map(|(rel, text)| (rel, hex::encode(Sha256::digest(text.as_bytes()))))
            .collect()
    }
}
