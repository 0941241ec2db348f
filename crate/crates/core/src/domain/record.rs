use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// How much visual information a prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualLevel {
    None,
    RoughCaption,
    DetailedCaption,
    Image,
}

impl VisualLevel {
    pub const ALL: [VisualLevel; 4] = [
        VisualLevel::None,
        VisualLevel::RoughCaption,
        VisualLevel::DetailedCaption,
        VisualLevel::Image,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VisualLevel::None => "No Visual Information",
            VisualLevel::RoughCaption => "+ Rough Caption",
            VisualLevel::DetailedCaption => "+ Detailed Caption",
            VisualLevel::Image => "+ Image",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            VisualLevel::None => "none",
            VisualLevel::RoughCaption => "rough",
            VisualLevel::DetailedCaption => "detailed",
            VisualLevel::Image => "image",
        }
    }

    pub fn parse(raw: &str) -> Option<VisualLevel> {
        match raw.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "none" | "no" => Some(VisualLevel::None),
            "rough" | "rough_caption" => Some(VisualLevel::RoughCaption),
            "detailed" | "detailed_caption" => Some(VisualLevel::DetailedCaption),
            "image" => Some(VisualLevel::Image),
            _ => None,
        }
    }
}

impl fmt::Display for VisualLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// An image on disk, referenced by path and content digest. Never embedded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub path: PathBuf,
    pub sha256: String,
    pub media_type: String,
}

impl ImageRef {
    /// Hashes the file and guesses the media type from its extension.
    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<ImageRef> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Ok(ImageRef {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            media_type: media_type_for(path).to_string(),
        })
    }
}

pub fn media_type_for(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "gif" => "image/gif",
        "webp" => "image/webp",
        "bmp" => "image/bmp",
        _ => "application/octet-stream",
    }
}

/// The primary visual input of a record. The variant fixes which payload exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum VisualInput {
    #[default]
    None,
    RoughCaption {
        caption: String,
    },
    DetailedCaption {
        caption: String,
    },
    Image {
        image: ImageRef,
    },
}

impl VisualInput {
    pub fn level(&self) -> VisualLevel {
        match self {
            VisualInput::None => VisualLevel::None,
            VisualInput::RoughCaption { .. } => VisualLevel::RoughCaption,
            VisualInput::DetailedCaption { .. } => VisualLevel::DetailedCaption,
            VisualInput::Image { .. } => VisualLevel::Image,
        }
    }

    pub fn image(&self) -> Option<&ImageRef> {
        match self {
            VisualInput::Image { image } => Some(image),
            _ => None,
        }
    }
}

/// Captions generated for a record in addition to its primary visual input,
/// so one record can be swept across visual levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Captions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rough: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detailed: Option<String>,
}

impl Captions {
    pub fn is_empty(&self) -> bool {
        self.rough.is_none() && self.detailed.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoldAnswer {
    Choice {
        index: usize,
    },
    Number {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
    },
    Text {
        value: String,
    },
}

impl GoldAnswer {
    pub fn is_choice(&self) -> bool {
        matches!(self, GoldAnswer::Choice { .. })
    }
}

/// Open tag map: family (e.g. `subject`) to one or more values (e.g. `NAT`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct CategoryTags(pub BTreeMap<String, Vec<String>>);

impl CategoryTags {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, family: &str, value: impl Into<String>) {
        let value = value.into();
        let values = self.0.entry(family.to_string()).or_default();
        if !values.contains(&value) {
            values.push(value);
        }
    }

    pub fn with(mut self, family: &str, value: impl Into<String>) -> Self {
        self.insert(family, value);
        self
    }

    pub fn values(&self, family: &str) -> &[String] {
        self.0.get(family).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has(&self, family: &str, value: &str) -> bool {
        self.values(family).iter().any(|v| v == value)
    }

    pub fn families(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub question: String,
    /// Hint/context text accompanying the question; may be empty.
    #[serde(default)]
    pub context: String,
    /// Empty for free-form items.
    #[serde(default)]
    pub options: Vec<String>,
    pub gold: GoldAnswer,
    #[serde(default)]
    pub visual: VisualInput,
    #[serde(default, skip_serializing_if = "Captions::is_empty")]
    pub captions: Captions,
    #[serde(default)]
    pub categories: CategoryTags,
    #[serde(default)]
    pub split: String,
}

impl QueryRecord {
    pub fn is_choice(&self) -> bool {
        self.gold.is_choice()
    }

    pub fn image(&self) -> Option<&ImageRef> {
        self.visual.image()
    }

    /// Caption for the given caption level, from the primary input or the extra captions.
    pub fn caption(&self, level: VisualLevel) -> Option<&str> {
        match (level, &self.visual) {
            (VisualLevel::RoughCaption, VisualInput::RoughCaption { caption })
            | (VisualLevel::DetailedCaption, VisualInput::DetailedCaption { caption }) => {
                Some(caption.as_str())
            }
            (VisualLevel::RoughCaption, _) => self.captions.rough.as_deref(),
            (VisualLevel::DetailedCaption, _) => self.captions.detailed.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: &str) -> Self {
        Violation {
            field: field.to_string(),
            rule: rule.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every per-record invariant. An empty report means the record is valid.
pub fn validate_query(record: &QueryRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.trim().is_empty() {
        out.push(Violation::new("id", "id must be non-empty"));
    }
    if record.question.trim().is_empty() {
        out.push(Violation::new("question", "question must be non-empty"));
    }
    match &record.gold {
        GoldAnswer::Choice { index } => {
            if record.options.is_empty() {
                out.push(Violation::new("options", "options must be non-empty for choice"));
            } else if *index >= record.options.len() {
                out.push(Violation::new("gold", "gold out of range"));
            }
        }
        GoldAnswer::Number { value, tolerance } => {
            if !record.options.is_empty() {
                out.push(Violation::new("options", "options must be empty for free-form"));
            }
            if !value.is_finite() {
                out.push(Violation::new("gold", "numeric gold must be finite"));
            }
            if let Some(t) = tolerance {
                if !(t.is_finite() && *t >= 0.0) {
                    out.push(Violation::new("gold", "tolerance must be finite and non-negative"));
                }
            }
        }
        GoldAnswer::Text { value } => {
            if !record.options.is_empty() {
                out.push(Violation::new("options", "options must be empty for free-form"));
            }
            if value.trim().is_empty() {
                out.push(Violation::new("gold", "text gold must be non-empty"));
            }
        }
    }
    match &record.visual {
        VisualInput::RoughCaption { caption } | VisualInput::DetailedCaption { caption }
            if caption.trim().is_empty() =>
        {
            out.push(Violation::new("visual", "caption must be non-empty"));
        }
        VisualInput::Image { image } => {
            let ok = image.sha256.len() == 64 && image.sha256.bytes().all(|b| b.is_ascii_hexdigit());
            if !ok {
                out.push(Violation::new("visual", "image digest must be 64 hex characters"));
            }
        }
        _ => {}
    }
    out
}
