use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the four expert roles a single multimodal backend is asked to play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExpertModuleId {
    TextIntelExtractor,
    ObjectQuantLocator,
    VisionIQAnalyst,
    ChartSenseExpert,
}

impl ExpertModuleId {
    pub const ALL: [ExpertModuleId; 4] = [
        ExpertModuleId::TextIntelExtractor,
        ExpertModuleId::ObjectQuantLocator,
        ExpertModuleId::VisionIQAnalyst,
        ExpertModuleId::ChartSenseExpert,
    ];

    /// Name used in prompts and in the bracketed expert-call format.
    pub fn display_name(self) -> &'static str {
        match self {
            ExpertModuleId::TextIntelExtractor => "TextIntel Extractor",
            ExpertModuleId::ObjectQuantLocator => "ObjectQuant Locator",
            ExpertModuleId::VisionIQAnalyst => "VisionIQ Analyst",
            ExpertModuleId::ChartSenseExpert => "ChartSense Expert",
        }
    }

    /// Stable identifier used for config files and resource file names.
    pub fn key(self) -> &'static str {
        match self {
            ExpertModuleId::TextIntelExtractor => "text_intel_extractor",
            ExpertModuleId::ObjectQuantLocator => "object_quant_locator",
            ExpertModuleId::VisionIQAnalyst => "vision_iq_analyst",
            ExpertModuleId::ChartSenseExpert => "chart_sense_expert",
        }
    }

    /// Short label for table headers.
    pub fn short_name(self) -> &'static str {
        match self {
            ExpertModuleId::TextIntelExtractor => "TextIntel",
            ExpertModuleId::ObjectQuantLocator => "ObjectQuant",
            ExpertModuleId::VisionIQAnalyst => "VisionIQ",
            ExpertModuleId::ChartSenseExpert => "ChartSense",
        }
    }
}

impl fmt::Display for ExpertModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown expert module `{0}`")]
pub struct UnknownModule(pub String);

impl FromStr for ExpertModuleId {
    type Err = UnknownModule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_module_name(s).ok_or_else(|| UnknownModule(s.to_string()))
    }
}

impl Serialize for ExpertModuleId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for ExpertModuleId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Maps a model-emitted module name onto a canonical id.
///
/// Matching ignores case, whitespace, and punctuation, so `"ChartSense Expert"`,
/// `"chartsense-expert"` and `"**Chart Sense Expert**"` all resolve. Both
/// "TextIntel Extract" and "TextIntel Extractor" are accepted, as are the bare
/// family names ("ChartSense", "VisionIQ", ...). Anything else is `None`.
pub fn normalize_module_name(raw: &str) -> Option<ExpertModuleId> {
    let folded: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    let id = match folded.as_str() {
        "textintelextractor" | "textintelextract" | "textintel" => {
            ExpertModuleId::TextIntelExtractor
        }
        "objectquantlocator" | "objectquant" => ExpertModuleId::ObjectQuantLocator,
        "visioniqanalyst" | "visioniq" => ExpertModuleId::VisionIQAnalyst,
        "chartsenseexpert" | "chartsense" => ExpertModuleId::ChartSenseExpert,
        _ => return None,
    };
    Some(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_names_resolve() {
        assert_eq!(
            normalize_module_name("ChartSense Expert"),
            Some(ExpertModuleId::ChartSenseExpert)
        );
        assert_eq!(
            normalize_module_name("textintel extract"),
            Some(ExpertModuleId::TextIntelExtractor)
        );
        assert_eq!(
            normalize_module_name("TextIntel Extractor"),
            Some(ExpertModuleId::TextIntelExtractor)
        );
        assert_eq!(
            normalize_module_name("Object Quant Locator"),
            Some(ExpertModuleId::ObjectQuantLocator)
        );
        assert_eq!(
            normalize_module_name("**VisionIQ  Analyst**"),
            Some(ExpertModuleId::VisionIQAnalyst)
        );
        assert_eq!(normalize_module_name("OCR Module"), None);
        assert_eq!(normalize_module_name(""), None);
    }

    #[test]
    fn config_keys_resolve() {
        for id in ExpertModuleId::ALL {
            assert_eq!(normalize_module_name(id.key()), Some(id));
        }
    }

    #[test]
    fn serde_uses_keys_and_accepts_display_names() {
        let json = serde_json::to_string(&ExpertModuleId::VisionIQAnalyst).unwrap();
        assert_eq!(json, "\"vision_iq_analyst\"");
        let back: ExpertModuleId = serde_json::from_str("\"VisionIQ Analyst\"").unwrap();
        assert_eq!(back, ExpertModuleId::VisionIQAnalyst);
        assert!(serde_json::from_str::<ExpertModuleId>("\"OCR\"").is_err());
    }

    proptest! {
        #[test]
        fn idempotent_on_display_names(idx in 0usize..4) {
            let id = ExpertModuleId::ALL[idx];
            let once = normalize_module_name(id.display_name()).unwrap();
            prop_assert_eq!(once, id);
            prop_assert_eq!(normalize_module_name(once.display_name()), Some(once));
        }

        #[test]
        fn tolerant_to_case_and_spacing(idx in 0usize..4, upper in any::<bool>(), sep in "[ _\\-\\.]{0,3}") {
            let id = ExpertModuleId::ALL[idx];
            let mut name = id.display_name().replace(' ', &sep);
            if upper {
                name = name.to_uppercase();
            }
            prop_assert_eq!(normalize_module_name(&name), Some(id));
        }
    }
}
