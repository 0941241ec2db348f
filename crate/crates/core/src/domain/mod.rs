//! Value types shared by every pipeline stage.
//!
//! Everything here is an immutable value object: records, decisions,
//! sub-answers, final answers, and the run configuration.

mod config;
mod decision;
mod module;
mod record;

pub use config::{
    BackendBinding, CacheConfig, ConfigError, DatasetKind, DisabledModulePolicy, Modality,
    PipelineMode, Provider, RetryConfig, RunConfig, Sampling,
};
pub use decision::{
    Decision, FinalAnswer, FreeFormValue, ModuleSelection, SubAnswer, SubAnswerStatus, SubTask,
    SupplementaryInfo,
};
pub use module::{normalize_module_name, ExpertModuleId, UnknownModule};
pub use record::{
    media_type_for, validate_query, Captions, CategoryTags, GoldAnswer, ImageRef, QueryRecord,
    Violation, VisualInput, VisualLevel,
};

#[cfg(test)]
pub(crate) use record::tests::choice_record;
