pub mod answer_extract;
pub mod backends;
pub mod cli;
pub mod datasets;
pub mod decision_parser;
pub mod domain;
pub mod evaluation;
pub mod pipeline;
pub mod prompting;
