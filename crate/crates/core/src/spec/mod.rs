//! Document model for experiments, transition rules, pipelines, user
//! profiles and setups, plus resolution of a pipeline into an executable
//! graph.
//!
//! Every document is a UTF-8 JSON file holding one top-level named object,
//! e.g. `{ "Performance OK": { "fromExperiment": ..., ... } }`. Pipeline
//! documents may also be a bare object, in which case the id is the file
//! stem.

mod catalog;
mod document;
mod experiment;
mod pipeline;
mod profile;
mod resolve;
mod rule;
mod setup;

pub use catalog::{load_catalogs, Catalog, DocumentKind, ValidationIssue, ValidationReport};
pub use experiment::{
    parse_experiment, AbAssignment, ExperimentSpec, Hypothesis, StatisticalTestSpec, TestType,
};
pub use pipeline::{parse_pipeline, parse_pipeline_with_id, PipelineSpec, DEFAULT_PIPELINE_ID};
pub use profile::{parse_profile, UserClass, UserProfile};
pub use resolve::{resolve_pipeline, ExecutablePipeline, ExperimentNode};
pub use rule::{parse_transition_rule, Condition, Literal, Operator, Target, TransitionRule};
pub use setup::{parse_setup, AbComponentSpec, AssignmentMode, ServiceSpec, SetupSpec};

/// Reserved `toExperiment` value that ends a pipeline.
pub const END: &str = "end";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("unknown user profile: {0}")]
    UnknownProfile(String),
    #[error("unknown experiment: {0}")]
    UnknownExperiment(String),
    #[error("unknown rule: {0}")]
    UnknownRule(String),
    #[error("unknown setup: {0}")]
    UnknownSetup(String),
    #[error("unknown pipeline: {0}")]
    UnknownPipeline(String),
    #[error("duplicate rule id: {0}")]
    DuplicateRule(String),
}

impl SpecError {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        SpecError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}
