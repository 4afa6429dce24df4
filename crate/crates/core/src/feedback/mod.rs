//! The MAPE-K loop that executes a pipeline: monitor probe data into the
//! knowledge store, analyze a finished experiment, plan the next one from
//! the transition rules, and execute it through the effector.

mod knowledge;
mod runner;

pub use knowledge::{EndReason, EventKind, ExperimentRun, KnowledgeStore, PipelineEvent, PipelineResult};
pub use runner::{run_pipeline, AbortHandle, FeedbackLoop, LoopConfig, Plan};
