//! Automated A/B experiment pipelines over a simulated micro-service web store.
//!
//! A pipeline is a graph of two-variant experiments joined by guarded
//! transition rules. A MAPE-K feedback loop ([`feedback`]) drives it: it
//! routes simulated users through the A/B component ([`router`]) of the web
//! store ([`sim`]), gathers per-variant samples, tests them ([`stats`]), and
//! picks the next experiment. [`control`] manages runs and persisted results
//! for operators.

pub mod control;
pub mod feedback;
pub mod hashing;
pub mod router;
pub mod sim;
pub mod spec;
pub mod stats;
pub mod traffic;

pub use control::{Controller, RunStatus};
pub use feedback::{run_pipeline, LoopConfig, PipelineResult};
pub use router::{AbRouter, RequestRecord, Variant};
pub use sim::WebStore;
pub use spec::{Catalog, ExecutablePipeline, ExperimentSpec, PipelineSpec, TransitionRule};
pub use stats::{Decision, TestOutcome};
