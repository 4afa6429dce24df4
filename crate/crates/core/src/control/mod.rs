//! Run management for operators: catalogs, starting and aborting pipeline
//! runs, status and live summaries, and persisted results.

mod controller;
mod summary;

pub use controller::{
    ControlError, Controller, EdgeView, PipelineView, RunRecord, RunStatus, StatusReport,
};
pub use summary::{quantile_sorted, response_time_summaries, BoxSummary, LiveSummary};
