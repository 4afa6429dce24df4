use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::spec::Literal;
use crate::stats::TestOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    SetupDeployed,
    ExperimentStarted,
    SamplesProgress,
    ExperimentAnalyzed,
    RuleFired,
    PipelineEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineEvent {
    pub seq: u64,
    pub kind: EventKind,
    /// Virtual time in microseconds.
    pub timestamp_us: u64,
    pub payload: Value,
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum EndReason {
    /// A rule into `end` fired.
    #[serde(rename_all = "camelCase")]
    RuleToEnd { rule: String },
    /// The finished experiment has no outgoing rule whose conditions hold.
    #[serde(rename_all = "camelCase")]
    NoMatchingRule { experiment: String },
    Aborted,
    #[serde(rename_all = "camelCase")]
    VisitGuard { max_visits: usize },
    Failed { diagnostic: String },
}

impl EndReason {
    /// The run went through to a regular end of the pipeline.
    pub fn is_success(&self) -> bool {
        matches!(self, EndReason::RuleToEnd { .. } | EndReason::NoMatchingRule { .. })
    }
}

/// One visit of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentRun {
    pub visit: usize,
    pub experiment: String,
    pub started_at_us: u64,
    pub ended_at_us: Option<u64>,
    /// Values collected per metric, including any beyond the budget.
    pub samples_collected: BTreeMap<String, usize>,
    /// Values per hypothesis metric that entered the test.
    pub samples_consumed: BTreeMap<String, u64>,
    pub requests_sent: u64,
    pub outcome: Option<TestOutcome>,
    pub fired_rule: Option<String>,
    /// Next experiment, or `end`.
    pub next: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineResult {
    pub pipeline_id: String,
    pub seed: u64,
    /// False while the run is in progress.
    pub completed: bool,
    pub end: Option<EndReason>,
    /// Experiments in visit order, followed by `end` once the pipeline ended
    /// through a rule or for lack of one.
    pub path: Vec<String>,
    pub bindings: BTreeMap<String, Literal>,
    pub experiments: Vec<ExperimentRun>,
    pub trace: Vec<PipelineEvent>,
    pub warnings: Vec<String>,
}

impl PipelineResult {
    pub fn outcome_of(&self, experiment: &str) -> Option<&TestOutcome> {
        self.experiments
            .iter()
            .rev()
            .find(|e| e.experiment == experiment)
            .and_then(|e| e.outcome.as_ref())
    }

    /// Rules fired, in order.
    pub fn fired_rules(&self) -> Vec<&str> {
        self.experiments.iter().filter_map(|e| e.fired_rule.as_deref()).collect()
    }
}

/// The loop's shared knowledge. Written only by the loop; readers take
/// snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct KnowledgeStore {
    pub pipeline_id: String,
    pub seed: u64,
    pub current_experiment: Option<String>,
    pub visit: usize,
    /// Metric values of the current experiment, in arrival order.
    pub samples: BTreeMap<String, Vec<f64>>,
    pub bindings: BTreeMap<String, Literal>,
    pub trace: Vec<PipelineEvent>,
    pub experiments: Vec<ExperimentRun>,
    pub path: Vec<String>,
    pub warnings: Vec<String>,
    pub end: Option<EndReason>,
    pub now_us: u64,
}

impl KnowledgeStore {
    pub fn new(pipeline_id: impl Into<String>, seed: u64) -> Self {
        Self { pipeline_id: pipeline_id.into(), seed, ..Self::default() }
    }

    pub fn samples_collected(&self) -> BTreeMap<String, usize> {
        self.samples.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }

    /// The result as of now; `completed` once the run has ended.
    pub fn result(&self) -> PipelineResult {
        let mut experiments = self.experiments.clone();
        if let (Some(current), Some(last)) = (&self.current_experiment, experiments.last_mut()) {
            if last.ended_at_us.is_none() && &last.experiment == current {
                last.samples_collected = self.samples_collected();
            }
        }
        PipelineResult {
            pipeline_id: self.pipeline_id.clone(),
            seed: self.seed,
            completed: self.end.is_some(),
            end: self.end.clone(),
            path: self.path.clone(),
            bindings: self.bindings.clone(),
            experiments,
            trace: self.trace.clone(),
            warnings: self.warnings.clone(),
        }
    }

    pub fn recent_events(&self, n: usize) -> &[PipelineEvent] {
        &self.trace[self.trace.len().saturating_sub(n)..]
    }
}
