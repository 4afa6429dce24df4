use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::summary::{response_time_summaries, LiveSummary};
use crate::feedback::{
    AbortHandle, EndReason, FeedbackLoop, KnowledgeStore, LoopConfig, PipelineEvent, PipelineResult,
};
use crate::sim::WebStore;
use crate::spec::{load_catalogs, resolve_pipeline, Catalog, PipelineSpec, Target, TransitionRule, ValidationReport};
use crate::traffic::SimClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Loaded,
    Running,
    Ended,
    Aborted,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Ended | RunStatus::Aborted | RunStatus::Failed)
    }

    /// Transitions allowed by the run state machine.
    pub fn can_become(self, next: RunStatus) -> bool {
        matches!(
            (self, next),
            (RunStatus::Loaded, RunStatus::Running)
                | (RunStatus::Loaded, RunStatus::Aborted)
                | (RunStatus::Running, RunStatus::Ended | RunStatus::Aborted | RunStatus::Failed)
        )
    }

    fn from_end(end: &EndReason) -> RunStatus {
        match end {
            EndReason::RuleToEnd { .. } | EndReason::NoMatchingRule { .. } => RunStatus::Ended,
            EndReason::Aborted => RunStatus::Aborted,
            EndReason::VisitGuard { .. } | EndReason::Failed { .. } => RunStatus::Failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRecord {
    pub run_id: String,
    pub pipeline_id: String,
    pub seed: u64,
    pub clock: SimClock,
    pub status: RunStatus,
    /// Wall-clock milliseconds since the Unix epoch.
    pub started_at: Option<u64>,
    pub ended_at: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(skip)]
    pub result: Option<PipelineResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatusReport {
    pub run: RunRecord,
    pub current_experiment: Option<String>,
    pub visit: usize,
    pub samples_collected: BTreeMap<String, usize>,
    pub path: Vec<String>,
    pub recent_events: Vec<PipelineEvent>,
    /// Virtual time of the run in microseconds.
    pub now_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeView {
    pub rule: String,
    pub from: String,
    pub to: String,
    pub conditions: Vec<String>,
}

/// A catalog pipeline with its graph, for operators picking one to run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineView {
    pub id: String,
    pub setup: String,
    pub start: String,
    pub experiments: Vec<String>,
    pub edges: Vec<EdgeView>,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("unknown run: {0}")]
    UnknownRun(String),
    #[error("unknown pipeline: {0}")]
    UnknownPipeline(String),
    #[error("pipeline {pipeline} does not resolve: {message}")]
    InvalidPipeline { pipeline: String, message: String },
    #[error("run {0} is already active")]
    RunActive(String),
    #[error("run {run} is {status:?}; cannot {operation}")]
    InvalidTransition { run: String, status: RunStatus, operation: &'static str },
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for ControlError {
    fn from(e: std::io::Error) -> Self {
        ControlError::Io(e.to_string())
    }
}

const RECENT_EVENTS: usize = 20;

struct RunEntry {
    record: RunRecord,
    pipeline: Arc<crate::spec::ExecutablePipeline>,
    catalog_snapshot: serde_json::Value,
    knowledge: Option<Arc<RwLock<KnowledgeStore>>>,
    abort: Option<AbortHandle>,
    thread: Option<JoinHandle<()>>,
}

#[derive(Default)]
struct State {
    catalog: Catalog,
    report: ValidationReport,
    runs: BTreeMap<String, RunEntry>,
    next_run: u64,
    active: Option<String>,
}

struct Shared {
    runs_dir: Option<PathBuf>,
    store: Arc<WebStore>,
    config: LoopConfig,
    state: Mutex<State>,
}

/// Operator-facing control of pipeline runs over one simulated store. At
/// most one run is active at a time. With a runs directory every run is
/// persisted as `<dir>/<run id>/{run.json, catalog.json, events.jsonl,
/// result.json}` and reloaded by [`Controller::open`].
#[derive(Clone)]
pub struct Controller {
    shared: Arc<Shared>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Controller {
    /// A controller that keeps runs in memory only.
    pub fn in_memory(config: LoopConfig) -> Self {
        Self::build(None, config, State::default())
    }

    /// A controller persisting runs under `runs_dir`; runs already there are
    /// loaded. A run that was still active when its process stopped is
    /// marked failed.
    pub fn open(runs_dir: &Path, config: LoopConfig) -> Result<Self, ControlError> {
        fs::create_dir_all(runs_dir)?;
        let mut state = State::default();
        let mut dirs: Vec<PathBuf> = fs::read_dir(runs_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("run.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let entry = load_run(&dir)?;
            if let Some(n) = entry.record.run_id.strip_prefix("run-").and_then(|n| n.parse::<u64>().ok()) {
                state.next_run = state.next_run.max(n);
            }
            state.runs.insert(entry.record.run_id.clone(), entry);
        }
        Ok(Self::build(Some(runs_dir.to_path_buf()), config, state))
    }

    fn build(runs_dir: Option<PathBuf>, config: LoopConfig, state: State) -> Self {
        Self {
            shared: Arc::new(Shared {
                runs_dir,
                store: Arc::new(WebStore::new(0)),
                config,
                state: Mutex::new(state),
            }),
        }
    }

    /// The simulated store runs execute against; also serves the probe and
    /// effector endpoints.
    pub fn store(&self) -> Arc<WebStore> {
        Arc::clone(&self.shared.store)
    }

    /// Replaces the catalog with the documents under `dir`.
    pub fn load_catalogs(&self, dir: &Path) -> Result<ValidationReport, ControlError> {
        let (catalog, report) = load_catalogs(dir)?;
        for setup in catalog.setups.values() {
            self.shared.store.register_setup(setup.clone());
        }
        let mut state = self.shared.state.lock();
        state.catalog = catalog;
        state.report = report.clone();
        Ok(report)
    }

    pub fn validation_report(&self) -> ValidationReport {
        self.shared.state.lock().report.clone()
    }

    pub fn pipelines(&self) -> Vec<PipelineView> {
        let state = self.shared.state.lock();
        state.catalog.pipelines.values().map(|p| pipeline_view(p, &state.catalog)).collect()
    }

    /// Registers a run of `pipeline_id` in state `loaded`.
    pub fn create_run(&self, pipeline_id: &str, seed: u64, clock: SimClock) -> Result<String, ControlError> {
        let mut state = self.shared.state.lock();
        let spec = state
            .catalog
            .pipelines
            .get(pipeline_id)
            .ok_or_else(|| ControlError::UnknownPipeline(pipeline_id.to_string()))?;
        let pipeline = resolve_pipeline(spec, &state.catalog).map_err(|e| ControlError::InvalidPipeline {
            pipeline: pipeline_id.to_string(),
            message: e.to_string(),
        })?;
        state.next_run += 1;
        let run_id = format!("run-{:04}", state.next_run);
        let record = RunRecord {
            run_id: run_id.clone(),
            pipeline_id: pipeline_id.to_string(),
            seed,
            clock,
            status: RunStatus::Loaded,
            started_at: None,
            ended_at: None,
            diagnostic: None,
            result: None,
        };
        let entry = RunEntry {
            record,
            pipeline: Arc::new(pipeline),
            catalog_snapshot: state.catalog.snapshot(),
            knowledge: None,
            abort: None,
            thread: None,
        };
        self.persist_start(&entry)?;
        state.runs.insert(run_id.clone(), entry);
        Ok(run_id)
    }

    /// Launches the feedback loop of a loaded run on its own thread.
    pub fn start(&self, run_id: &str) -> Result<(), ControlError> {
        let mut state = self.shared.state.lock();
        if let Some(active) = &state.active {
            return Err(ControlError::RunActive(active.clone()));
        }
        let entry = state.runs.get_mut(run_id).ok_or_else(|| ControlError::UnknownRun(run_id.to_string()))?;
        if entry.record.status != RunStatus::Loaded {
            return Err(ControlError::InvalidTransition {
                run: run_id.to_string(),
                status: entry.record.status,
                operation: "start",
            });
        }
        let store = &self.shared.store;
        store.register_setup(entry.pipeline.setup.clone());
        store.set_seed(entry.record.seed);
        let mut config = self.shared.config.clone();
        config.clock = entry.record.clock;
        let feedback = FeedbackLoop::new(
            Arc::clone(&entry.pipeline),
            Arc::clone(store) as Arc<dyn crate::sim::ManagedSystem>,
            entry.record.seed,
            config,
        );
        let events = feedback.subscribe();
        entry.knowledge = Some(feedback.knowledge());
        entry.abort = Some(feedback.abort_handle());
        entry.record.status = RunStatus::Running;
        entry.record.started_at = Some(now_ms());
        self.write_record(&entry.record)?;
        let events_path = self.run_dir(run_id).map(|d| d.join("events.jsonl"));

        let controller = self.clone();
        let id = run_id.to_string();
        let thread = std::thread::Builder::new()
            .name(format!("pipeline-{id}"))
            .spawn(move || {
                let writer = events_path.map(|path| {
                    std::thread::spawn(move || -> std::io::Result<()> {
                        let file = OpenOptions::new().create(true).append(true).open(path)?;
                        let mut out = BufWriter::new(file);
                        for event in events {
                            serde_json::to_writer(&mut out, &event)?;
                            out.write_all(b"\n")?;
                        }
                        out.flush()
                    })
                });
                let result = feedback.run();
                drop(feedback);
                if let Some(Err(e)) = writer.map(|w| w.join().expect("event writer")) {
                    tracing::error!("writing events of {id}: {e}");
                }
                controller.finish(&id, result);
            })?;
        entry.thread = Some(thread);
        state.active = Some(run_id.to_string());
        Ok(())
    }

    /// Creates and starts a run.
    pub fn start_run(&self, pipeline_id: &str, seed: u64, clock: SimClock) -> Result<String, ControlError> {
        if let Some(active) = &self.shared.state.lock().active {
            return Err(ControlError::RunActive(active.clone()));
        }
        let run_id = self.create_run(pipeline_id, seed, clock)?;
        self.start(&run_id)?;
        Ok(run_id)
    }

    fn finish(&self, run_id: &str, result: PipelineResult) {
        let mut state = self.shared.state.lock();
        if state.active.as_deref() == Some(run_id) {
            state.active = None;
        }
        let Some(entry) = state.runs.get_mut(run_id) else { return };
        let end = result.end.clone().unwrap_or(EndReason::Failed { diagnostic: "no end reason".into() });
        entry.record.status = RunStatus::from_end(&end);
        if let EndReason::Failed { diagnostic } = &end {
            entry.record.diagnostic = Some(diagnostic.clone());
        }
        entry.record.ended_at = Some(now_ms());
        entry.record.result = Some(result);
        if let Err(e) = self.persist_end(&entry.record) {
            tracing::error!("persisting {run_id}: {e}");
        }
    }

    /// Blocks until the run's loop has finished and returns its record.
    pub fn wait(&self, run_id: &str) -> Result<RunRecord, ControlError> {
        let thread = {
            let mut state = self.shared.state.lock();
            let entry = state.runs.get_mut(run_id).ok_or_else(|| ControlError::UnknownRun(run_id.to_string()))?;
            entry.thread.take()
        };
        if let Some(t) = thread {
            t.join().map_err(|_| ControlError::Io(format!("run {run_id} panicked")))?;
        }
        self.record(run_id)
    }

    pub fn record(&self, run_id: &str) -> Result<RunRecord, ControlError> {
        let state = self.shared.state.lock();
        let entry = state.runs.get(run_id).ok_or_else(|| ControlError::UnknownRun(run_id.to_string()))?;
        Ok(entry.record.clone())
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        self.shared.state.lock().runs.values().map(|e| e.record.clone()).collect()
    }

    pub fn active_run(&self) -> Option<String> {
        self.shared.state.lock().active.clone()
    }

    pub fn get_status(&self, run_id: &str) -> Result<StatusReport, ControlError> {
        let (record, knowledge) = self.entry_view(run_id)?;
        let mut record = record;
        let result = record.result.take();
        let report = match (knowledge, result) {
            (Some(k), _) => {
                let k = k.read();
                StatusReport {
                    run: record,
                    current_experiment: k.current_experiment.clone(),
                    visit: k.visit,
                    samples_collected: k.samples_collected(),
                    path: k.path.clone(),
                    recent_events: k.recent_events(RECENT_EVENTS).to_vec(),
                    now_us: k.now_us,
                }
            }
            (None, Some(result)) => StatusReport {
                run: record,
                current_experiment: None,
                visit: result.experiments.len(),
                samples_collected: result.experiments.last().map(|e| e.samples_collected.clone()).unwrap_or_default(),
                path: result.path.clone(),
                recent_events: result.trace[result.trace.len().saturating_sub(RECENT_EVENTS)..].to_vec(),
                now_us: result.trace.last().map_or(0, |e| e.timestamp_us),
            },
            (None, None) => StatusReport {
                run: record,
                current_experiment: None,
                visit: 0,
                samples_collected: BTreeMap::new(),
                path: Vec::new(),
                recent_events: Vec::new(),
                now_us: 0,
            },
        };
        Ok(report)
    }

    /// Box-plot summaries of the response times collected so far in the
    /// current (or, once ended, the last) experiment.
    pub fn get_live_summary(&self, run_id: &str) -> Result<LiveSummary, ControlError> {
        let (_, knowledge) = self.entry_view(run_id)?;
        let mut summary = LiveSummary { run_id: run_id.to_string(), ..LiveSummary::default() };
        if let Some(k) = knowledge {
            let k = k.read();
            summary.experiment = k
                .current_experiment
                .clone()
                .or_else(|| k.experiments.last().map(|e| e.experiment.clone()));
            summary.per_variant = response_time_summaries(&k.samples);
        }
        Ok(summary)
    }

    /// Final result of a finished run, or the partial result
    /// (`completed: false`) of a running one.
    pub fn get_results(&self, run_id: &str) -> Result<PipelineResult, ControlError> {
        let (record, knowledge) = self.entry_view(run_id)?;
        if let Some(result) = record.result {
            return Ok(result);
        }
        match knowledge {
            Some(k) => Ok(k.read().result()),
            None => Ok(PipelineResult {
                pipeline_id: record.pipeline_id,
                seed: record.seed,
                completed: false,
                end: None,
                path: Vec::new(),
                bindings: BTreeMap::new(),
                experiments: Vec::new(),
                trace: Vec::new(),
                warnings: Vec::new(),
            }),
        }
    }

    /// Stops a loaded or running run and waits for its loop to wind down.
    /// Aborting an aborted run is a no-op; aborting a finished one fails.
    pub fn abort_run(&self, run_id: &str) -> Result<RunRecord, ControlError> {
        {
            let mut state = self.shared.state.lock();
            let entry = state.runs.get_mut(run_id).ok_or_else(|| ControlError::UnknownRun(run_id.to_string()))?;
            match entry.record.status {
                RunStatus::Aborted => return Ok(entry.record.clone()),
                RunStatus::Ended | RunStatus::Failed => {
                    return Err(ControlError::InvalidTransition {
                        run: run_id.to_string(),
                        status: entry.record.status,
                        operation: "abort",
                    })
                }
                RunStatus::Loaded => {
                    entry.record.status = RunStatus::Aborted;
                    entry.record.ended_at = Some(now_ms());
                    let record = entry.record.clone();
                    self.write_record(&record)?;
                    return Ok(record);
                }
                RunStatus::Running => {
                    if let Some(abort) = &entry.abort {
                        abort.abort();
                    }
                }
            }
        }
        self.wait(run_id)
    }

    fn entry_view(&self, run_id: &str) -> Result<(RunRecord, Option<Arc<RwLock<KnowledgeStore>>>), ControlError> {
        let state = self.shared.state.lock();
        let entry = state.runs.get(run_id).ok_or_else(|| ControlError::UnknownRun(run_id.to_string()))?;
        Ok((entry.record.clone(), entry.knowledge.clone()))
    }

    /// Persisted bytes of a run's result, if it has finished and is persisted.
    pub fn result_file(&self, run_id: &str) -> Option<PathBuf> {
        self.run_dir(run_id).map(|d| d.join("result.json")).filter(|p| p.is_file())
    }

    fn run_dir(&self, run_id: &str) -> Option<PathBuf> {
        self.shared.runs_dir.as_ref().map(|d| d.join(run_id))
    }

    fn write_record(&self, record: &RunRecord) -> Result<(), ControlError> {
        if let Some(dir) = self.run_dir(&record.run_id) {
            write_json(&dir.join("run.json"), record)?;
        }
        Ok(())
    }

    fn persist_start(&self, entry: &RunEntry) -> Result<(), ControlError> {
        if let Some(dir) = self.run_dir(&entry.record.run_id) {
            fs::create_dir_all(&dir)?;
            write_json(&dir.join("catalog.json"), &entry.catalog_snapshot)?;
            write_json(&dir.join("run.json"), &entry.record)?;
        }
        Ok(())
    }

    fn persist_end(&self, record: &RunRecord) -> Result<(), ControlError> {
        if let (Some(dir), Some(result)) = (self.run_dir(&record.run_id), &record.result) {
            write_json(&dir.join("result.json"), result)?;
            write_json(&dir.join("run.json"), record)?;
        }
        Ok(())
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ControlError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| ControlError::Io(e.to_string()))?;
    bytes.push(b'\n');
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn load_run(dir: &Path) -> Result<RunEntry, ControlError> {
    let read = |name: &str| -> Result<String, ControlError> { Ok(fs::read_to_string(dir.join(name))?) };
    let parse_err = |name: &str, e: serde_json::Error| ControlError::Io(format!("{}: {e}", dir.join(name).display()));
    let mut record: RunRecord = serde_json::from_str(&read("run.json")?).map_err(|e| parse_err("run.json", e))?;
    if dir.join("result.json").is_file() {
        let result: PipelineResult =
            serde_json::from_str(&read("result.json")?).map_err(|e| parse_err("result.json", e))?;
        record.result = Some(result);
    }
    if record.status == RunStatus::Running && record.result.is_none() {
        record.status = RunStatus::Failed;
        record.diagnostic = Some("process stopped while the run was active".into());
    }
    let snapshot: serde_json::Value =
        serde_json::from_str(&read("catalog.json")?).map_err(|e| parse_err("catalog.json", e))?;
    let catalog = Catalog::from_snapshot(&snapshot).map_err(|e| ControlError::Io(e.to_string()))?;
    let spec = catalog
        .pipelines
        .get(&record.pipeline_id)
        .ok_or_else(|| ControlError::UnknownPipeline(record.pipeline_id.clone()))?;
    let pipeline = resolve_pipeline(spec, &catalog).map_err(|e| ControlError::InvalidPipeline {
        pipeline: record.pipeline_id.clone(),
        message: e.to_string(),
    })?;
    Ok(RunEntry {
        record,
        pipeline: Arc::new(pipeline),
        catalog_snapshot: snapshot,
        knowledge: None,
        abort: None,
        thread: None,
    })
}

fn pipeline_view(p: &PipelineSpec, catalog: &Catalog) -> PipelineView {
    let edges = p
        .rules
        .iter()
        .filter_map(|id| catalog.rules.get(id))
        .map(edge_view)
        .collect();
    let (valid, error, warnings) = match resolve_pipeline(p, catalog) {
        Ok(resolved) => (true, None, resolved.warnings),
        Err(e) => (false, Some(e.to_string()), Vec::new()),
    };
    PipelineView {
        id: p.id.clone(),
        setup: p.setup.clone(),
        start: p.start.clone(),
        experiments: p.experiments.clone(),
        edges,
        valid,
        error,
        warnings,
    }
}

fn edge_view(rule: &TransitionRule) -> EdgeView {
    EdgeView {
        rule: rule.id.clone(),
        from: rule.from_experiment.clone(),
        to: match &rule.to_experiment {
            Target::End => crate::spec::END.to_string(),
            Target::Experiment(e) => e.clone(),
        },
        conditions: rule
            .conditions
            .iter()
            .map(|c| {
                let right = serde_json::to_string(&c.right_operand).expect("literal serializes");
                format!("{} {} {right}", c.left_operand, c.operator.symbol())
            })
            .collect(),
    }
}
