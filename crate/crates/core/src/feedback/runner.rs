use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::knowledge::{EndReason, EventKind, ExperimentRun, KnowledgeStore, PipelineEvent, PipelineResult};
use crate::hashing::hash64;
use crate::router::{RequestRecord, Variant};
use crate::sim::{ManagedSystem, StoreError, WebStore};
use crate::spec::{ExecutablePipeline, ExperimentNode, Literal, Target, END};
use crate::stats::{evaluate_condition, evaluate_experiment, MetricRef, TestOutcome};
use crate::traffic::{SimClock, TrafficGenerator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoopConfig {
    /// Virtual time between monitor passes.
    pub cadence_us: u64,
    /// Experiment visits allowed before the run is stopped.
    pub max_visits: usize,
    /// Per-variant history capacity as a multiple of the sample budget.
    pub capacity_factor: usize,
    pub clock: SimClock,
    /// Probe attempts per monitor pass before the run fails.
    pub probe_attempts: u32,
    /// Wall-clock delay before the first probe retry; doubles per retry.
    pub probe_backoff_ms: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            cadence_us: 500_000,
            max_visits: 100,
            capacity_factor: 4,
            clock: SimClock::virtual_time(),
            probe_attempts: 4,
            probe_backoff_ms: 10,
        }
    }
}

/// Sets a run's abort flag; the loop stops at its next monitor pass.
#[derive(Debug, Clone, Default)]
pub struct AbortHandle(Arc<AtomicBool>);

impl AbortHandle {
    pub fn abort(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_aborted(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Next step chosen by the planner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub next: Target,
    pub fired_rule: Option<String>,
    /// Other rules whose conditions also held.
    pub shadowed: Vec<String>,
}

/// MAPE-K loop executing one pipeline against a managed system.
pub struct FeedbackLoop {
    pipeline: Arc<ExecutablePipeline>,
    system: Arc<dyn ManagedSystem>,
    config: LoopConfig,
    seed: u64,
    knowledge: Arc<RwLock<KnowledgeStore>>,
    abort: AbortHandle,
    subscribers: Mutex<Vec<Sender<PipelineEvent>>>,
}

/// Runs `pipeline` on a fresh simulated store seeded with `seed`.
pub fn run_pipeline(pipeline: &ExecutablePipeline, seed: u64, config: &LoopConfig) -> PipelineResult {
    let store = WebStore::new(seed);
    store.register_setup(pipeline.setup.clone());
    FeedbackLoop::new(Arc::new(pipeline.clone()), Arc::new(store), seed, config.clone()).run()
}

/// Per-visit execution state that readers never see.
struct Active<'p> {
    node: &'p ExperimentNode,
    ab: String,
    epoch: u64,
    since: [usize; 2],
    metrics: Vec<(String, MetricRef)>,
    traffic: TrafficGenerator,
    progress_reported: u32,
}

type Step<T> = Result<T, EndReason>;

fn failed(diagnostic: impl Into<String>) -> EndReason {
    EndReason::Failed { diagnostic: diagnostic.into() }
}

impl FeedbackLoop {
    pub fn new(
        pipeline: Arc<ExecutablePipeline>,
        system: Arc<dyn ManagedSystem>,
        seed: u64,
        config: LoopConfig,
    ) -> Self {
        let mut knowledge = KnowledgeStore::new(pipeline.id.clone(), seed);
        knowledge.warnings = pipeline.warnings.clone();
        Self {
            pipeline,
            system,
            config,
            seed,
            knowledge: Arc::new(RwLock::new(knowledge)),
            abort: AbortHandle::default(),
            subscribers: Mutex::new(Vec::new()),
        }
    }

    pub fn knowledge(&self) -> Arc<RwLock<KnowledgeStore>> {
        Arc::clone(&self.knowledge)
    }

    pub fn abort_handle(&self) -> AbortHandle {
        self.abort.clone()
    }

    /// Receives every event emitted after this call.
    pub fn subscribe(&self) -> Receiver<PipelineEvent> {
        let (tx, rx) = channel();
        self.subscribers.lock().push(tx);
        rx
    }

    fn emit(&self, kind: EventKind, timestamp_us: u64, payload: Value) {
        let event = {
            let mut k = self.knowledge.write();
            let event = PipelineEvent { seq: k.trace.len() as u64, kind, timestamp_us, payload };
            k.trace.push(event.clone());
            k.now_us = timestamp_us;
            event
        };
        self.subscribers.lock().retain(|tx| tx.send(event.clone()).is_ok());
    }

    /// Deploys the setup, runs experiments from the start node until the
    /// pipeline ends, and returns the final result. Failures end the run
    /// with a diagnostic rather than an error so partial results survive.
    pub fn run(&self) -> PipelineResult {
        let mut clock = self.config.clock;
        let setup = &self.pipeline.setup.id;
        let reason = match self.system.deploy_setup(setup) {
            Err(e) => failed(format!("deploying setup {setup}: {e}")),
            Ok(()) => {
                self.emit(EventKind::SetupDeployed, clock.now_us(), json!({ "setup": setup }));
                let reason = self.drive(&mut clock);
                if let Err(e) = self.system.remove_setup(setup) {
                    tracing::warn!("removing setup {setup}: {e}");
                }
                reason
            }
        };
        {
            let mut k = self.knowledge.write();
            k.current_experiment = None;
            if reason.is_success() {
                k.path.push(END.to_string());
            }
        }
        let payload = serde_json::to_value(&reason).expect("end reason serializes");
        self.emit(EventKind::PipelineEnded, clock.now_us(), payload);
        let mut k = self.knowledge.write();
        k.end = Some(reason);
        k.result()
    }

    fn drive(&self, clock: &mut SimClock) -> EndReason {
        let mut current = self.pipeline.start.clone();
        let mut visit = 0;
        loop {
            if visit == self.config.max_visits {
                return EndReason::VisitGuard { max_visits: self.config.max_visits };
            }
            visit += 1;
            let node = match self.pipeline.node(&current) {
                Some(n) => n,
                None => return failed(format!("experiment {current} is not part of the pipeline")),
            };
            let outcome = match self.run_experiment(node, visit, clock) {
                Ok(o) => o,
                Err(reason) => return reason,
            };
            let plan = match self.plan(&current, &outcome) {
                Ok(p) => p,
                Err(reason) => return reason,
            };
            self.record_plan(&current, &plan, clock.now_us());
            match plan.next {
                Target::End => {
                    return match plan.fired_rule {
                        Some(rule) => EndReason::RuleToEnd { rule },
                        None => EndReason::NoMatchingRule { experiment: current },
                    }
                }
                Target::Experiment(next) => current = next,
            }
        }
    }

    /// Execute, then monitor and analyze until the budget is met.
    fn run_experiment(&self, node: &ExperimentNode, visit: usize, clock: &mut SimClock) -> Step<TestOutcome> {
        let mut active = self.execute(node, visit, clock.now_us())?;
        let result = self.collect(&mut active, clock);
        let stats = active.traffic.stop();
        let mut k = self.knowledge.write();
        let collected = k.samples_collected();
        if let Some(run) = k.experiments.last_mut() {
            run.requests_sent = stats.requests_sent;
            run.samples_collected = collected;
            run.ended_at_us = Some(clock.now_us());
            if let Ok(outcome) = &result {
                run.samples_consumed = outcome_metrics(node)
                    .into_iter()
                    .map(|m| (m, outcome.samples_per_variant))
                    .collect();
                run.outcome = Some(outcome.clone());
            }
        }
        result
    }

    fn collect(&self, active: &mut Active<'_>, clock: &mut SimClock) -> Step<TestOutcome> {
        loop {
            if self.abort.is_aborted() {
                return Err(EndReason::Aborted);
            }
            clock.advance(self.config.cadence_us);
            let sink = self.system.as_sink();
            active
                .traffic
                .advance(self.config.cadence_us, sink)
                .map_err(|e| failed(format!("traffic for {}: {e}", active.node.spec.id)))?;
            self.monitor(active, clock.now_us())?;
            if let Some(outcome) = self.analyze(active.node, clock.now_us())? {
                return Ok(outcome);
            }
        }
    }

    /// Starts `node`: clears the A/B history, applies the experiment's
    /// routing and variants, and switches traffic to its profile.
    fn execute<'p>(&self, node: &'p ExperimentNode, visit: usize, now_us: u64) -> Step<Active<'p>> {
        let spec = &node.spec;
        let ab = node.ab_component.name.clone();
        let effector = |what: &str, r: Result<(), StoreError>| {
            r.map_err(|e| failed(format!("{what} on {ab} for {}: {e}", spec.id)))
        };
        effector("clearing history", self.system.clear_ab_component_history(&ab))?;
        effector(
            "setting routing",
            self.system.set_ab_routing(&ab, spec.ab_assignment.weight_a, spec.ab_assignment.weight_b),
        )?;
        let capacity = (spec.samples as usize).saturating_mul(self.config.capacity_factor);
        effector(
            "activating experiment",
            self.system.start_experiment(&ab, &spec.id, &spec.variant_a, &spec.variant_b, capacity),
        )?;
        let epoch = self
            .system
            .epoch(&ab)
            .map_err(|e| failed(format!("reading epoch of {ab}: {e}")))?;
        let metrics = spec
            .metrics
            .iter()
            .map(|m| m.parse::<MetricRef>().map(|r| (m.clone(), r)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(failed)?;
        let traffic_seed = hash64(self.seed, &[b"traffic", &(visit as u64).to_le_bytes()]);
        let traffic = TrafficGenerator::start(&node.profile, traffic_seed, now_us, self.system.as_sink())
            .map_err(|e| failed(format!("starting traffic for {}: {e}", spec.id)))?;
        {
            let mut k = self.knowledge.write();
            k.current_experiment = Some(spec.id.clone());
            k.visit = visit;
            k.samples = metrics.iter().map(|(name, _)| (name.clone(), Vec::new())).collect();
            k.path.push(spec.id.clone());
            k.experiments.push(ExperimentRun {
                visit,
                experiment: spec.id.clone(),
                started_at_us: now_us,
                ended_at_us: None,
                samples_collected: BTreeMap::new(),
                samples_consumed: BTreeMap::new(),
                requests_sent: 0,
                outcome: None,
                fired_rule: None,
                next: None,
            });
        }
        self.emit(
            EventKind::ExperimentStarted,
            now_us,
            json!({
                "experiment": spec.id,
                "visit": visit,
                "abComponent": ab,
                "variantA": spec.variant_a,
                "variantB": spec.variant_b,
                "weightA": spec.ab_assignment.weight_a,
                "weightB": spec.ab_assignment.weight_b,
                "profile": node.profile.id,
                "samples": spec.samples,
                "epoch": epoch,
            }),
        );
        Ok(Active { node, ab, epoch, since: [0, 0], metrics, traffic, progress_reported: 0 })
    }

    /// Pulls new records from the probe into the sample repository.
    fn monitor(&self, active: &mut Active<'_>, now_us: u64) -> Step<()> {
        let mut fresh: [Vec<RequestRecord>; 2] = Default::default();
        for variant in Variant::BOTH {
            let i = variant_slot(variant);
            let records = self.probe(&active.ab, variant, active.since[i])?;
            if let Some(stale) = records.iter().find(|r| r.epoch != active.epoch) {
                return Err(failed(format!(
                    "probe returned a record from epoch {} during epoch {} of {}",
                    stale.epoch, active.epoch, active.ab
                )));
            }
            active.since[i] += records.len();
            fresh[i] = records;
        }
        if fresh.iter().all(Vec::is_empty) {
            return Ok(());
        }
        {
            let mut k = self.knowledge.write();
            for (name, metric) in &active.metrics {
                let series = k.samples.get_mut(name).expect("series created at start");
                series.extend(fresh[variant_slot(metric.variant)].iter().filter_map(|r| metric.kind.extract(r)));
            }
        }
        self.report_progress(active, now_us);
        Ok(())
    }

    fn probe(&self, ab: &str, variant: Variant, since: usize) -> Step<Vec<RequestRecord>> {
        let mut delay = Duration::from_millis(self.config.probe_backoff_ms);
        let mut attempt = 1;
        loop {
            match self.system.request_history(ab, variant, since) {
                Ok(records) => return Ok(records),
                Err(e) if attempt >= self.config.probe_attempts => {
                    return Err(failed(format!(
                        "probe {ab}/{variant} unreachable after {attempt} attempts: {e}"
                    )))
                }
                Err(e) => {
                    tracing::warn!("probe {ab}/{variant} attempt {attempt} failed: {e}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }

    /// Emits a progress event each time the slower hypothesis metric
    /// crosses another tenth of the budget.
    fn report_progress(&self, active: &mut Active<'_>, now_us: u64) {
        let spec = &active.node.spec;
        let (collected, slowest) = {
            let k = self.knowledge.read();
            let collected = k.samples_collected();
            let slowest = outcome_metrics(active.node)
                .iter()
                .map(|m| collected.get(m).copied().unwrap_or(0))
                .min()
                .unwrap_or(0);
            (collected, slowest)
        };
        let tenths = ((slowest as u64).min(spec.samples) * 10 / spec.samples) as u32;
        if tenths > active.progress_reported {
            active.progress_reported = tenths;
            self.emit(
                EventKind::SamplesProgress,
                now_us,
                json!({ "experiment": spec.id, "budget": spec.samples, "collected": collected }),
            );
        }
    }

    /// Runs the test once both hypothesis metrics hold the full budget.
    fn analyze(&self, node: &ExperimentNode, now_us: u64) -> Step<Option<TestOutcome>> {
        let spec = &node.spec;
        let outcome = {
            let k = self.knowledge.read();
            let ready = outcome_metrics(node)
                .iter()
                .all(|m| k.samples.get(m).is_some_and(|s| s.len() as u64 >= spec.samples));
            if !ready {
                return Ok(None);
            }
            evaluate_experiment(spec, &k.samples).map_err(|e| failed(format!("analyzing {}: {e}", spec.id)))?
        };
        self.knowledge.write().bindings.insert(
            outcome.resulting_variable.clone(),
            Literal::Text(outcome.decision.as_str().to_string()),
        );
        self.emit(
            EventKind::ExperimentAnalyzed,
            now_us,
            serde_json::to_value(&outcome).expect("outcome serializes"),
        );
        Ok(Some(outcome))
    }

    /// First outgoing rule, in pipeline order, whose conditions all hold.
    fn plan(&self, experiment: &str, outcome: &TestOutcome) -> Step<Plan> {
        let k = self.knowledge.read();
        let mut matching = Vec::new();
        for rule in self.pipeline.outgoing(experiment) {
            let mut holds = true;
            for c in &rule.conditions {
                let ok = evaluate_condition(c, &k.bindings).map_err(|e| {
                    failed(format!("rule {} after {} ({}): {e}", rule.id, experiment, outcome.decision))
                })?;
                if !ok {
                    holds = false;
                    break;
                }
            }
            if holds {
                matching.push(rule);
            }
        }
        Ok(match matching.split_first() {
            None => Plan { next: Target::End, fired_rule: None, shadowed: Vec::new() },
            Some((first, rest)) => Plan {
                next: first.to_experiment.clone(),
                fired_rule: Some(first.id.clone()),
                shadowed: rest.iter().map(|r| r.id.clone()).collect(),
            },
        })
    }

    fn record_plan(&self, experiment: &str, plan: &Plan, now_us: u64) {
        let next = match &plan.next {
            Target::End => END.to_string(),
            Target::Experiment(e) => e.clone(),
        };
        {
            let mut k = self.knowledge.write();
            if let Some(run) = k.experiments.last_mut() {
                run.fired_rule = plan.fired_rule.clone();
                run.next = Some(next.clone());
            }
            if let Some(fired) = &plan.fired_rule {
                if !plan.shadowed.is_empty() {
                    let warning = format!(
                        "after {experiment} rules {} also matched; {fired} fired first",
                        plan.shadowed.join(", ")
                    );
                    tracing::warn!("{warning}");
                    k.warnings.push(warning);
                }
            }
        }
        if let Some(rule) = &plan.fired_rule {
            self.emit(EventKind::RuleFired, now_us, json!({ "rule": rule, "from": experiment, "to": next }));
        }
    }
}

/// The two metrics named by the experiment's hypothesis.
fn outcome_metrics(node: &ExperimentNode) -> [String; 2] {
    let h = &node.spec.statistical_test.hypothesis;
    [h.left.clone(), h.right.clone()]
}

fn variant_slot(v: Variant) -> usize {
    match v {
        Variant::A => 0,
        Variant::B => 1,
    }
}
