//! The A/B component: splits client requests between two variants of the
//! service under test and keeps a per-variant request history that the
//! feedback loop reads through the probe.
//!
//! Assignment is `hash64(seed, experiment, client) mod 100 < weightA ⇒ A`
//! (see [`crate::hashing`]), so a client keeps its variant for a whole
//! experiment. Per-request mode adds the client's request index to the hash.
//!
//! A request holds the component's state lock (shared) from assignment until
//! its record is appended, and `clear`/`set_routing` take it exclusively, so
//! each request lands entirely before or entirely after an effector call.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::hashing::hash64;
use crate::spec::AssignmentMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::A, Variant::B];

    fn index(self) -> usize {
        match self {
            Variant::A => 0,
            Variant::B => 1,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "A",
            Variant::B => "B",
        })
    }
}

impl FromStr for Variant {
    type Err = RouterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            other => Err(RouterError::UnknownVariant(other.to_string())),
        }
    }
}

/// User-visible effects of one store visit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowOutcome {
    pub recommendation_clicked: bool,
    pub purchased: bool,
    pub recommendation_purchased: bool,
}

/// One observed invocation of the service under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestRecord {
    pub client_id: String,
    pub url: String,
    pub variant: Variant,
    pub response_time_ms: f64,
    /// Virtual time of the request in microseconds.
    pub timestamp_us: u64,
    /// History epoch the record was appended in.
    pub epoch: u64,
    /// The variant backend could not serve the request.
    #[serde(default)]
    pub failed: bool,
    pub outcome: Option<FlowOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AbConfig {
    pub ab_name: String,
    pub weight_a: u32,
    pub weight_b: u32,
    pub service_under_test: String,
    pub seed: u64,
    #[serde(default)]
    pub mode: AssignmentMode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouterError {
    #[error("unknown A/B component: {0}")]
    UnknownComponent(String),
    #[error("unknown variant: {0} (expected A or B)")]
    UnknownVariant(String),
    #[error("weights must be non-negative and sum to 100, got {0} + {1}")]
    BadWeights(u32, u32),
    #[error("request history of {ab}/{variant} is full ({capacity} records)")]
    HistoryFull { ab: String, variant: Variant, capacity: usize },
}

/// What a variant backend returns for a request it served.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Served {
    pub response_time_ms: f64,
    pub outcome: Option<FlowOutcome>,
}

/// Request as seen by the router.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteRequest<'a> {
    pub client_id: &'a str,
    pub url: &'a str,
    /// Per-client request counter; used by per-request assignment.
    pub request_index: u64,
    pub timestamp_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Routed {
    pub variant: Variant,
    pub record: RequestRecord,
}

#[derive(Debug)]
struct State {
    config: AbConfig,
    experiment: String,
    epoch: u64,
    capacity: usize,
}

#[derive(Debug)]
struct Component {
    state: RwLock<State>,
    histories: [Mutex<Vec<RequestRecord>>; 2],
}

impl Component {
    fn assign(state: &State, client_id: &str, request_index: u64) -> Variant {
        let seed = state.config.seed;
        let experiment = state.experiment.as_bytes();
        let h = match state.config.mode {
            AssignmentMode::Sticky => hash64(seed, &[experiment, client_id.as_bytes()]),
            AssignmentMode::PerRequest => hash64(
                seed,
                &[experiment, client_id.as_bytes(), &request_index.to_le_bytes()],
            ),
        };
        if h % 100 < u64::from(state.config.weight_a) {
            Variant::A
        } else {
            Variant::B
        }
    }
}

/// Registry of A/B components keyed by name.
#[derive(Debug, Default)]
pub struct AbRouter {
    components: RwLock<HashMap<String, Arc<Component>>>,
    effectors: Mutex<()>,
}

/// Capacity used until an experiment sets one.
pub const DEFAULT_CAPACITY: usize = 1 << 20;

impl AbRouter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or replaces) a component. Its history starts empty.
    pub fn configure(&self, config: AbConfig) -> Result<(), RouterError> {
        check_weights(config.weight_a, config.weight_b)?;
        let _guard = self.effectors.lock();
        let name = config.ab_name.clone();
        let component = Component {
            state: RwLock::new(State {
                config,
                experiment: String::new(),
                epoch: 0,
                capacity: DEFAULT_CAPACITY,
            }),
            histories: [Mutex::new(Vec::new()), Mutex::new(Vec::new())],
        };
        self.components.write().insert(name, Arc::new(component));
        Ok(())
    }

    pub fn remove(&self, ab_name: &str) -> bool {
        let _guard = self.effectors.lock();
        self.components.write().remove(ab_name).is_some()
    }

    pub fn contains(&self, ab_name: &str) -> bool {
        self.components.read().contains_key(ab_name)
    }

    fn component(&self, ab_name: &str) -> Result<Arc<Component>, RouterError> {
        self.components
            .read()
            .get(ab_name)
            .cloned()
            .ok_or_else(|| RouterError::UnknownComponent(ab_name.to_string()))
    }

    /// Variant for `client_id` in the current experiment (sticky mode; in
    /// per-request mode this is the assignment of request index 0).
    pub fn assign_variant(&self, ab_name: &str, client_id: &str) -> Result<Variant, RouterError> {
        let c = self.component(ab_name)?;
        let state = c.state.read();
        Ok(Component::assign(&state, client_id, 0))
    }

    /// Assigns the request, lets `backend` serve it on that variant, and
    /// appends the resulting record to the variant's history. A backend
    /// error is recorded as a failed request.
    pub fn route_and_record<E>(
        &self,
        ab_name: &str,
        request: &RouteRequest<'_>,
        backend: impl FnOnce(Variant) -> Result<Served, E>,
    ) -> Result<Routed, RouterError> {
        let c = self.component(ab_name)?;
        let state = c.state.read();
        let variant = Component::assign(&state, request.client_id, request.request_index);
        let (served, failed) = match backend(variant) {
            Ok(served) => (served, false),
            Err(_) => (Served { response_time_ms: 0.0, outcome: None }, true),
        };
        let record = RequestRecord {
            client_id: request.client_id.to_string(),
            url: request.url.to_string(),
            variant,
            response_time_ms: served.response_time_ms,
            timestamp_us: request.timestamp_us,
            epoch: state.epoch,
            failed,
            outcome: served.outcome,
        };
        let mut history = c.histories[variant.index()].lock();
        if history.len() >= state.capacity {
            return Err(RouterError::HistoryFull {
                ab: ab_name.to_string(),
                variant,
                capacity: state.capacity,
            });
        }
        history.push(record.clone());
        Ok(Routed { variant, record })
    }

    /// Records appended to `variant`'s history since the last clear,
    /// starting at index `since`, in append order.
    pub fn request_history(&self, ab_name: &str, variant: Variant, since: usize) -> Result<Vec<RequestRecord>, RouterError> {
        let c = self.component(ab_name)?;
        let history = c.histories[variant.index()].lock();
        Ok(history.get(since..).map(<[_]>::to_vec).unwrap_or_default())
    }

    pub fn history_len(&self, ab_name: &str, variant: Variant) -> Result<usize, RouterError> {
        let c = self.component(ab_name)?;
        let len = c.histories[variant.index()].lock().len();
        Ok(len)
    }

    /// New weights for subsequent requests; starts a new epoch.
    pub fn set_ab_routing(&self, ab_name: &str, a: u32, b: u32) -> Result<(), RouterError> {
        check_weights(a, b)?;
        let _guard = self.effectors.lock();
        let c = self.component(ab_name)?;
        let mut state = c.state.write();
        state.config.weight_a = a;
        state.config.weight_b = b;
        state.epoch += 1;
        Ok(())
    }

    /// Empties both histories and starts a new epoch.
    pub fn clear_ab_component_history(&self, ab_name: &str) -> Result<(), RouterError> {
        let _guard = self.effectors.lock();
        let c = self.component(ab_name)?;
        let mut state = c.state.write();
        for h in &c.histories {
            h.lock().clear();
        }
        state.epoch += 1;
        Ok(())
    }

    /// Binds the component to `experiment` (part of the assignment hash) and
    /// bounds each variant history to `capacity` records.
    pub fn activate_experiment(&self, ab_name: &str, experiment: &str, capacity: usize) -> Result<(), RouterError> {
        let _guard = self.effectors.lock();
        let c = self.component(ab_name)?;
        let mut state = c.state.write();
        state.experiment = experiment.to_string();
        state.capacity = capacity;
        state.epoch += 1;
        Ok(())
    }

    pub fn config(&self, ab_name: &str) -> Result<AbConfig, RouterError> {
        Ok(self.component(ab_name)?.state.read().config.clone())
    }

    pub fn epoch(&self, ab_name: &str) -> Result<u64, RouterError> {
        Ok(self.component(ab_name)?.state.read().epoch)
    }
}

fn check_weights(a: u32, b: u32) -> Result<(), RouterError> {
    if a.checked_add(b) == Some(100) {
        Ok(())
    } else {
        Err(RouterError::BadWeights(a, b))
    }
}
