use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::flow::{bonus_applies, serve_purchase_flow, FlowPlan, FlowStep};
use super::{LatencySampler, VariantModel};
use crate::hashing::{hash64, stream};
use crate::router::{AbConfig, AbRouter, RequestRecord, RouteRequest, RouterError, Served, Variant};
use crate::spec::{AbComponentSpec, SetupSpec, UserClass};

pub const PURCHASE_URL: &str = "/store/purchase";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("no active setup")]
    NoActiveSetup,
    #[error("setup already active: {0}")]
    AlreadyActive(String),
    #[error("setup not active: {0}")]
    NotActive(String),
    #[error("unknown setup: {0}")]
    UnknownSetup(String),
    #[error("invalid setup {setup}: {message}")]
    InvalidSetup { setup: String, message: String },
    #[error("unknown variant model: {0}")]
    UnknownVariantModel(String),
    #[error("setup {0} routes no flow step through an A/B component")]
    NoAbComponent(String),
    #[error(transparent)]
    Router(#[from] RouterError),
}

/// One visit to the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoreRequest {
    pub client_id: String,
    #[serde(default)]
    pub items: Vec<String>,
    /// Per-client request counter; assigned by the store when absent.
    #[serde(default)]
    pub request_index: Option<u64>,
    /// Seed of the visit's random stream; derived by the store when absent.
    #[serde(default)]
    pub flow_seed: Option<u64>,
    #[serde(default)]
    pub timestamp_us: u64,
    /// Behaviour class of the simulated user; without it no click or
    /// purchase outcome is drawn.
    #[serde(default)]
    pub behavior: Option<UserClass>,
}

impl StoreRequest {
    pub fn new(client_id: impl Into<String>) -> Self {
        Self {
            client_id: client_id.into(),
            items: Vec::new(),
            request_index: None,
            flow_seed: None,
            timestamp_us: 0,
            behavior: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PurchaseResponse {
    pub ab_name: String,
    pub variant: Variant,
    pub record: RequestRecord,
}

/// Sensing side of the managed system.
pub trait Probe: Send + Sync {
    fn request_history(&self, ab_name: &str, variant: Variant, since: usize) -> Result<Vec<RequestRecord>, StoreError>;
    /// History epoch of the component; changes on every effector call.
    fn epoch(&self, ab_name: &str) -> Result<u64, StoreError>;
}

/// Actuation side of the managed system.
pub trait Effector: Send + Sync {
    fn clear_ab_component_history(&self, ab_name: &str) -> Result<(), StoreError>;
    fn set_ab_routing(&self, ab_name: &str, a: u32, b: u32) -> Result<(), StoreError>;
    fn deploy_setup(&self, setup_name: &str) -> Result<(), StoreError>;
    fn remove_setup(&self, setup_name: &str) -> Result<(), StoreError>;
    /// Wires the A/B component to two variant models and binds it to an
    /// experiment with a per-variant history capacity.
    fn start_experiment(
        &self,
        ab_name: &str,
        experiment: &str,
        variant_a: &str,
        variant_b: &str,
        capacity: usize,
    ) -> Result<(), StoreError>;
}

/// Everything the feedback loop needs from the managed system.
pub trait ManagedSystem: Probe + Effector + RequestSink {
    fn as_sink(&self) -> &dyn RequestSink;
}

impl<T: Probe + Effector + RequestSink> ManagedSystem for T {
    fn as_sink(&self) -> &dyn RequestSink {
        self
    }
}

/// Where the traffic generator sends requests.
pub trait RequestSink: Send + Sync {
    fn submit(&self, request: StoreRequest) -> Result<PurchaseResponse, StoreError>;
    fn is_ready(&self) -> bool;
}

#[derive(Debug)]
struct ActiveSetup {
    spec: SetupSpec,
    /// Sampler of each flow step's service as configured in the setup.
    steps: [LatencySampler; 8],
    /// A/B component every visit is routed through.
    ab: AbComponentSpec,
    /// Index of the step served by the service under test.
    step_under_test: usize,
    variants: RwLock<[WiredVariant; 2]>,
}

#[derive(Debug, Clone)]
struct WiredVariant {
    sampler: LatencySampler,
    uplift: bool,
}

impl WiredVariant {
    fn from_model(model: &VariantModel) -> Result<Self, String> {
        Ok(Self {
            sampler: model.latency_model.sampler()?,
            uplift: model.click_uplift_applies,
        })
    }
}

/// The simulated web store: services run in-process as latency draws, with
/// one A/B component splitting traffic for the service under test.
#[derive(Debug)]
pub struct WebStore {
    router: AbRouter,
    catalog: RwLock<BTreeMap<String, SetupSpec>>,
    active: RwLock<Option<ActiveSetup>>,
    effectors: Mutex<()>,
    seed: AtomicU64,
    request_counters: Mutex<HashMap<String, u64>>,
}

impl WebStore {
    pub fn new(seed: u64) -> Self {
        Self {
            router: AbRouter::new(),
            catalog: RwLock::new(BTreeMap::new()),
            active: RwLock::new(None),
            effectors: Mutex::new(()),
            seed: AtomicU64::new(seed),
            request_counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn router(&self) -> &AbRouter {
        &self.router
    }

    /// Seed for assignment hashing and store-derived random streams; takes
    /// effect at the next deploy.
    pub fn set_seed(&self, seed: u64) {
        self.seed.store(seed, Ordering::SeqCst);
    }

    pub fn register_setup(&self, setup: SetupSpec) {
        self.catalog.write().insert(setup.id.clone(), setup);
    }

    pub fn active_setup(&self) -> Option<String> {
        self.active.read().as_ref().map(|a| a.spec.id.clone())
    }

    /// A/B component of the active setup.
    pub fn active_ab(&self) -> Option<String> {
        self.active.read().as_ref().map(|a| a.ab.name.clone())
    }

    pub fn handle_purchase(&self, request: StoreRequest) -> Result<PurchaseResponse, StoreError> {
        let guard = self.active.read();
        let active = guard.as_ref().ok_or(StoreError::NoActiveSetup)?;
        let seed = self.seed.load(Ordering::SeqCst);
        let request_index = match request.request_index {
            Some(i) => i,
            None => {
                let mut counters = self.request_counters.lock();
                let c = counters.entry(request.client_id.clone()).or_default();
                *c += 1;
                *c - 1
            }
        };
        let flow_seed = request
            .flow_seed
            .unwrap_or_else(|| hash64(seed, &[b"flow", request.client_id.as_bytes(), &request_index.to_le_bytes()]));
        let route = RouteRequest {
            client_id: &request.client_id,
            url: PURCHASE_URL,
            request_index,
            timestamp_us: request.timestamp_us,
        };
        let routed = self.router.route_and_record(&active.ab.name, &route, |variant| {
            let wired = active.variants.read();
            let mut steps: [&LatencySampler; 8] = std::array::from_fn(|i| &active.steps[i]);
            steps[active.step_under_test] = &wired[variant_index(variant)].sampler;
            let plan = FlowPlan {
                steps,
                bonus: bonus_applies(variant, wired[1].uplift),
            };
            let mut rng = stream(flow_seed, &[]);
            let result = serve_purchase_flow(&plan, request.behavior.as_ref(), &mut rng);
            Ok::<_, StoreError>(Served {
                response_time_ms: result.response_time_ms,
                outcome: result.outcome,
            })
        })?;
        Ok(PurchaseResponse {
            ab_name: active.ab.name.clone(),
            variant: routed.variant,
            record: routed.record,
        })
    }

    fn build(&self, spec: &SetupSpec) -> Result<ActiveSetup, StoreError> {
        let invalid = |message: String| StoreError::InvalidSetup { setup: spec.id.clone(), message };
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        let mut steps = Vec::with_capacity(8);
        for step in FlowStep::ORDER {
            let service = spec
                .service(step.service())
                .ok_or_else(|| invalid(format!("missing service {} for step {step:?}", step.service())))?;
            let model = spec
                .model(&service.variant_model)
                .ok_or_else(|| StoreError::UnknownVariantModel(service.variant_model.clone()))?;
            steps.push(model.latency_model.sampler().map_err(invalid)?);
        }
        let steps: [LatencySampler; 8] = steps.try_into().expect("eight steps");
        let (step_under_test, ab) = FlowStep::ORDER
            .iter()
            .enumerate()
            .find_map(|(i, step)| spec.ab_for_service(step.service()).map(|ab| (i, ab.clone())))
            .ok_or_else(|| StoreError::NoAbComponent(spec.id.clone()))?;
        let default = WiredVariant {
            sampler: steps[step_under_test],
            uplift: false,
        };
        Ok(ActiveSetup {
            spec: spec.clone(),
            steps,
            ab,
            step_under_test,
            variants: RwLock::new([default.clone(), default]),
        })
    }
}

fn variant_index(v: Variant) -> usize {
    match v {
        Variant::A => 0,
        Variant::B => 1,
    }
}

impl Probe for WebStore {
    fn request_history(&self, ab_name: &str, variant: Variant, since: usize) -> Result<Vec<RequestRecord>, StoreError> {
        Ok(self.router.request_history(ab_name, variant, since)?)
    }

    fn epoch(&self, ab_name: &str) -> Result<u64, StoreError> {
        Ok(self.router.epoch(ab_name)?)
    }
}

impl Effector for WebStore {
    fn clear_ab_component_history(&self, ab_name: &str) -> Result<(), StoreError> {
        Ok(self.router.clear_ab_component_history(ab_name)?)
    }

    fn set_ab_routing(&self, ab_name: &str, a: u32, b: u32) -> Result<(), StoreError> {
        Ok(self.router.set_ab_routing(ab_name, a, b)?)
    }

    fn deploy_setup(&self, setup_name: &str) -> Result<(), StoreError> {
        let _guard = self.effectors.lock();
        let spec = self
            .catalog
            .read()
            .get(setup_name)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSetup(setup_name.to_string()))?;
        if let Some(active) = self.active.read().as_ref() {
            return Err(StoreError::AlreadyActive(active.spec.id.clone()));
        }
        let active = self.build(&spec)?;
        let seed = self.seed.load(Ordering::SeqCst);
        for ab in &spec.ab_components {
            self.router.configure(AbConfig {
                ab_name: ab.name.clone(),
                weight_a: 50,
                weight_b: 50,
                service_under_test: ab.service_under_test.clone(),
                seed,
                mode: ab.assignment,
            })?;
        }
        self.request_counters.lock().clear();
        *self.active.write() = Some(active);
        Ok(())
    }

    fn remove_setup(&self, setup_name: &str) -> Result<(), StoreError> {
        let _guard = self.effectors.lock();
        let mut active = self.active.write();
        match active.as_ref() {
            Some(a) if a.spec.id == setup_name => {
                *active = None;
                Ok(())
            }
            _ => Err(StoreError::NotActive(setup_name.to_string())),
        }
    }

    fn start_experiment(
        &self,
        ab_name: &str,
        experiment: &str,
        variant_a: &str,
        variant_b: &str,
        capacity: usize,
    ) -> Result<(), StoreError> {
        let _guard = self.effectors.lock();
        let guard = self.active.read();
        let active = guard.as_ref().ok_or(StoreError::NoActiveSetup)?;
        if active.ab.name != ab_name {
            return Err(RouterError::UnknownComponent(ab_name.to_string()).into());
        }
        let wire = |id: &str| -> Result<WiredVariant, StoreError> {
            let model = active
                .spec
                .model(id)
                .ok_or_else(|| StoreError::UnknownVariantModel(id.to_string()))?;
            WiredVariant::from_model(model).map_err(|message| StoreError::InvalidSetup {
                setup: active.spec.id.clone(),
                message,
            })
        };
        let wired = [wire(variant_a)?, wire(variant_b)?];
        self.router.activate_experiment(ab_name, experiment, capacity)?;
        *active.variants.write() = wired;
        Ok(())
    }
}

impl RequestSink for WebStore {
    fn submit(&self, request: StoreRequest) -> Result<PurchaseResponse, StoreError> {
        self.handle_purchase(request)
    }

    fn is_ready(&self) -> bool {
        self.active.read().is_some()
    }
}
