//! In-process web store: eight services per purchase visit, each a latency
//! draw, with an A/B component in front of the service under test.

mod flow;
mod latency;
mod store;

pub use flow::{bonus_applies, serve_purchase_flow, FlowPlan, FlowResult, FlowStep};
pub use latency::{LatencyDistribution, LatencyModel, LatencySampler, VariantModel};
pub use store::{
    Effector, ManagedSystem, Probe, PurchaseResponse, RequestSink, StoreError, StoreRequest, WebStore, PURCHASE_URL,
};
