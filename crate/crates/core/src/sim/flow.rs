use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LatencySampler;
use crate::router::{FlowOutcome, Variant};
use crate::spec::UserClass;

/// Steps of one store visit, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FlowStep {
    Authenticate,
    StartSession,
    GetPrice,
    UpdateInventory,
    CheckoutOverview,
    Recommend,
    RecordHistory,
    CloseSession,
}

impl FlowStep {
    pub const ORDER: [FlowStep; 8] = [
        FlowStep::Authenticate,
        FlowStep::StartSession,
        FlowStep::GetPrice,
        FlowStep::UpdateInventory,
        FlowStep::CheckoutOverview,
        FlowStep::Recommend,
        FlowStep::RecordHistory,
        FlowStep::CloseSession,
    ];

    /// Service that executes the step.
    pub fn service(self) -> &'static str {
        match self {
            FlowStep::Authenticate => "ws-authentication-service",
            FlowStep::StartSession | FlowStep::CloseSession => "ws-session-service",
            FlowStep::GetPrice => "ws-pricing-service",
            FlowStep::UpdateInventory => "ws-inventory-service",
            FlowStep::CheckoutOverview => "ws-checkout-service",
            FlowStep::Recommend => "ws-recommendation-service",
            FlowStep::RecordHistory => "ws-history-service",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowResult {
    pub response_time_ms: f64,
    pub step_latencies_ms: [f64; 8],
    pub outcome: Option<FlowOutcome>,
}

/// Samplers for each step of the flow, with the step under test already
/// resolved to the routed variant.
#[derive(Debug, Clone)]
pub struct FlowPlan<'a> {
    pub steps: [&'a LatencySampler; 8],
    /// Whether the user gets the profile's B bonuses.
    pub bonus: bool,
}

/// Runs one visit: draws every step latency in order, then the user's
/// click and purchase decisions. The response time is the sum of the step
/// latencies.
pub fn serve_purchase_flow<R: Rng + ?Sized>(
    plan: &FlowPlan<'_>,
    behavior: Option<&UserClass>,
    rng: &mut R,
) -> FlowResult {
    let mut step_latencies_ms = [0.0; 8];
    for (slot, sampler) in step_latencies_ms.iter_mut().zip(plan.steps) {
        *slot = sampler.sample(rng);
    }
    let response_time_ms = step_latencies_ms.iter().sum();
    let outcome = behavior.map(|class| {
        let recommendation_clicked = rng.random_bool(class.click_probability(plan.bonus));
        let purchased = rng.random_bool(class.probability_purchase);
        let recommendation_purchased =
            rng.random_bool(class.recommendation_purchase(plan.bonus)) && recommendation_clicked;
        FlowOutcome {
            recommendation_clicked,
            purchased,
            recommendation_purchased,
        }
    });
    FlowResult {
        response_time_ms,
        step_latencies_ms,
        outcome,
    }
}

/// Whether a request served on `variant` gets the B bonuses.
pub fn bonus_applies(variant: Variant, model_b_uplift: bool) -> bool {
    variant == Variant::B && model_b_uplift
}
