//! Two-sample hypothesis tests and the reject/inconclusive decision rule.
//!
//! All tests are two-sided: experiment hypotheses are equalities between a
//! variant-A and a variant-B metric. The Student-t and normal tails are
//! computed in-crate from the regularized incomplete beta and gamma
//! functions (see [`special`]).

mod condition;
mod evaluate;
mod mann_whitney;
mod metric;
mod moments;
pub mod special;
mod welch;

pub use condition::{evaluate_condition, Bindings};
pub use evaluate::{evaluate_experiment, Decision, TestOutcome};
pub use mann_whitney::{mann_whitney_u, MannWhitneyResult, PValueMethod, EXACT_MAX_N};
pub use metric::{MetricKind, MetricRef};
pub use moments::RunningMoments;
pub use welch::{welch_from_moments, welch_t_test, WelchResult};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("series {series} needs at least 2 values, got {got}")]
    TooFewValues { series: String, got: usize },
    #[error("series {series} contains a non-finite value")]
    NonFinite { series: String },
    #[error("missing metric series: {0}")]
    MissingSeries(String),
    #[error("insufficient samples for {metric}: need {needed}, have {have}")]
    InsufficientSamples { metric: String, needed: u64, have: usize },
    #[error("unbound variable: {0}")]
    UnboundVariable(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

/// Named series of observations of one metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleSeries {
    pub metric_name: String,
    pub values: Vec<f64>,
}

impl SampleSeries {
    pub fn new(metric_name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            metric_name: metric_name.into(),
            values,
        }
    }
}

pub(crate) fn check_series(name: &str, values: &[f64]) -> Result<(), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewValues {
            series: name.to_string(),
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite {
            series: name.to_string(),
        });
    }
    Ok(())
}
