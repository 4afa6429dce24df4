use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{mann_whitney_u, welch_t_test, StatsError};
use crate::spec::{ExperimentSpec, TestType};

/// Outcome of a fixed-horizon test against a pre-registered threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Inconclusive,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::Inconclusive => "inconclusive",
        }
    }

    /// `reject` iff `p < threshold`; equality is inconclusive.
    pub fn from_p(p: f64, threshold: f64) -> Self {
        if p < threshold {
            Decision::Reject
        } else {
            Decision::Inconclusive
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestOutcome {
    pub experiment: String,
    pub test_type: TestType,
    pub hypothesis: String,
    /// t for Welch, U for Mann–Whitney; absent when undefined.
    pub statistic: Option<f64>,
    /// Welch only.
    pub degrees_of_freedom: Option<f64>,
    pub p_value_observed: f64,
    pub threshold: f64,
    pub decision: Decision,
    pub resulting_variable: String,
    /// Values per variant that entered the test.
    pub samples_per_variant: u64,
    pub mean_left: f64,
    pub mean_right: f64,
    pub degenerate: bool,
}

/// Runs the experiment's test on exactly the first `spec.samples` values of
/// the two hypothesis metrics.
pub fn evaluate_experiment(
    spec: &ExperimentSpec,
    series_by_metric: &BTreeMap<String, Vec<f64>>,
) -> Result<TestOutcome, StatsError> {
    let test = &spec.statistical_test;
    let budget = spec.samples;
    let take = |metric: &str| -> Result<&[f64], StatsError> {
        let values = series_by_metric
            .get(metric)
            .ok_or_else(|| StatsError::MissingSeries(metric.to_string()))?;
        if (values.len() as u64) < budget {
            return Err(StatsError::InsufficientSamples {
                metric: metric.to_string(),
                needed: budget,
                have: values.len(),
            });
        }
        Ok(&values[..budget as usize])
    };
    let left = take(&test.hypothesis.left)?;
    let right = take(&test.hypothesis.right)?;

    let (statistic, df, p, degenerate) = match test.test_type {
        TestType::WelchT => {
            let r = welch_t_test(left, right)?;
            (r.t, Some(r.df), r.p, r.degenerate)
        }
        TestType::MannWhitneyU => {
            let r = mann_whitney_u(left, right)?;
            (r.u, None, r.p, r.degenerate)
        }
    };
    let decision = Decision::from_p(p, test.p_value);
    assert_eq!(decision == Decision::Reject, p < test.p_value, "decision rule violated");
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(TestOutcome {
        experiment: spec.id.clone(),
        test_type: test.test_type,
        hypothesis: test.hypothesis.to_string(),
        statistic: statistic.is_finite().then_some(statistic),
        degrees_of_freedom: df.filter(|d| d.is_finite()),
        p_value_observed: p,
        threshold: test.p_value,
        decision,
        resulting_variable: test.resulting_variable.clone(),
        samples_per_variant: budget,
        mean_left: mean(left),
        mean_right: mean(right),
        degenerate,
    })
}
