use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::stats::{MetricKind, MetricRef};

/// Five-number summary with Tukey whiskers, as drawn in a box plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoxSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Smallest value at or above `q1 - 1.5 * IQR`.
    pub whisker_low: f64,
    /// Largest value at or below `q3 + 1.5 * IQR`.
    pub whisker_high: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LiveSummary {
    pub run_id: String,
    pub experiment: Option<String>,
    /// Keyed by metric name, e.g. `ResponseTime_A`. Metrics without samples
    /// are left out.
    pub per_variant: BTreeMap<String, BoxSummary>,
}

/// Quantile of sorted data by linear interpolation between closest ranks:
/// with `h = (n - 1) p`, the result is `x[floor h] + (h - floor h) *
/// (x[floor h + 1] - x[floor h])`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxSummary {
    pub fn from_values(values: &[f64]) -> Option<BoxSummary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let (low_fence, high_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let whisker_low = *sorted.iter().find(|&&x| x >= low_fence).expect("q1 lies within data");
        let whisker_high = *sorted.iter().rev().find(|&&x| x <= high_fence).expect("q3 lies within data");
        Some(BoxSummary {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            min: sorted[0],
            q1,
            median: quantile_sorted(&sorted, 0.5),
            q3,
            max: sorted[sorted.len() - 1],
            whisker_low,
            whisker_high,
        })
    }
}

/// Summaries of the response-time series among `samples`.
pub fn response_time_summaries(samples: &BTreeMap<String, Vec<f64>>) -> BTreeMap<String, BoxSummary> {
    samples
        .iter()
        .filter(|(name, _)| name.parse::<MetricRef>().is_ok_and(|m| m.kind == MetricKind::ResponseTime))
        .filter_map(|(name, values)| BoxSummary::from_values(values).map(|s| (name.clone(), s)))
        .collect()
}
