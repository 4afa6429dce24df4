use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::router::{RequestRecord, Variant};

/// What a metric measures on each request record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    /// Response time in milliseconds.
    ResponseTime,
    /// 1 if the user clicked a recommendation, else 0.
    Clicks,
    /// Items bought in the request (checkout plus recommended item).
    Purchases,
}

impl MetricKind {
    const REGISTRY: [(&'static str, MetricKind); 3] = [
        ("ResponseTime", MetricKind::ResponseTime),
        ("Clicks", MetricKind::Clicks),
        ("Purchases", MetricKind::Purchases),
    ];

    pub fn name(self) -> &'static str {
        Self::REGISTRY.iter().find(|(_, k)| *k == self).expect("registered").0
    }

    /// Observation for a successful record; failed requests yield nothing.
    pub fn extract(self, record: &RequestRecord) -> Option<f64> {
        if record.failed {
            return None;
        }
        match self {
            MetricKind::ResponseTime => Some(record.response_time_ms),
            MetricKind::Clicks => record.outcome.map(|o| f64::from(u8::from(o.recommendation_clicked))),
            MetricKind::Purchases => {
                record.outcome.map(|o| f64::from(u8::from(o.purchased) + u8::from(o.recommendation_purchased)))
            }
        }
    }
}

/// A metric name `<Kind>_<A|B>`, bound to one variant's request records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricRef {
    pub kind: MetricKind,
    pub variant: Variant,
}

impl FromStr for MetricRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (prefix, suffix) = s
            .rsplit_once('_')
            .ok_or_else(|| format!("metric {s} must be named <Kind>_A or <Kind>_B"))?;
        let variant = match suffix {
            "A" => Variant::A,
            "B" => Variant::B,
            _ => return Err(format!("metric {s} must end in _A or _B")),
        };
        let kind = MetricKind::REGISTRY
            .iter()
            .find(|(name, _)| *name == prefix)
            .map(|(_, k)| *k)
            .ok_or_else(|| format!("unknown metric kind {prefix} (known: ResponseTime, Clicks, Purchases)"))?;
        Ok(MetricRef { kind, variant })
    }
}

impl fmt::Display for MetricRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind.name(), self.variant)
    }
}
