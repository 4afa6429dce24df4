use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

/// Latency distribution of one simulated service, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LatencyModel {
    pub distribution: LatencyDistribution,
    /// `lognormal`: `[mu, sigma]` of ln(ms). `constant`: `[ms]`.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyDistribution {
    Lognormal,
    Constant,
}

impl LatencyModel {
    pub fn lognormal(mu: f64, sigma: f64) -> Self {
        Self { distribution: LatencyDistribution::Lognormal, params: vec![mu, sigma] }
    }

    pub fn constant(ms: f64) -> Self {
        Self { distribution: LatencyDistribution::Constant, params: vec![ms] }
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.distribution, self.params.as_slice()) {
            (LatencyDistribution::Lognormal, &[mu, sigma]) => {
                if mu.is_finite() && sigma.is_finite() && sigma > 0.0 {
                    Ok(())
                } else {
                    Err(format!("lognormal needs finite mu and sigma > 0, got [{mu}, {sigma}]"))
                }
            }
            (LatencyDistribution::Constant, &[ms]) => {
                if ms.is_finite() && ms > 0.0 {
                    Ok(())
                } else {
                    Err(format!("constant latency must be positive, got {ms}"))
                }
            }
            (LatencyDistribution::Lognormal, p) => Err(format!("lognormal takes [mu, sigma], got {} params", p.len())),
            (LatencyDistribution::Constant, p) => Err(format!("constant takes [ms], got {} params", p.len())),
        }
    }

    pub fn sampler(&self) -> Result<LatencySampler, String> {
        self.validate()?;
        Ok(match self.distribution {
            LatencyDistribution::Lognormal => {
                let d = LogNormal::new(self.params[0], self.params[1]).map_err(|e| e.to_string())?;
                LatencySampler::Lognormal(d)
            }
            LatencyDistribution::Constant => LatencySampler::Constant(self.params[0]),
        })
    }
}

/// Ready-to-draw form of a [`LatencyModel`].
#[derive(Debug, Clone, Copy)]
pub enum LatencySampler {
    Lognormal(LogNormal<f64>),
    Constant(f64),
}

impl LatencySampler {
    /// Strictly positive latency in ms.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LatencySampler::Lognormal(d) => d.sample(rng).max(f64::MIN_POSITIVE),
            LatencySampler::Constant(ms) => *ms,
        }
    }
}

/// Behaviour of one deployable service version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct VariantModel {
    pub id: String,
    pub latency_model: LatencyModel,
    /// Users served by this version as variant B get the profile's B bonuses.
    #[serde(default)]
    pub click_uplift_applies: bool,
}
