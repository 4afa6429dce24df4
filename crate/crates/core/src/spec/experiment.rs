use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::document::{decode, named_object, to_named};
use super::SpecError;

/// One two-variant experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(skip)]
    pub id: String,
    /// `service:version` tag of variant A.
    pub variant_a: String,
    pub variant_b: String,
    pub user_profile: String,
    #[serde(rename = "ABAssignment")]
    pub ab_assignment: AbAssignment,
    /// Per-variant sample budget.
    pub samples: u64,
    pub metrics: Vec<String>,
    pub statistical_test: StatisticalTestSpec,
}

/// Integer traffic percentages for the two variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbAssignment {
    #[serde(rename = "weightA")]
    pub weight_a: u32,
    #[serde(rename = "weightB")]
    pub weight_b: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StatisticalTestSpec {
    pub hypothesis: Hypothesis,
    /// Significance threshold; the test rejects iff the observed p-value is
    /// strictly below it.
    pub p_value: f64,
    #[serde(rename = "type")]
    pub test_type: TestType,
    pub resulting_variable: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestType {
    #[serde(
        rename = "welch-t-test",
        alias = "welsh's t-test",
        alias = "welch's t-test",
        alias = "welch-t",
        alias = "t-test"
    )]
    WelchT,
    #[serde(rename = "mann-whitney-u", alias = "mann-whitney", alias = "mann-whitney u test")]
    MannWhitneyU,
}

impl fmt::Display for TestType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestType::WelchT => "welch-t-test",
            TestType::MannWhitneyU => "mann-whitney-u",
        })
    }
}

/// Equality hypothesis `<metric> == <metric>` between two distinct metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Hypothesis {
    pub left: String,
    pub right: String,
}

const HYPOTHESIS_GRAMMAR: &str = "hypothesis must be '<metric> == <metric>'";

impl FromStr for Hypothesis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split("==");
        let (Some(left), Some(right), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(HYPOTHESIS_GRAMMAR.into());
        };
        let (left, right) = (left.trim(), right.trim());
        let is_name = |m: &str| {
            !m.is_empty() && m.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
        };
        if !is_name(left) || !is_name(right) {
            return Err(HYPOTHESIS_GRAMMAR.into());
        }
        if left == right {
            return Err("hypothesis must compare two distinct metrics".into());
        }
        Ok(Hypothesis {
            left: left.to_string(),
            right: right.to_string(),
        })
    }
}

impl TryFrom<String> for Hypothesis {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Hypothesis> for String {
    fn from(h: Hypothesis) -> Self {
        h.to_string()
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} == {}", self.left, self.right)
    }
}

pub fn parse_experiment(document: &str) -> Result<ExperimentSpec, SpecError> {
    let (id, body) = named_object(document)?;
    ExperimentSpec::from_body(id, body)
}

impl ExperimentSpec {
    pub(crate) fn from_body(id: String, body: Value) -> Result<Self, SpecError> {
        let mut spec: ExperimentSpec = decode(&id, body)?;
        spec.id = id;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let at = |field: &str| format!("{}.{field}", self.id);
        let AbAssignment { weight_a, weight_b } = self.ab_assignment;
        if weight_a + weight_b != 100 {
            return Err(SpecError::invalid(
                at("ABAssignment"),
                format!("weightA + weightB must equal 100, got {weight_a} + {weight_b}"),
            ));
        }
        if self.samples < 2 {
            return Err(SpecError::invalid(at("samples"), "samples must be at least 2"));
        }
        if self.metrics.is_empty() {
            return Err(SpecError::invalid(at("metrics"), "metrics must not be empty"));
        }
        let test = &self.statistical_test;
        for metric in [&test.hypothesis.left, &test.hypothesis.right] {
            if !self.metrics.contains(metric) {
                return Err(SpecError::invalid(
                    at("statisticalTest.hypothesis"),
                    format!("metric {metric} is not listed in metrics"),
                ));
            }
        }
        if !(test.p_value > 0.0 && test.p_value < 1.0) {
            return Err(SpecError::invalid(
                at("statisticalTest.pValue"),
                format!("pValue must lie in (0, 1), got {}", test.p_value),
            ));
        }
        if test.resulting_variable.trim().is_empty() {
            return Err(SpecError::invalid(
                at("statisticalTest.resultingVariable"),
                "resultingVariable must not be empty",
            ));
        }
        Ok(())
    }

    pub fn to_document(&self) -> Value {
        to_named(&self.id, self)
    }
}
