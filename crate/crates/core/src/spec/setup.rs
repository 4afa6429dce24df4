use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::document::{decode, named_object, to_named};
use super::SpecError;
use crate::sim::VariantModel;

/// Managed-system configuration deployed before a pipeline runs: the
/// simulated services, the behaviour models they run, and the A/B
/// components that split traffic between two variants of one service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SetupSpec {
    #[serde(skip)]
    pub id: String,
    pub services: Vec<ServiceSpec>,
    pub ab_components: Vec<AbComponentSpec>,
    pub variant_models: Vec<VariantModel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ServiceSpec {
    pub name: String,
    pub version: String,
    pub variant_model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AbComponentSpec {
    pub name: String,
    pub service_under_test: String,
    #[serde(default)]
    pub assignment: AssignmentMode,
}

/// How clients are mapped to variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMode {
    /// Hash of `(seed, experiment, client)`: a client keeps its variant for
    /// the whole experiment.
    #[default]
    Sticky,
    /// Hash of `(seed, experiment, client, request index)`.
    PerRequest,
}

pub fn parse_setup(document: &str) -> Result<SetupSpec, SpecError> {
    let (id, body) = named_object(document)?;
    SetupSpec::from_body(id, body)
}

impl SetupSpec {
    pub(crate) fn from_body(id: String, body: Value) -> Result<Self, SpecError> {
        let mut setup: SetupSpec = decode(&id, body)?;
        setup.id = id;
        setup.validate()?;
        Ok(setup)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        for (i, model) in self.variant_models.iter().enumerate() {
            model
                .latency_model
                .validate()
                .map_err(|m| SpecError::invalid(format!("{}.variantModels[{i}].latencyModel", self.id), m))?;
            if self.variant_models[..i].iter().any(|m| m.id == model.id) {
                return Err(SpecError::invalid(
                    format!("{}.variantModels[{i}].id", self.id),
                    format!("duplicate variant model {}", model.id),
                ));
            }
        }
        for (i, service) in self.services.iter().enumerate() {
            if self.model(&service.variant_model).is_none() {
                return Err(SpecError::invalid(
                    format!("{}.services[{i}].variantModel", self.id),
                    format!("unknown variant model: {}", service.variant_model),
                ));
            }
        }
        for (i, ab) in self.ab_components.iter().enumerate() {
            if !self.services.iter().any(|s| s.name == ab.service_under_test) {
                return Err(SpecError::invalid(
                    format!("{}.abComponents[{i}].serviceUnderTest", self.id),
                    format!("unknown service: {}", ab.service_under_test),
                ));
            }
        }
        Ok(())
    }

    pub fn model(&self, id: &str) -> Option<&VariantModel> {
        self.variant_models.iter().find(|m| m.id == id)
    }

    pub fn service(&self, name: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.name == name)
    }

    /// The A/B component that tests `service`.
    pub fn ab_for_service(&self, service: &str) -> Option<&AbComponentSpec> {
        self.ab_components.iter().find(|ab| ab.service_under_test == service)
    }

    pub fn to_document(&self) -> Value {
        to_named(&self.id, self)
    }
}

/// Service name of a `service:version` variant tag.
pub(crate) fn service_of(variant: &str) -> &str {
    variant.rsplit_once(':').map_or(variant, |(service, _)| service)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const SETUP: &str = r#"{
      "Recommendation_upgrade": {
        "variantModels": [
          {"id": "step", "latencyModel": {"distribution": "constant", "params": [1.0]}},
          {"id": "rec:1.0.0", "latencyModel": {"distribution": "lognormal", "params": [2.995732273553991, 0.35]}},
          {"id": "rec:1.1.0", "latencyModel": {"distribution": "lognormal", "params": [2.995732273553991, 0.35]},
           "clickUpliftApplies": true}
        ],
        "services": [
          {"name": "ws-authentication-service", "version": "1.0.0", "variantModel": "step"},
          {"name": "rec", "version": "1.0.0", "variantModel": "rec:1.0.0"}
        ],
        "abComponents": [{"name": "rec-ab", "serviceUnderTest": "rec"}]
      }
    }"#;

    #[test]
    fn parses_setup() {
        let s = parse_setup(SETUP).unwrap();
        assert_eq!(s.id, "Recommendation_upgrade");
        assert_eq!(s.ab_components[0].assignment, AssignmentMode::Sticky);
        assert!(s.model("rec:1.1.0").unwrap().click_uplift_applies);
        assert_eq!(s.ab_for_service("rec").unwrap().name, "rec-ab");
    }

    #[test]
    fn rejects_dangling_model() {
        let doc = SETUP.replace(r#""variantModel": "step""#, r#""variantModel": "nope""#);
        assert!(parse_setup(&doc).unwrap_err().to_string().contains("unknown variant model: nope"));
    }

    #[test]
    fn rejects_degenerate_latency() {
        let doc = SETUP.replace("[1.0]", "[0.0]");
        assert!(parse_setup(&doc).is_err());
        let doc = SETUP.replacen("0.35]", "0.0]", 1);
        assert!(parse_setup(&doc).is_err());
    }

    #[test]
    fn service_tag() {
        assert_eq!(service_of("ws-recommendation-service:1.0.0"), "ws-recommendation-service");
        assert_eq!(service_of("plain"), "plain");
    }
}
