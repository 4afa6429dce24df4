use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::document::{decode, named_object, to_named};
use super::SpecError;

/// Simulated end-user population, split into named behaviour classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserProfile {
    #[serde(skip)]
    pub id: String,
    pub classes: IndexMap<String, UserClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct UserClass {
    /// Number of simulated users in this class.
    pub count: u32,
    pub mean_seconds_between_request: f64,
    pub probability_purchase: f64,
    pub recommendation_click_probability: f64,
    pub recommendation_purchase_probability: f64,
    #[serde(rename = "bonus-recommendation-click-B", default)]
    pub bonus_recommendation_click_b: f64,
    #[serde(rename = "bonus-recommendation-purchase-B", default)]
    pub bonus_recommendation_purchase_b: f64,
    /// Segmentation attributes (age, location, ...). Carried through for
    /// segmentation scenarios but not used for routing.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub attributes: IndexMap<String, Value>,
}

impl UserClass {
    pub fn click_probability(&self, variant_b: bool) -> f64 {
        self.recommendation_click_probability + if variant_b { self.bonus_recommendation_click_b } else { 0.0 }
    }

    pub fn recommendation_purchase(&self, variant_b: bool) -> f64 {
        self.recommendation_purchase_probability
            + if variant_b { self.bonus_recommendation_purchase_b } else { 0.0 }
    }

    /// Aggregate request rate of the class in requests per second.
    pub fn arrival_rate(&self) -> f64 {
        f64::from(self.count) / self.mean_seconds_between_request
    }

    fn validate(&self, path: &str) -> Result<(), SpecError> {
        if self.count == 0 {
            return Err(SpecError::invalid(format!("{path}.count"), "count must be positive"));
        }
        if !(self.mean_seconds_between_request.is_finite() && self.mean_seconds_between_request > 0.0) {
            return Err(SpecError::invalid(
                format!("{path}.mean-seconds-between-request"),
                "must be a positive number of seconds",
            ));
        }
        let probabilities = [
            ("probability-purchase", self.probability_purchase),
            ("recommendation-click-probability", self.recommendation_click_probability),
            ("recommendation-purchase-probability", self.recommendation_purchase_probability),
            ("bonus-recommendation-click-B", self.click_probability(true)),
            ("bonus-recommendation-purchase-B", self.recommendation_purchase(true)),
        ];
        for (field, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(SpecError::invalid(
                    format!("{path}.{field}"),
                    format!("probability must lie in [0, 1], got {p}"),
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_profile(document: &str) -> Result<UserProfile, SpecError> {
    let (id, body) = named_object(document)?;
    UserProfile::from_body(id, body)
}

impl UserProfile {
    pub(crate) fn from_body(id: String, body: Value) -> Result<Self, SpecError> {
        let mut profile: UserProfile = decode(&id, body)?;
        profile.id = id;
        if profile.classes.is_empty() {
            return Err(SpecError::invalid(&profile.id, "a profile needs at least one user class"));
        }
        for (name, class) in &profile.classes {
            class.validate(&format!("{}.{name}", profile.id))?;
        }
        Ok(profile)
    }

    /// Profile containing only `class`, named after it.
    pub fn single_class(&self, class: &str) -> Option<UserProfile> {
        let c = self.classes.get(class)?;
        Some(UserProfile {
            id: class.to_string(),
            classes: IndexMap::from([(class.to_string(), c.clone())]),
        })
    }

    pub fn total_users(&self) -> u64 {
        self.classes.values().map(|c| u64::from(c.count)).sum()
    }

    pub fn to_document(&self) -> Value {
        to_named(&self.id, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const LISTING: &str = r#"{
      "user-profile-regular" : {
        "Standard": {
          "count": 1000,
          "mean-seconds-between-request": 15,
          "probability-purchase": 0.25,
          "recommendation-click-probability": 0.2,
          "recommendation-purchase-probability": 0.05,
          "bonus-recommendation-click-B": 0.1,
          "bonus-recommendation-purchase-B": 0.05
        }
      }
    }"#;

    #[test]
    fn parses_reference_profile() {
        let p = parse_profile(LISTING).unwrap();
        assert_eq!(p.id, "user-profile-regular");
        let c = &p.classes["Standard"];
        assert_eq!(c.count, 1000);
        assert_eq!(c.mean_seconds_between_request, 15.0);
        assert_eq!(c.bonus_recommendation_click_b, 0.1);
        assert!((c.click_probability(true) - 0.3).abs() < 1e-12);
        assert!((c.arrival_rate() - 66.666_666_666).abs() < 1e-6);
    }

    #[test]
    fn bonus_cannot_push_probability_out_of_range() {
        let doc = LISTING.replace(r#""bonus-recommendation-click-B": 0.1"#, r#""bonus-recommendation-click-B": 0.9"#);
        let err = parse_profile(&doc).unwrap_err().to_string();
        assert!(err.contains("bonus-recommendation-click-B"), "{err}");
    }

    #[test]
    fn rejects_zero_count_and_mean() {
        assert!(parse_profile(&LISTING.replace(r#""count": 1000"#, r#""count": 0"#)).is_err());
        assert!(parse_profile(&LISTING.replace(r#"-request": 15"#, r#"-request": 0"#)).is_err());
    }

    #[test]
    fn single_class_view() {
        let p = parse_profile(LISTING).unwrap();
        let s = p.single_class("Standard").unwrap();
        assert_eq!(s.id, "Standard");
        assert_eq!(s.total_users(), 1000);
        assert!(p.single_class("frivolous").is_none());
    }

    #[test]
    fn round_trip() {
        let p = parse_profile(LISTING).unwrap();
        assert_eq!(parse_profile(&p.to_document().to_string()).unwrap(), p);
    }
}
