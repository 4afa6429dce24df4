use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::document::{decode, split_named, to_named};
use super::SpecError;

/// Pipeline document. Cross references are checked by
/// [`resolve_pipeline`](super::resolve_pipeline), not here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(skip)]
    pub id: String,
    pub setup: String,
    pub start: String,
    pub experiments: Vec<String>,
    pub rules: Vec<String>,
}

/// Id given to a bare (unnamed) pipeline document parsed without a file name.
pub const DEFAULT_PIPELINE_ID: &str = "pipeline";

pub fn parse_pipeline(document: &str) -> Result<PipelineSpec, SpecError> {
    parse_pipeline_with_id(document, DEFAULT_PIPELINE_ID)
}

/// Parses either `{ "<id>": { "setup": ... } }` or a bare
/// `{ "setup": ..., "start": ... }` object, which takes `bare_id`.
pub fn parse_pipeline_with_id(document: &str, bare_id: &str) -> Result<PipelineSpec, SpecError> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| SpecError::Malformed(e.to_string()))?;
    let (id, body) = match &value {
        Value::Object(map) if map.contains_key("setup") || map.contains_key("start") => {
            (bare_id.to_string(), value)
        }
        _ => split_named(value)?,
    };
    let mut spec: PipelineSpec = decode(&id, body)?;
    spec.id = id;
    for (field, value) in [("setup", &spec.setup), ("start", &spec.start)] {
        if value.trim().is_empty() {
            return Err(SpecError::invalid(format!("{}.{field}", spec.id), "must not be empty"));
        }
    }
    if spec.experiments.is_empty() {
        return Err(SpecError::invalid(
            format!("{}.experiments", spec.id),
            "a pipeline needs at least one experiment",
        ));
    }
    Ok(spec)
}

impl PipelineSpec {
    pub fn to_document(&self) -> Value {
        to_named(&self.id, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = r#"{
      "setup": "Recommendation_upgrade",
      "start": "Upgrade v1.0.0 - v1.1.0",
      "experiments": [
        "Upgrade v1.0.0 - v1.1.0",
        "Clicks v1.0.0 - v1.1.0",
        "Purchases v1.0.0 - v1.1.0"
      ],
      "rules": [
        "Performance OK",
        "Performance Overhead",
        "Extra Clicks",
        "No Extra Clicks"
      ]
    }"#;

    #[test]
    fn parses_reference_pipeline() {
        let p = parse_pipeline_with_id(LISTING, "S1").unwrap();
        assert_eq!(p.id, "S1");
        assert_eq!(p.setup, "Recommendation_upgrade");
        assert_eq!(p.start, "Upgrade v1.0.0 - v1.1.0");
        assert_eq!(p.experiments.len(), 3);
        assert_eq!(p.rules.len(), 4);
    }

    #[test]
    fn named_form() {
        let doc = format!(r#"{{"Named": {LISTING}}}"#);
        assert_eq!(parse_pipeline(&doc).unwrap().id, "Named");
    }

    #[test]
    fn minimal_pipeline() {
        let doc = r#"{"setup": "s", "start": "X", "experiments": ["X"], "rules": []}"#;
        let p = parse_pipeline(doc).unwrap();
        assert_eq!(p.id, DEFAULT_PIPELINE_ID);
        assert!(p.rules.is_empty());
    }

    #[test]
    fn start_outside_experiments_parses() {
        // Referential integrity is checked at resolve time.
        let doc = r#"{"setup": "s", "start": "Y", "experiments": ["X"], "rules": []}"#;
        assert!(parse_pipeline(doc).is_ok());
    }

    #[test]
    fn missing_fields() {
        for field in ["setup", "rules", "experiments"] {
            let v: Value = serde_json::from_str(LISTING).unwrap();
            let mut map = v.as_object().unwrap().clone();
            map.remove(field);
            let err = parse_pipeline(&Value::Object(map).to_string()).unwrap_err();
            assert!(err.to_string().contains(field), "{err}");
        }
    }

    #[test]
    fn round_trip() {
        let p = parse_pipeline_with_id(LISTING, "S1").unwrap();
        let text = p.to_document().to_string();
        assert_eq!(parse_pipeline(&text).unwrap(), p);
    }
}
