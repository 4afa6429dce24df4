use serde::de::DeserializeOwned;
use serde_json::Value;

use super::SpecError;

/// Splits `{ "<id>": { ... } }` into its id and body.
pub(crate) fn named_object(text: &str) -> Result<(String, Value), SpecError> {
    let value: Value = serde_json::from_str(text).map_err(|e| SpecError::Malformed(e.to_string()))?;
    split_named(value)
}

pub(crate) fn split_named(value: Value) -> Result<(String, Value), SpecError> {
    match value {
        Value::Object(map) if map.len() == 1 => {
            let (id, body) = map.into_iter().next().expect("one entry");
            if id.trim().is_empty() {
                return Err(SpecError::invalid("<id>", "document id must not be empty"));
            }
            Ok((id, body))
        }
        Value::Object(map) => Err(SpecError::Malformed(format!(
            "expected exactly one top-level named object, found {} keys",
            map.len()
        ))),
        _ => Err(SpecError::Malformed("expected a JSON object".into())),
    }
}

/// Deserializes `body`, reporting structural errors with their field path.
pub(crate) fn decode<T: DeserializeOwned>(id: &str, body: Value) -> Result<T, SpecError> {
    serde_path_to_error::deserialize(body).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { id.to_string() } else { format!("{id}.{path}") };
        SpecError::Invalid {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

/// Wraps a serialized body back into its named top-level object.
pub(crate) fn to_named<T: serde::Serialize>(id: &str, body: &T) -> Value {
    let mut map = serde_json::Map::new();
    map.insert(id.to_string(), serde_json::to_value(body).expect("spec types serialize"));
    Value::Object(map)
}
