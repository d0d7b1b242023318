use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A JSON-schema subset: `type`, `properties`, `required`, `items`, `enum`.
/// Good enough to gate structured LLM replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResponseSchema(pub Value);

impl ResponseSchema {
    pub fn new(schema: Value) -> Self {
        ResponseSchema(schema)
    }

    /// Parses `text` (tolerating a ```json fence) and checks it.
    pub fn check_text(&self, text: &str) -> Result<Value, String> {
        let body = strip_fence(text);
        let value: Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
        self.check(&value)?;
        Ok(value)
    }

    pub fn check(&self, value: &Value) -> Result<(), String> {
        check_node(&self.0, value, "$")
    }
}

/// Removes a surrounding markdown code fence, if any.
pub fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
        if let Some(inner) = rest.trim_end().strip_suffix("```") {
            return inner.trim();
        }
    }
    t
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "integer" => v.is_i64() || v.is_u64(),
        "number" => v.is_number(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => true,
    }
}

fn check_node(schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(t, v),
            Value::Array(ts) => ts
                .iter()
                .filter_map(Value::as_str)
                .any(|t| type_matches(t, v)),
            _ => true,
        };
        if !ok {
            return Err(format!("{path}: expected type {ty}"));
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            return Err(format!("{path}: value not in enum"));
        }
    }
    if let (Some(Value::Array(required)), Some(obj)) = (schema.get("required"), v.as_object()) {
        for key in required.iter().filter_map(Value::as_str) {
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing required field {key:?}"));
            }
        }
    }
    if let (Some(Value::Object(props)), Some(obj)) = (schema.get("properties"), v.as_object()) {
        for (key, sub) in props {
            if let Some(child) = obj.get(key) {
                check_node(sub, child, &format!("{path}.{key}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            check_node(items, child, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn schema() -> ResponseSchema {
        ResponseSchema::new(json!({
            "type": "object",
            "required": ["is_valid", "violations"],
            "properties": {
                "is_valid": {"type": "boolean"},
                "violations": {"type": "array", "items": {"type": "object", "required": ["rule"]}},
                "kind": {"enum": ["a", "b"]}
            }
        }))
    }

    #[test]
    fn accepts_valid_and_fenced() {
        assert!(schema()
            .check_text(r#"{"is_valid": true, "violations": []}"#)
            .is_ok());
        assert!(schema()
            .check_text("```json\n{\"is_valid\": false, \"violations\": [{\"rule\": \"R2\"}]}\n```")
            .is_ok());
    }

    #[test]
    fn rejects_invalid() {
        assert!(schema()
            .check_text("not json")
            .unwrap_err()
            .starts_with("invalid JSON"));
        assert!(schema()
            .check_text(r#"{"is_valid": true}"#)
            .unwrap_err()
            .contains("violations"));
        assert!(schema()
            .check_text(r#"{"is_valid": "yes", "violations": []}"#)
            .is_err());
        assert!(schema()
            .check_text(r#"{"is_valid": true, "violations": [{}]}"#)
            .unwrap_err()
            .contains("$.violations[0]"));
        assert!(schema()
            .check_text(r#"{"is_valid": true, "violations": [], "kind": "c"}"#)
            .is_err());
    }
}
