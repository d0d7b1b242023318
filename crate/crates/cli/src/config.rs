//! Effective configuration: defaults, then the config file, then flags.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use serde_json::{Map, Value};
use storyops::eval::EvalConfig;
use storyops::forge::GenConfig;
use storyops::llm::GatewayConfig;

const GATEWAY_KEYS: [&str; 5] = [
    "API_BASE_URL",
    "MAX_REQUESTS_PER_SECOND",
    "RETRY_INITIAL_DELAY",
    "MAX_RETRIES",
    "API_TIMEOUT_SECONDS",
];

#[derive(Debug, Clone)]
pub struct Settings {
    pub gen: GenConfig,
    pub eval: EvalConfig,
    pub gateway: GatewayConfig,
    /// Every key with its effective value, for logging.
    pub effective: Map<String, Value>,
}

fn known_keys() -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = BTreeSet::new();
    for v in [
        serde_json::to_value(GenConfig::default()),
        serde_json::to_value(EvalConfig::default()),
    ] {
        if let Ok(Value::Object(m)) = v {
            keys.extend(m.into_iter().map(|(k, _)| k));
        }
    }
    keys.extend(GATEWAY_KEYS.iter().map(|k| k.to_string()));
    keys
}

fn read_file(path: &Path) -> Result<Map<String, Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    let value: Value = if is_toml {
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::to_value(table).map_err(|e| e.to_string())?
    } else {
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => Err(format!("{}: expected a table of settings", path.display())),
    }
}

/// `KEY=VALUE`, where VALUE is read as JSON if it parses and as a string
/// otherwise.
pub fn parse_assignment(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got \"{s}\""))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn gateway_from(map: &Map<String, Value>) -> Result<GatewayConfig, String> {
    let mut g = GatewayConfig::from_env();
    let num = |k: &str| -> Result<Option<f64>, String> {
        map.get(k)
            .map(|v| v.as_f64().ok_or_else(|| format!("{k} must be a number")))
            .transpose()
    };
    if let Some(v) = map.get("API_BASE_URL") {
        g.base_url = v
            .as_str()
            .ok_or("API_BASE_URL must be a string")?
            .to_string();
    }
    if let Some(v) = num("MAX_REQUESTS_PER_SECOND")? {
        g.max_requests_per_second = v;
    }
    if let Some(v) = num("RETRY_INITIAL_DELAY")? {
        g.retry_initial_delay = v;
    }
    if let Some(v) = map.get("MAX_RETRIES") {
        g.max_retries = v
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or("MAX_RETRIES must be a small non-negative integer")?;
    }
    if let Some(v) = num("API_TIMEOUT_SECONDS")? {
        g.timeout =
            Duration::try_from_secs_f64(v).map_err(|e| format!("API_TIMEOUT_SECONDS: {e}"))?;
    }
    g.validate()?;
    Ok(g)
}

/// Layers `overrides` over the file's settings and checks the result.
pub fn load(file: Option<&Path>, overrides: Vec<(String, Value)>) -> Result<Settings, String> {
    let mut map = match file {
        Some(p) => read_file(p)?,
        None => Map::new(),
    };
    map.extend(overrides);
    let known = known_keys();
    let unknown: Vec<&String> = map.keys().filter(|k| !known.contains(*k)).collect();
    if !unknown.is_empty() {
        return Err(format!(
            "unknown setting(s): {}",
            unknown
                .iter()
                .map(|k| k.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    let obj = Value::Object(map.clone());
    let gen: GenConfig =
        serde_json::from_value(obj.clone()).map_err(|e| format!("invalid setting: {e}"))?;
    gen.validate()?;
    let eval: EvalConfig =
        serde_json::from_value(obj).map_err(|e| format!("invalid setting: {e}"))?;
    let gateway = gateway_from(&map)?;

    let mut effective = Map::new();
    for v in [serde_json::to_value(&gen), serde_json::to_value(&eval)] {
        if let Ok(Value::Object(m)) = v {
            effective.extend(m);
        }
    }
    effective.insert("API_BASE_URL".into(), gateway.base_url.clone().into());
    effective.insert(
        "MAX_REQUESTS_PER_SECOND".into(),
        gateway.max_requests_per_second.into(),
    );
    effective.insert(
        "RETRY_INITIAL_DELAY".into(),
        gateway.retry_initial_delay.into(),
    );
    effective.insert("MAX_RETRIES".into(), gateway.max_retries.into());
    effective.insert(
        "API_TIMEOUT_SECONDS".into(),
        gateway.timeout.as_secs_f64().into(),
    );
    Ok(Settings {
        gen,
        eval,
        gateway,
        effective,
    })
}
