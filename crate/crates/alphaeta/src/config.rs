//! Loading [`ExperimentConfig`] from JSON with dotted-path overrides.
//!
//! A config file is either the bare config object or a results sidecar,
//! whose `config` member is used. Overrides are `path=value`; the value is
//! parsed as JSON when possible and taken as a string otherwise, so
//! `cipher=additive` and `channel.sigma=8` both work.

use std::path::Path;

use alphaeta_core::{ExperimentConfig, LfsrSpec, PrngChoice};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Loads `path` (or the default configuration) and applies `overrides` in
/// order. The result is validated.
pub fn load_config<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<ExperimentConfig> {
    let base = match path {
        Some(p) => read_config_value(p)?,
        None => serde_json::to_value(ExperimentConfig::default()).expect("config serializes"),
    };
    config_from_value(base, overrides)
}

pub fn read_config_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if let Some(Value::Object(inner)) = value.get_mut("config") {
        let inner = std::mem::take(inner);
        value = Value::Object(inner);
    }
    Ok(value)
}

pub fn config_from_value<S: AsRef<str>>(mut value: Value, overrides: &[S]) -> Result<ExperimentConfig> {
    let mut touched_prng = false;
    for item in overrides {
        let (key, raw) = parse_override(item.as_ref())?;
        touched_prng |= key == "prng" || key.starts_with("prng.");
        set_path(&mut value, key, parse_value(raw))?;
    }
    let mut cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    follow_key_length(&mut cfg, touched_prng);
    cfg.validate()?;
    Ok(cfg)
}

/// Changing `L` alone keeps a preset LFSR a preset: its taps follow the new
/// length. An explicitly set or custom polynomial is left alone.
fn follow_key_length(cfg: &mut ExperimentConfig, touched_prng: bool) {
    if touched_prng {
        return;
    }
    if let PrngChoice::Lfsr(spec) = &cfg.prng {
        let is_preset = LfsrSpec::preset(spec.length_bits()).is_ok_and(|p| &p == spec);
        if is_preset && spec.length_bits() != cfg.key_bits {
            if let Ok(preset) = LfsrSpec::preset(cfg.key_bits) {
                cfg.prng = PrngChoice::Lfsr(preset);
            }
        }
    }
}

pub fn parse_override(item: &str) -> Result<(&str, &str)> {
    match item.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(Error::Usage(format!("override `{item}` is not of the form key=value"))),
    }
}

pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Value at a dotted path, if present.
pub fn get_path<'a>(value: &'a Value, key: &str) -> Option<&'a Value> {
    key.split('.').try_fold(value, |v, part| v.get(part))
}

pub fn set_path(value: &mut Value, key: &str, new: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut node = value;
    while let Some(part) = parts.next() {
        if !node.is_object() {
            // e.g. `prng.lfsr.L` while prng is the string "ideal_random"
            *node = Value::Object(Map::new());
        }
        let map = node.as_object_mut().expect("object");
        if parts.peek().is_none() {
            map.insert(part.to_string(), new);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Err(Error::Usage(format!("empty override key `{key}`")))
}
