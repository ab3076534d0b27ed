//! Run configuration resolution: built-in defaults, then a TOML config
//! file, then `--set key=value` command-line overrides (highest priority).
//! Unknown keys are rejected at every stage, and the fully resolved config
//! is persisted into the output directory.

use ctrlgs_core::error::{Error, Result};
use ctrlgs_core::train::TrainConfig;
use std::path::Path;

pub fn resolve_config(
    config_file: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
    iterations: Option<u64>,
    segment_heads: Option<bool>,
) -> Result<TrainConfig> {
    // Defaults -> TOML document.
    let mut doc: toml::Value = toml::Value::try_from(TrainConfig::default())
        .map_err(|e| Error::Config(format!("default config serialization: {e}")))?;

    if let Some(path) = config_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let file_doc: toml::Value = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        merge(&mut doc, &file_doc);
    }

    for kv in overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects key=value, got {kv:?}")))?;
        apply_override(&mut doc, key.trim(), value.trim())?;
    }
    if let Some(seed) = seed {
        apply_override(&mut doc, "seed", &seed.to_string())?;
    }
    if let Some(iters) = iterations {
        apply_override(&mut doc, "total_iterations", &iters.to_string())?;
    }
    if let Some(on) = segment_heads {
        apply_override(&mut doc, "field.segment_heads_enabled", &on.to_string())?;
    }

    // deny_unknown_fields on TrainConfig rejects typos from file/overrides.
    doc.try_into()
        .map_err(|e| Error::Config(format!("resolved configuration invalid: {e}")))
}

pub fn persist_config(config: &TrainConfig, dir: &Path) -> Result<()> {
    let text = toml::to_string_pretty(config)
        .map_err(|e| Error::Config(format!("config serialization: {e}")))?;
    std::fs::write(dir.join("config.toml"), text)?;
    Ok(())
}

/// Overlay `src` onto `dst`, table by table.
fn merge(dst: &mut toml::Value, src: &toml::Value) {
    match (dst, src) {
        (toml::Value::Table(d), toml::Value::Table(s)) => {
            for (k, v) in s {
                match d.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (d, s) => *d = s.clone(),
    }
}

/// Set a dotted key path to a parsed TOML value (falling back to a string).
fn apply_override(doc: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    // Parse the value as a one-entry TOML document so scalars keep their
    // types; anything unparseable becomes a string.
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut table) => table.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("config key {path:?}: {part:?} is not a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Ok(())
}
