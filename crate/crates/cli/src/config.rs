//! `key = value` config files merged under command-line flags.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug)]
pub struct ConfigError(pub String);

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(ConfigError(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Insert the config file's entries as flags directly after the subcommand,
/// so that flags given on the command line (later in argv) win.
pub fn merge_config_file(argv: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| ConfigError(format!("{path}: {e}")))?;
    let entries = parse_config(&text)?;
    let at = argv
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(argv.len(), |p| p + 2);
    let mut out = argv[..at].to_vec();
    for (k, v) in entries {
        if k == "config" || v.is_empty() {
            continue;
        }
        out.push(format!("--{k}"));
        out.push(v);
    }
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

fn flatten(value: &Value, out: &mut Vec<(String, String)>) {
    if let Value::Object(map) = value {
        for (k, v) in map {
            match v {
                Value::Object(_) => flatten(v, out),
                _ => out.push((k.replace('_', "-"), scalar(v))),
            }
        }
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(scalar).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// Every resolved setting as `key = value`, sorted by key.
pub fn render_resolved(command: &str, args: &impl Serialize) -> String {
    let value = serde_json::to_value(args).expect("arguments serialise");
    let mut entries = Vec::new();
    flatten(&value, &mut entries);
    entries.sort();
    let mut out = format!("# dynstress {command}\n");
    for (k, v) in entries {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}
