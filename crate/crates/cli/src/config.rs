//! `--config FILE` support: a JSON object of flag defaults spliced into argv.
//!
//! Keys are flag names (`m_grid` and `m-grid` both work). Arrays become
//! comma-joined values, `true` becomes a bare switch, `false` and `null` are
//! dropped. Flags given explicitly on the command line win.

use serde_json::Value;
use std::collections::HashSet;
use std::ffi::OsString;

pub const SUBCOMMANDS: &[&str] = &[
    "bound",
    "separate",
    "cone-phase",
    "ellipsoid-phase",
    "plan",
    "width-mc",
    "pca-toy",
    "classify",
];

/// Global flags that take a value and may precede the subcommand.
const GLOBAL_VALUED: &[&str] = &["--jobs", "--config"];

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
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

fn subcommand_index(argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if GLOBAL_VALUED.contains(&a) {
            i += 2;
            continue;
        }
        if SUBCOMMANDS.contains(&a) {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn scalar(key: &str, v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(format!("config key `{key}` must hold a string, number, bool or array of those")),
    }
}

/// Returns argv with config defaults inserted after the subcommand name.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(strings) = argv.iter().map(|a| a.to_str().map(str::to_string)).collect::<Option<Vec<_>>>() else {
        return Ok(argv);
    };
    let Some(path) = config_path(&strings) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("config {path} is not valid JSON: {e}"))?;
    let Value::Object(map) = value else {
        return Err(format!("config {path} must hold a JSON object"));
    };
    let Some(at) = subcommand_index(&strings) else {
        return Ok(argv);
    };
    let explicit: HashSet<&str> = strings[at + 1..]
        .iter()
        .filter(|a| a.starts_with("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();

    let mut extra = Vec::new();
    for (key, v) in &map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || explicit.contains(flag.as_str()) {
            continue;
        }
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => extra.push(flag),
            Value::Array(items) => {
                let parts = items.iter().map(|x| scalar(key, x)).collect::<Result<Vec<_>, _>>()?;
                extra.push(flag);
                extra.push(parts.join(","));
            }
            other => {
                extra.push(flag);
                extra.push(scalar(key, other)?);
            }
        }
    }
    let mut out = strings;
    out.splice(at + 1..at + 1, extra);
    Ok(out.into_iter().map(OsString::from).collect())
}
