//! Flat `key = value` configuration files.
//!
//! Keys are long flag names without the leading dashes. A config file is
//! spliced into the command line ahead of the user's own flags, so flags
//! given explicitly win. Run manifests use the same format; their
//! bookkeeping keys are skipped so a manifest can be fed back as `--config`.

use std::ffi::OsString;
use std::path::Path;

use super::CliError;

/// Manifest keys that describe a run rather than configure it.
pub const INFORMATIONAL_KEYS: &[&str] = &[
    "format_version",
    "command",
    "tool_version",
    "wall_clock_seconds",
    "input",
    "out-dir",
    "coefficients",
];

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!("config line {}: expected 'key = value'", lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", lineno + 1)));
        }
        if key.starts_with("output.") || INFORMATIONAL_KEYS.contains(&key) {
            continue;
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Translates config entries into command-line tokens. Boolean switches
/// take `true`/`false`; `false` drops the switch.
pub fn entries_to_args(entries: &[(String, String)]) -> Result<Vec<OsString>, CliError> {
    let mut args = Vec::new();
    for (key, value) in entries {
        if super::SWITCHES.contains(&key.as_str()) {
            match value.as_str() {
                "true" => args.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => {
                    return Err(CliError::usage(format!(
                        "config key '{key}' expects true or false, got '{other}'"
                    )))
                }
            }
        } else {
            args.push(OsString::from(format!("--{key}")));
            args.push(OsString::from(value));
        }
    }
    Ok(args)
}

/// Finds `--config <path>` or `--config=<path>` in raw arguments.
pub fn find_config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(OsString::from(rest));
        }
    }
    None
}

pub fn load_config_args(path: &Path) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    entries_to_args(&parse_config(&text)?)
}
