//! Flat `key = value` configuration files.
//!
//! One entry per line; dotted keys group sections without nesting; `#`
//! starts a comment; blank lines are ignored. Values are scalars or
//! comma-separated lists. The format is deliberately trivial so a run's
//! resolved configuration can be echoed into its manifest and fed back in
//! unchanged.
//!
//! The parser keeps line numbers for diagnostics and records which keys a
//! command actually read, so [`Config::finish`] can reject strays instead
//! of silently ignoring a typo.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug)]
struct Entry {
    line: usize,
    raw: String,
}

#[derive(Debug)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !key.starts_with('.')
        && !key.ends_with('.')
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (idx, full_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match full_line.find('#') {
                Some(pos) => &full_line[..pos],
                None => full_line,
            };
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected 'key = value'"))?;
            let key = key.trim();
            let value = value.trim();
            if !valid_key(key) {
                bail!("line {line_no}: malformed key '{key}'");
            }
            if value.is_empty() {
                bail!("line {line_no}: key '{key}' has an empty value");
            }
            if let Some(prev) = entries.get(key) {
                bail!(
                    "line {line_no}: duplicate key '{key}' (first set at line {})",
                    prev.line
                );
            }
            entries.insert(
                key.to_string(),
                Entry {
                    line: line_no,
                    raw: value.to_string(),
                },
            );
        }
        Ok(Config {
            entries,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Config::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    fn take(&self, key: &str) -> Option<&Entry> {
        let entry = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(entry)
    }

    fn parse_scalar<T: std::str::FromStr>(&self, key: &str, kind: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e.raw.parse::<T>().map(Some).map_err(|_| {
                anyhow!(
                    "line {}: key '{key}': cannot parse '{}' as {kind}",
                    e.line,
                    e.raw
                )
            }),
        }
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.parse_scalar(key, "a number")
    }

    pub fn f64_req(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?
            .ok_or_else(|| anyhow!("missing required key '{key}'"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn usize_req(&self, key: &str) -> Result<usize> {
        self.parse_scalar(key, "an unsigned integer")?
            .ok_or_else(|| anyhow!("missing required key '{key}'"))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self
            .parse_scalar(key, "an unsigned integer")?
            .unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self
            .parse_scalar(key, "an unsigned integer")?
            .unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => match e.raw.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(anyhow!(
                    "line {}: key '{key}': expected true or false, got '{other}'",
                    e.line
                )),
            },
        }
    }

    pub fn string_opt(&self, key: &str) -> Option<String> {
        self.take(key).map(|e| e.raw.clone())
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.string_opt(key).unwrap_or_else(|| default.to_string())
    }

    /// Comma-separated list of numbers; a bare scalar is a one-element list.
    pub fn f64_list_req(&self, key: &str) -> Result<Vec<f64>> {
        let e = self
            .take(key)
            .ok_or_else(|| anyhow!("missing required key '{key}'"))?;
        e.raw
            .split(',')
            .map(|part| {
                let part = part.trim();
                part.parse::<f64>().map_err(|_| {
                    anyhow!(
                        "line {}: key '{key}': cannot parse '{part}' as a number",
                        e.line
                    )
                })
            })
            .collect()
    }

    /// Every key must have been read by now; unread keys are a config error
    /// so that misspellings fail loudly.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let strays: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, _)| !used.contains(*k))
            .map(|(k, e)| format!("line {}: unknown key '{k}'", e.line))
            .collect();
        if strays.is_empty() {
            Ok(())
        } else {
            Err(anyhow!("{}", strays.join("; ")))
        }
    }
}

/// Shortest decimal that round-trips the value, for echoing resolved
/// configurations; parsing the result recovers the identical bits.
pub fn fmt_value(v: f64) -> String {
    format!("{v}")
}

/// Render sorted `key = value` lines; the echo is itself a valid config.
pub fn render_echo(pairs: &[(String, String)]) -> String {
    let mut sorted: Vec<&(String, String)> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    for (k, v) in sorted {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
