//! Shared pieces of the plain-text artifact formats.
//!
//! Every dump is line oriented. Lines starting with `#` are comments; a
//! comment of the form `# key = value` is a metadata entry, and lines
//! starting with `#|` carry an echo of the resolved experiment config which
//! readers ignore.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_meta(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "# {key} = {value}");
}

/// Prefix every line of `config` with `#| ` so it travels with the artifact.
pub fn write_echo(out: &mut String, config: &str) {
    for line in config.lines() {
        let _ = writeln!(out, "#| {line}");
    }
}

/// Data lines with their 1-based line numbers, plus parsed metadata.
pub struct Document<'a> {
    pub meta: BTreeMap<String, (usize, String)>,
    pub rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Document<'a> {
    pub fn parse(text: &'a str) -> Self {
        let mut meta = BTreeMap::new();
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with("#|") {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.insert(k.trim().to_string(), (line_no, v.trim().to_string()));
                }
                continue;
            }
            rows.push((line_no, line.split_whitespace().collect()));
        }
        Document { meta, rows }
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(0, format!("missing header `# {key} = ...`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let line = self.meta.get(key).map(|(l, _)| *l).unwrap_or(0);
        let raw = self.meta_str(key)?;
        raw.parse()
            .map_err(|_| Error::parse(line, format!("cannot parse `{key}` value `{raw}`")))
    }
}

pub fn field<T: std::str::FromStr>(line: usize, cols: &[&str], idx: usize, what: &str) -> Result<T> {
    let raw = cols
        .get(idx)
        .ok_or_else(|| Error::parse(line, format!("missing column {} ({what})", idx + 1)))?;
    raw.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{raw}`")))
}
