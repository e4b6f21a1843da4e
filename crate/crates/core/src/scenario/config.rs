//! Line-based config files: `[section]` headers, `key = value` entries and
//! `#` comments. Keys may repeat (the schedule relies on it); lookups
//! return the last occurrence.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    /// Fails on the first key outside `allowed`; a key ending in `.` in
    /// `allowed` admits any key with that prefix.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for e in &self.entries {
            let ok = allowed.iter().any(|a| if a.ends_with('.') { e.key.starts_with(a) } else { e.key == *a });
            if !ok {
                return Err(Error::Parse { line: e.line, message: format!("unknown key `{}` in [{}]", e.key, self.name) });
            }
        }
        Ok(())
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|e| e.f64()).transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| Error::Parse { line: self.line, message: format!("[{}] needs `{key}`", self.name) })
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key).map(|e| e.usize()).transpose()
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|e| match e.value.as_str() {
                "true" | "yes" | "on" => Ok(true),
                "false" | "no" | "off" => Ok(false),
                _ => Err(e.error("expected true or false")),
            })
            .transpose()
    }
}

impl Entry {
    pub fn error(&self, message: impl std::fmt::Display) -> Error {
        Error::Parse { line: self.line, message: format!("`{}`: {message}", self.key) }
    }

    pub fn f64(&self) -> Result<f64> {
        parse_f64(&self.value).ok_or_else(|| self.error(format!("not a number: {}", self.value)))
    }

    pub fn usize(&self) -> Result<usize> {
        self.value.parse().map_err(|_| self.error(format!("not a non-negative integer: {}", self.value)))
    }

    pub fn u64(&self) -> Result<u64> {
        self.value.parse().map_err(|_| self.error(format!("not a non-negative integer: {}", self.value)))
    }

    /// Comma-separated numbers.
    pub fn f64_list(&self) -> Result<Vec<f64>> {
        self.value.split(',').map(|t| parse_f64(t.trim()).ok_or_else(|| self.error(format!("not a number: {t}")))).collect()
    }

    pub fn usize_list(&self) -> Result<Vec<usize>> {
        self.value
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| self.error(format!("not a non-negative integer: {t}"))))
            .collect()
    }

    pub fn words(&self) -> Vec<&str> {
        self.value.split_whitespace().collect()
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub sections: Vec<Section>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| !n.is_empty() && !n.contains(['[', ']']))
                    .ok_or_else(|| Error::Parse { line, message: format!("malformed section header `{body}`") })?;
                if sections.iter().any(|s| s.name == name) {
                    return Err(Error::Parse { line, message: format!("duplicate section [{name}]") });
                }
                sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected `key = value`, got `{body}`") })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Parse { line, message: format!("malformed key `{k}`") });
            }
            if v.is_empty() {
                return Err(Error::Parse { line, message: format!("`{k}` has no value") });
            }
            let sec = sections
                .last_mut()
                .ok_or_else(|| Error::Parse { line, message: "entry before any [section] header".into() })?;
            sec.entries.push(Entry { key: k.to_string(), value: v.to_string(), line });
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Section> {
        self.section(name).ok_or_else(|| Error::Parse { line: 0, message: format!("missing [{name}] section") })
    }
}
