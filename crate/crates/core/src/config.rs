//! `key = value` text configuration with `[section]` headers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueConfig {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unterminated section header '{line}'"),
                })?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected 'key = value', found '{line}'"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.to_string(), (value.trim().to_string(), line_no));
        }
        Ok(Self { sections })
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|(v, _)| v.as_str())
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    /// Keys of a section with the line they were read from (0 when set).
    pub fn keys(&self, section: &str) -> impl Iterator<Item = (&str, usize)> {
        self.sections
            .get(section)
            .into_iter()
            .flat_map(|s| s.iter().map(|(k, (_, line))| (k.as_str(), *line)))
    }

    /// Removes a section, returning whether it existed.
    pub fn remove_section(&mut self, section: &str) -> bool {
        self.sections.remove(section).is_some()
    }

    /// Typed lookup; a present but malformed value is an error.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.sections.get(section).and_then(|s| s.get(key)) {
            None => Ok(None),
            Some((value, line)) => value.parse().map(Some).map_err(|_| Error::Parse {
                line: *line,
                message: format!("[{section}] {key}: cannot parse '{value}'"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.sections.get(section).and_then(|s| s.get(key)) {
            None => Ok(None),
            Some((value, line)) => value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| Error::Parse {
                        line: *line,
                        message: format!("[{section}] {key}: cannot parse '{s}'"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Canonical text form, sorted by section and key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            if !name.is_empty() {
                let _ = writeln!(out, "[{name}]");
            }
            for (k, (v, _)) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = KeyValueConfig::parse(
            "top = 1\n[scene]\n# comment\nframes = 300 # trailing\nname = campus\n[tracker]\niou = 0.3\n",
        )
        .unwrap();
        assert_eq!(cfg.get::<u32>("", "top").unwrap(), Some(1));
        assert_eq!(cfg.get::<usize>("scene", "frames").unwrap(), Some(300));
        assert_eq!(cfg.raw("scene", "name"), Some("campus"));
        assert_eq!(cfg.get_or("tracker", "iou", 0.5).unwrap(), 0.3);
        assert_eq!(cfg.get_or("tracker", "window", 64usize).unwrap(), 64);
    }

    #[test]
    fn reports_line_numbers() {
        match KeyValueConfig::parse("[a]\nx = 1\noops\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = KeyValueConfig::parse("[a]\nx = one\n").unwrap();
        match cfg.get::<f64>("a", "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lists() {
        let cfg = KeyValueConfig::parse("[eval]\nbuckets = 10, 25\n").unwrap();
        assert_eq!(
            cfg.get_list::<f64>("eval", "buckets").unwrap(),
            Some(vec![10.0, 25.0])
        );
    }
}
