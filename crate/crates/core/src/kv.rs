//! `key=value` text files: manager config, `toolchain.meta`, scenarios.
//!
//! Blank lines and lines starting with `#` are ignored. Whitespace around
//! keys and values is trimmed. Keys keep their file order.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("missing required key {0:?}")]
    Missing(String),
    #[error("key {key:?}: cannot parse {value:?}: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| KvError::Syntax {
                line: i + 1,
                text: raw.to_owned(),
            })?;
            let key = k.trim().to_owned();
            if key.is_empty() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_owned(),
                });
            }
            if entries.iter().any(|(existing, _)| *existing == key) {
                return Err(KvError::Duplicate { line: i + 1, key });
            }
            entries.push((key, v.trim().to_owned()));
        }
        Ok(KvFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key)
            .ok_or_else(|| KvError::Missing(key.to_owned()))
    }

    pub fn parse_opt<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| KvError::Value {
                    key: key.to_owned(),
                    value: v.to_owned(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn parse_req<T>(&self, key: &str) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.parse_opt(key)?
            .ok_or_else(|| KvError::Missing(key.to_owned()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Fails on the first key not accepted by `known`.
    pub fn reject_unknown(&self, known: impl Fn(&str) -> bool) -> Result<(), KvError> {
        match self.keys().find(|k| !known(k)) {
            Some(k) => Err(KvError::Unknown(k.to_owned())),
            None => Ok(()),
        }
    }
}
