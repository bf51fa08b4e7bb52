use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Default parameter selection: weight tensors only.
pub const DEFAULT_FILTER: &str = "*.weight";

#[derive(Debug, Error)]
#[error("invalid glob `{pattern}`: {reason}")]
pub struct PatternError {
    pub pattern: String,
    pub reason: String,
}

/// A glob over parameter names. `*` also crosses `.` separators.
#[derive(Debug, Clone)]
pub struct NameFilter {
    source: String,
    pattern: glob::Pattern,
}

impl NameFilter {
    pub fn new(pattern: &str) -> Result<Self, PatternError> {
        let compiled = glob::Pattern::new(pattern).map_err(|e| PatternError {
            pattern: pattern.to_owned(),
            reason: e.msg.to_owned(),
        })?;
        Ok(Self {
            source: pattern.to_owned(),
            pattern: compiled,
        })
    }

    pub fn matches(&self, name: &str) -> bool {
        self.pattern.matches(name)
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }
}

impl Default for NameFilter {
    fn default() -> Self {
        Self::new(DEFAULT_FILTER).expect("default filter is a valid glob")
    }
}

impl FromStr for NameFilter {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for NameFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl PartialEq for NameFilter {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}
