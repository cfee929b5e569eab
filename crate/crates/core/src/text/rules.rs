use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names replaced in the default rule set. Real runs should load a full list
/// with [`NeutralizeRules::add_names_file`].
const DEFAULT_FIRST_NAMES: &[&str] = &[
    "anna", "barbara", "charles", "david", "elizabeth", "emma", "ethan", "james", "jennifer",
    "jessica", "john", "joseph", "karen", "linda", "lucas", "mary", "mia", "michael", "noah",
    "olivia", "patricia", "richard", "robert", "sarah", "sophia", "susan", "thomas", "william",
];

const DEFAULT_SUBSTITUTIONS: &[(&str, &str)] = &[
    ("he", "they"),
    ("she", "they"),
    ("him", "them"),
    ("his", "their"),
    ("her", "their"),
    ("hers", "theirs"),
    ("himself", "themself"),
    ("herself", "themself"),
    ("mr", ""),
    ("mrs", ""),
    ("ms", ""),
    ("mx", ""),
];

/// Applied instead of `substitutions` when the word closes a clause
/// (followed by punctuation or the end of the text).
const DEFAULT_FINAL_SUBSTITUTIONS: &[(&str, &str)] = &[("his", "theirs")];

const DEFAULT_ABBREVIATIONS: &[&str] = &["dr", "jr", "mr", "mrs", "ms", "mx", "prof", "sr", "st", "vs"];

const DEFAULT_ACRONYM_PATTERN: &str = r"\b(?:[A-Za-z]\.){2,}";

/// Word lists and substitution tables for cleaning and neutralization.
///
/// Every key is lowercase. A substitution to the empty string deletes the
/// word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeutralizeRules {
    pub replacement_name: String,
    pub first_names: BTreeSet<String>,
    pub substitutions: BTreeMap<String, String>,
    pub final_substitutions: BTreeMap<String, String>,
    /// Words whose trailing period is dropped during cleaning.
    pub abbreviations: BTreeSet<String>,
    /// Regex for dotted acronyms; their periods are dropped during cleaning.
    pub acronym_pattern: String,
}

impl Default for NeutralizeRules {
    fn default() -> Self {
        let map = |pairs: &[(&str, &str)]| {
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        };
        Self {
            replacement_name: "Sam".into(),
            first_names: DEFAULT_FIRST_NAMES.iter().map(|s| s.to_string()).collect(),
            substitutions: map(DEFAULT_SUBSTITUTIONS),
            final_substitutions: map(DEFAULT_FINAL_SUBSTITUTIONS),
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
            acronym_pattern: DEFAULT_ACRONYM_PATTERN.into(),
        }
    }
}

impl NeutralizeRules {
    pub fn validate(&self) -> Result<()> {
        if self.replacement_name.trim().is_empty() {
            return Err(Error::InvalidSpec("replacement_name must be non-empty".into()));
        }
        let lower = |s: &String| *s == s.to_lowercase();
        for (k, v) in self.substitutions.iter().chain(&self.final_substitutions) {
            if !lower(k) {
                return Err(Error::InvalidSpec(format!("substitution key `{k}` is not lowercase")));
            }
            if k == v {
                return Err(Error::InvalidSpec(format!("substitution `{k}` maps to itself")));
            }
        }
        if let Some(name) = self.first_names.iter().chain(&self.abbreviations).find(|s| !lower(s)) {
            return Err(Error::InvalidSpec(format!("word list entry `{name}` is not lowercase")));
        }
        regex::Regex::new(&self.acronym_pattern)
            .map_err(|e| Error::InvalidSpec(format!("acronym_pattern: {e}")))?;
        Ok(())
    }

    /// Reads a rules JSON file; missing fields take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rules: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        rules.validate()?;
        Ok(rules)
    }

    /// Adds the names of a file holding one name per line; blank lines and
    /// lines starting with `#` are skipped.
    pub fn add_names_file(&mut self, path: &Path) -> Result<usize> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let before = self.first_names.len();
        for line in text.lines() {
            let name = line.trim();
            if !name.is_empty() && !name.starts_with('#') {
                self.first_names.insert(name.to_lowercase());
            }
        }
        Ok(self.first_names.len() - before)
    }
}
