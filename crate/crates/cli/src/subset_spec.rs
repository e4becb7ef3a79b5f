//! Named control subsets: a JSON array of `{"label", "include": [names]}`.

use std::collections::HashSet;
use std::path::Path;

use projpost::ControlSubset;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetEntry {
    pub label: String,
    #[serde(default)]
    pub include: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetSpecFile {
    pub entries: Vec<SubsetEntry>,
}

impl SubsetSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        let entries: Vec<SubsetEntry> =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("subset spec: {e}")))?;
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.label.as_str()) {
                return Err(CliError::Input(format!(
                    "subset spec: duplicate label {:?}",
                    e.label
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every entry as a subset of `names`; fails on the first unknown name.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<(String, ControlSubset)>> {
        self.entries
            .iter()
            .map(|e| {
                Ok((
                    e.label.clone(),
                    ControlSubset::from_names(names, &e.include)?,
                ))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["a", "b", "c"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn resolves_entries() {
        let spec = SubsetSpecFile::parse(
            r#"[{"label":"full","include":["a","b","c"]},{"label":"none","include":[]}]"#,
        )
        .unwrap();
        let r = spec.resolve(&names()).unwrap();
        assert!(r[0].1.is_full());
        assert_eq!(r[1].1.q(), 0);
    }

    #[test]
    fn rejects_duplicates_and_unknown_names() {
        assert!(SubsetSpecFile::parse(
            r#"[{"label":"x","include":[]},{"label":"x","include":[]}]"#
        )
        .is_err());
        let spec = SubsetSpecFile::parse(r#"[{"label":"x","include":["X99"]}]"#).unwrap();
        let err = spec.resolve(&names()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("X99"));
    }
}
