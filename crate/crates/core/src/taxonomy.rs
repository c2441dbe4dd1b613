//! Scientific-domain taxonomy shared by discovery and domain assignment.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub id: String,
    pub name: String,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainTaxonomy {
    pub domains: Vec<Domain>,
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read taxonomy {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("taxonomy {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("duplicate domain id {0:?}")]
    Duplicate(String),
    #[error("domain {0:?} has an empty id or definition")]
    Empty(String),
}

impl DomainTaxonomy {
    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io { path: path.into(), source })?;
        let t: DomainTaxonomy =
            serde_json::from_str(&text).map_err(|source| TaxonomyError::Parse { path: path.into(), source })?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        let mut seen = BTreeSet::new();
        for d in &self.domains {
            if d.id.trim().is_empty() || d.definition.trim().is_empty() {
                return Err(TaxonomyError::Empty(d.id.clone()));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(TaxonomyError::Duplicate(d.id.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Domain> {
        self.domains.iter().find(|d| d.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates() {
        let d = Domain { id: "a".into(), name: "A".into(), definition: "x".into(), keywords: vec![] };
        let t = DomainTaxonomy { domains: vec![d.clone(), d] };
        assert!(matches!(t.validate(), Err(TaxonomyError::Duplicate(_))));
    }

    #[test]
    fn parses_optional_keywords() {
        let t: DomainTaxonomy = serde_json::from_str(
            r#"{"domains":[{"id":"md","name":"Molecular dynamics","definition":"simulation of atoms","keywords":["lammps"]},
                           {"id":"qc","name":"Quantum chemistry","definition":"electronic structure"}]}"#,
        )
        .unwrap();
        assert_eq!(t.domains[0].keywords, vec!["lammps"]);
        assert!(t.domains[1].keywords.is_empty());
    }
}
