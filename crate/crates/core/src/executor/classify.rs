use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};
use serde::Deserialize;

use super::{ExecError, ExitStatus, FailureCategory, Phase};

const DEFAULT_TABLE: &str = include_str!("../../data/failure_patterns.json");

#[derive(Deserialize)]
struct TableFile {
    categories: Vec<CategoryFile>,
}

#[derive(Deserialize)]
struct CategoryFile {
    category: FailureCategory,
    patterns: Vec<String>,
}

/// Ordered log-pattern table. The first category with a matching pattern wins.
#[derive(Debug, Clone)]
pub struct PatternTable {
    rules: Vec<(FailureCategory, Vec<Regex>)>,
}

impl PatternTable {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: TableFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut rules = Vec::new();
        for c in file.categories {
            if c.category == FailureCategory::Unknown {
                return Err("`unknown` is the residual category and takes no patterns".into());
            }
            let mut res = Vec::new();
            for p in &c.patterns {
                let re = RegexBuilder::new(p)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| format!("pattern {p:?}: {e}"))?;
                res.push(re);
            }
            rules.push((c.category, res));
        }
        Ok(Self { rules })
    }

    /// The committed table.
    pub fn builtin() -> &'static PatternTable {
        static TABLE: OnceLock<PatternTable> = OnceLock::new();
        TABLE.get_or_init(|| PatternTable::from_json(DEFAULT_TABLE).expect("builtin failure pattern table"))
    }

    /// Category order as evaluated.
    pub fn order(&self) -> Vec<FailureCategory> {
        self.rules.iter().map(|(c, _)| *c).collect()
    }

    pub fn matches(&self, category: FailureCategory, log: &str) -> bool {
        self.rules
            .iter()
            .filter(|(c, _)| *c == category)
            .any(|(_, res)| res.iter().any(|r| r.is_match(log)))
    }

    pub fn categorize(&self, log: &str) -> FailureCategory {
        for (cat, res) in &self.rules {
            if res.iter().any(|r| r.is_match(log)) {
                return *cat;
            }
        }
        FailureCategory::Unknown
    }
}

/// Maps a failed attempt's log to one failure category.
///
/// Fails only when there was no failure to classify (exit status 0).
pub fn classify_failure(log_text: &str, exit: &ExitStatus, phase: Phase) -> Result<FailureCategory, ExecError> {
    if *exit == ExitStatus::Code(0) {
        return Err(ExecError::NothingToClassify(phase));
    }
    Ok(PatternTable::builtin().categorize(log_text))
}
