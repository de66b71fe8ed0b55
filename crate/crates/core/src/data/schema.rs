use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Drop,
}

/// Maps the raw label column to `{-1, +1}`.
///
/// Exactly one of `positive` (string match) or `threshold` (strictly greater
/// is positive) must be set. `protected_label = -1` flips the mapped labels
/// so that the class named in the protected definition is always `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRule {
    pub column: String,
    #[serde(default)]
    pub positive: Option<Vec<String>>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "plus_one")]
    pub protected_label: i8,
}

fn plus_one() -> i8 {
    1
}

/// Maps the raw group column to `{a, b}`: either value lists per group, or a
/// numeric threshold with `above` naming the group of values strictly above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRule {
    pub column: String,
    #[serde(default)]
    pub a: Option<Vec<String>>,
    #[serde(default)]
    pub b: Option<Vec<String>>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub above: Option<String>,
}

/// Row filter applied before anything else. A missing or unparseable value
/// in a numeric-range filter removes the row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub column: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub any_of: Option<Vec<String>>,
    #[serde(default)]
    pub none_of: Option<Vec<String>>,
}

impl FilterSpec {
    pub fn keeps(&self, raw: &str) -> bool {
        if self.min.is_some() || self.max.is_some() {
            let Ok(v) = raw.parse::<f64>() else { return false };
            if self.min.is_some_and(|lo| v < lo) || self.max.is_some_and(|hi| v > hi) {
                return false;
            }
        }
        if let Some(allowed) = &self.any_of {
            if !allowed.iter().any(|a| a == raw) {
                return false;
            }
        }
        if let Some(banned) = &self.none_of {
            if banned.iter().any(|b| b == raw) {
                return false;
            }
        }
        true
    }
}

fn default_true() -> bool {
    true
}

fn default_missing() -> Vec<String> {
    vec!["?".into(), String::new()]
}

/// Declarative description of one benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub name: String,
    /// CSV files, concatenated in order, relative to the data directory.
    pub files: Vec<String>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Column names for header-less files.
    #[serde(default)]
    pub column_names: Vec<String>,
    /// Lines starting with this character are skipped.
    #[serde(default)]
    pub comment: Option<char>,
    /// Cell values treated as missing.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    pub label: LabelRule,
    pub group: GroupRule,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
    /// Every header column must be declared here, except the label and
    /// group source columns when they are not features.
    pub columns: BTreeMap<String, ColumnKind>,
}

impl TableSchema {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let schema: TableSchema = toml::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn kind_of(&self, column: &str) -> Option<ColumnKind> {
        self.columns.get(column).copied()
    }

    pub fn is_missing(&self, raw: &str) -> bool {
        self.missing.iter().any(|m| m == raw)
    }

    pub fn validate(&self) -> Result<()> {
        if self.files.is_empty() {
            return Err(Error::Schema(format!("schema `{}` lists no files", self.name)));
        }
        if !self.has_header && self.column_names.is_empty() {
            return Err(Error::Schema("header-less schema needs `column_names`".into()));
        }
        let l = &self.label;
        if l.positive.is_some() == l.threshold.is_some() {
            return Err(Error::Schema("label rule needs exactly one of `positive` or `threshold`".into()));
        }
        if l.protected_label != 1 && l.protected_label != -1 {
            return Err(Error::Schema(format!("protected_label must be 1 or -1, got {}", l.protected_label)));
        }
        if matches!(self.kind_of(&l.column), Some(ColumnKind::Numeric | ColumnKind::Categorical)) {
            return Err(Error::Schema(format!("label column `{}` cannot be a feature", l.column)));
        }
        let g = &self.group;
        match (&g.a, &g.b, g.threshold, &g.above) {
            (Some(_), Some(_), None, None) => {}
            (None, None, Some(_), Some(side)) if side == "a" || side == "b" => {}
            _ => {
                return Err(Error::Schema(
                    "group rule needs either `a` and `b` value lists, or `threshold` with `above = \"a\"|\"b\"`"
                        .into(),
                ))
            }
        }
        Ok(())
    }
}
