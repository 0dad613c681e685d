use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, FEATURE_NAMES};

/// The subset of features a model consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub names: Vec<String>,
}

impl FeatureSet {
    pub fn all() -> Self {
        FeatureSet {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// All features except the given ones.
    pub fn without(excluded: &[&str]) -> Self {
        FeatureSet {
            names: FEATURE_NAMES
                .iter()
                .filter(|n| !excluded.contains(n))
                .map(|s| s.to_string())
                .collect(),
        }
    }

    /// The ablation that drops the planner-chosen reference aggregates.
    pub fn without_references() -> Self {
        Self::without(&["mean_ref", "max_ref"])
    }

    pub fn validate(&self) -> Result<()> {
        for n in &self.names {
            if !FEATURE_NAMES.contains(&n.as_str()) {
                return Err(Error::invalid("features", format!("unknown feature `{n}`")));
            }
        }
        Ok(())
    }
}

/// One model input column. Categorical features expand to one indicator
/// column per level seen during fitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

impl ColumnSpec {
    pub fn label(&self) -> String {
        match &self.level {
            Some(l) => format!("{}={}", self.feature, l),
            None => self.feature.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub columns: Vec<ColumnSpec>,
}

impl FeatureEncoder {
    pub fn fit<'a>(set: &FeatureSet, rows: impl IntoIterator<Item = &'a FeatureRow> + Clone) -> Result<Self> {
        set.validate()?;
        let mut columns = Vec::new();
        for name in &set.names {
            if FeatureRow::is_categorical(name) {
                let levels: BTreeSet<&str> = rows
                    .clone()
                    .into_iter()
                    .filter_map(|r| r.categorical(name))
                    .collect();
                columns.extend(levels.into_iter().map(|l| ColumnSpec {
                    feature: name.clone(),
                    level: Some(l.to_string()),
                }));
            } else {
                columns.push(ColumnSpec {
                    feature: name.clone(),
                    level: None,
                });
            }
        }
        Ok(FeatureEncoder { columns })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Dense encoding; `NaN` marks a missing value. Unseen categorical levels
    /// encode as all-zero indicators.
    pub fn encode(&self, row: &FeatureRow) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.columns.len());
        self.encode_into(row, &mut out);
        out
    }

    pub fn encode_into(&self, row: &FeatureRow, out: &mut Vec<f64>) {
        out.clear();
        for c in &self.columns {
            let v = match &c.level {
                Some(level) => f64::from(u8::from(row.categorical(&c.feature) == Some(level.as_str()))),
                None => row.numeric(&c.feature).unwrap_or(f64::NAN),
            };
            out.push(v);
        }
    }
}
