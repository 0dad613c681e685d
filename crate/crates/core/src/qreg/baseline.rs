use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{IssueKey, PosId};
use crate::error::{Error, Result};
use crate::features::{visible_history, yearly_lags};
use crate::ingest::Dataset;

/// History-copying forecasts. They ignore alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineModel {
    /// Sales of the latest observed issue at the POS.
    Naive,
    /// Sales of the issue one year earlier, falling back to [`BaselineModel::Naive`].
    SeasonalNaive,
}

impl BaselineModel {
    pub fn name(self) -> &'static str {
        match self {
            BaselineModel::Naive => "naive",
            BaselineModel::SeasonalNaive => "s_naive",
        }
    }

    /// Missing history predicts 0.
    pub fn predict(self, ds: &Dataset, issue: &IssueKey, pos: &PosId, as_of: NaiveDate) -> Result<f64> {
        let meta = ds
            .issue(issue)
            .ok_or_else(|| Error::Reference(format!("no metadata for issue {issue}")))?;
        let naive = || {
            visible_history(ds, meta, pos, as_of)
                .into_iter()
                .rev()
                .find(|r| r.issue != meta.issue && !meta.atypical_exclusions.contains(&r.issue_key()))
                .map_or(0.0, |r| r.sales as f64)
        };
        Ok(match self {
            BaselineModel::Naive => naive(),
            BaselineModel::SeasonalNaive => match yearly_lags(ds, meta, pos, as_of).0 {
                Some(r) => r.sales as f64,
                None => naive(),
            },
        })
    }
}
