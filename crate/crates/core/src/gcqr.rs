//! Group-conditional conformal correction of quantile forecasts.
//!
//! The latest issues of each title are held out of training. Their
//! prediction errors, bucketed by the row's sales scale, give one additive
//! correction per (group, alpha).

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{IssueId, IssueKey, TitleId};
use crate::error::{Error, Result};
use crate::features::{FeatureRow, TrainingRow};
use crate::ingest::{Dataset, TimeSlice};
use crate::qreg::{rearrange_sorted, GbtModel};

/// Tolerance used when comparing alphas read back from configuration.
pub const ALPHA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationSplit {
    pub title: TitleId,
    /// Oldest first.
    pub cal_issues: Vec<IssueId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl CalibrationSplit {
    pub fn keys(&self) -> impl Iterator<Item = IssueKey> + '_ {
        self.cal_issues
            .iter()
            .map(|i| IssueKey::new(self.title.as_str(), i.as_str()))
    }
}

/// Holds out the latest train-view issues of a title: two for titles
/// published at least bimonthly, one otherwise.
pub fn split_for_title(ds: &Dataset, slice: &TimeSlice, title: &TitleId) -> Result<CalibrationSplit> {
    let observed: BTreeSet<IssueKey> = slice
        .train_issues(ds)
        .into_iter()
        .filter(|k| &k.title == title)
        .collect();
    let mut metas: Vec<_> = observed.iter().filter_map(|k| ds.issue(k)).collect();
    if metas.is_empty() {
        return Err(Error::Empty(format!("title {title} has no observed issues before the cutoff")));
    }
    metas.sort_by(|a, b| a.period_start.cmp(&b.period_start).then_with(|| a.issue.cmp(&b.issue)));
    let want = if metas[0].periodicity.is_frequent() { 2 } else { 1 };
    let take = want.min(metas.len());
    let warning = (take < want).then(|| {
        format!(
            "title {title} has {} observed issue(s); calibrating on {take} instead of {want}",
            metas.len()
        )
    });
    Ok(CalibrationSplit {
        title: title.clone(),
        cal_issues: metas[metas.len() - take..].iter().map(|m| m.issue.clone()).collect(),
        warning,
    })
}

/// Calibration splits of every title observed in the train view.
pub fn split_all(ds: &Dataset, slice: &TimeSlice) -> Vec<CalibrationSplit> {
    let titles: BTreeSet<TitleId> = slice.train_issues(ds).into_iter().map(|k| k.title).collect();
    titles
        .iter()
        .filter_map(|t| split_for_title(ds, slice, t).ok())
        .collect()
}

/// Train-view record indices belonging to any held-out issue.
pub fn calibration_records(ds: &Dataset, slice: &TimeSlice, splits: &[CalibrationSplit]) -> Vec<usize> {
    let held: BTreeSet<IssueKey> = splits.iter().flat_map(|s| s.keys()).collect();
    slice
        .train
        .iter()
        .copied()
        .filter(|&i| held.contains(&ds.record(i).issue_key()))
        .collect()
}

/// Half-open bins `[b_g, b_{g+1})` over `mean_sales_12m`, last bin unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupScheme {
    pub boundaries: Vec<f64>,
}

impl Default for GroupScheme {
    fn default() -> Self {
        GroupScheme {
            boundaries: vec![0.0, 1.0, 2.0, 5.0, 10.0, 50.0],
        }
    }
}

impl GroupScheme {
    pub fn validate(&self) -> Result<()> {
        if self.boundaries.len() < 2 {
            return Err(Error::invalid("groups.boundaries", "need at least two groups"));
        }
        if self.boundaries[0] != 0.0 {
            return Err(Error::invalid("groups.boundaries", "first boundary must be 0"));
        }
        if self.boundaries.windows(2).any(|w| !(w[0] < w[1])) || self.boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("groups.boundaries", "must be finite and strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Rows without sales history fall in the lowest group.
    pub fn group_of(&self, mean_sales_12m: Option<f64>) -> usize {
        match mean_sales_12m {
            Some(v) if v.is_finite() => self.boundaries.partition_point(|&b| b <= v).saturating_sub(1),
            _ => 0,
        }
    }

    pub fn group_of_row(&self, row: &FeatureRow) -> usize {
        self.group_of(row.mean_sales_12m)
    }

    pub fn label(&self, g: usize) -> String {
        match self.boundaries.get(g + 1) {
            Some(hi) => format!("[{}, {})", self.boundaries[g], hi),
            None => format!("[{}, inf)", self.boundaries[g]),
        }
    }
}

/// The `ceil((n+1) alpha)`-th smallest value, clamped to the maximum.
pub fn conformal_quantile(values: &mut [f64], alpha: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = (((n + 1) as f64 * alpha) - ALPHA_EPS).ceil().max(1.0) as usize;
    Some(values[rank.min(n) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCorrection {
    pub n: usize,
    /// One correction per alpha of the table.
    pub q: Vec<f64>,
    /// Set when the group had no calibration rows and borrows the pooled correction.
    pub pooled_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTable {
    pub alphas: Vec<f64>,
    pub groups: Vec<GroupCorrection>,
    pub pooled: Vec<f64>,
}

/// One held-out row: its group key, reconstructed demand and raw prediction per alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct CalObservation {
    pub mean_sales_12m: Option<f64>,
    pub demand: f64,
    pub raw: Vec<f64>,
}

impl CorrectionTable {
    pub fn fit(scheme: &GroupScheme, alphas: &[f64], obs: &[CalObservation]) -> Result<Self> {
        scheme.validate()?;
        if obs.is_empty() {
            return Err(Error::Empty("calibration set is empty".into()));
        }
        let mut per_group: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); alphas.len()]; scheme.len()];
        let mut pooled_errors: Vec<Vec<f64>> = vec![Vec::with_capacity(obs.len()); alphas.len()];
        for o in obs {
            if o.raw.len() != alphas.len() {
                return Err(Error::invalid("calibration", "prediction count does not match the alpha grid"));
            }
            let g = scheme.group_of(o.mean_sales_12m);
            for (a, &raw) in o.raw.iter().enumerate() {
                let e = o.demand - raw;
                per_group[g][a].push(e);
                pooled_errors[a].push(e);
            }
        }
        let pooled: Vec<f64> = alphas
            .iter()
            .zip(pooled_errors.iter_mut())
            .map(|(&alpha, errs)| conformal_quantile(errs, alpha).unwrap_or(0.0))
            .collect();
        let groups = per_group
            .into_iter()
            .map(|mut errs| {
                let n = errs[0].len();
                if n == 0 {
                    GroupCorrection {
                        n,
                        q: pooled.clone(),
                        pooled_fallback: true,
                    }
                } else {
                    GroupCorrection {
                        n,
                        q: alphas
                            .iter()
                            .zip(errs.iter_mut())
                            .map(|(&alpha, e)| conformal_quantile(e, alpha).unwrap_or(0.0))
                            .collect(),
                        pooled_fallback: false,
                    }
                }
            })
            .collect();
        Ok(CorrectionTable {
            alphas: alphas.to_vec(),
            groups,
            pooled,
        })
    }

    pub fn alpha_index(&self, alpha: f64) -> Result<usize> {
        self.alphas
            .iter()
            .position(|a| (a - alpha).abs() < ALPHA_EPS)
            .ok_or(Error::AlphaNotInGrid(alpha))
    }

    pub fn correction(&self, group: usize, alpha_idx: usize) -> f64 {
        self.groups[group].q[alpha_idx]
    }

    /// Audit export: `title,group,alpha,n,q`.
    pub fn write_csv(&self, title: &str, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["title", "group", "alpha", "n", "q"])?;
        for (g, gc) in self.groups.iter().enumerate() {
            for (a, q) in self.alphas.iter().zip(&gc.q) {
                w.write_record([title.to_string(), g.to_string(), a.to_string(), gc.n.to_string(), q.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(Path::new("<calibration>"), e))
    }
}

/// Refuses models whose training manifest contains any calibration issue.
pub fn check_hygiene(models: &[GbtModel], cal: &[TrainingRow]) -> Result<()> {
    let issues: BTreeSet<&IssueKey> = cal.iter().map(|r| &r.issue).collect();
    for m in models {
        if let Some(k) = issues.iter().find(|k| m.trained_on_contains(k)) {
            return Err(Error::CalibrationLeak(k.to_string()));
        }
    }
    Ok(())
}

/// Quantile models per alpha plus their group corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedQuantileModel {
    /// `None` for a model shared by every title.
    pub title: Option<TitleId>,
    pub alphas: Vec<f64>,
    pub models: Vec<GbtModel>,
    pub scheme: GroupScheme,
    pub corrections: CorrectionTable,
}

impl CalibratedQuantileModel {
    /// Calibrates `models` (one per alpha, ascending) on held-out rows.
    pub fn calibrate(
        title: Option<TitleId>,
        models: Vec<GbtModel>,
        cal: &[TrainingRow],
        scheme: GroupScheme,
    ) -> Result<Self> {
        let alphas = model_alphas(&models)?;
        check_hygiene(&models, cal)?;
        let obs: Vec<CalObservation> = cal
            .iter()
            .map(|r| CalObservation {
                mean_sales_12m: r.features.mean_sales_12m,
                demand: r.target,
                raw: models.iter().map(|m| m.predict(&r.features)).collect(),
            })
            .collect();
        let corrections = CorrectionTable::fit(&scheme, &alphas, &obs)?;
        Ok(CalibratedQuantileModel {
            title,
            alphas,
            models,
            scheme,
            corrections,
        })
    }

    /// Assembles a model from a correction table fitted elsewhere.
    pub fn from_parts(
        title: Option<TitleId>,
        models: Vec<GbtModel>,
        scheme: GroupScheme,
        corrections: CorrectionTable,
    ) -> Result<Self> {
        let alphas = model_alphas(&models)?;
        if alphas.len() != corrections.alphas.len()
            || alphas.iter().zip(&corrections.alphas).any(|(a, b)| (a - b).abs() > ALPHA_EPS)
            || corrections.groups.len() != scheme.len()
        {
            return Err(Error::invalid("corrections", "table does not match the models or groups"));
        }
        Ok(CalibratedQuantileModel {
            title,
            alphas,
            models,
            scheme,
            corrections,
        })
    }

    /// The same model over a subset of its alphas.
    pub fn restrict(&self, alphas: &[f64]) -> Result<Self> {
        let idx: Vec<usize> = alphas
            .iter()
            .map(|&a| self.corrections.alpha_index(a))
            .collect::<Result<_>>()?;
        let corrections = CorrectionTable {
            alphas: idx.iter().map(|&i| self.alphas[i]).collect(),
            groups: self
                .corrections
                .groups
                .iter()
                .map(|g| GroupCorrection {
                    n: g.n,
                    q: idx.iter().map(|&i| g.q[i]).collect(),
                    pooled_fallback: g.pooled_fallback,
                })
                .collect(),
            pooled: idx.iter().map(|&i| self.corrections.pooled[i]).collect(),
        };
        Self::from_parts(
            self.title.clone(),
            idx.iter().map(|&i| self.models[i].clone()).collect(),
            self.scheme.clone(),
            corrections,
        )
    }

    pub fn raw(&self, row: &FeatureRow) -> Vec<f64> {
        raw_predictions(&self.models, row)
    }

    /// Corrected, clamped and rearranged predictions for every alpha.
    pub fn predict_grid(&self, row: &FeatureRow) -> Vec<f64> {
        let g = self.scheme.group_of_row(row);
        let mut out: Vec<f64> = self
            .raw(row)
            .into_iter()
            .enumerate()
            .map(|(a, raw)| (raw + self.corrections.correction(g, a)).max(0.0))
            .collect();
        rearrange_sorted(&mut out);
        out
    }

    /// Single-alpha corrected prediction, without rearrangement.
    pub fn predict_calibrated(&self, row: &FeatureRow, alpha: f64) -> Result<f64> {
        let a = self.corrections.alpha_index(alpha)?;
        let g = self.scheme.group_of_row(row);
        Ok((self.models[a].predict(row) + self.corrections.correction(g, a)).max(0.0))
    }
}

/// Uncorrected prediction of every model, encoding the row once per distinct encoder.
pub fn raw_predictions(models: &[GbtModel], row: &FeatureRow) -> Vec<f64> {
    let mut enc = Vec::new();
    let mut last_encoder = None;
    models
        .iter()
        .map(|m| {
            if last_encoder != Some(&m.encoder) {
                m.encoder.encode_into(row, &mut enc);
                last_encoder = Some(&m.encoder);
            }
            m.predict_encoded(&enc)
        })
        .collect()
}

fn model_alphas(models: &[GbtModel]) -> Result<Vec<f64>> {
    if models.is_empty() {
        return Err(Error::Empty("no quantile models".into()));
    }
    let alphas: Vec<f64> = models.iter().map(|m| m.alpha).collect();
    if alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("alphas", "models must be ordered by strictly increasing alpha"));
    }
    Ok(alphas)
}
