use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{Duration, NaiveDate};

use crate::cost::CostConfig;
use crate::domain::{IssueKey, TitleId};
use crate::error::{Error, Result};
use crate::features::{build_rows, rank_extra_products, ExtraProductRanking, FeatureContext, TrainingRow};
use crate::gcqr::{check_hygiene, raw_predictions, split_for_title, CalObservation, CalibratedQuantileModel, CalibrationSplit, CorrectionTable};
use crate::ingest::{load_holidays, Dataset, TimeSlice, HOLIDAYS_FILE};
use crate::qreg::{fit_gbt_matrix, FeatureSet, GbtModel, GbtParams, TargetTransform, TrainingMatrix};
use crate::synth::{GroundTruth, GROUNDTRUTH_FILE};

use super::config::{FeaturesAsOf, RunConfig};

/// Everything a run reads from disk.
pub struct Inputs {
    pub ds: Dataset,
    pub holidays: BTreeSet<NaiveDate>,
    pub truth: Option<GroundTruth>,
    pub cost: CostConfig,
}

impl Inputs {
    /// Holidays and ground truth default to the files the generator writes
    /// next to the dataset, when they exist.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let ds = Dataset::load_dir(&cfg.data.dir)?;
        let holidays_path = cfg
            .data
            .holidays
            .clone()
            .or_else(|| Some(cfg.data.dir.join(HOLIDAYS_FILE)).filter(|p| p.exists()));
        let holidays = match holidays_path {
            Some(p) => load_holidays(&p)?,
            None => BTreeSet::new(),
        };
        let truth_path = cfg
            .data
            .groundtruth
            .clone()
            .or_else(|| Some(cfg.data.dir.join(GROUNDTRUTH_FILE)).filter(|p| p.exists()));
        let truth = truth_path.map(|p| GroundTruth::load_jsonl(&p)).transpose()?;
        Ok(Inputs {
            ds,
            holidays,
            truth,
            cost: cfg.cost()?,
        })
    }
}

/// The configured cutoff, or `test_weeks` before the day after the last record.
pub fn resolve_cutoff(cfg: &RunConfig, ds: &Dataset) -> Result<NaiveDate> {
    if let Some(c) = cfg.split.cutoff {
        return Ok(c);
    }
    let (_, hi) = ds
        .date_range()
        .ok_or_else(|| Error::Empty("dataset has no sales records".into()))?;
    Ok(hi + Duration::days(1) - Duration::weeks(cfg.split.test_weeks as i64))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SkippedTitle {
    pub title: TitleId,
    pub reason: String,
}

/// Split, ranking and feature rows shared by every stage of a run.
pub struct Prepared<'a> {
    pub cfg: &'a RunConfig,
    pub inputs: &'a Inputs,
    pub slice: TimeSlice,
    pub ranking: ExtraProductRanking,
    pub splits: Vec<CalibrationSplit>,
    pub skipped: Vec<SkippedTitle>,
    /// Train-view rows inside the training window, calibration issues included.
    pub window_rows: Vec<TrainingRow>,
    pub cal_rows: BTreeMap<TitleId, Vec<TrainingRow>>,
    cal_keys: BTreeSet<IssueKey>,
}

impl<'a> Prepared<'a> {
    pub fn new(cfg: &'a RunConfig, inputs: &'a Inputs) -> Result<Self> {
        let ds = &inputs.ds;
        let cutoff = resolve_cutoff(cfg, ds)?;
        let slice = ds.slice(cutoff)?;
        if slice.train.is_empty() {
            return Err(Error::Empty(format!("no training records before {cutoff}")));
        }
        let ranking = rank_extra_products(ds, &slice, &inputs.cost)?;
        let mut splits = Vec::new();
        let mut skipped = Vec::new();
        for title in ds.titles() {
            match split_for_title(ds, &slice, &title) {
                Ok(s) => splits.push(s),
                Err(e) => skipped.push(SkippedTitle {
                    title,
                    reason: e.to_string(),
                }),
            }
        }
        let cal_keys: BTreeSet<IssueKey> = splits.iter().flat_map(|s| s.keys()).collect();
        let from = cfg
            .model
            .train_window_days
            .map(|d| cutoff - Duration::days(d as i64));
        let mut window = Vec::new();
        let mut cal_idx = Vec::new();
        for &i in &slice.train {
            let r = ds.record(i);
            if cal_keys.contains(&r.issue_key()) {
                cal_idx.push(i);
            } else if from.is_none_or(|f| r.period_start >= f) {
                window.push(i);
            }
        }
        let ctx = FeatureContext::new(ds, &ranking, &inputs.holidays);
        let mut window_rows = build_rows(&ctx, &window, None, cfg.r_pct)?;
        let mut cal_rows: BTreeMap<TitleId, Vec<TrainingRow>> = BTreeMap::new();
        for row in build_rows(&ctx, &cal_idx, None, cfg.r_pct)? {
            cal_rows.entry(row.issue.title.clone()).or_default().push(row.clone());
            window_rows.push(row);
        }
        Ok(Prepared {
            cfg,
            inputs,
            slice,
            ranking,
            splits,
            skipped,
            window_rows,
            cal_rows,
            cal_keys,
        })
    }

    pub fn cutoff(&self) -> NaiveDate {
        self.slice.cutoff
    }

    pub fn ctx(&self) -> FeatureContext<'_> {
        FeatureContext::new(&self.inputs.ds, &self.ranking, &self.inputs.holidays)
    }

    pub fn titles(&self) -> impl Iterator<Item = &TitleId> {
        self.splits.iter().map(|s| &s.title)
    }

    /// Training rows for one title's models: the window minus that title's
    /// calibration issues; with `None`, minus every calibration issue.
    pub fn training_rows(&self, title: Option<&TitleId>) -> Vec<TrainingRow> {
        let held_out: BTreeSet<IssueKey> = match title {
            Some(t) => self
                .splits
                .iter()
                .filter(|s| &s.title == t)
                .flat_map(|s| s.keys())
                .collect(),
            None => self.cal_keys.clone(),
        };
        self.window_rows
            .iter()
            .filter(|r| !held_out.contains(&r.issue))
            .cloned()
            .collect()
    }

    /// Test-view rows, with features computed as configured.
    pub fn test_rows(&self) -> Result<Vec<TrainingRow>> {
        let horizon = match self.cfg.split.features_as_of {
            FeaturesAsOf::Cutoff => Some(self.cutoff()),
            FeaturesAsOf::IssueStart => None,
        };
        let titles: BTreeSet<&TitleId> = self.titles().collect();
        let idx: Vec<usize> = self
            .slice
            .test
            .iter()
            .copied()
            .filter(|&i| titles.contains(&self.inputs.ds.record(i).title))
            .collect();
        build_rows(&self.ctx(), &idx, horizon, self.cfg.r_pct)
    }

    pub fn calibration_warnings(&self) -> Vec<String> {
        self.splits.iter().filter_map(|s| s.warning.clone()).collect()
    }
}

/// One per-alpha model list per title; shared mode points every title at
/// the same list.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub alphas: Vec<f64>,
    pub by_title: BTreeMap<TitleId, Arc<Vec<GbtModel>>>,
}

impl ModelSet {
    pub fn get(&self, title: &TitleId) -> Option<&[GbtModel]> {
        self.by_title.get(title).map(|m| m.as_slice())
    }
}

fn fit_alphas(rows: &[TrainingRow], set: &FeatureSet, params: &GbtParams, alphas: &[f64]) -> Result<Vec<GbtModel>> {
    let matrix = TrainingMatrix::new(rows, set, params.max_bins)?;
    alphas.iter().map(|&a| fit_gbt_matrix(&matrix, a, params)).collect()
}

/// Trains one model per alpha for every title, or once for all titles in
/// shared mode.
pub fn train_models(
    prep: &Prepared<'_>,
    alphas: &[f64],
    transform: TargetTransform,
    set: &FeatureSet,
) -> Result<ModelSet> {
    let params = GbtParams {
        transform,
        ..prep.cfg.model.gbt.clone()
    };
    let mut by_title = BTreeMap::new();
    if prep.cfg.model.shared {
        let rows = prep.training_rows(None);
        let models = Arc::new(fit_alphas(&rows, set, &params, alphas)?);
        for t in prep.titles() {
            by_title.insert(t.clone(), Arc::clone(&models));
        }
    } else {
        for t in prep.titles() {
            let rows = prep.training_rows(Some(t));
            by_title.insert(t.clone(), Arc::new(fit_alphas(&rows, set, &params, alphas)?));
        }
    }
    Ok(ModelSet {
        alphas: alphas.to_vec(),
        by_title,
    })
}

/// Calibrates every title's models. Errors are taken with each title's own
/// models; the corrections are pooled over all calibration sets per group.
pub fn calibrate_models(prep: &Prepared<'_>, set: &ModelSet) -> Result<(CorrectionTable, BTreeMap<TitleId, CalibratedQuantileModel>)> {
    let mut obs = Vec::new();
    for (title, models) in &set.by_title {
        let Some(cal) = prep.cal_rows.get(title) else {
            continue;
        };
        check_hygiene(models, cal)?;
        for r in cal {
            obs.push(CalObservation {
                mean_sales_12m: r.features.mean_sales_12m,
                demand: r.target,
                raw: raw_predictions(models, &r.features),
            });
        }
    }
    let table = CorrectionTable::fit(&prep.cfg.calibration, &set.alphas, &obs)?;
    let mut out = BTreeMap::new();
    for (title, models) in &set.by_title {
        if prep.cal_rows.contains_key(title) {
            let m = CalibratedQuantileModel::from_parts(
                Some(title.clone()),
                models.to_vec(),
                prep.cfg.calibration.clone(),
                table.clone(),
            )?;
            out.insert(title.clone(), m);
        }
    }
    Ok((table, out))
}
