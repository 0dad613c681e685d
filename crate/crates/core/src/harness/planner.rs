use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cost::{kpis_from_pairs, CostConfig};
use crate::domain::{IssueKey, IssueMeta, PosId, TitleId};
use crate::error::{Error, Result};
use crate::features::{ExtraProductRanking, FeatureContext, FeatureRow};
use crate::gcqr::{CalibratedQuantileModel, CorrectionTable, GroupScheme};
use crate::ingest::Dataset;
use crate::optimizer::{
    emit_plans, enumerate_scenarios, plate_forecasts, replay_all, select_optimal, AlphaGrid, PlanSet, PosForecast,
    ReplayIssue, ReplayRow, Scenario, ScenarioScore, SelectionCriteria, SupplyPlan,
};
use crate::qreg::GbtModel;
use crate::rules::largest_remainder;

use super::config::{FeaturesAsOf, RunConfig};
use super::manifest::sha256_hex;
use super::pipeline::Prepared;

pub const BASELINE_LABEL: &str = "baseline";
pub const HISTORICAL_LABEL: &str = "historical";

/// Everything needed to plan an issue of a calibrated title, without the
/// training data. Serialized as the `planner.json` run artifact; titles
/// sharing one model list store it once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerParts {
    pub manifest_hash: String,
    pub cutoff: NaiveDate,
    pub features_as_of: FeaturesAsOf,
    pub ranking: ExtraProductRanking,
    pub holidays: BTreeSet<NaiveDate>,
    pub cost: CostConfig,
    pub grid: AlphaGrid,
    pub criteria: SelectionCriteria,
    pub baseline_alpha: f64,
    pub scheme: GroupScheme,
    pub corrections: CorrectionTable,
    model_sets: Vec<Vec<GbtModel>>,
    titles: BTreeMap<TitleId, TitlePlanning>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TitlePlanning {
    model_set: usize,
    /// Calibration-set replay of every scenario.
    scores: Vec<ScenarioScore>,
}

#[derive(Debug, Clone)]
pub struct Planner {
    parts: PlannerParts,
    models: BTreeMap<TitleId, TitleModels>,
}

#[derive(Debug, Clone)]
struct TitleModels {
    full: CalibratedQuantileModel,
    grid: CalibratedQuantileModel,
}

impl Planner {
    /// Replays every scenario on each title's calibration issues.
    pub fn build(
        prep: &Prepared<'_>,
        calibrated: &BTreeMap<TitleId, CalibratedQuantileModel>,
        manifest_hash: &str,
    ) -> Result<Self> {
        let cfg: &RunConfig = prep.cfg;
        let grid = cfg.optimizer.alphas.clone();
        let scenarios = enumerate_scenarios(&grid, cfg.calibration.len(), cfg.optimizer.budget);
        let corrections = calibrated
            .values()
            .next()
            .map(|m| m.corrections.clone())
            .ok_or_else(|| Error::Empty("no calibrated title".into()))?;
        let mut model_sets: Vec<Vec<GbtModel>> = Vec::new();
        let mut titles = BTreeMap::new();
        for (title, model) in calibrated {
            let model_set = match model_sets.iter().position(|m| *m == model.models) {
                Some(i) => i,
                None => {
                    model_sets.push(model.models.clone());
                    model_sets.len() - 1
                }
            };
            let grid_model = model.restrict(&grid.alphas)?;
            let issues = replay_issues(prep, title, &grid_model)?;
            let scores = replay_all(&scenarios, &grid, &issues, &prep.inputs.cost)?;
            titles.insert(title.clone(), TitlePlanning { model_set, scores });
        }
        Self::from_parts(PlannerParts {
            manifest_hash: manifest_hash.to_string(),
            cutoff: prep.cutoff(),
            features_as_of: cfg.split.features_as_of,
            ranking: prep.ranking.clone(),
            holidays: prep.inputs.holidays.clone(),
            cost: prep.inputs.cost.clone(),
            grid,
            criteria: cfg.optimizer.criteria.clone(),
            baseline_alpha: cfg.eval.baseline_alpha,
            scheme: cfg.calibration.clone(),
            corrections,
            model_sets,
            titles,
        })
    }

    pub fn from_parts(parts: PlannerParts) -> Result<Self> {
        let mut models = BTreeMap::new();
        for (title, t) in &parts.titles {
            let set = parts
                .model_sets
                .get(t.model_set)
                .ok_or_else(|| Error::invalid("planner.titles", format!("{title} points at a missing model set")))?;
            let full = CalibratedQuantileModel::from_parts(
                Some(title.clone()),
                set.clone(),
                parts.scheme.clone(),
                parts.corrections.clone(),
            )?;
            let grid = full.restrict(&parts.grid.alphas)?;
            models.insert(title.clone(), TitleModels { full, grid });
        }
        Ok(Planner { parts, models })
    }

    pub fn parts(&self) -> &PlannerParts {
        &self.parts
    }

    pub fn titles(&self) -> impl Iterator<Item = &TitleId> {
        self.parts.titles.keys()
    }

    pub fn can_plan(&self, title: &TitleId) -> bool {
        self.parts.titles.contains_key(title)
    }

    pub fn scores(&self, title: &TitleId) -> Option<&[ScenarioScore]> {
        self.parts.titles.get(title).map(|t| t.scores.as_slice())
    }

    fn models(&self, title: &TitleId) -> Result<&TitleModels> {
        self.models
            .get(title)
            .ok_or_else(|| Error::Reference(format!("title {title} has no calibrated model")))
    }

    pub fn calibrated_model(&self, title: &TitleId) -> Result<&CalibratedQuantileModel> {
        Ok(&self.models(title)?.full)
    }

    pub fn manifest_hash(&self) -> &str {
        &self.parts.manifest_hash
    }

    pub fn cutoff(&self) -> NaiveDate {
        self.parts.cutoff
    }

    /// Features may only see records that ended before this date.
    pub fn as_of(&self, meta: &IssueMeta) -> NaiveDate {
        match self.parts.features_as_of {
            FeaturesAsOf::Cutoff => self.parts.cutoff.min(meta.period_start),
            FeaturesAsOf::IssueStart => meta.period_start,
        }
    }

    /// The plate is every POS with a record of the issue.
    pub fn plate_features(&self, ds: &Dataset, key: &IssueKey) -> Result<BTreeMap<PosId, FeatureRow>> {
        let meta = lookup(ds, key)?;
        let as_of = self.as_of(meta);
        let ctx = FeatureContext::new(ds, &self.parts.ranking, &self.parts.holidays);
        ds.issue_records(key)
            .iter()
            .map(|&i| {
                let pos = &ds.record(i).pos;
                Ok((pos.clone(), ctx.build(key, pos, as_of)?))
            })
            .collect()
    }

    pub fn forecasts(&self, ds: &Dataset, key: &IssueKey) -> Result<BTreeMap<PosId, PosForecast>> {
        let models = self.models(&key.title)?;
        Ok(plate_forecasts(&models.grid, &self.plate_features(ds, key)?))
    }

    /// The scenario's prediction per POS, the sales stand-in behind a plan's
    /// forecast KPIs.
    pub fn scenario_demand(&self, ds: &Dataset, key: &IssueKey, scenario: &Scenario) -> Result<BTreeMap<PosId, f64>> {
        let idx = scenario.indices(&self.parts.grid)?;
        Ok(self
            .forecasts(ds, key)?
            .into_iter()
            .map(|(p, f)| {
                let a = *idx.get(f.group).unwrap_or(&idx[idx.len() - 1]);
                (p, f.preds[a])
            })
            .collect())
    }

    pub fn plan_issue(&self, ds: &Dataset, key: &IssueKey) -> Result<PlanSet> {
        self.plan_meta(ds, lookup(ds, key)?)
    }

    /// Plans under `meta`, which may override the stored issue metadata
    /// such as the total-supply constraint.
    pub fn plan_meta(&self, ds: &Dataset, meta: &IssueMeta) -> Result<PlanSet> {
        let key = meta.key();
        let scores = self
            .scores(&key.title)
            .ok_or_else(|| Error::Reference(format!("title {} has no calibrated model", key.title)))?;
        let forecasts = self.forecasts(ds, &key)?;
        let selection = select_optimal(scores, meta.n_total, &self.parts.criteria)?;
        emit_plans(meta, &self.parts.grid, &forecasts, scores, &selection, &self.parts.cost)
    }

    pub fn baseline_plan(&self, ds: &Dataset, key: &IssueKey) -> Result<SupplyPlan> {
        self.baseline_meta(ds, lookup(ds, key)?)
    }

    /// Uncorrected quantile prediction at the baseline alpha, ceiled and
    /// scaled to the total-supply constraint of `meta`.
    pub fn baseline_meta(&self, ds: &Dataset, meta: &IssueMeta) -> Result<SupplyPlan> {
        let key = meta.key();
        let models = self.models(&key.title)?;
        let a = models.full.corrections.alpha_index(self.parts.baseline_alpha)?;
        let model = &models.full.models[a];
        let preds: BTreeMap<PosId, f64> = self
            .plate_features(ds, &key)?
            .into_iter()
            .map(|(p, row)| (p, model.predict(&row)))
            .collect();
        let ceiled: BTreeMap<PosId, u32> = preds
            .iter()
            .map(|(p, &d)| (p.clone(), crate::optimizer::supply_from_prediction(d)))
            .collect();
        let allocations = if ceiled.values().any(|&v| v > 0) {
            largest_remainder(&ceiled, meta.n_total as u64)
        } else {
            ceiled
        };
        let pairs = allocations
            .iter()
            .map(|(p, &s)| (s, preds[p].max(0.0).min(s as f64).floor() as u32));
        let kpis_forecast = kpis_from_pairs(pairs, meta.price, &self.parts.cost)?;
        Ok(SupplyPlan {
            label: BASELINE_LABEL.to_string(),
            allocations,
            kpis_forecast,
            scenario: Scenario::constant(self.parts.baseline_alpha, 1),
        })
    }

    /// Identifies a plan computation: the run plus the issue metadata it used.
    pub fn plan_hash(&self, meta: &IssueMeta) -> Result<String> {
        let meta_json = serde_json::to_string(meta)?;
        Ok(sha256_hex(format!("{}\n{meta_json}", self.parts.manifest_hash).as_bytes()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.parts)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_parts(serde_json::from_str(s)?)
    }
}

fn lookup<'a>(ds: &'a Dataset, key: &IssueKey) -> Result<&'a IssueMeta> {
    ds.issue(key)
        .ok_or_else(|| Error::Reference(format!("unknown issue {key}")))
}

/// Calibration rows of a title grouped by issue, with grid predictions.
fn replay_issues(prep: &Prepared<'_>, title: &TitleId, model: &CalibratedQuantileModel) -> Result<Vec<ReplayIssue>> {
    let rows = prep
        .cal_rows
        .get(title)
        .ok_or_else(|| Error::Empty(format!("no calibration rows for {title}")))?;
    let mut by_issue: BTreeMap<IssueKey, Vec<ReplayRow>> = BTreeMap::new();
    for r in rows {
        by_issue.entry(r.issue.clone()).or_default().push(ReplayRow {
            group: model.scheme.group_of_row(&r.features),
            preds: model.predict_grid(&r.features),
            supply: r.supply,
            sales: r.sales,
        });
    }
    by_issue
        .into_iter()
        .map(|(issue, rows)| {
            let price = prep
                .inputs
                .ds
                .issue(&issue)
                .ok_or_else(|| Error::Reference(format!("unknown issue {issue}")))?
                .price;
            Ok(ReplayIssue { issue, price, rows })
        })
        .collect()
}
