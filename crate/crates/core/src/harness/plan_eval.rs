use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::cost::{kpis_from_pairs, CostConfig, Kpis};
use crate::domain::{censor, IssueKey, IssueMeta, PosId};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::optimizer::{ConstraintStatus, OPTIMAL_DISTRIBUTION, OPTIMAL_SUPPLY};
use crate::synth::GroundTruth;

use super::backtest::csv_writer;
use super::config::SupplyTarget;
use super::planner::{Planner, BASELINE_LABEL, HISTORICAL_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoredAgainst {
    /// Realized synthetic demand, censored by each plan's own supply.
    Groundtruth,
    /// Recorded sales capped by the plan's supply.
    RecordedSales,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTotals {
    pub label: String,
    pub kpis: Kpis,
    /// Relative to the historical plan, which is 100.
    pub supply_pct: f64,
    pub revenue_pct: f64,
    pub profit_pct: f64,
    pub oos_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueOutcome {
    pub issue: IssueKey,
    pub n_total: u32,
    pub delta: u32,
    pub plate_size: usize,
    pub historical_total: u64,
    pub baseline_total: u64,
    pub optimal_supply_total: u64,
    pub optimal_distribution_total: u64,
    pub within_band: bool,
    pub pareto_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvalReport {
    pub manifest_hash: String,
    pub cutoff: NaiveDate,
    pub scored_against: ScoredAgainst,
    pub supply_target: SupplyTarget,
    pub n_issues: usize,
    pub plans: Vec<PlanTotals>,
    /// Issues whose distribution plan total lies within `n_total ± delta`.
    pub within_band: usize,
    pub conformance_rate: f64,
    pub issues: Vec<IssueOutcome>,
}

impl PlanEvalReport {
    pub fn plan(&self, label: &str) -> Option<&PlanTotals> {
        self.plans.iter().find(|p| p.label == label)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record([
            "plan",
            "total_supply",
            "total_sales",
            "revenue",
            "cost",
            "profit",
            "oos_count",
            "supply_pct",
            "revenue_pct",
            "profit_pct",
            "oos_pct",
        ])?;
        for p in &self.plans {
            let k = &p.kpis;
            w.write_record([
                p.label.clone(),
                k.total_supply.to_string(),
                k.total_sales.to_string(),
                k.revenue.to_string(),
                k.cost.to_string(),
                k.profit.to_string(),
                k.oos_count.to_string(),
                format!("{:.4}", p.supply_pct),
                format!("{:.4}", p.revenue_pct),
                format!("{:.4}", p.profit_pct),
                format!("{:.4}", p.oos_pct),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<plan-eval>", e))
    }

    pub fn write_issues_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record([
            "title",
            "issue",
            "n_total",
            "delta",
            "plate_size",
            "historical",
            "baseline",
            "optimal_supply",
            "optimal_distribution",
            "within_band",
            "pareto_fallback",
        ])?;
        for i in &self.issues {
            w.write_record([
                i.issue.title.to_string(),
                i.issue.issue.to_string(),
                i.n_total.to_string(),
                i.delta.to_string(),
                i.plate_size.to_string(),
                i.historical_total.to_string(),
                i.baseline_total.to_string(),
                i.optimal_supply_total.to_string(),
                i.optimal_distribution_total.to_string(),
                i.within_band.to_string(),
                i.pareto_fallback.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<plan-eval>", e))
    }
}

fn pct(x: Decimal, reference: Decimal) -> f64 {
    if reference.is_zero() {
        return 0.0;
    }
    (x / reference * Decimal::from(100)).round_dp(6).to_f64().unwrap_or(0.0)
}

/// Realized sales of a plan on one issue.
fn realized_sales(
    ds: &Dataset,
    truth: Option<&GroundTruth>,
    key: &IssueKey,
    pos: &PosId,
    supply: u32,
) -> Result<u32> {
    match truth {
        Some(t) => {
            let row = t
                .get(key, pos)
                .ok_or_else(|| Error::Reference(format!("no ground truth for {key}@{pos}")))?;
            Ok(censor(row.demand as f64, supply))
        }
        None => {
            let rec = ds
                .record_at(key, pos)
                .ok_or_else(|| Error::Reference(format!("no record for {key}@{pos}")))?;
            Ok(rec.sales.min(supply))
        }
    }
}

fn score(
    ds: &Dataset,
    truth: Option<&GroundTruth>,
    key: &IssueKey,
    alloc: &BTreeMap<PosId, u32>,
    price: Decimal,
    cfg: &CostConfig,
) -> Result<Kpis> {
    let pairs = alloc
        .iter()
        .map(|(p, &s)| Ok((s, realized_sales(ds, truth, key, p, s)?)))
        .collect::<Result<Vec<_>>>()?;
    kpis_from_pairs(pairs, price, cfg)
}

fn targeted(meta: &IssueMeta, target: SupplyTarget, historical_total: u64) -> IssueMeta {
    let mut m = meta.clone();
    if target == SupplyTarget::Historical && meta.n_total > 0 {
        let n = u32::try_from(historical_total).unwrap_or(u32::MAX).max(1);
        m.delta = ((meta.delta as f64 / meta.n_total as f64) * n as f64).round().min(n as f64) as u32;
        m.n_total = n;
    }
    m
}

/// Plans every given issue and scores the historical, baseline and both
/// optimizer plans against the same realized demand.
pub fn evaluate_plans(
    planner: &Planner,
    ds: &Dataset,
    truth: Option<&GroundTruth>,
    issues: &[IssueKey],
    target: SupplyTarget,
    cfg: &CostConfig,
) -> Result<PlanEvalReport> {
    let labels = [HISTORICAL_LABEL, BASELINE_LABEL, OPTIMAL_SUPPLY, OPTIMAL_DISTRIBUTION];
    let mut totals: Vec<Kpis> = vec![Kpis::zero(); labels.len()];
    let mut outcomes = Vec::new();
    for key in issues {
        if !planner.can_plan(&key.title) {
            continue;
        }
        let meta = ds
            .issue(key)
            .ok_or_else(|| Error::Reference(format!("unknown issue {key}")))?;
        let historical: BTreeMap<PosId, u32> = ds
            .issue_records(key)
            .iter()
            .map(|&i| {
                let r = ds.record(i);
                (r.pos.clone(), r.supply)
            })
            .collect();
        if historical.is_empty() {
            continue;
        }
        let meta = &targeted(meta, target, historical.values().map(|&v| v as u64).sum());
        let set = planner.plan_meta(ds, meta)?;
        let baseline = planner.baseline_meta(ds, meta)?;
        let plans = [
            &historical,
            &baseline.allocations,
            &set.optimal_supply_plan.allocations,
            &set.optimal_distribution_plan.allocations,
        ];
        for (t, alloc) in totals.iter_mut().zip(plans) {
            *t = t.combine(&score(ds, truth, key, alloc, meta.price, cfg)?);
        }
        outcomes.push(IssueOutcome {
            issue: key.clone(),
            n_total: meta.n_total,
            delta: meta.delta,
            plate_size: historical.len(),
            historical_total: historical.values().map(|&v| v as u64).sum(),
            baseline_total: baseline.total(),
            optimal_supply_total: set.optimal_supply_plan.total(),
            optimal_distribution_total: set.optimal_distribution_plan.total(),
            within_band: set.constraint_status == ConstraintStatus::Met,
            pareto_fallback: set.pareto_fallback,
        });
    }
    if outcomes.is_empty() {
        return Err(Error::Empty("no plannable issues".into()));
    }
    let reference = totals[0].clone();
    let plans = labels
        .iter()
        .zip(totals)
        .map(|(label, k)| PlanTotals {
            label: label.to_string(),
            supply_pct: pct(Decimal::from(k.total_supply), Decimal::from(reference.total_supply)),
            revenue_pct: pct(k.revenue, reference.revenue),
            profit_pct: pct(k.profit, reference.profit),
            oos_pct: pct(Decimal::from(k.oos_count), Decimal::from(reference.oos_count)),
            kpis: k,
        })
        .collect();
    let within_band = outcomes.iter().filter(|o| o.within_band).count();
    Ok(PlanEvalReport {
        manifest_hash: planner.manifest_hash().to_string(),
        cutoff: planner.cutoff(),
        scored_against: if truth.is_some() {
            ScoredAgainst::Groundtruth
        } else {
            ScoredAgainst::RecordedSales
        },
        supply_target: target,
        n_issues: outcomes.len(),
        plans,
        within_band,
        conformance_rate: within_band as f64 / outcomes.len() as f64,
        issues: outcomes,
    })
}
