//! Scenario search over per-group service levels.
//!
//! A scenario assigns one alpha to each sales-scale group. Scenarios are
//! replayed on held-out issues (supply = ceiling of the calibrated
//! prediction, sales = the smaller of recorded sales and that supply) and
//! compared against what the historical plan achieved on the same rows.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::cost::{kpis_from_pairs, CostConfig, Kpis};
use crate::domain::{IssueKey, IssueMeta, PosId};
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::gcqr::{CalibratedQuantileModel, ALPHA_EPS};

pub const OPTIMAL_SUPPLY: &str = "optimal_supply";
pub const OPTIMAL_DISTRIBUTION: &str = "optimal_distribution";
pub const DEFAULT_SCENARIO_BUDGET: usize = 2048;

/// Guards the ceiling against predictions a rounding error above an integer.
const CEIL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphaGrid {
    pub alphas: Vec<f64>,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid {
            alphas: vec![0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.99],
        }
    }
}

impl AlphaGrid {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        let g = AlphaGrid { alphas };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::invalid("alphas", "grid is empty"));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::invalid("alphas", "every alpha must lie in (0, 1)"));
        }
        if self.alphas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("alphas", "grid must be strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn index_of(&self, alpha: f64) -> Result<usize> {
        self.alphas
            .iter()
            .position(|a| (a - alpha).abs() < ALPHA_EPS)
            .ok_or(Error::AlphaNotInGrid(alpha))
    }
}

/// One alpha per group, lowest sales scale first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scenario {
    pub alphas: Vec<f64>,
}

impl Scenario {
    pub fn constant(alpha: f64, groups: usize) -> Self {
        Scenario {
            alphas: vec![alpha; groups],
        }
    }

    pub fn indices(&self, grid: &AlphaGrid) -> Result<Vec<usize>> {
        self.alphas.iter().map(|&a| grid.index_of(a)).collect()
    }

    pub fn label(&self) -> String {
        let parts: Vec<String> = self.alphas.iter().map(|a| format!("{a}")).collect();
        format!("[{}]", parts.join(" "))
    }

    fn lex_cmp(&self, other: &Scenario) -> std::cmp::Ordering {
        for (a, b) in self.alphas.iter().zip(&other.alphas) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        self.alphas.len().cmp(&other.alphas.len())
    }
}

/// Advances a non-decreasing index vector to its lexicographic successor.
fn next_monotone(v: &mut [usize], k: usize) -> bool {
    let g = v.len();
    for i in (0..g).rev() {
        if v[i] + 1 < k {
            let nv = v[i] + 1;
            for x in &mut v[i..] {
                *x = nv;
            }
            return true;
        }
    }
    false
}

/// Constant scenarios first, then non-decreasing staircases in lexicographic
/// order until `budget` is reached; the result is sorted lexicographically.
pub fn enumerate_scenarios(grid: &AlphaGrid, groups: usize, budget: usize) -> Vec<Scenario> {
    let k = grid.len();
    if groups == 0 || k == 0 || budget == 0 {
        return Vec::new();
    }
    let mut out: Vec<Vec<usize>> = (0..k).map(|i| vec![i; groups]).take(budget).collect();
    if out.len() < budget && groups > 1 {
        let mut v = vec![0usize; groups];
        loop {
            if v.iter().any(|&x| x != v[0]) {
                out.push(v.clone());
                if out.len() >= budget {
                    break;
                }
            }
            if !next_monotone(&mut v, k) {
                break;
            }
        }
    }
    out.sort();
    out.dedup();
    out.into_iter()
        .map(|idx| Scenario {
            alphas: idx.into_iter().map(|i| grid.alphas[i]).collect(),
        })
        .collect()
}

/// One held-out observation, with calibrated predictions for every grid alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRow {
    pub group: usize,
    pub preds: Vec<f64>,
    pub supply: u32,
    pub sales: u32,
}

/// Held-out rows of one issue; costs are tiered per issue.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayIssue {
    pub issue: IssueKey,
    pub price: Decimal,
    pub rows: Vec<ReplayRow>,
}

impl ReplayIssue {
    pub fn reference_kpis(&self, cfg: &CostConfig) -> Result<Kpis> {
        kpis_from_pairs(self.rows.iter().map(|r| (r.supply, r.sales)), self.price, cfg)
    }
}

pub fn supply_from_prediction(pred: f64) -> u32 {
    (pred - CEIL_EPS).ceil().max(0.0) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub scenario: Scenario,
    pub kpis: Kpis,
    pub reference_kpis: Kpis,
}

fn sum_kpis(items: impl IntoIterator<Item = Kpis>) -> Kpis {
    items.into_iter().fold(Kpis::zero(), |acc, k| acc.combine(&k))
}

/// Replays one scenario on the held-out issues.
pub fn replay(scenario: &Scenario, grid: &AlphaGrid, issues: &[ReplayIssue], cfg: &CostConfig) -> Result<ScenarioScore> {
    let reference = sum_kpis(issues.iter().map(|i| i.reference_kpis(cfg)).collect::<Result<Vec<_>>>()?);
    replay_with_reference(scenario, grid, issues, cfg, reference)
}

fn replay_with_reference(
    scenario: &Scenario,
    grid: &AlphaGrid,
    issues: &[ReplayIssue],
    cfg: &CostConfig,
    reference: Kpis,
) -> Result<ScenarioScore> {
    if issues.iter().all(|i| i.rows.is_empty()) {
        return Err(Error::Empty("calibration set is empty".into()));
    }
    let idx = scenario.indices(grid)?;
    let mut per_issue = Vec::with_capacity(issues.len());
    for issue in issues {
        let pairs: Vec<(u32, u32)> = issue
            .rows
            .iter()
            .map(|r| {
                let a = *idx.get(r.group).unwrap_or(&idx[idx.len() - 1]);
                let s = supply_from_prediction(r.preds[a]);
                (s, r.sales.min(s))
            })
            .collect();
        per_issue.push(kpis_from_pairs(pairs, issue.price, cfg)?);
    }
    Ok(ScenarioScore {
        scenario: scenario.clone(),
        kpis: sum_kpis(per_issue),
        reference_kpis: reference,
    })
}

pub fn replay_all(
    scenarios: &[Scenario],
    grid: &AlphaGrid,
    issues: &[ReplayIssue],
    cfg: &CostConfig,
) -> Result<Vec<ScenarioScore>> {
    let reference = sum_kpis(issues.iter().map(|i| i.reference_kpis(cfg)).collect::<Result<Vec<_>>>()?);
    scenarios
        .iter()
        .map(|s| replay_with_reference(s, grid, issues, cfg, reference.clone()))
        .collect()
}

/// Which reference comparisons a scenario must pass to be optimal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionCriteria {
    pub profit_at_least_reference: bool,
    pub oos_at_most_reference: bool,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        SelectionCriteria {
            profit_at_least_reference: true,
            oos_at_most_reference: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    /// Indices into the scored scenarios.
    pub optimal: Vec<usize>,
    /// True when no scenario met the criteria and the Pareto frontier stands in.
    pub pareto_fallback: bool,
    pub max_kpi_efficiency: usize,
    pub distribution: usize,
}

/// Indices not dominated on (profit up, total supply down).
pub fn pareto_frontier(scores: &[ScenarioScore]) -> Vec<usize> {
    (0..scores.len())
        .filter(|&i| {
            let a = &scores[i].kpis;
            !scores.iter().any(|o| {
                let b = &o.kpis;
                b.profit >= a.profit
                    && b.total_supply <= a.total_supply
                    && (b.profit > a.profit || b.total_supply < a.total_supply)
            })
        })
        .collect()
}

fn best_profit(scores: &[ScenarioScore], set: &[usize]) -> usize {
    *set.iter()
        .min_by(|&&a, &&b| {
            let (x, y) = (&scores[a], &scores[b]);
            y.kpis
                .profit
                .cmp(&x.kpis.profit)
                .then(x.kpis.total_supply.cmp(&y.kpis.total_supply))
                .then_with(|| x.scenario.lex_cmp(&y.scenario))
        })
        .expect("non-empty set")
}

/// Candidate closest to `n_total`; ties go to higher profit, then to the
/// earlier candidate. Items are `(total supply, profit)`.
pub fn closest_to_total(items: &[(u64, Decimal)], n_total: u32) -> usize {
    let target = n_total as i64;
    (0..items.len())
        .min_by(|&a, &b| {
            let da = (items[a].0 as i64 - target).abs();
            let db = (items[b].0 as i64 - target).abs();
            da.cmp(&db).then(items[b].1.cmp(&items[a].1)).then(a.cmp(&b))
        })
        .expect("non-empty candidates")
}

pub fn select_optimal(scores: &[ScenarioScore], n_total: u32, criteria: &SelectionCriteria) -> Result<Selection> {
    if scores.is_empty() {
        return Err(Error::Empty("no scenario scores".into()));
    }
    let mut optimal: Vec<usize> = (0..scores.len())
        .filter(|&i| {
            let s = &scores[i];
            (!criteria.profit_at_least_reference || s.kpis.profit >= s.reference_kpis.profit)
                && (!criteria.oos_at_most_reference || s.kpis.oos_count <= s.reference_kpis.oos_count)
        })
        .collect();
    let pareto_fallback = optimal.is_empty();
    if pareto_fallback {
        optimal = pareto_frontier(scores);
    }
    let max_kpi_efficiency = best_profit(scores, &optimal);
    let items: Vec<(u64, Decimal)> = optimal
        .iter()
        .map(|&i| (scores[i].kpis.total_supply, scores[i].kpis.profit))
        .collect();
    let distribution = optimal[closest_to_total(&items, n_total)];
    Ok(Selection {
        optimal,
        pareto_fallback,
        max_kpi_efficiency,
        distribution,
    })
}

/// Calibrated predictions for one POS of the plate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosForecast {
    pub group: usize,
    pub preds: Vec<f64>,
}

pub fn plate_forecasts(
    model: &CalibratedQuantileModel,
    features: &BTreeMap<PosId, FeatureRow>,
) -> BTreeMap<PosId, PosForecast> {
    features
        .iter()
        .map(|(pos, row)| {
            (
                pos.clone(),
                PosForecast {
                    group: model.scheme.group_of_row(row),
                    preds: model.predict_grid(row),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyPlan {
    pub label: String,
    pub allocations: BTreeMap<PosId, u32>,
    pub kpis_forecast: Kpis,
    pub scenario: Scenario,
}

impl SupplyPlan {
    pub fn total(&self) -> u64 {
        self.allocations.values().map(|&v| v as u64).sum()
    }

    /// `pos,supply` export.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["pos", "supply"])?;
        for (p, s) in &self.allocations {
            w.write_record([p.as_str(), &s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(Path::new("<plan>"), e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintStatus {
    Met,
    UnmetAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSet {
    pub issue: IssueKey,
    pub optimal_supply_plan: SupplyPlan,
    pub optimal_distribution_plan: SupplyPlan,
    pub scenario_frontier: Vec<ScenarioScore>,
    pub constraint_status: ConstraintStatus,
    pub pareto_fallback: bool,
}

/// Allocation of every plate POS under a scenario.
pub fn allocate(
    scenario: &Scenario,
    grid: &AlphaGrid,
    forecasts: &BTreeMap<PosId, PosForecast>,
) -> Result<BTreeMap<PosId, u32>> {
    let idx = scenario.indices(grid)?;
    Ok(forecasts
        .iter()
        .map(|(p, f)| {
            let a = *idx.get(f.group).unwrap_or(&idx[idx.len() - 1]);
            (p.clone(), supply_from_prediction(f.preds[a]))
        })
        .collect())
}

/// Forecast KPIs with the scenario's own prediction standing in for sales.
fn forecast_kpis(
    scenario: &Scenario,
    grid: &AlphaGrid,
    forecasts: &BTreeMap<PosId, PosForecast>,
    alloc: &BTreeMap<PosId, u32>,
    price: Decimal,
    cfg: &CostConfig,
) -> Result<Kpis> {
    let idx = scenario.indices(grid)?;
    let pairs: Vec<(u32, u32)> = forecasts
        .iter()
        .map(|(p, f)| {
            let s = alloc[p];
            let a = *idx.get(f.group).unwrap_or(&idx[idx.len() - 1]);
            (s, (f.preds[a].max(0.0).min(s as f64)).floor() as u32)
        })
        .collect();
    kpis_from_pairs(pairs, price, cfg)
}

fn build_plan(
    label: &str,
    scenario: &Scenario,
    grid: &AlphaGrid,
    forecasts: &BTreeMap<PosId, PosForecast>,
    price: Decimal,
    cfg: &CostConfig,
) -> Result<SupplyPlan> {
    let allocations = allocate(scenario, grid, forecasts)?;
    let kpis_forecast = forecast_kpis(scenario, grid, forecasts, &allocations, price, cfg)?;
    Ok(SupplyPlan {
        label: label.to_string(),
        allocations,
        kpis_forecast,
        scenario: scenario.clone(),
    })
}

/// Builds both plans for an issue. The distribution pick is re-evaluated on
/// the plate's own totals, since the constraint refers to this issue.
pub fn emit_plans(
    issue: &IssueMeta,
    grid: &AlphaGrid,
    forecasts: &BTreeMap<PosId, PosForecast>,
    scores: &[ScenarioScore],
    selection: &Selection,
    cfg: &CostConfig,
) -> Result<PlanSet> {
    if forecasts.is_empty() {
        return Err(Error::Empty(format!("plate of {} is empty", issue.key())));
    }
    let best = &scores[selection.max_kpi_efficiency].scenario;
    let optimal_supply_plan = build_plan(OPTIMAL_SUPPLY, best, grid, forecasts, issue.price, cfg)?;

    let mut candidates = Vec::with_capacity(selection.optimal.len());
    for &i in &selection.optimal {
        let plan = build_plan(OPTIMAL_DISTRIBUTION, &scores[i].scenario, grid, forecasts, issue.price, cfg)?;
        candidates.push(plan);
    }
    let items: Vec<(u64, Decimal)> = candidates
        .iter()
        .map(|p| (p.total(), p.kpis_forecast.profit))
        .collect();
    let optimal_distribution_plan = candidates.swap_remove(closest_to_total(&items, issue.n_total));

    let total = optimal_distribution_plan.total();
    let lo = issue.n_total.saturating_sub(issue.delta) as u64;
    let hi = issue.n_total as u64 + issue.delta as u64;
    let constraint_status = if (lo..=hi).contains(&total) {
        ConstraintStatus::Met
    } else {
        ConstraintStatus::UnmetAll
    };
    Ok(PlanSet {
        issue: issue.key(),
        optimal_supply_plan,
        optimal_distribution_plan,
        scenario_frontier: scores.to_vec(),
        constraint_status,
        pareto_fallback: selection.pareto_fallback,
    })
}

/// Scenario report: one line per scored scenario.
pub fn write_frontier_csv(scores: &[ScenarioScore], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "scenario",
        "total_supply",
        "total_sales",
        "revenue",
        "cost",
        "profit",
        "oos_count",
        "ref_total_supply",
        "ref_profit",
        "ref_oos_count",
    ])?;
    for s in scores {
        w.write_record([
            s.scenario.label(),
            s.kpis.total_supply.to_string(),
            s.kpis.total_sales.to_string(),
            s.kpis.revenue.to_string(),
            s.kpis.cost.to_string(),
            s.kpis.profit.to_string(),
            s.kpis.oos_count.to_string(),
            s.reference_kpis.total_supply.to_string(),
            s.reference_kpis.profit.to_string(),
            s.reference_kpis.oos_count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<frontier>"), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: &[f64]) -> AlphaGrid {
        AlphaGrid::new(a.to_vec()).unwrap()
    }

    #[test]
    fn two_alpha_two_group_enumeration() {
        let s = enumerate_scenarios(&grid(&[0.65, 0.99]), 2, 10);
        let v: Vec<Vec<f64>> = s.into_iter().map(|s| s.alphas).collect();
        assert_eq!(v, vec![vec![0.65, 0.65], vec![0.65, 0.99], vec![0.99, 0.99]]);
    }

    #[test]
    fn single_group_is_the_grid() {
        let g = AlphaGrid::default();
        let s = enumerate_scenarios(&g, 1, 100);
        assert_eq!(s.iter().map(|s| s.alphas[0]).collect::<Vec<_>>(), g.alphas);
    }

    #[test]
    fn budget_below_grid_keeps_constants_only() {
        let g = AlphaGrid::default();
        let s = enumerate_scenarios(&g, 3, 3);
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|s| s.alphas.iter().all(|&a| a == s.alphas[0])));
        assert_eq!(s[0].alphas[0], 0.65);
    }

    #[test]
    fn full_default_space_is_multiset_count() {
        // C(8 + 6 - 1, 6) = 1716
        let s = enumerate_scenarios(&AlphaGrid::default(), 6, DEFAULT_SCENARIO_BUDGET);
        assert_eq!(s.len(), 1716);
        assert!(s.windows(2).all(|w| w[0].lex_cmp(&w[1]).is_lt()));
    }

    #[test]
    fn ceiling_rule() {
        assert_eq!(supply_from_prediction(0.8), 1);
        assert_eq!(supply_from_prediction(3.0), 3);
        assert_eq!(supply_from_prediction(0.0), 0);
        assert_eq!(supply_from_prediction(2.0000000000001), 2);
        assert_eq!(supply_from_prediction(2.01), 3);
    }

    fn score(profit: i64, supply: u64, oos: u32, ref_profit: i64, ref_oos: u32) -> ScenarioScore {
        let mut k = Kpis::zero();
        k.profit = Decimal::from(profit);
        k.total_supply = supply;
        k.oos_count = oos;
        let mut r = Kpis::zero();
        r.profit = Decimal::from(ref_profit);
        r.oos_count = ref_oos;
        ScenarioScore {
            scenario: Scenario::constant(0.65, 1),
            kpis: k,
            reference_kpis: r,
        }
    }

    #[test]
    fn selection_picks_by_profit_and_by_total() {
        let scores = vec![score(110, 95, 0, 100, 5), score(105, 99, 0, 100, 5)];
        let sel = select_optimal(&scores, 100, &SelectionCriteria::default()).unwrap();
        assert_eq!(sel.optimal, vec![0, 1]);
        assert_eq!(sel.max_kpi_efficiency, 0);
        assert_eq!(sel.distribution, 1);
        assert!(!sel.pareto_fallback);
    }

    #[test]
    fn selection_falls_back_to_frontier() {
        let scores = vec![score(50, 10, 9, 100, 5), score(60, 12, 9, 100, 5), score(40, 12, 9, 100, 5)];
        let sel = select_optimal(&scores, 100, &SelectionCriteria::default()).unwrap();
        assert!(sel.pareto_fallback);
        assert_eq!(sel.optimal, vec![0, 1]);
        assert_eq!(sel.max_kpi_efficiency, 1);
    }

    #[test]
    fn emitted_allocations_are_ceilings() {
        let g = grid(&[0.5]);
        let forecasts: BTreeMap<PosId, PosForecast> = [("a", 0.8), ("b", 1.0), ("c", 2.3)]
            .iter()
            .map(|&(p, v)| (PosId::from(p), PosForecast { group: 0, preds: vec![v] }))
            .collect();
        let alloc = allocate(&Scenario::constant(0.5, 1), &g, &forecasts).unwrap();
        assert_eq!(alloc.values().copied().collect::<Vec<_>>(), vec![1, 1, 3]);
    }
}
