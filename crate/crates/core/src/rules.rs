//! Post-optimization business rules and supply-constraint reconciliation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::{kpis_from_pairs, CostConfig, Kpis};
use crate::domain::{IssueId, IssueMeta, PosId, TitleId};
use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::optimizer::SupplyPlan;

pub const DEFAULT_CAP_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// `k`: allocation at most `ceil(k * max_trend)`.
    CapVsTrend,
    /// `k`: allocation at most `ceil(k * max_lag_yearly)`.
    CapVsYearlyLag,
    /// `f`: allocation at least `f`.
    Floor,
    /// `value`: allocation exactly `value` on the listed POSes.
    OverridePos,
    /// `factor`: scales the in-scope total, re-rounded by largest remainder.
    ScaleTitle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<TitleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issue: Option<IssueId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<PosId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    pub kind: RuleKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub scope: Scope,
}

impl Rule {
    fn param(&self, name: &str) -> Result<f64> {
        self.params.get(name).copied().ok_or_else(|| Error::Rule {
            rule: self.id.clone(),
            message: format!("missing parameter `{name}`"),
        })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Rule {
            rule: self.id.clone(),
            message: message.into(),
        }
    }

    fn cap_factor(&self) -> Result<f64> {
        let k = self.params.get("k").copied().unwrap_or(DEFAULT_CAP_FACTOR);
        if !(k.is_finite() && k > 0.0) {
            return Err(self.err("`k` must be positive"));
        }
        Ok(k)
    }

    fn count_param(&self, name: &str) -> Result<u32> {
        let v = self.param(name)?;
        if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
            return Err(self.err(format!("`{name}` must be a non-negative integer")));
        }
        Ok(v as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("id", "rule id must be non-empty"));
        }
        let allowed: &[&str] = match self.kind {
            RuleKind::CapVsTrend | RuleKind::CapVsYearlyLag => {
                self.cap_factor()?;
                &["k"]
            }
            RuleKind::Floor => {
                self.count_param("f")?;
                &["f"]
            }
            RuleKind::OverridePos => {
                self.count_param("value")?;
                if self.scope.pos.as_ref().is_none_or(|p| p.is_empty()) {
                    return Err(self.err("override_pos needs a POS list in its scope"));
                }
                &["value"]
            }
            RuleKind::ScaleTitle => {
                let f = self.param("factor")?;
                if !(f.is_finite() && f >= 0.0) {
                    return Err(self.err("`factor` must be non-negative"));
                }
                &["factor"]
            }
        };
        if let Some(extra) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(self.err(format!("unknown parameter `{extra}`")));
        }
        Ok(())
    }

    fn applies_to(&self, issue: &IssueMeta) -> bool {
        self.scope.title.as_ref().is_none_or(|t| t == &issue.title)
            && self.scope.issue.as_ref().is_none_or(|i| i == &issue.issue)
    }
}

/// Validates an ordered rule list, including override conflicts.
pub fn validate_rules(rules: &[Rule]) -> Result<()> {
    let mut ids = BTreeSet::new();
    let mut overrides: BTreeMap<(Option<&TitleId>, Option<&IssueId>, &PosId), (u32, &str)> = BTreeMap::new();
    for r in rules {
        r.validate()?;
        if !ids.insert(r.id.as_str()) {
            return Err(r.err("duplicate rule id"));
        }
        if r.kind == RuleKind::OverridePos {
            let value = r.count_param("value")?;
            for p in r.scope.pos.iter().flatten() {
                let key = (r.scope.title.as_ref(), r.scope.issue.as_ref(), p);
                if let Some((prev, prev_id)) = overrides.insert(key, (value, r.id.as_str())) {
                    if prev != value {
                        return Err(r.err(format!("override of {p} conflicts with rule `{prev_id}`")));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn parse_rules(text: &str) -> Result<Vec<Rule>> {
    let rules: Vec<Rule> = serde_json::from_str(text).map_err(|e| Error::Config(format!("rules: {e}")))?;
    validate_rules(&rules)?;
    Ok(rules)
}

pub fn load_rules(path: &Path) -> Result<Vec<Rule>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rules(&text)
}

/// What rules need besides the plan itself.
#[derive(Debug, Clone, Copy)]
pub struct RuleContext<'a> {
    pub issue: &'a IssueMeta,
    pub features: &'a BTreeMap<PosId, FeatureRow>,
    /// Expected demand per POS, the sales stand-in for forecast KPIs.
    pub demand: &'a BTreeMap<PosId, f64>,
    pub cfg: &'a CostConfig,
}

impl RuleContext<'_> {
    pub fn forecast_kpis(&self, alloc: &BTreeMap<PosId, u32>) -> Result<Kpis> {
        let pairs: Vec<(u32, u32)> = alloc
            .iter()
            .map(|(p, &s)| {
                let d = self.demand.get(p).copied().unwrap_or(0.0).max(0.0);
                (s, d.min(s as f64).floor() as u32)
            })
            .collect();
        kpis_from_pairs(pairs, self.issue.price, self.cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub rule: String,
    pub kind: RuleKind,
    pub rows_touched: usize,
    pub supply_delta: i64,
    pub before: Kpis,
    pub after: Kpis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RuleReport {
    pub entries: Vec<RuleEntry>,
    pub total_delta: i64,
}

fn ceil_cap(k: f64, m: f64) -> u32 {
    (k * m - 1e-9).ceil().max(0.0) as u32
}

fn in_scope(rule: &Rule, plan: &BTreeMap<PosId, u32>) -> Result<Vec<PosId>> {
    match &rule.scope.pos {
        None => Ok(plan.keys().cloned().collect()),
        Some(list) => {
            if let Some(p) = list.iter().find(|p| !plan.contains_key(*p)) {
                return Err(rule.err(format!("POS {p} is not on the plate")));
            }
            let set: BTreeSet<PosId> = list.iter().cloned().collect();
            Ok(set.into_iter().collect())
        }
    }
}

fn apply_one(rule: &Rule, alloc: &mut BTreeMap<PosId, u32>, ctx: &RuleContext<'_>) -> Result<usize> {
    let targets = in_scope(rule, alloc)?;
    let mut touched = 0;
    let mut set = |alloc: &mut BTreeMap<PosId, u32>, p: &PosId, v: u32| {
        let cur = alloc.get_mut(p).expect("scope resolved");
        if *cur != v {
            *cur = v;
            touched += 1;
        }
    };
    match rule.kind {
        RuleKind::CapVsTrend | RuleKind::CapVsYearlyLag => {
            let k = rule.cap_factor()?;
            for p in &targets {
                let f = ctx.features.get(p);
                let m = match rule.kind {
                    RuleKind::CapVsTrend => f.and_then(|f| f.max_trend),
                    _ => f.and_then(|f| f.max_lag_yearly),
                };
                if let Some(m) = m {
                    let cap = ceil_cap(k, m);
                    if alloc[p] > cap {
                        set(alloc, p, cap);
                    }
                }
            }
        }
        RuleKind::Floor => {
            let f = rule.count_param("f")?;
            for p in &targets {
                if alloc[p] < f {
                    set(alloc, p, f);
                }
            }
        }
        RuleKind::OverridePos => {
            let v = rule.count_param("value")?;
            for p in &targets {
                set(alloc, p, v);
            }
        }
        RuleKind::ScaleTitle => {
            let factor = rule.param("factor")?;
            let sub: BTreeMap<PosId, u32> = targets.iter().map(|p| (p.clone(), alloc[p])).collect();
            let total: u64 = sub.values().map(|&v| v as u64).sum();
            if total > 0 {
                let goal = (total as f64 * factor).round() as u64;
                for (p, v) in largest_remainder(&sub, goal) {
                    set(alloc, &p, v);
                }
            }
        }
    }
    Ok(touched)
}

/// Applies rules in order. Rules scoped to another title or issue are skipped.
pub fn apply_rules(plan: &SupplyPlan, ctx: &RuleContext<'_>, rules: &[Rule]) -> Result<(SupplyPlan, RuleReport)> {
    validate_rules(rules)?;
    let mut alloc = plan.allocations.clone();
    let mut report = RuleReport::default();
    for rule in rules.iter().filter(|r| r.applies_to(ctx.issue)) {
        let before_total: i64 = alloc.values().map(|&v| v as i64).sum();
        let before = ctx.forecast_kpis(&alloc)?;
        let rows_touched = apply_one(rule, &mut alloc, ctx)?;
        let after = ctx.forecast_kpis(&alloc)?;
        let after_total: i64 = alloc.values().map(|&v| v as i64).sum();
        report.total_delta += after_total - before_total;
        report.entries.push(RuleEntry {
            rule: rule.id.clone(),
            kind: rule.kind,
            rows_touched,
            supply_delta: after_total - before_total,
            before,
            after,
        });
    }
    let kpis_forecast = if report.entries.is_empty() {
        plan.kpis_forecast.clone()
    } else {
        ctx.forecast_kpis(&alloc)?
    };
    Ok((
        SupplyPlan {
            label: plan.label.clone(),
            allocations: alloc,
            kpis_forecast,
            scenario: plan.scenario.clone(),
        },
        report,
    ))
}

/// Scales `alloc` to exactly `goal` copies: floors of the exact proportional
/// shares, then one extra copy to the largest remainders, ties by POS order.
pub fn largest_remainder(alloc: &BTreeMap<PosId, u32>, goal: u64) -> BTreeMap<PosId, u32> {
    let total: u128 = alloc.values().map(|&v| v as u128).sum();
    if total == 0 {
        return alloc.clone();
    }
    let goal = goal as u128;
    let mut out: Vec<(PosId, u128, u128)> = alloc
        .iter()
        .map(|(p, &v)| {
            let num = v as u128 * goal;
            (p.clone(), num / total, num % total)
        })
        .collect();
    let assigned: u128 = out.iter().map(|x| x.1).sum();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| out[b].2.cmp(&out[a].2).then(a.cmp(&b)));
    for &i in order.iter().take((goal - assigned) as usize) {
        out[i].1 += 1;
    }
    out.into_iter().map(|(p, v, _)| (p, v as u32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconcileMode {
    Scale,
    Relax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum ReconcileStatus {
    /// The plan already met the constraint; nothing was changed.
    AlreadyWithinBand,
    Scaled,
    /// The constraint is widened to cover the plan.
    Relaxed { widened_delta: u32 },
}

pub fn reconcile_constraint(
    plan: &SupplyPlan,
    n_total: u32,
    delta: u32,
    mode: ReconcileMode,
) -> Result<(SupplyPlan, ReconcileStatus)> {
    let total = plan.total();
    let lo = n_total.saturating_sub(delta) as u64;
    let hi = n_total as u64 + delta as u64;
    if (lo..=hi).contains(&total) {
        return Ok((plan.clone(), ReconcileStatus::AlreadyWithinBand));
    }
    match mode {
        ReconcileMode::Relax => {
            let widened = (total as i64 - n_total as i64).unsigned_abs().min(u32::MAX as u64) as u32;
            Ok((plan.clone(), ReconcileStatus::Relaxed { widened_delta: widened }))
        }
        ReconcileMode::Scale => {
            if total == 0 {
                return Err(Error::invalid("plan", "cannot scale an all-zero plan"));
            }
            let mut out = plan.clone();
            out.allocations = largest_remainder(&plan.allocations, n_total as u64);
            Ok((out, ReconcileStatus::Scaled))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alloc(v: &[(&str, u32)]) -> BTreeMap<PosId, u32> {
        v.iter().map(|&(p, s)| (PosId::from(p), s)).collect()
    }

    #[test]
    fn largest_remainder_example() {
        let a = alloc(&[("a", 3), ("b", 3), ("c", 4)]);
        let out = largest_remainder(&a, 5);
        assert_eq!(out, alloc(&[("a", 2), ("b", 1), ("c", 2)]));
    }

    #[test]
    fn equal_allocations_spread_by_pos_order() {
        let a = alloc(&[("a", 2), ("b", 2), ("c", 2), ("d", 2)]);
        let out = largest_remainder(&a, 6);
        assert_eq!(out, alloc(&[("a", 2), ("b", 2), ("c", 1), ("d", 1)]));
    }

    #[test]
    fn rule_validation() {
        let bad = parse_rules(r#"[{"id":"o","kind":"override_pos","params":{"value":2}}]"#);
        assert!(bad.is_err());
        let conflict = parse_rules(
            r#"[{"id":"a","kind":"override_pos","params":{"value":2},"scope":{"pos":["P1"]}},
                {"id":"b","kind":"override_pos","params":{"value":3},"scope":{"pos":["P1"]}}]"#,
        );
        assert!(matches!(conflict, Err(Error::Rule { .. })));
        let neg = parse_rules(r#"[{"id":"f","kind":"floor","params":{"f":-1}}]"#);
        assert!(neg.is_err());
        let ok = parse_rules(r#"[{"id":"c","kind":"cap_vs_trend"}]"#).unwrap();
        assert_eq!(ok[0].cap_factor().unwrap(), DEFAULT_CAP_FACTOR);
    }
}
