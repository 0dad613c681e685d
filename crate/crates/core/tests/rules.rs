mod common;

use std::collections::BTreeMap;

use common::*;
use plateopt::cost::{CostConfig, Kpis};
use plateopt::domain::PosId;
use plateopt::features::FeatureRow;
use plateopt::optimizer::{Scenario, SupplyPlan};
use plateopt::rules::{
    apply_rules, largest_remainder, parse_rules, reconcile_constraint, ReconcileMode, ReconcileStatus, RuleContext,
};
use proptest::prelude::*;

fn plan(alloc: &[(&str, u32)]) -> SupplyPlan {
    SupplyPlan {
        label: "optimal_supply".into(),
        allocations: alloc.iter().map(|&(p, s)| (PosId::new(p), s)).collect(),
        kpis_forecast: Kpis::zero(),
        scenario: Scenario::constant(0.5, 1),
    }
}

struct Fixture {
    issue: plateopt::domain::IssueMeta,
    features: BTreeMap<PosId, FeatureRow>,
    demand: BTreeMap<PosId, f64>,
    cfg: CostConfig,
}

impl Fixture {
    fn new() -> Self {
        let mut features = BTreeMap::new();
        let mut a = plain_row(5.0);
        a.max_trend = Some(2.0);
        a.max_lag_yearly = Some(1.0);
        features.insert(PosId::new("A"), a);
        features.insert(PosId::new("B"), plain_row(5.0));
        let mut c = plain_row(5.0);
        c.max_trend = Some(0.4);
        features.insert(PosId::new("C"), c);
        Fixture {
            issue: meta("T1", "010", "2025-03-03", "2025-03-30"),
            features,
            demand: [("A", 3.0), ("B", 1.0), ("C", 0.5)].iter().map(|&(p, d)| (PosId::new(p), d)).collect(),
            cfg: CostConfig::default(),
        }
    }

    fn ctx(&self) -> RuleContext<'_> {
        RuleContext {
            issue: &self.issue,
            features: &self.features,
            demand: &self.demand,
            cfg: &self.cfg,
        }
    }
}

fn supplies(p: &SupplyPlan) -> Vec<u32> {
    p.allocations.values().copied().collect()
}

#[test]
fn cap_against_trend_maximum() {
    let fx = Fixture::new();
    let rules = parse_rules(r#"[{"id":"cap","kind":"cap_vs_trend","params":{"k":1.5}}]"#).unwrap();
    let (out, report) = apply_rules(&plan(&[("A", 9), ("B", 9), ("C", 9)]), &fx.ctx(), &rules).unwrap();
    // A: ceil(1.5 * 2) = 3, B has no trend history, C: ceil(0.6) = 1
    assert_eq!(supplies(&out), vec![3, 9, 1]);
    assert_eq!(report.entries[0].rows_touched, 2);
    assert_eq!(report.total_delta, -14);
}

#[test]
fn cap_against_yearly_lag_uses_default_factor() {
    let fx = Fixture::new();
    let rules = parse_rules(r#"[{"id":"lag","kind":"cap_vs_yearly_lag"}]"#).unwrap();
    let (out, _) = apply_rules(&plan(&[("A", 9), ("B", 9), ("C", 9)]), &fx.ctx(), &rules).unwrap();
    assert_eq!(supplies(&out), vec![3, 9, 9]);
}

#[test]
fn floor_then_override_in_order() {
    let fx = Fixture::new();
    let rules = parse_rules(
        r#"[{"id":"f","kind":"floor","params":{"f":2}},
            {"id":"o","kind":"override_pos","params":{"value":0},"scope":{"pos":["B"]}}]"#,
    )
    .unwrap();
    let (out, report) = apply_rules(&plan(&[("A", 4), ("B", 1), ("C", 0)]), &fx.ctx(), &rules).unwrap();
    assert_eq!(supplies(&out), vec![4, 0, 2]);
    assert_eq!(report.entries.iter().map(|e| e.supply_delta).collect::<Vec<_>>(), vec![3, -2]);
    assert_eq!(out.kpis_forecast, fx.ctx().forecast_kpis(&out.allocations).unwrap());
}

#[test]
fn rules_for_other_titles_are_skipped() {
    let fx = Fixture::new();
    let rules = parse_rules(r#"[{"id":"f","kind":"floor","params":{"f":5},"scope":{"title":"T9"}}]"#).unwrap();
    let (out, report) = apply_rules(&plan(&[("A", 1), ("B", 1), ("C", 1)]), &fx.ctx(), &rules).unwrap();
    assert_eq!(supplies(&out), vec![1, 1, 1]);
    assert!(report.entries.is_empty());
}

#[test]
fn override_of_unknown_pos_is_refused() {
    let fx = Fixture::new();
    let rules = parse_rules(r#"[{"id":"o","kind":"override_pos","params":{"value":1},"scope":{"pos":["Z"]}}]"#).unwrap();
    assert!(apply_rules(&plan(&[("A", 1)]), &fx.ctx(), &rules).is_err());
}

#[test]
fn scale_title_hits_rounded_goal() {
    let fx = Fixture::new();
    let rules = parse_rules(r#"[{"id":"s","kind":"scale_title","params":{"factor":0.5}}]"#).unwrap();
    let (out, _) = apply_rules(&plan(&[("A", 3), ("B", 3), ("C", 4)]), &fx.ctx(), &rules).unwrap();
    assert_eq!(out.total(), 5);
}

#[test]
fn reconcile_modes() {
    let p = plan(&[("A", 6), ("B", 6)]);
    let (same, st) = reconcile_constraint(&p, 11, 1, ReconcileMode::Scale).unwrap();
    assert_eq!(st, ReconcileStatus::AlreadyWithinBand);
    assert_eq!(same, p);
    let (scaled, st) = reconcile_constraint(&p, 7, 1, ReconcileMode::Scale).unwrap();
    assert_eq!(st, ReconcileStatus::Scaled);
    assert_eq!(scaled.total(), 7);
    let (_, st) = reconcile_constraint(&p, 7, 1, ReconcileMode::Relax).unwrap();
    assert_eq!(st, ReconcileStatus::Relaxed { widened_delta: 5 });
    assert!(reconcile_constraint(&plan(&[("A", 0)]), 7, 1, ReconcileMode::Scale).is_err());
}

proptest! {
    #[test]
    fn largest_remainder_is_exact_and_within_one(
        values in prop::collection::vec(0u32..50, 1..20),
        goal in 0u64..600,
    ) {
        let alloc: BTreeMap<PosId, u32> =
            values.iter().enumerate().map(|(i, &v)| (PosId::new(format!("P{i:02}")), v)).collect();
        let total: u64 = values.iter().map(|&v| v as u64).sum();
        prop_assume!(total > 0);
        let out = largest_remainder(&alloc, goal);
        prop_assert_eq!(out.values().map(|&v| v as u64).sum::<u64>(), goal);
        for (p, &v) in &alloc {
            let exact = v as f64 * goal as f64 / total as f64;
            prop_assert!((out[p] as f64 - exact).abs() < 1.0);
        }
    }
}
