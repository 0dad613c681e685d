#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::NaiveDate;
use plateopt::domain::{IssueId, IssueKey, IssueMeta, Periodicity, PosId, PosMeta, SalesRecord, TitleId};
use plateopt::synth::GeneratorSpec;
use rust_decimal::Decimal;

pub fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

pub fn pos(id: &str) -> PosMeta {
    PosMeta {
        pos: PosId::new(id),
        establishment: "kiosk".into(),
        revenue_bracket: 2,
    }
}

pub fn meta(title: &str, issue: &str, start: &str, end: &str) -> IssueMeta {
    IssueMeta {
        title: TitleId::new(title),
        issue: IssueId::new(issue),
        price: Decimal::new(500, 2),
        periodicity: Periodicity::Monthly,
        age_bracket: "adult".into(),
        extra_product_id: None,
        references: Vec::new(),
        atypical_exclusions: BTreeSet::new(),
        period_start: date(start),
        period_end: date(end),
        n_total: 10,
        delta: 1,
    }
}

pub fn record(m: &IssueMeta, pos: &str, supply: u32, sales: u32) -> SalesRecord {
    SalesRecord {
        title: m.title.clone(),
        issue: m.issue.clone(),
        pos: PosId::new(pos),
        supply,
        sales,
        period_start: m.period_start,
        period_end: m.period_end,
    }
}

pub fn key(title: &str, issue: &str) -> IssueKey {
    IssueKey::new(title, issue)
}

/// A generator spec small enough for end-to-end tests to run in seconds.
pub fn small_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        seed,
        n_pos: 60,
        n_titles: 3,
        weeks: 110,
        ..GeneratorSpec::default()
    }
}

/// A feature row with every aggregate missing and the given price.
pub fn plain_row(price: f64) -> plateopt::features::FeatureRow {
    plateopt::features::FeatureRow {
        establishment: "kiosk".into(),
        pos_revenue_bracket: 2,
        age_bracket: "adult".into(),
        periodicity: Periodicity::Monthly,
        price,
        extra_product_power: None,
        mean_sales_12m: None,
        mean_sales_6m: None,
        mean_trend: None,
        mean_trend_recent: None,
        max_trend: None,
        oos_rate_trend: None,
        mean_ref: None,
        max_ref: None,
        oos_rate_ref: None,
        mean_lag_yearly: None,
        max_lag_yearly: None,
        oos_rate_lag_yearly: None,
        selling_duration: 28.0,
        holiday_percentage: 0.0,
        week_of_sale_sin: 0.0,
        week_of_sale_cos: 1.0,
    }
}

pub fn training_row(n: usize, features: plateopt::features::FeatureRow, target: f64) -> plateopt::features::TrainingRow {
    plateopt::features::TrainingRow {
        issue: key("T1", &format!("{n:06}")),
        pos: PosId::new("P1"),
        as_of: date("2024-01-01"),
        features,
        target,
        supply: 0,
        sales: 0,
    }
}

/// Profit, cost and OOS count written straight from the cost definition.
pub fn oracle_kpis(pairs: &[(u32, u32)], price: Decimal, cfg: &plateopt::cost::CostConfig) -> (Decimal, Decimal, u32) {
    use rust_decimal::RoundingStrategy::MidpointNearestEven;
    let total: u64 = pairs.iter().map(|p| p.0 as u64).sum();
    let mut unit = Decimal::ZERO;
    for t in &cfg.production_tiers {
        if total >= t.min_total_supply {
            unit = t.unit_cost;
        }
    }
    let mut cost = cfg.registration_cost_per_issue;
    let mut sales = 0u64;
    let mut oos = 0;
    for &(s, z) in pairs {
        sales += z as u64;
        if s == 0 {
            continue;
        }
        if z == s {
            oos += 1;
        }
        let (s, z) = (Decimal::from(s), Decimal::from(z));
        let c = s * unit + s * cfg.distribution_cost_per_copy + (s - z) * cfg.unsold_cost_per_copy
            + z * price * cfg.commission_rate;
        cost += c.round_dp_with_strategy(4, MidpointNearestEven);
    }
    let cost = cost.round_dp_with_strategy(4, MidpointNearestEven);
    let revenue = (Decimal::from(sales) * price).round_dp_with_strategy(4, MidpointNearestEven);
    (revenue - cost, cost, oos)
}

/// A run configuration over `data`, writing under `out`, with few trees.
pub fn quick_config(data: &std::path::Path, out: &std::path::Path) -> plateopt::harness::RunConfig {
    let mut cfg = plateopt::harness::RunConfig::default();
    cfg.data.dir = data.to_path_buf();
    cfg.out_dir = out.to_path_buf();
    cfg.model.gbt.n_trees = 20;
    cfg
}

/// Differential leakage probes: for random records, features built as of the
/// record's start must not change when later records are deleted or
/// perturbed. Returns a description of every failing probe.
pub fn leakage_violations(
    ds: &plateopt::ingest::Dataset,
    holidays: &BTreeSet<NaiveDate>,
    probes: usize,
    seed: u64,
) -> Vec<String> {
    use plateopt::features::{build_features, ExtraProductRanking};
    use plateopt::ingest::Dataset;
    use rand::{Rng, SeedableRng};

    let ranking = ExtraProductRanking::empty(date("2020-01-01"));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for _ in 0..probes {
        let probe = ds.record(rng.random_range(0..ds.records().len())).clone();
        let key = probe.issue_key();
        let as_of = probe.period_start;
        let build = |d: &Dataset| build_features(d, &key, &probe.pos, as_of, &ranking, holidays).unwrap();
        let full = build(ds);

        if build(&ds.filtered(|r| r.period_end < as_of)) != full {
            failures.push(format!("deleting future records changed {key}@{}", probe.pos));
        }
        let shaken: Vec<SalesRecord> = ds
            .records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.period_end >= as_of {
                    r.supply += rng.random_range(0..4);
                    r.sales = rng.random_range(0..=r.supply);
                }
                r
            })
            .collect();
        let rebuilt = Dataset::new(shaken, ds.pos_meta().values().cloned(), ds.issue_meta().values().cloned()).unwrap();
        if build(&rebuilt) != full {
            failures.push(format!("perturbing future records changed {key}@{}", probe.pos));
        }
    }
    failures
}

pub fn dec(s: &str) -> Decimal {
    s.parse().unwrap()
}

/// Three production tiers and awkward rates, to exercise rounding.
pub fn tiered_costs() -> plateopt::cost::CostConfig {
    plateopt::cost::CostConfig {
        commission_rate: dec("0.175"),
        production_tiers: vec![
            plateopt::cost::ProductionTier {
                min_total_supply: 0,
                unit_cost: dec("1.2345"),
            },
            plateopt::cost::ProductionTier {
                min_total_supply: 20,
                unit_cost: dec("0.9871"),
            },
            plateopt::cost::ProductionTier {
                min_total_supply: 60,
                unit_cost: dec("0.7003"),
            },
        ],
        distribution_cost_per_copy: dec("0.0833"),
        unsold_cost_per_copy: dec("0.0417"),
        registration_cost_per_issue: dec("3.5"),
    }
}
