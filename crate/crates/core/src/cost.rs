//! Parametric cost model and the KPI engine.
//!
//! Per-POS cost is tiered production on the issue's total supply, a
//! per-copy distribution charge, a per-copy charge on unsold returns and a
//! commission on revenue. The issue additionally pays a fixed registration
//! cost. Money is `Decimal`, rounded half-even to four places whenever a
//! per-POS or plan-level amount is produced.

use std::collections::BTreeMap;
use std::path::Path;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::domain::PosId;
use crate::error::{Error, Result};

pub const MONEY_DP: u32 = 4;

pub fn round_money(x: Decimal) -> Decimal {
    x.round_dp_with_strategy(MONEY_DP, RoundingStrategy::MidpointNearestEven)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductionTier {
    pub min_total_supply: u64,
    pub unit_cost: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub commission_rate: Decimal,
    pub production_tiers: Vec<ProductionTier>,
    pub distribution_cost_per_copy: Decimal,
    pub unsold_cost_per_copy: Decimal,
    pub registration_cost_per_issue: Decimal,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            commission_rate: Decimal::new(20, 2),
            production_tiers: vec![ProductionTier {
                min_total_supply: 0,
                unit_cost: Decimal::new(100, 2),
            }],
            distribution_cost_per_copy: Decimal::new(10, 2),
            unsold_cost_per_copy: Decimal::new(5, 2),
            registration_cost_per_issue: Decimal::new(100, 2),
        }
    }
}

impl CostConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: CostConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .production_tiers
            .first()
            .ok_or_else(|| Error::invalid("production_tiers", "at least one tier required"))?;
        if first.min_total_supply != 0 {
            return Err(Error::invalid("production_tiers[0].min_total_supply", "must be 0"));
        }
        for (i, w) in self.production_tiers.windows(2).enumerate() {
            if w[1].min_total_supply <= w[0].min_total_supply {
                return Err(Error::invalid(
                    format!("production_tiers[{}].min_total_supply", i + 1),
                    "tiers must be strictly increasing",
                ));
            }
        }
        for (i, t) in self.production_tiers.iter().enumerate() {
            if t.unit_cost < Decimal::ZERO {
                return Err(Error::invalid(format!("production_tiers[{i}].unit_cost"), "negative"));
            }
        }
        let non_negative = [
            ("commission_rate", self.commission_rate),
            ("distribution_cost_per_copy", self.distribution_cost_per_copy),
            ("unsold_cost_per_copy", self.unsold_cost_per_copy),
            ("registration_cost_per_issue", self.registration_cost_per_issue),
        ];
        for (field, v) in non_negative {
            if v < Decimal::ZERO {
                return Err(Error::invalid(field, "must be >= 0"));
            }
        }
        if self.commission_rate >= Decimal::ONE {
            return Err(Error::invalid("commission_rate", "must be < 1"));
        }
        Ok(())
    }

    /// Per-copy production cost for an issue printed in `total_supply` copies.
    pub fn unit_cost(&self, total_supply: u64) -> Decimal {
        self.production_tiers
            .iter()
            .rev()
            .find(|t| t.min_total_supply <= total_supply)
            .map(|t| t.unit_cost)
            .unwrap_or(Decimal::ZERO)
    }
}

/// Costs and commission attributable to one POS.
pub fn pos_cost(
    supply: u32,
    total_supply: u64,
    sales: u32,
    price: Decimal,
    cfg: &CostConfig,
) -> Result<Decimal> {
    if total_supply < supply as u64 {
        return Err(Error::invalid(
            "total_supply",
            format!("total supply {total_supply} is below POS supply {supply}"),
        ));
    }
    if sales > supply {
        return Err(Error::invalid("sales", format!("sales {sales} exceed supply {supply}")));
    }
    Ok(pos_cost_unchecked(supply, cfg.unit_cost(total_supply), sales, price, cfg))
}

fn pos_cost_unchecked(
    supply: u32,
    unit_cost: Decimal,
    sales: u32,
    price: Decimal,
    cfg: &CostConfig,
) -> Decimal {
    if supply == 0 {
        return Decimal::ZERO;
    }
    let s = Decimal::from(supply);
    let z = Decimal::from(sales);
    round_money(
        unit_cost * s
            + cfg.distribution_cost_per_copy * s
            + cfg.unsold_cost_per_copy * (s - z)
            + cfg.commission_rate * price * z,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kpis {
    pub total_supply: u64,
    pub total_sales: u64,
    pub revenue: Decimal,
    pub cost: Decimal,
    pub profit: Decimal,
    pub oos_count: u32,
    pub supplied_count: u32,
    pub sellthrough_rate: f64,
}

impl Kpis {
    pub fn zero() -> Self {
        Kpis {
            total_supply: 0,
            total_sales: 0,
            revenue: Decimal::ZERO,
            cost: Decimal::ZERO,
            profit: Decimal::ZERO,
            oos_count: 0,
            supplied_count: 0,
            sellthrough_rate: 0.0,
        }
    }

    /// Sums KPIs of independent issues.
    pub fn combine(&self, other: &Kpis) -> Kpis {
        let total_supply = self.total_supply + other.total_supply;
        let total_sales = self.total_sales + other.total_sales;
        Kpis {
            total_supply,
            total_sales,
            revenue: self.revenue + other.revenue,
            cost: self.cost + other.cost,
            profit: self.profit + other.profit,
            oos_count: self.oos_count + other.oos_count,
            supplied_count: self.supplied_count + other.supplied_count,
            sellthrough_rate: sellthrough(total_sales, total_supply),
        }
    }
}

fn sellthrough(sales: u64, supply: u64) -> f64 {
    if supply == 0 {
        0.0
    } else {
        sales as f64 / supply as f64
    }
}

/// KPIs of one issue from `(supply, sales)` pairs, one per POS.
pub fn kpis_from_pairs<I>(pairs: I, price: Decimal, cfg: &CostConfig) -> Result<Kpis>
where
    I: IntoIterator<Item = (u32, u32)>,
    I::IntoIter: Clone,
{
    let iter = pairs.into_iter();
    let mut total_supply = 0u64;
    let mut total_sales = 0u64;
    let mut oos = 0u32;
    let mut supplied = 0u32;
    for (s, z) in iter.clone() {
        if z > s {
            return Err(Error::invalid("sales", format!("sales {z} exceed supply {s}")));
        }
        total_supply += s as u64;
        total_sales += z as u64;
        if s > 0 {
            supplied += 1;
            if z == s {
                oos += 1;
            }
        }
    }
    let unit = cfg.unit_cost(total_supply);
    let mut cost = cfg.registration_cost_per_issue;
    for (s, z) in iter {
        cost += pos_cost_unchecked(s, unit, z, price, cfg);
    }
    let revenue = round_money(price * Decimal::from(total_sales));
    let cost = round_money(cost);
    Ok(Kpis {
        total_supply,
        total_sales,
        revenue,
        cost,
        profit: revenue - cost,
        oos_count: oos,
        supplied_count: supplied,
        sellthrough_rate: sellthrough(total_sales, total_supply),
    })
}

/// KPIs of a plan given realised sales. Both maps must cover the same POSes.
pub fn plan_kpis(
    plan: &BTreeMap<PosId, u32>,
    sales: &BTreeMap<PosId, u32>,
    price: Decimal,
    cfg: &CostConfig,
) -> Result<Kpis> {
    if plan.len() != sales.len() || plan.keys().zip(sales.keys()).any(|(a, b)| a != b) {
        return Err(Error::invalid("sales", "plan and sales cover different POS sets"));
    }
    let pairs: Vec<(u32, u32)> = plan.values().copied().zip(sales.values().copied()).collect();
    kpis_from_pairs(pairs, price, cfg)
}
