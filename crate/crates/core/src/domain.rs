//! Domain records shared by every stage of the pipeline, plus the two
//! demand/sales identities: censoring of demand by supply, and the
//! reconstruction of demand from censored sales.

use std::collections::BTreeSet;
use std::fmt;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(
    /// A magazine series.
    TitleId
);
string_id!(
    /// One edition of a title; unique within that title.
    IssueId
);
string_id!(
    /// A point of sale, unique across the network.
    PosId
);

/// `(title, issue)`: identifies one edition network-wide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IssueKey {
    pub title: TitleId,
    pub issue: IssueId,
}

impl IssueKey {
    pub fn new(title: impl Into<String>, issue: impl Into<String>) -> Self {
        IssueKey {
            title: TitleId(title.into()),
            issue: IssueId(issue.into()),
        }
    }
}

/// Parses `title/issue`.
impl std::str::FromStr for IssueKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((t, i)) if !t.is_empty() && !i.is_empty() && !i.contains('/') => Ok(IssueKey::new(t, i)),
            _ => Err(Error::invalid("issue", format!("expected title/issue, got `{s}`"))),
        }
    }
}

impl fmt::Display for IssueKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.title, self.issue)
    }
}

/// One observation: what a POS received and sold of one issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalesRecord {
    pub title: TitleId,
    pub issue: IssueId,
    pub pos: PosId,
    pub supply: u32,
    pub sales: u32,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
}

impl SalesRecord {
    pub fn issue_key(&self) -> IssueKey {
        IssueKey {
            title: self.title.clone(),
            issue: self.issue.clone(),
        }
    }

    /// Out of stock: everything supplied was sold.
    pub fn is_oos(&self) -> bool {
        self.supply > 0 && self.sales == self.supply
    }

    pub fn validate(&self) -> Result<()> {
        if self.title.0.is_empty() || self.issue.0.is_empty() || self.pos.0.is_empty() {
            return Err(Error::invalid("id", "identifiers must be non-empty"));
        }
        if self.sales > self.supply {
            return Err(Error::invalid(
                "sales",
                format!("sales {} exceed supply {}", self.sales, self.supply),
            ));
        }
        if self.period_start > self.period_end {
            return Err(Error::invalid(
                "period_end",
                format!("period_end {} precedes period_start {}", self.period_end, self.period_start),
            ));
        }
        Ok(())
    }
}

/// Highest revenue bracket a POS may carry; brackets are `0..=MAX_REVENUE_BRACKET`.
pub const MAX_REVENUE_BRACKET: u8 = 9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosMeta {
    pub pos: PosId,
    pub establishment: String,
    pub revenue_bracket: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Periodicity {
    Weekly,
    Monthly,
    Bimonthly,
    Quarterly,
    Special,
}

impl Periodicity {
    pub const ALL: [Periodicity; 5] = [
        Periodicity::Weekly,
        Periodicity::Monthly,
        Periodicity::Bimonthly,
        Periodicity::Quarterly,
        Periodicity::Special,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Periodicity::Weekly => "weekly",
            Periodicity::Monthly => "monthly",
            Periodicity::Bimonthly => "bimonthly",
            Periodicity::Quarterly => "quarterly",
            Periodicity::Special => "special",
        }
    }

    /// More frequent than quarterly.
    pub fn is_frequent(self) -> bool {
        matches!(
            self,
            Periodicity::Weekly | Periodicity::Monthly | Periodicity::Bimonthly
        )
    }

    /// Nominal days between consecutive issues.
    pub fn nominal_days(self) -> i64 {
        match self {
            Periodicity::Weekly => 7,
            Periodicity::Monthly => 30,
            Periodicity::Bimonthly => 61,
            Periodicity::Quarterly => 91,
            Periodicity::Special => 120,
        }
    }
}

/// Planner-entered description of an issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssueMeta {
    pub title: TitleId,
    pub issue: IssueId,
    pub price: Decimal,
    pub periodicity: Periodicity,
    pub age_bracket: String,
    #[serde(default)]
    pub extra_product_id: Option<String>,
    #[serde(default)]
    pub references: Vec<IssueKey>,
    #[serde(default)]
    pub atypical_exclusions: BTreeSet<IssueKey>,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    pub n_total: u32,
    pub delta: u32,
}

impl IssueMeta {
    pub fn key(&self) -> IssueKey {
        IssueKey {
            title: self.title.clone(),
            issue: self.issue.clone(),
        }
    }

    /// Checks that do not need the rest of the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.title.0.is_empty() || self.issue.0.is_empty() {
            return Err(Error::invalid("issue", "identifiers must be non-empty"));
        }
        if self.price <= Decimal::ZERO {
            return Err(Error::invalid("price", "must be positive"));
        }
        if !(self.references.is_empty() || self.references.len() == 2) {
            return Err(Error::invalid(
                "references",
                format!("expected 0 or 2 references, got {}", self.references.len()),
            ));
        }
        if self.period_start > self.period_end {
            return Err(Error::invalid("period_end", "precedes period_start"));
        }
        if self.n_total == 0 {
            return Err(Error::invalid("n_total", "must be positive"));
        }
        if self.delta > self.n_total {
            return Err(Error::invalid(
                "delta",
                format!("delta {} exceeds n_total {}", self.delta, self.n_total),
            ));
        }
        Ok(())
    }

    pub fn selling_days(&self) -> i64 {
        (self.period_end - self.period_start).num_days() + 1
    }
}

/// Sales observed when `demand` meets `supply` copies: `floor(min(demand, supply))`.
pub fn censor(demand: f64, supply: u32) -> u32 {
    let d = if demand.is_finite() { demand.max(0.0) } else { 0.0 };
    d.min(supply as f64).floor() as u32
}

/// Demand estimate from a sales record: uncensored sales are taken as the
/// demand; an out-of-stock record is inflated by `r_pct` percent.
pub fn reconstruct_demand(record: &SalesRecord, r_pct: f64) -> f64 {
    reconstruct_from_counts(record.supply, record.sales, r_pct)
}

pub fn reconstruct_from_counts(supply: u32, sales: u32, r_pct: f64) -> f64 {
    if supply == 0 {
        0.0
    } else if sales < supply {
        sales as f64
    } else {
        (1.0 + r_pct / 100.0) * sales as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(supply: u32, sales: u32) -> SalesRecord {
        let d = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        SalesRecord {
            title: "T".into(),
            issue: "I".into(),
            pos: "P".into(),
            supply,
            sales,
            period_start: d,
            period_end: d,
        }
    }

    #[test]
    fn censor_examples() {
        assert_eq!(censor(3.2, 2), 2);
        assert_eq!(censor(0.0, 5), 0);
        assert_eq!(censor(4.7, 10), 4);
    }

    #[test]
    fn reconstruct_examples() {
        assert!((reconstruct_demand(&rec(4, 4), 30.0) - 5.2).abs() < 1e-12);
        assert_eq!(reconstruct_demand(&rec(4, 3), 30.0), 3.0);
        assert_eq!(reconstruct_demand(&rec(0, 0), 30.0), 0.0);
    }

    #[test]
    fn record_validation_rejects_oversold() {
        assert!(rec(4, 5).validate().is_err());
        assert!(rec(4, 4).validate().is_ok());
    }

    #[test]
    fn issue_meta_rejects_single_reference() {
        let d = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let mut meta = IssueMeta {
            title: "T".into(),
            issue: "I".into(),
            price: Decimal::new(5, 0),
            periodicity: Periodicity::Monthly,
            age_bracket: "adult".into(),
            extra_product_id: None,
            references: vec![IssueKey::new("T", "I0")],
            atypical_exclusions: BTreeSet::new(),
            period_start: d,
            period_end: d,
            n_total: 10,
            delta: 2,
        };
        assert!(meta.validate().is_err());
        meta.references.push(IssueKey::new("T", "I1"));
        assert!(meta.validate().is_ok());
        meta.delta = 11;
        assert!(meta.validate().is_err());
    }

    proptest! {
        #[test]
        fn censor_bounded_by_demand_and_supply(d in 0.0f64..1e4, s in 0u32..10_000) {
            let z = censor(d, s);
            prop_assert!(z <= s);
            prop_assert!(z as f64 <= d);
        }

        #[test]
        fn reconstruct_monotone_in_sales(supply in 1u32..200, a in 0u32..200, b in 0u32..200, r in 0.0f64..100.0) {
            let (lo, hi) = (a.min(b).min(supply), a.max(b).min(supply));
            prop_assert!(
                reconstruct_from_counts(supply, lo, r) <= reconstruct_from_counts(supply, hi, r)
            );
        }
    }
}
