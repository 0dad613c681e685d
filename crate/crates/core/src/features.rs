//! Tabular features for one `(issue, POS)` pair as of a date.
//!
//! Only records whose selling period ended strictly before `as_of` are
//! visible. "Observed issues" are issues of the same title with a record at
//! the POS that the target issue does not list as atypical.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::cost::{kpis_from_pairs, CostConfig};
use crate::domain::{reconstruct_demand, IssueKey, IssueMeta, Periodicity, PosId, SalesRecord};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, TimeSlice};

/// Feature names in export order.
pub const FEATURE_NAMES: [&str; 22] = [
    "establishment",
    "pos_revenue_bracket",
    "age_bracket",
    "periodicity",
    "price",
    "extra_product_power",
    "mean_sales_12m",
    "mean_sales_6m",
    "mean_trend",
    "mean_trend_recent",
    "max_trend",
    "oos_rate_trend",
    "mean_ref",
    "max_ref",
    "oos_rate_ref",
    "mean_lag_yearly",
    "max_lag_yearly",
    "oos_rate_lag_yearly",
    "selling_duration",
    "holiday_percentage",
    "week_of_sale_sin",
    "week_of_sale_cos",
];

/// Number of extra-product power buckets.
pub const EXTRA_PRODUCT_BUCKETS: usize = 8;
/// Bucket assigned to products unseen when the ranking was fitted.
pub const UNSEEN_PRODUCT_BUCKET: u8 = 3;
/// Half-width of the window used to match yearly lags.
pub const YEARLY_LAG_WINDOW_DAYS: i64 = 45;

/// `None` is the missing-value sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub establishment: String,
    pub pos_revenue_bracket: u8,
    pub age_bracket: String,
    pub periodicity: Periodicity,
    pub price: f64,
    pub extra_product_power: Option<u8>,
    pub mean_sales_12m: Option<f64>,
    pub mean_sales_6m: Option<f64>,
    pub mean_trend: Option<f64>,
    pub mean_trend_recent: Option<f64>,
    pub max_trend: Option<f64>,
    pub oos_rate_trend: Option<f64>,
    pub mean_ref: Option<f64>,
    pub max_ref: Option<f64>,
    pub oos_rate_ref: Option<f64>,
    pub mean_lag_yearly: Option<f64>,
    pub max_lag_yearly: Option<f64>,
    pub oos_rate_lag_yearly: Option<f64>,
    pub selling_duration: f64,
    pub holiday_percentage: f64,
    pub week_of_sale_sin: f64,
    pub week_of_sale_cos: f64,
}

impl FeatureRow {
    /// Numeric value of a named feature; categoricals return `None`.
    pub fn numeric(&self, name: &str) -> Option<f64> {
        match name {
            "pos_revenue_bracket" => Some(self.pos_revenue_bracket as f64),
            "price" => Some(self.price),
            "extra_product_power" => self.extra_product_power.map(f64::from),
            "mean_sales_12m" => self.mean_sales_12m,
            "mean_sales_6m" => self.mean_sales_6m,
            "mean_trend" => self.mean_trend,
            "mean_trend_recent" => self.mean_trend_recent,
            "max_trend" => self.max_trend,
            "oos_rate_trend" => self.oos_rate_trend,
            "mean_ref" => self.mean_ref,
            "max_ref" => self.max_ref,
            "oos_rate_ref" => self.oos_rate_ref,
            "mean_lag_yearly" => self.mean_lag_yearly,
            "max_lag_yearly" => self.max_lag_yearly,
            "oos_rate_lag_yearly" => self.oos_rate_lag_yearly,
            "selling_duration" => Some(self.selling_duration),
            "holiday_percentage" => Some(self.holiday_percentage),
            "week_of_sale_sin" => Some(self.week_of_sale_sin),
            "week_of_sale_cos" => Some(self.week_of_sale_cos),
            _ => None,
        }
    }

    pub fn categorical(&self, name: &str) -> Option<&str> {
        match name {
            "establishment" => Some(&self.establishment),
            "age_bracket" => Some(&self.age_bracket),
            "periodicity" => Some(self.periodicity.as_str()),
            _ => None,
        }
    }

    pub fn is_categorical(name: &str) -> bool {
        matches!(name, "establishment" | "age_bracket" | "periodicity")
    }

    fn csv_fields(&self) -> Vec<String> {
        FEATURE_NAMES
            .iter()
            .map(|name| match self.categorical(name) {
                Some(c) => c.to_string(),
                None => self.numeric(name).map(|v| v.to_string()).unwrap_or_default(),
            })
            .collect()
    }
}

/// Ordinal power of each extra product, 0 (worst) to 7 (best).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraProductRanking {
    pub ranks: BTreeMap<String, u8>,
    pub fitted_on: NaiveDate,
}

impl ExtraProductRanking {
    pub fn empty(fitted_on: NaiveDate) -> Self {
        ExtraProductRanking {
            ranks: BTreeMap::new(),
            fitted_on,
        }
    }

    pub fn power(&self, product: &str) -> u8 {
        self.ranks.get(product).copied().unwrap_or(UNSEEN_PRODUCT_BUCKET)
    }
}

/// Splits `n` sorted items into [`EXTRA_PRODUCT_BUCKETS`] equal-count buckets,
/// spreading the remainder over the lowest buckets.
pub fn bucket_of_rank(n: usize) -> Vec<u8> {
    let base = n / EXTRA_PRODUCT_BUCKETS;
    let rem = n % EXTRA_PRODUCT_BUCKETS;
    let mut out = Vec::with_capacity(n);
    for b in 0..EXTRA_PRODUCT_BUCKETS {
        let size = base + usize::from(b < rem);
        out.extend(std::iter::repeat_n(b as u8, size));
    }
    out
}

/// Ranks extra products by the average per-copy profit of the train-view
/// issues sold with them.
pub fn rank_extra_products(ds: &Dataset, slice: &TimeSlice, cfg: &CostConfig) -> Result<ExtraProductRanking> {
    let mut by_issue: BTreeMap<IssueKey, Vec<(u32, u32)>> = BTreeMap::new();
    for &i in &slice.train {
        let r = ds.record(i);
        by_issue.entry(r.issue_key()).or_default().push((r.supply, r.sales));
    }
    // product -> (profit, copies sold)
    let mut totals: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for (key, pairs) in &by_issue {
        let meta = ds.issue(key).expect("records resolve to metadata");
        let Some(product) = &meta.extra_product_id else {
            continue;
        };
        let k = kpis_from_pairs(pairs.iter().copied(), meta.price, cfg)?;
        let e = totals.entry(product.clone()).or_insert((0.0, 0));
        e.0 += decimal_to_f64(k.profit);
        e.1 += k.total_sales;
    }
    let mut scored: Vec<(f64, String)> = totals
        .into_iter()
        .map(|(p, (profit, sold))| (profit / sold.max(1) as f64, p))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let buckets = bucket_of_rank(scored.len());
    Ok(ExtraProductRanking {
        ranks: scored.into_iter().zip(buckets).map(|((_, p), b)| (p, b)).collect(),
        fitted_on: slice.cutoff,
    })
}

pub(crate) fn decimal_to_f64(d: rust_decimal::Decimal) -> f64 {
    use rust_decimal::prelude::ToPrimitive;
    d.to_f64().unwrap_or(0.0)
}

/// Mean over supplied records, max over all, OOS share over supplied.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Aggregate {
    mean: Option<f64>,
    max: Option<f64>,
    oos_rate: Option<f64>,
}

fn aggregate<'a>(records: impl IntoIterator<Item = &'a SalesRecord>) -> Aggregate {
    let mut supplied = 0u32;
    let mut sum = 0u64;
    let mut oos = 0u32;
    let mut max: Option<u32> = None;
    for r in records {
        max = Some(max.map_or(r.sales, |m| m.max(r.sales)));
        if r.supply > 0 {
            supplied += 1;
            sum += r.sales as u64;
            oos += u32::from(r.is_oos());
        }
    }
    let (mean, oos_rate) = if supplied > 0 {
        (Some(sum as f64 / supplied as f64), Some(oos as f64 / supplied as f64))
    } else {
        (None, None)
    };
    Aggregate {
        mean,
        max: max.map(f64::from),
        oos_rate,
    }
}

/// The data and fitted encodings feature construction depends on.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub ds: &'a Dataset,
    pub ranking: &'a ExtraProductRanking,
    pub holidays: &'a BTreeSet<NaiveDate>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(ds: &'a Dataset, ranking: &'a ExtraProductRanking, holidays: &'a BTreeSet<NaiveDate>) -> Self {
        FeatureContext { ds, ranking, holidays }
    }

    pub fn build(&self, issue: &IssueKey, pos: &PosId, as_of: NaiveDate) -> Result<FeatureRow> {
        build_features(self.ds, issue, pos, as_of, self.ranking, self.holidays)
    }
}

/// Records of `meta`'s title at `pos` visible at `as_of`, oldest first.
pub fn visible_history<'a>(
    ds: &'a Dataset,
    meta: &IssueMeta,
    pos: &PosId,
    as_of: NaiveDate,
) -> Vec<&'a SalesRecord> {
    ds.history(&meta.title, pos)
        .iter()
        .map(|&i| ds.record(i))
        .filter(|r| r.period_end < as_of)
        .collect()
}

fn is_observed(meta: &IssueMeta, r: &SalesRecord) -> bool {
    !meta.atypical_exclusions.contains(&r.issue_key()) && r.issue != meta.issue
}

/// Observed record whose start is nearest `target` within the lag window;
/// ties go to the earlier record.
fn nearest_lag<'a>(observed: &[&'a SalesRecord], target: NaiveDate) -> Option<&'a SalesRecord> {
    observed
        .iter()
        .map(|r| ((r.period_start - target).num_days().abs(), *r))
        .filter(|(dist, _)| *dist <= YEARLY_LAG_WINDOW_DAYS)
        .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.period_start.cmp(&b.1.period_start)))
        .map(|(_, r)| r)
}

/// 1-year and 2-year lag records of an issue at a POS.
pub fn yearly_lags<'a>(
    ds: &'a Dataset,
    meta: &IssueMeta,
    pos: &PosId,
    as_of: NaiveDate,
) -> (Option<&'a SalesRecord>, Option<&'a SalesRecord>) {
    let observed: Vec<&SalesRecord> = visible_history(ds, meta, pos, as_of)
        .into_iter()
        .filter(|r| is_observed(meta, r))
        .collect();
    let one = nearest_lag(&observed, meta.period_start - chrono::Duration::days(365));
    let two = nearest_lag(&observed, meta.period_start - chrono::Duration::days(730));
    (one, two)
}

pub fn build_features(
    ds: &Dataset,
    issue: &IssueKey,
    pos: &PosId,
    as_of: NaiveDate,
    ranking: &ExtraProductRanking,
    holidays: &BTreeSet<NaiveDate>,
) -> Result<FeatureRow> {
    let meta = ds
        .issue(issue)
        .ok_or_else(|| Error::Reference(format!("no metadata for issue {issue}")))?;
    if as_of > meta.period_start {
        return Err(Error::invalid(
            "as_of",
            format!("{as_of} is after the start of {issue} ({})", meta.period_start),
        ));
    }
    if !(meta.references.is_empty() || meta.references.len() == 2) {
        return Err(Error::invalid("references", "expected 0 or 2 references"));
    }
    let pos_meta = ds
        .pos_meta()
        .get(pos)
        .ok_or_else(|| Error::Reference(format!("unknown pos {pos}")))?;

    let history = visible_history(ds, meta, pos, as_of);

    let lag3 = as_of - Months::new(3);
    let window = |months: u32| {
        let from = as_of - Months::new(3 + months);
        aggregate(
            history
                .iter()
                .copied()
                .filter(|r| r.period_start >= from && r.period_start < lag3),
        )
    };
    let sales_12m = window(12);
    let sales_6m = window(6);

    let observed: Vec<&SalesRecord> = history.iter().copied().filter(|r| is_observed(meta, r)).collect();
    let n = observed.len();
    let trend = aggregate(observed[n.saturating_sub(3)..].iter().copied());
    let trend_recent = aggregate(observed[n.saturating_sub(2)..].iter().copied());

    let refs: Vec<&SalesRecord> = meta
        .references
        .iter()
        .filter_map(|k| ds.record_at(k, pos))
        .filter(|r| r.period_end < as_of)
        .collect();
    let reference = aggregate(refs);

    let one = nearest_lag(&observed, meta.period_start - chrono::Duration::days(365));
    let two = nearest_lag(&observed, meta.period_start - chrono::Duration::days(730));
    let lags = aggregate(one.into_iter().chain(two));

    let days = meta.selling_days();
    let holiday_count = holidays.range(meta.period_start..=meta.period_end).count();
    let week = meta.period_start.iso_week().week() as f64;
    let angle = 2.0 * PI * week / 52.0;

    Ok(FeatureRow {
        establishment: pos_meta.establishment.clone(),
        pos_revenue_bracket: pos_meta.revenue_bracket,
        age_bracket: meta.age_bracket.clone(),
        periodicity: meta.periodicity,
        price: decimal_to_f64(meta.price),
        extra_product_power: meta.extra_product_id.as_deref().map(|p| ranking.power(p)),
        mean_sales_12m: sales_12m.mean,
        mean_sales_6m: sales_6m.mean,
        mean_trend: trend.mean,
        mean_trend_recent: trend_recent.mean,
        max_trend: trend.max,
        oos_rate_trend: trend.oos_rate,
        mean_ref: reference.mean,
        max_ref: reference.max,
        oos_rate_ref: reference.oos_rate,
        mean_lag_yearly: lags.mean,
        max_lag_yearly: lags.max,
        oos_rate_lag_yearly: lags.oos_rate,
        selling_duration: days as f64,
        holiday_percentage: holiday_count as f64 / days as f64,
        week_of_sale_sin: angle.sin(),
        week_of_sale_cos: angle.cos(),
    })
}

/// A feature row bound to the observation it describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub issue: IssueKey,
    pub pos: PosId,
    pub as_of: NaiveDate,
    pub features: FeatureRow,
    /// Reconstructed demand.
    pub target: f64,
    pub supply: u32,
    pub sales: u32,
}

/// Rows for the given record indices. Features are computed as of the
/// issue's start, or the horizon when that comes first.
pub fn build_rows(
    ctx: &FeatureContext<'_>,
    records: &[usize],
    horizon: Option<NaiveDate>,
    r_pct: f64,
) -> Result<Vec<TrainingRow>> {
    records
        .iter()
        .map(|&i| {
            let r = ctx.ds.record(i);
            let as_of = horizon.map_or(r.period_start, |h| h.min(r.period_start));
            let issue = r.issue_key();
            let features = ctx.build(&issue, &r.pos, as_of)?;
            Ok(TrainingRow {
                issue,
                pos: r.pos.clone(),
                as_of,
                features,
                target: reconstruct_demand(r, r_pct),
                supply: r.supply,
                sales: r.sales,
            })
        })
        .collect()
}

/// One row per train-view record, features as of the issue's start,
/// target the reconstructed demand.
pub fn build_training_matrix(
    ctx: &FeatureContext<'_>,
    slice: &TimeSlice,
    r_pct: f64,
) -> Result<Vec<TrainingRow>> {
    if slice.train.is_empty() {
        return Err(Error::Empty("train view is empty".into()));
    }
    build_rows(ctx, &slice.train, None, r_pct)
}

pub fn write_feature_csv(rows: &[TrainingRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["title", "issue", "pos"];
    header.extend(FEATURE_NAMES);
    header.push("target");
    w.write_record(&header)?;
    for row in rows {
        let mut fields = vec![
            row.issue.title.0.clone(),
            row.issue.issue.0.clone(),
            row.pos.0.clone(),
        ];
        fields.extend(row.features.csv_fields());
        fields.push(row.target.to_string());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<features>"), e))
}
