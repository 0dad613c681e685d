//! Synthetic retail network with known demand laws.
//!
//! Demand of each `(issue, POS)` is negative binomial (a Gamma-Poisson
//! mixture) whose mean multiplies a long-tailed POS base rate, a POS/title
//! affinity, title popularity, a yearly season, holidays, the extra product
//! of the issue, an issue effect and a slow trend. Historical supply is
//! drawn so that each row runs out of stock with a jittered target
//! probability, which makes the recorded plan deliberately misallocated.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Duration, Months, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Poisson};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::domain::{censor, IssueId, IssueKey, IssueMeta, Periodicity, PosId, PosMeta, SalesRecord, TitleId};
use crate::error::{Error, Result};
use crate::ingest::{write_holidays, Dataset, HOLIDAYS_FILE};

pub const GROUNDTRUTH_FILE: &str = "groundtruth.jsonl";

const ESTABLISHMENTS: [(&str, f64); 5] = [
    ("kiosk", 1.15),
    ("supermarket", 1.0),
    ("station", 1.25),
    ("bookshop", 0.9),
    ("gas_station", 0.7),
];
const AGE_BRACKETS: [&str; 4] = ["children", "teen", "adult", "senior"];
const PRICES_CENTS: [i64; 5] = [250, 350, 490, 590, 690];
/// Month/day pairs observed as holidays every year.
const HOLIDAY_DAYS: [(u32, u32); 9] = [(1, 1), (5, 1), (7, 14), (8, 15), (11, 1), (12, 24), (12, 25), (12, 26), (12, 31)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub n_pos: usize,
    pub n_titles: usize,
    /// Cycled over titles.
    pub periodicities: Vec<Periodicity>,
    pub start: NaiveDate,
    pub weeks: u32,
    /// Share of the network each title is distributed to.
    pub plate_fraction: f64,
    /// Median and log-sd of the per-POS base demand.
    pub pos_base_median: f64,
    pub pos_base_sigma: f64,
    pub affinity_sigma: f64,
    pub title_pop_sigma: f64,
    pub issue_effect_sigma: f64,
    /// Negative-binomial shape; smaller is more overdispersed.
    pub dispersion: f64,
    pub season_amplitude: f64,
    pub season_peak_week: u32,
    /// Demand multiplier at a selling period made only of holidays.
    pub holiday_uplift: f64,
    pub n_extra_products: usize,
    pub extra_product_share: f64,
    /// Uplift of the weakest and the strongest extra product.
    pub extra_uplift_min: f64,
    pub extra_uplift_max: f64,
    pub atypical_share: f64,
    pub atypical_multiplier: f64,
    /// Multiplicative drift per year.
    pub annual_trend: f64,
    pub target_oos_rate: f64,
    /// Half-width of the uniform jitter around the target OOS probability.
    pub oos_jitter: f64,
    /// Constraint tolerance as a share of the expected issue demand.
    pub delta_frac: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 42,
            n_pos: 1500,
            n_titles: 6,
            periodicities: vec![
                Periodicity::Monthly,
                Periodicity::Weekly,
                Periodicity::Monthly,
                Periodicity::Bimonthly,
                Periodicity::Monthly,
                Periodicity::Quarterly,
            ],
            start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            weeks: 130,
            plate_fraction: 0.8,
            pos_base_median: 2.0,
            pos_base_sigma: 0.8,
            affinity_sigma: 0.3,
            title_pop_sigma: 0.4,
            issue_effect_sigma: 0.15,
            dispersion: 2.0,
            season_amplitude: 0.2,
            season_peak_week: 50,
            holiday_uplift: 0.3,
            n_extra_products: 12,
            extra_product_share: 0.5,
            extra_uplift_min: -0.05,
            extra_uplift_max: 0.10,
            atypical_share: 0.03,
            atypical_multiplier: 2.5,
            annual_trend: -0.05,
            target_oos_rate: 0.3,
            oos_jitter: 0.25,
            delta_frac: 0.1,
        }
    }
}

impl GeneratorSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: GeneratorSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_pos", self.n_pos as f64),
            ("n_titles", self.n_titles as f64),
            ("weeks", self.weeks as f64),
            ("pos_base_median", self.pos_base_median),
            ("dispersion", self.dispersion),
            ("atypical_multiplier", self.atypical_multiplier),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        let non_negative = [
            ("pos_base_sigma", self.pos_base_sigma),
            ("affinity_sigma", self.affinity_sigma),
            ("title_pop_sigma", self.title_pop_sigma),
            ("issue_effect_sigma", self.issue_effect_sigma),
            ("season_amplitude", self.season_amplitude),
            ("holiday_uplift", self.holiday_uplift),
            ("oos_jitter", self.oos_jitter),
            ("delta_frac", self.delta_frac),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        let unit = [
            ("plate_fraction", self.plate_fraction),
            ("extra_product_share", self.extra_product_share),
            ("atypical_share", self.atypical_share),
            ("target_oos_rate", self.target_oos_rate),
            ("delta_frac", self.delta_frac),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        if self.plate_fraction == 0.0 {
            return Err(Error::invalid("plate_fraction", "must be positive"));
        }
        if self.season_amplitude >= 1.0 {
            return Err(Error::invalid("season_amplitude", "must be below 1"));
        }
        if self.periodicities.is_empty() {
            return Err(Error::invalid("periodicities", "must not be empty"));
        }
        if self.extra_uplift_min <= -1.0 || self.extra_uplift_max < self.extra_uplift_min {
            return Err(Error::invalid("extra_uplift_max", "uplifts must satisfy -1 < min <= max"));
        }
        if self.annual_trend <= -1.0 {
            return Err(Error::invalid("annual_trend", "must be above -1"));
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(7 * self.weeks as i64)
    }

    /// `1 + amplitude * cos(2 pi (week - peak) / 52)` over the ISO week.
    pub fn season(&self, date: NaiveDate) -> f64 {
        let w = date.iso_week().week() as f64;
        1.0 + self.season_amplitude * (2.0 * PI * (w - self.season_peak_week as f64) / 52.0).cos()
    }
}

/// Latent demand law and realized demand of one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub title: TitleId,
    pub issue: IssueId,
    pub pos: PosId,
    pub mean: f64,
    pub demand: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dispersion: f64,
    rows: Vec<TruthRow>,
    index: HashMap<(IssueKey, PosId), usize>,
}

impl GroundTruth {
    pub fn new(dispersion: f64, rows: Vec<TruthRow>) -> Self {
        let index = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ((IssueKey::new(r.title.as_str(), r.issue.as_str()), r.pos.clone()), i))
            .collect();
        GroundTruth { dispersion, rows, index }
    }

    pub fn rows(&self) -> &[TruthRow] {
        &self.rows
    }

    pub fn get(&self, issue: &IssueKey, pos: &PosId) -> Option<&TruthRow> {
        self.index.get(&(issue.clone(), pos.clone())).map(|&i| &self.rows[i])
    }

    /// Analytic alpha-quantile of a row's demand law.
    pub fn true_quantile(&self, issue: &IssueKey, pos: &PosId, alpha: f64) -> Result<u32> {
        let row = self
            .get(issue, pos)
            .ok_or_else(|| Error::Reference(format!("no ground truth for {issue}@{pos}")))?;
        Ok(nb_quantile(row.mean, self.dispersion, alpha))
    }

    /// Sum of demand means over the rows of an issue.
    pub fn expected_issue_demand(&self, issue: &IssueKey) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.title == issue.title && r.issue == issue.issue)
            .map(|r| r.mean)
            .sum()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "{}", serde_json::json!({ "dispersion": self.dispersion })).map_err(|e| Error::io(path, e))?;
        for r in &self.rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`GroundTruth::write_jsonl`]: a header line with the
    /// dispersion followed by one row per line.
    pub fn load_jsonl(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            dispersion: f64,
        }
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Empty(format!("{} is empty", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let header: Header = serde_json::from_str(&first)?;
        let mut rows = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                rows.push(serde_json::from_str(&line)?);
            }
        }
        Ok(GroundTruth::new(header.dispersion, rows))
    }
}

/// Negative-binomial probabilities `P(D = k)` for `k = 0, 1, ...`, mean `mean`, shape `r`.
pub struct NbPmf {
    k: u32,
    p: f64,
    r: f64,
    ratio: f64,
}

impl NbPmf {
    pub fn new(mean: f64, r: f64) -> Self {
        let mean = mean.max(0.0);
        NbPmf {
            k: 0,
            p: (r / (r + mean)).powf(r),
            r,
            ratio: mean / (r + mean),
        }
    }
}

impl Iterator for NbPmf {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let out = self.p;
        self.p *= (self.k as f64 + self.r) / (self.k as f64 + 1.0) * self.ratio;
        self.k += 1;
        Some(out)
    }
}

/// Smallest `k` with `P(D <= k) >= alpha`.
pub fn nb_quantile(mean: f64, r: f64, alpha: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let mut cdf = 0.0;
    for (k, p) in NbPmf::new(mean, r).enumerate() {
        cdf += p;
        if cdf >= alpha - 1e-12 || (p == 0.0 && k as f64 > mean) {
            return k as u32;
        }
    }
    unreachable!("pmf iterator is infinite")
}

/// Supply that runs out with probability `tau` on average: the largest
/// `s >= 1` with `P(D >= s) >= tau`, randomized with `s + 1` to hit `tau`.
fn supply_for_oos(mean: f64, r: f64, tau: f64, u: f64) -> u32 {
    // Walk s upwards keeping hi = P(D >= s) and lo = P(D >= s + 1).
    let mut pmf = NbPmf::new(mean, r);
    let mut s = 0u32;
    let mut hi = 1.0;
    let mut lo = hi - pmf.next().expect("infinite");
    while lo >= tau && lo > 0.0 {
        s += 1;
        hi = lo;
        lo -= pmf.next().expect("infinite");
    }
    if s == 0 {
        return 1;
    }
    let lo = lo.max(0.0);
    let p = (tau - lo) / (hi - lo).max(f64::MIN_POSITIVE);
    if u < p {
        s
    } else {
        s + 1
    }
}

fn draw_demand(rng: &mut ChaCha8Rng, mean: f64, r: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let lambda = Gamma::new(r, mean / r).expect("positive parameters").sample(rng);
    if lambda <= 0.0 || !lambda.is_finite() {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as u32).unwrap_or(0)
}

fn lognormal(rng: &mut ChaCha8Rng, median: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return median;
    }
    LogNormal::new(median.ln(), sigma).expect("finite parameters").sample(rng)
}

pub fn holidays_between(from: NaiveDate, to: NaiveDate) -> BTreeSet<NaiveDate> {
    (from.year()..=to.year())
        .flat_map(|y| HOLIDAY_DAYS.iter().filter_map(move |&(m, d)| NaiveDate::from_ymd_opt(y, m, d)))
        .filter(|d| *d >= from && *d <= to)
        .collect()
}

struct Title {
    id: TitleId,
    periodicity: Periodicity,
    popularity: f64,
    price: Decimal,
    age_bracket: &'static str,
    plate: Vec<usize>,
}

struct PlannedIssue {
    meta: IssueMeta,
    effect: f64,
    atypical: bool,
    extra: Option<usize>,
}

/// A generated network: the dataset, its holidays and the ground truth.
pub struct Generated {
    pub dataset: Dataset,
    pub holidays: BTreeSet<NaiveDate>,
    pub truth: GroundTruth,
}

impl Generated {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.dataset.write_dir(dir)?;
        write_holidays(&dir.join(HOLIDAYS_FILE), &self.holidays)?;
        self.truth.write_jsonl(&dir.join(GROUNDTRUTH_FILE))
    }
}

fn issue_periods(periodicity: Periodicity, first: NaiveDate, end: NaiveDate) -> Vec<(NaiveDate, NaiveDate)> {
    let mut out = Vec::new();
    let mut start = first;
    while start < end {
        let next = match periodicity {
            Periodicity::Weekly => start + Duration::days(7),
            Periodicity::Monthly => start + Months::new(1),
            Periodicity::Bimonthly => start + Months::new(2),
            Periodicity::Quarterly => start + Months::new(3),
            Periodicity::Special => start + Months::new(4),
        };
        out.push((start, next - Duration::days(1)));
        start = next;
    }
    out
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let end = spec.end();

    // Network.
    let mut pos_base = Vec::with_capacity(spec.n_pos);
    let mut pos_est = Vec::with_capacity(spec.n_pos);
    for _ in 0..spec.n_pos {
        let est = rng.random_range(0..ESTABLISHMENTS.len());
        pos_est.push(est);
        pos_base.push(lognormal(&mut rng, spec.pos_base_median, spec.pos_base_sigma) * ESTABLISHMENTS[est].1);
    }
    let mut sorted_base: Vec<f64> = pos_base.clone();
    sorted_base.sort_by(f64::total_cmp);
    let pos_ids: Vec<PosId> = (0..spec.n_pos).map(|i| PosId::new(format!("P{:05}", i + 1))).collect();
    let pos_meta: Vec<PosMeta> = (0..spec.n_pos)
        .map(|i| {
            let rank = sorted_base.partition_point(|&b| b < pos_base[i]);
            PosMeta {
                pos: pos_ids[i].clone(),
                establishment: ESTABLISHMENTS[pos_est[i]].0.to_string(),
                revenue_bracket: ((rank * 10) / spec.n_pos).min(9) as u8,
            }
        })
        .collect();

    // Extra products, strongest uplift last before shuffling their ids.
    let n_extra = spec.n_extra_products;
    let uplift: Vec<f64> = (0..n_extra)
        .map(|k| {
            let t = if n_extra > 1 { k as f64 / (n_extra - 1) as f64 } else { 1.0 };
            1.0 + spec.extra_uplift_min + t * (spec.extra_uplift_max - spec.extra_uplift_min)
        })
        .collect();
    let mut product_ids: Vec<usize> = (0..n_extra).collect();
    for i in (1..n_extra).rev() {
        let j = rng.random_range(0..=i);
        product_ids.swap(i, j);
    }

    // Titles.
    let mut titles = Vec::with_capacity(spec.n_titles);
    for t in 0..spec.n_titles {
        let periodicity = spec.periodicities[t % spec.periodicities.len()];
        let popularity = lognormal(&mut rng, 1.0, spec.title_pop_sigma);
        let price = Decimal::new(PRICES_CENTS[rng.random_range(0..PRICES_CENTS.len())], 2);
        let age_bracket = AGE_BRACKETS[rng.random_range(0..AGE_BRACKETS.len())];
        let plate: Vec<usize> = (0..spec.n_pos)
            .filter(|_| rng.random::<f64>() < spec.plate_fraction)
            .collect();
        titles.push(Title {
            id: TitleId::new(format!("T{:02}", t + 1)),
            periodicity,
            popularity,
            price,
            age_bracket,
            plate,
        });
    }
    let affinity: Vec<Vec<f64>> = titles
        .iter()
        .map(|_| (0..spec.n_pos).map(|_| lognormal(&mut rng, 1.0, spec.affinity_sigma)).collect())
        .collect();

    let holidays = holidays_between(spec.start, end + Duration::days(130));

    let mut issue_meta = Vec::new();
    let mut records = Vec::new();
    let mut truth = Vec::new();

    for (t, title) in titles.iter().enumerate() {
        // Persistent over- or under-supply of each POS by the historical planner.
        let tau: Vec<f64> = (0..spec.n_pos)
            .map(|_| (spec.target_oos_rate + spec.oos_jitter * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.01, 0.99))
            .collect();
        let offset = rng.random_range(0..title.periodicity.nominal_days().min(28));
        let first = spec.start + Duration::days(offset);
        let mut planned: Vec<PlannedIssue> = Vec::new();
        for (n, (ps, pe)) in issue_periods(title.periodicity, first, end).into_iter().enumerate() {
            let extra = (n_extra > 0 && rng.random::<f64>() < spec.extra_product_share)
                .then(|| rng.random_range(0..n_extra));
            let atypical = rng.random::<f64>() < spec.atypical_share;
            let mut effect = lognormal(&mut rng, 1.0, spec.issue_effect_sigma);
            if atypical {
                effect *= spec.atypical_multiplier;
            }
            let key_effect = effect.ln() + extra.map_or(0.0, |e| uplift[e].ln());
            // Two past, non-atypical issues with the closest issue-level effect.
            let mut candidates: Vec<(f64, usize)> = planned
                .iter()
                .enumerate()
                .filter(|(_, p)| p.meta.period_end < ps && !p.atypical)
                .map(|(i, p)| {
                    let k = p.effect.ln() + p.extra.map_or(0.0, |e| uplift[e].ln());
                    ((k - key_effect).abs(), i)
                })
                .collect();
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            let references: Vec<IssueKey> = if candidates.len() >= 2 {
                candidates[..2].iter().map(|&(_, i)| planned[i].meta.key()).collect()
            } else {
                Vec::new()
            };
            let atypical_exclusions: BTreeSet<IssueKey> = planned
                .iter()
                .filter(|p| p.atypical && (ps - p.meta.period_start).num_days() <= 365)
                .map(|p| p.meta.key())
                .collect();
            let price = if extra.is_some() { title.price + Decimal::ONE } else { title.price };
            planned.push(PlannedIssue {
                meta: IssueMeta {
                    title: title.id.clone(),
                    issue: IssueId::new(format!("{:04}", n + 1)),
                    price,
                    periodicity: title.periodicity,
                    age_bracket: title.age_bracket.to_string(),
                    extra_product_id: extra.map(|e| format!("X{:02}", product_ids[e] + 1)),
                    references,
                    atypical_exclusions,
                    period_start: ps,
                    period_end: pe,
                    n_total: 1,
                    delta: 0,
                },
                effect,
                atypical,
                extra,
            });
        }

        for p in &mut planned {
            let meta = &p.meta;
            let days = meta.selling_days() as f64;
            let holiday_share = holidays.range(meta.period_start..=meta.period_end).count() as f64 / days;
            let years = (meta.period_start - spec.start).num_days() as f64 / 365.25;
            let issue_scale = title.popularity
                * spec.season(meta.period_start)
                * (1.0 + spec.holiday_uplift * holiday_share)
                * p.extra.map_or(1.0, |e| uplift[e])
                * p.effect
                * (1.0 + spec.annual_trend).powf(years);
            let mut expected = 0.0;
            for &i in &title.plate {
                let mean = pos_base[i] * affinity[t][i] * issue_scale;
                expected += mean;
                let demand = draw_demand(&mut rng, mean, spec.dispersion);
                let supply = supply_for_oos(mean, spec.dispersion, tau[i], rng.random::<f64>());
                records.push(SalesRecord {
                    title: meta.title.clone(),
                    issue: meta.issue.clone(),
                    pos: pos_ids[i].clone(),
                    supply,
                    sales: censor(demand as f64, supply),
                    period_start: meta.period_start,
                    period_end: meta.period_end,
                });
                truth.push(TruthRow {
                    title: meta.title.clone(),
                    issue: meta.issue.clone(),
                    pos: pos_ids[i].clone(),
                    mean,
                    demand,
                });
            }
            let n_total = (expected.round() as u32).max(1);
            p.meta.n_total = n_total;
            p.meta.delta = ((n_total as f64 * spec.delta_frac).round() as u32).min(n_total);
        }
        issue_meta.extend(planned.into_iter().map(|p| p.meta));
    }

    let dataset = Dataset::new(records, pos_meta, issue_meta)?;
    Ok(Generated {
        dataset,
        holidays,
        truth: GroundTruth::new(spec.dispersion, truth),
    })
}
