//! Browser demo over the planning library. Each exported function takes
//! plain numbers and returns a JSON string for the page to plot.

use plateopt::cost::CostConfig;
use plateopt::domain::IssueKey;
use plateopt::gcqr::{conformal_quantile, GroupScheme};
use plateopt::optimizer::{
    enumerate_scenarios, replay_all, select_optimal, AlphaGrid, ReplayIssue, ReplayRow, SelectionCriteria,
    DEFAULT_SCENARIO_BUDGET,
};
use plateopt::qreg::pinball;
use plateopt::synth::nb_quantile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Negative-binomial shape of every simulated demand.
pub const SHAPE: f64 = 2.0;

fn draw(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    nb_quantile(mean, SHAPE, rng.random::<f64>())
}

/// Means spread log-uniformly over `[lo, hi]`.
fn random_mean(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo output serializes")
}

#[derive(Debug, Serialize)]
pub struct PinballCurve {
    pub alpha: f64,
    /// `(prediction, mean pinball loss)` pairs.
    pub points: Vec<(f64, f64)>,
    pub argmin: f64,
    pub sample_quantile: f64,
    pub true_quantile: u32,
}

/// Mean pinball loss of constant predictions over a demand sample.
pub fn pinball_curve_data(alpha: f64, mean: f64, n_samples: usize, seed: u64) -> PinballCurve {
    let alpha = alpha.clamp(0.01, 0.99);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample: Vec<f64> = (0..n_samples.max(1)).map(|_| draw(&mut rng, mean) as f64).collect();
    let hi = (nb_quantile(mean, SHAPE, 0.995) as f64).max(1.0) * 1.2;
    let steps = 240;
    let points: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let x = hi * i as f64 / steps as f64;
            let loss = sample.iter().map(|&d| pinball(alpha, d, x)).sum::<f64>() / sample.len() as f64;
            (x, loss)
        })
        .collect();
    let argmin = points
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0.0, |p| p.0);
    sample.sort_by(f64::total_cmp);
    let k = ((sample.len() as f64 * alpha).ceil() as usize).clamp(1, sample.len());
    PinballCurve {
        alpha,
        points,
        argmin,
        sample_quantile: sample[k - 1],
        true_quantile: nb_quantile(mean, SHAPE, alpha),
    }
}

#[wasm_bindgen]
pub fn pinball_curve(alpha: f64, mean: f64, n_samples: usize, seed: u32) -> String {
    to_json(&pinball_curve_data(alpha, mean, n_samples, seed as u64))
}

#[derive(Debug, Serialize)]
pub struct GroupCoverage {
    pub group: String,
    pub n_cal: usize,
    pub n_test: usize,
    pub correction: f64,
    pub raw: f64,
    pub calibrated: f64,
}

#[derive(Debug, Serialize)]
pub struct Coverage {
    pub alpha: f64,
    pub raw: f64,
    pub calibrated: f64,
    pub groups: Vec<GroupCoverage>,
}

/// A forecaster scaled by `bias` off the true quantile, corrected per
/// sales group on a calibration sample and scored on a fresh one.
pub fn conformal_coverage_data(alpha: f64, bias: f64, n_cal: usize, n_test: usize, seed: u64) -> Coverage {
    let alpha = alpha.clamp(0.01, 0.99);
    let scheme = GroupScheme::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |rng: &mut ChaCha8Rng| {
        let mean = random_mean(rng, 0.3, 30.0);
        let raw = bias * nb_quantile(mean, SHAPE, alpha) as f64;
        (scheme.group_of(Some(mean)), raw, draw(rng, mean) as f64)
    };
    let cal: Vec<(usize, f64, f64)> = (0..n_cal.max(1)).map(|_| row(&mut rng)).collect();
    let test: Vec<(usize, f64, f64)> = (0..n_test.max(1)).map(|_| row(&mut rng)).collect();

    let mut pooled: Vec<f64> = cal.iter().map(|r| r.2 - r.1).collect();
    let pooled_q = conformal_quantile(&mut pooled, alpha).unwrap_or(0.0);
    let mut groups = Vec::new();
    let (mut raw_hits, mut cal_hits) = (0usize, 0usize);
    for g in 0..scheme.len() {
        let mut resid: Vec<f64> = cal.iter().filter(|r| r.0 == g).map(|r| r.2 - r.1).collect();
        let n_cal = resid.len();
        let q = conformal_quantile(&mut resid, alpha).unwrap_or(pooled_q);
        let rows: Vec<_> = test.iter().filter(|r| r.0 == g).collect();
        let raw = rows.iter().filter(|r| r.2 <= r.1).count();
        let calibrated = rows.iter().filter(|r| r.2 <= r.1 + q).count();
        raw_hits += raw;
        cal_hits += calibrated;
        let share = |k: usize| if rows.is_empty() { f64::NAN } else { k as f64 / rows.len() as f64 };
        groups.push(GroupCoverage {
            group: scheme.label(g),
            n_cal,
            n_test: rows.len(),
            correction: q,
            raw: share(raw),
            calibrated: share(calibrated),
        });
    }
    Coverage {
        alpha,
        raw: raw_hits as f64 / test.len() as f64,
        calibrated: cal_hits as f64 / test.len() as f64,
        groups,
    }
}

#[wasm_bindgen]
pub fn conformal_coverage(alpha: f64, bias: f64, n_cal: usize, n_test: usize, seed: u32) -> String {
    to_json(&conformal_coverage_data(alpha, bias, n_cal, n_test, seed as u64))
}

#[derive(Debug, Serialize)]
pub struct FrontierPoint {
    pub alphas: Vec<f64>,
    pub supply: u64,
    pub profit: f64,
    pub oos: u32,
    pub optimal: bool,
}

#[derive(Debug, Serialize)]
pub struct Frontier {
    pub points: Vec<FrontierPoint>,
    pub reference_supply: u64,
    pub reference_profit: f64,
    pub reference_oos: u32,
    pub n_total: u32,
    pub max_kpi_efficiency: usize,
    pub distribution: usize,
    pub pareto_fallback: bool,
}

/// Every monotone scenario replayed on simulated issues whose historical
/// supply is the 0.8 quantile, with perfect quantile forecasts.
pub fn scenario_frontier_data(n_pos: usize, n_issues: usize, price: f64, total_factor: f64, seed: u64) -> Frontier {
    let grid = AlphaGrid::default();
    let scheme = GroupScheme::default();
    let cost = CostConfig::default();
    let price = Decimal::try_from(price.clamp(0.5, 100.0)).unwrap_or(Decimal::ONE).round_dp(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..n_pos.max(1)).map(|_| random_mean(&mut rng, 0.3, 12.0)).collect();
    let issues: Vec<ReplayIssue> = (0..n_issues.max(1))
        .map(|i| ReplayIssue {
            issue: IssueKey::new("demo", i.to_string()),
            price,
            rows: means
                .iter()
                .map(|&m| {
                    let supply = nb_quantile(m, SHAPE, 0.8).max(1);
                    ReplayRow {
                        group: scheme.group_of(Some(m)),
                        preds: grid.alphas.iter().map(|&a| nb_quantile(m, SHAPE, a) as f64).collect(),
                        supply,
                        sales: draw(&mut rng, m).min(supply),
                    }
                })
                .collect(),
        })
        .collect();
    let scenarios = enumerate_scenarios(&grid, scheme.len(), DEFAULT_SCENARIO_BUDGET);
    let scores = replay_all(&scenarios, &grid, &issues, &cost).expect("simulated issues are non-empty");
    let n_total = (means.iter().sum::<f64>() * n_issues.max(1) as f64 * total_factor).round().max(1.0) as u32;
    let sel = select_optimal(&scores, n_total, &SelectionCriteria::default()).expect("scores are non-empty");
    let reference = &scores[0].reference_kpis;
    Frontier {
        points: scores
            .iter()
            .enumerate()
            .map(|(i, s)| FrontierPoint {
                alphas: s.scenario.alphas.clone(),
                supply: s.kpis.total_supply,
                profit: s.kpis.profit.to_f64().unwrap_or(0.0),
                oos: s.kpis.oos_count,
                optimal: sel.optimal.contains(&i),
            })
            .collect(),
        reference_supply: reference.total_supply,
        reference_profit: reference.profit.to_f64().unwrap_or(0.0),
        reference_oos: reference.oos_count,
        n_total,
        max_kpi_efficiency: sel.max_kpi_efficiency,
        distribution: sel.distribution,
        pareto_fallback: sel.pareto_fallback,
    }
}

#[wasm_bindgen]
pub fn scenario_frontier(n_pos: usize, n_issues: usize, price: f64, total_factor: f64, seed: u32) -> String {
    to_json(&scenario_frontier_data(n_pos, n_issues, price, total_factor, seed as u64))
}
