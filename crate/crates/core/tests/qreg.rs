mod common;

use chrono::Duration;
use common::*;
use plateopt::domain::PosId;
use plateopt::ingest::Dataset;
use plateopt::qreg::{
    fit_gbt, monotone_rearrange, pinball, pinball_negative_gradient, BaselineModel, FeatureSet, GbtParams,
    TargetTransform,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

/// Written from the loss definition, independently of the library.
fn reference_pinball(alpha: f64, d: f64, d_hat: f64) -> f64 {
    let u = d - d_hat;
    if u >= 0.0 {
        alpha * u
    } else {
        (alpha - 1.0) * u
    }
}

#[test]
fn pinball_matches_reference_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100_000 {
        let alpha: f64 = rng.random_range(0.001..0.999);
        let d: f64 = rng.random_range(0.0..50.0);
        let d_hat: f64 = rng.random_range(0.0..50.0);
        let (a, b) = (pinball(alpha, d, d_hat), reference_pinball(alpha, d, d_hat));
        assert!((a - b).abs() <= 1e-12, "alpha {alpha} d {d} d_hat {d_hat}: {a} vs {b}");
    }
}

#[test]
fn pinball_hand_values() {
    assert_eq!(pinball(0.75, 2.0, 1.0), 0.75);
    assert_eq!(pinball(0.75, 1.0, 2.0), 0.25);
    assert_eq!(pinball(0.3, 4.0, 4.0), 0.0);
}

proptest! {
    #[test]
    fn median_pinball_is_half_absolute_error(x in 0.0f64..100.0, y in 0.0f64..100.0) {
        prop_assert!((pinball(0.5, x, y) - (x - y).abs() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_difference(alpha in 0.01f64..0.99, d in 0.0f64..20.0, d_hat in 0.0f64..20.0) {
        prop_assume!((d - d_hat).abs() > 1e-3);
        let h = 1e-6;
        // derivative of the loss in the residual d - d_hat
        let fd = (pinball(alpha, d + h, d_hat) - pinball(alpha, d - h, d_hat)) / (2.0 * h);
        prop_assert!((pinball_negative_gradient(alpha, d - d_hat) - fd).abs() < 1e-6);
    }

    #[test]
    fn rearrangement_is_sorted_and_keeps_values(values in prop::collection::vec(0.0f64..10.0, 1..12)) {
        let grid: Vec<(f64, f64)> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (0.05 + 0.9 * i as f64 / values.len() as f64, v))
            .collect();
        let out = monotone_rearrange(&grid);
        prop_assert!(out.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        let mut before = values.clone();
        before.sort_by(f64::total_cmp);
        let after: Vec<f64> = out.iter().map(|p| p.1).collect();
        prop_assert_eq!(before, after);
    }
}

#[test]
fn exponential_targets_recover_the_analytic_quantile() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<_> = (0..10_000)
        .map(|i| {
            let noise: f64 = rng.random_range(0.0..1.0);
            let y: f64 = Exp1.sample(&mut rng);
            training_row(i, plain_row(noise), y)
        })
        .collect();
    let params = GbtParams {
        n_trees: 50,
        transform: TargetTransform::Identity,
        ..GbtParams::default()
    };
    let m = fit_gbt(&rows, 0.9, &params, &FeatureSet::all()).unwrap();
    let mean = rows.iter().map(|r| m.predict(&r.features)).sum::<f64>() / rows.len() as f64;
    let truth = 10f64.ln();
    assert!((mean - truth).abs() / truth < 0.05, "mean prediction {mean}");
}

#[test]
fn log_scale_predictions_are_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<_> = (0..500)
        .map(|i| {
            let x: f64 = rng.random_range(0.0..5.0);
            training_row(i, plain_row(x), if x < 2.5 { 0.0 } else { x })
        })
        .collect();
    let m = fit_gbt(&rows, 0.1, &GbtParams::default(), &FeatureSet::all()).unwrap();
    for x in [-100.0, 0.0, 1.0, 4.0, 1e9] {
        assert!(m.predict(&plain_row(x)) >= 0.0);
    }
}

#[test]
fn identical_inputs_serialize_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<_> = (0..800)
        .map(|i| {
            let x: f64 = rng.random_range(0.0..5.0);
            training_row(i, plain_row(x), x + rng.random_range(0.0..1.0))
        })
        .collect();
    let params = GbtParams {
        n_trees: 20,
        subsample: 0.7,
        ..GbtParams::default()
    };
    let a = fit_gbt(&rows, 0.8, &params, &FeatureSet::all()).unwrap().to_json().unwrap();
    let b = fit_gbt(&rows, 0.8, &params, &FeatureSet::all()).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}

fn history(sales: &[u32]) -> (Dataset, plateopt::domain::IssueKey) {
    let metas: Vec<_> = (0..=sales.len())
        .map(|i| {
            let start = date("2024-01-01") + Duration::days(30 * i as i64);
            meta("T1", &format!("{:03}", i + 1), &start.to_string(), &(start + Duration::days(27)).to_string())
        })
        .collect();
    let records = sales.iter().zip(&metas).map(|(&z, m)| record(m, "P1", 9, z)).collect();
    let target = metas[sales.len()].key();
    (Dataset::new(records, [pos("P1")], metas).unwrap(), target)
}

#[test]
fn naive_takes_the_latest_sales() {
    let (ds, target) = history(&[2, 3, 5]);
    let as_of = ds.issue(&target).unwrap().period_start;
    let p = PosId::new("P1");
    assert_eq!(BaselineModel::Naive.predict(&ds, &target, &p, as_of).unwrap(), 5.0);
    assert_eq!(BaselineModel::SeasonalNaive.predict(&ds, &target, &p, as_of).unwrap(), 5.0);
    assert_eq!(BaselineModel::Naive.predict(&ds, &target, &PosId::new("P7"), as_of).unwrap(), 0.0);
}

#[test]
fn seasonal_naive_takes_the_yearly_lag() {
    let sales: Vec<u32> = (0..13).map(|i| i % 7).collect();
    let (ds, target) = history(&sales);
    let m = ds.issue(&target).unwrap();
    let a_year_ago = ds
        .issue_meta()
        .values()
        .min_by_key(|o| (o.period_start - (m.period_start - Duration::days(365))).num_days().abs())
        .unwrap()
        .key();
    let expected = ds.record_at(&a_year_ago, &PosId::new("P1")).unwrap().sales as f64;
    let got = BaselineModel::SeasonalNaive
        .predict(&ds, &target, &PosId::new("P1"), m.period_start)
        .unwrap();
    assert_eq!(got, expected);
    assert_ne!(got, *sales.last().unwrap() as f64);
}
