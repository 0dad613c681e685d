mod common;

use common::*;
use plateopt::gcqr::{conformal_quantile, CalObservation, CalibratedQuantileModel, CorrectionTable, GroupScheme};
use plateopt::qreg::{fit_gbt, FeatureSet, GbtParams, TargetTransform};
use plateopt::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

#[test]
fn order_statistic_ranks() {
    let values: Vec<f64> = (1..=9).map(f64::from).collect();
    // ceil(10 * 0.5) = 5
    assert_eq!(conformal_quantile(&mut values.clone(), 0.5), Some(5.0));
    // ceil(10 * 0.9) = 9
    assert_eq!(conformal_quantile(&mut values.clone(), 0.9), Some(9.0));
    // ceil(10 * 0.95) = 10 is clamped to the maximum
    assert_eq!(conformal_quantile(&mut values.clone(), 0.95), Some(9.0));
    let mut shuffled = vec![4.0, -1.0, 7.0, 0.5];
    // ceil(5 * 0.3) = 2
    assert_eq!(conformal_quantile(&mut shuffled, 0.3), Some(0.5));
    assert_eq!(conformal_quantile(&mut [], 0.5), None);
}

fn obs(mean: Option<f64>, demand: f64, raw: f64) -> CalObservation {
    CalObservation {
        mean_sales_12m: mean,
        demand,
        raw: vec![raw],
    }
}

#[test]
fn corrections_are_per_group() {
    let scheme = GroupScheme {
        boundaries: vec![0.0, 2.0, 10.0],
    };
    let mut o = Vec::new();
    for e in 1..=9 {
        o.push(obs(Some(1.0), e as f64, 0.0));
        o.push(obs(Some(5.0), 10.0 * e as f64, 0.0));
    }
    let t = CorrectionTable::fit(&scheme, &[0.5], &o).unwrap();
    assert_eq!(t.groups[0].q, vec![5.0]);
    assert_eq!(t.groups[1].q, vec![50.0]);
    assert!(t.groups[2].pooled_fallback);
    assert_eq!(t.groups[2].n, 0);
    // pooled: 18 errors, ceil(19 * 0.5) = 10th smallest
    assert_eq!(t.groups[2].q, vec![10.0]);
    assert_eq!(t.pooled, vec![10.0]);
}

#[test]
fn missing_history_goes_to_lowest_group() {
    let scheme = GroupScheme::default();
    assert_eq!(scheme.group_of(None), 0);
    assert_eq!(scheme.group_of(Some(0.99)), 0);
    assert_eq!(scheme.group_of(Some(1.0)), 1);
    assert_eq!(scheme.group_of(Some(1e6)), scheme.len() - 1);
}

fn exp_rows(rng: &mut ChaCha8Rng, offset: usize, n: usize) -> Vec<plateopt::features::TrainingRow> {
    (0..n)
        .map(|i| {
            let x: f64 = rng.random_range(0.0..4.0);
            let e: f64 = Exp1.sample(rng);
            let y = x + e;
            let mut f = plain_row(x);
            f.mean_sales_12m = Some(x);
            training_row(offset + i, f, y)
        })
        .collect()
}

#[test]
fn calibrated_quantiles_cover_exchangeable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let train = exp_rows(&mut rng, 0, 3000);
    let cal = exp_rows(&mut rng, 10_000, 16_000);
    let test = exp_rows(&mut rng, 30_000, 40_000);
    let alphas = [0.5, 0.8, 0.95];
    // few shallow trees, so the raw quantiles are visibly off
    let params = GbtParams {
        n_trees: 5,
        max_depth: 2,
        transform: TargetTransform::Identity,
        ..GbtParams::default()
    };
    let models = alphas
        .iter()
        .map(|&a| fit_gbt(&train, a, &params, &FeatureSet::all()))
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    let scheme = GroupScheme {
        boundaries: vec![0.0, 1.0, 2.0, 3.0],
    };
    let m = CalibratedQuantileModel::calibrate(None, models, &cal, scheme.clone()).unwrap();
    for &alpha in &alphas {
        for g in 0..scheme.len() {
            let rows: Vec<_> = test.iter().filter(|r| scheme.group_of_row(&r.features) == g).collect();
            let covered = rows
                .iter()
                .filter(|r| r.target <= m.predict_calibrated(&r.features, alpha).unwrap())
                .count();
            let rate = covered as f64 / rows.len() as f64;
            assert!((rate - alpha).abs() < 0.03, "group {g} alpha {alpha}: coverage {rate}");
        }
    }
}

#[test]
fn training_issues_cannot_calibrate() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train = exp_rows(&mut rng, 0, 200);
    let params = GbtParams {
        n_trees: 3,
        ..GbtParams::default()
    };
    let model = fit_gbt(&train, 0.5, &params, &FeatureSet::all()).unwrap();
    let leaked = vec![train[17].clone()];
    let r = CalibratedQuantileModel::calibrate(None, vec![model], &leaked, GroupScheme::default());
    assert!(matches!(r, Err(Error::CalibrationLeak(k)) if k == train[17].issue.to_string()));
}

#[test]
fn grid_predictions_are_non_decreasing_and_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let train = exp_rows(&mut rng, 0, 1500);
    let cal = exp_rows(&mut rng, 5000, 800);
    let params = GbtParams {
        n_trees: 10,
        ..GbtParams::default()
    };
    let models = [0.2, 0.4, 0.6, 0.8]
        .iter()
        .map(|&a| fit_gbt(&train, a, &params, &FeatureSet::all()).unwrap())
        .collect();
    let m = CalibratedQuantileModel::calibrate(None, models, &cal, GroupScheme::default()).unwrap();
    for r in cal.iter().take(200) {
        let g = m.predict_grid(&r.features);
        assert!(g.windows(2).all(|w| w[0] <= w[1]));
        assert!(g.iter().all(|&v| v >= 0.0));
    }
}
