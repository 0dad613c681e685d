use plateopt_demo_wasm::{conformal_coverage_data, pinball_curve, pinball_curve_data, scenario_frontier, scenario_frontier_data};

#[test]
fn pinball_curve_bottoms_out_at_the_sample_quantile() {
    for (alpha, mean) in [(0.5, 3.0), (0.85, 6.0), (0.95, 1.5)] {
        let c = pinball_curve_data(alpha, mean, 4000, 3);
        let step = c.points[1].0 - c.points[0].0;
        // Integer demand leaves the loss flat between neighbouring counts.
        assert!((c.argmin - c.sample_quantile).abs() <= 1.0 + step, "alpha {alpha}: {} vs {}", c.argmin, c.sample_quantile);
        assert!((c.sample_quantile - c.true_quantile as f64).abs() <= 1.0);
        let min = c.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        assert!(c.points.iter().all(|p| p.1 >= min));
    }
}

#[test]
fn calibration_restores_coverage_of_a_biased_forecaster() {
    for alpha in [0.65, 0.85, 0.95] {
        let c = conformal_coverage_data(alpha, 0.5, 4000, 20000, 11);
        assert!(c.raw < alpha - 0.05, "raw {}", c.raw);
        assert!(c.calibrated >= alpha - 0.02, "calibrated {}", c.calibrated);
        assert_eq!(c.groups.iter().map(|g| g.n_test).sum::<usize>(), 20000);
    }
}

#[test]
fn frontier_marks_scenarios_that_beat_the_reference() {
    let f = scenario_frontier_data(60, 4, 5.0, 1.0, 2);
    assert_eq!(f.points.len(), 1716);
    assert!(f.points[f.max_kpi_efficiency].optimal);
    assert!(f.points[f.distribution].optimal);
    if !f.pareto_fallback {
        for p in f.points.iter().filter(|p| p.optimal) {
            assert!(p.profit >= f.reference_profit - 1e-9 && p.oos <= f.reference_oos);
        }
    }
    for p in &f.points {
        assert!(p.alphas.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn exported_functions_are_deterministic_json() {
    assert_eq!(pinball_curve(0.7, 2.0, 500, 1), pinball_curve(0.7, 2.0, 500, 1));
    let a = scenario_frontier(20, 2, 4.0, 0.9, 5);
    assert_eq!(a, scenario_frontier(20, 2, 4.0, 0.9, 5));
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(v["points"].is_array());
}
