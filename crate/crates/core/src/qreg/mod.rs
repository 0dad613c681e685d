//! Quantile regression: the pinball loss, a gradient-boosted tree regressor
//! trained on it, the naive baselines and quantile-crossing repair.

mod baseline;
mod encode;
mod gbt;
mod pinball;

pub use baseline::BaselineModel;
pub use encode::{ColumnSpec, FeatureEncoder, FeatureSet};
pub use gbt::{fit_gbt, fit_gbt_matrix, GbtModel, GbtParams, Node, TargetTransform, TrainingMatrix, MODEL_FORMAT_VERSION};
pub use pinball::{empirical_quantile, mean_pinball, pinball, pinball_negative_gradient, PinballLoss};

/// Sorts predictions ascending and reassigns them to ascending alphas.
/// Input pairs are `(alpha, prediction)`; the multiset of predictions is kept.
pub fn monotone_rearrange(preds: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut alphas: Vec<f64> = preds.iter().map(|p| p.0).collect();
    let mut values: Vec<f64> = preds.iter().map(|p| p.1).collect();
    alphas.sort_by(f64::total_cmp);
    values.sort_by(f64::total_cmp);
    alphas.into_iter().zip(values).collect()
}

/// In-place variant for predictions already ordered by alpha.
pub fn rearrange_sorted(values: &mut [f64]) {
    values.sort_by(f64::total_cmp);
}
