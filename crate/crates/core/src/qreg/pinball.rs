use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinballLoss {
    alpha: f64,
}

impl PinballLoss {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1)")));
        }
        Ok(PinballLoss { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn loss(&self, d: f64, d_hat: f64) -> f64 {
        pinball(self.alpha, d, d_hat)
    }
}

/// Pinball loss of predicting `d_hat` when the outcome is `d`.
pub fn pinball(alpha: f64, d: f64, d_hat: f64) -> f64 {
    if d_hat <= d {
        alpha * (d - d_hat)
    } else {
        (1.0 - alpha) * (d_hat - d)
    }
}

/// Negative derivative of the loss in the prediction, as a function of the
/// residual `d - d_hat`. At the kink the value `alpha - 1` is used.
pub fn pinball_negative_gradient(alpha: f64, residual: f64) -> f64 {
    if residual > 0.0 {
        alpha
    } else {
        alpha - 1.0
    }
}

pub fn mean_pinball(alpha: f64, targets: &[f64], preds: &[f64]) -> f64 {
    assert_eq!(targets.len(), preds.len());
    if targets.is_empty() {
        return 0.0;
    }
    targets
        .iter()
        .zip(preds)
        .map(|(&d, &p)| pinball(alpha, d, p))
        .sum::<f64>()
        / targets.len() as f64
}

/// Lower empirical alpha-quantile: the smallest value whose empirical CDF
/// reaches `alpha`. Reorders `values`.
pub fn empirical_quantile(values: &mut [f64], alpha: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty set");
    let n = values.len();
    let k = ((alpha * n as f64).ceil() as usize).clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    *v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pinball_branches() {
        assert!((pinball(0.75, 2.0, 1.0) - 0.75).abs() < 1e-15);
        assert!((pinball(0.75, 1.0, 2.0) - 0.25).abs() < 1e-15);
        assert_eq!(pinball(0.3, 4.0, 4.0), 0.0);
    }

    #[test]
    fn alpha_bounds() {
        assert!(PinballLoss::new(0.0).is_err());
        assert!(PinballLoss::new(1.0).is_err());
        assert!(PinballLoss::new(0.5).is_ok());
    }

    #[test]
    fn quantile_lower_convention() {
        let mut v = vec![5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(empirical_quantile(&mut v, 0.5), 3.0);
        assert_eq!(empirical_quantile(&mut v, 0.2), 1.0);
        assert_eq!(empirical_quantile(&mut v, 0.21), 2.0);
        assert_eq!(empirical_quantile(&mut v, 0.999), 5.0);
    }

    proptest! {
        #[test]
        fn median_loss_is_half_absolute_error(x in -1e3f64..1e3, y in -1e3f64..1e3) {
            prop_assert!((pinball(0.5, x, y) - (x - y).abs() / 2.0).abs() < 1e-9);
        }

        #[test]
        fn gradient_matches_finite_difference(alpha in 0.01f64..0.99, d in -50.0f64..50.0, p in -50.0f64..50.0) {
            prop_assume!((d - p).abs() > 1e-3);
            let h = 1e-6;
            let fd = (pinball(alpha, d, p + h) - pinball(alpha, d, p - h)) / (2.0 * h);
            prop_assert!((-fd - pinball_negative_gradient(alpha, d - p)).abs() < 1e-6);
        }

        #[test]
        fn loss_non_negative(alpha in 0.01f64..0.99, d in -50.0f64..50.0, p in -50.0f64..50.0) {
            prop_assert!(pinball(alpha, d, p) >= 0.0);
        }
    }
}
