use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::TitleId;
use crate::error::{Error, Result};
use crate::features::TrainingRow;
use crate::gcqr::{raw_predictions, CalibratedQuantileModel, ALPHA_EPS};
use crate::ingest::Dataset;
use crate::qreg::{pinball, rearrange_sorted, BaselineModel, FeatureSet, TargetTransform};

use super::config::FeaturesAsOf;
use super::pipeline::{train_models, ModelSet, Prepared, SkippedTitle};

pub const NAIVE: &str = "naive";
pub const S_NAIVE: &str = "s_naive";
pub const GBT_STANDARD: &str = "gbt_standard";
pub const GBT_LINEAR: &str = "gbt_linear";
pub const GBT_LOG: &str = "gbt_log";
pub const GBT_LOG_GCQR: &str = "gbt_log_gcqr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantLoss {
    pub variant: String,
    /// Mean pinball loss per evaluation alpha.
    pub pinball: Vec<f64>,
    /// Mean over the alphas.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub variant: String,
    pub group: usize,
    pub label: String,
    pub alpha: f64,
    pub n: usize,
    /// Share of rows whose demand is at most the prediction.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub manifest_hash: String,
    pub cutoff: NaiveDate,
    pub features_as_of: FeaturesAsOf,
    pub alphas: Vec<f64>,
    pub n_train_rows: usize,
    pub n_test_rows: usize,
    pub variants: Vec<VariantLoss>,
    pub coverage: Vec<CoverageCell>,
    pub calibration_warnings: Vec<String>,
    pub skipped_titles: Vec<SkippedTitle>,
}

impl BacktestReport {
    pub fn variant(&self, name: &str) -> Option<&VariantLoss> {
        self.variants.iter().find(|v| v.variant == name)
    }

    /// `variant,alpha_<a>...,mean`, one line per variant.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv_writer(out);
        let mut header = vec!["variant".to_string()];
        header.extend(self.alphas.iter().map(|a| format!("alpha_{a}")));
        header.push("mean".into());
        w.write_record(&header)?;
        for v in &self.variants {
            let mut rec = vec![v.variant.clone()];
            rec.extend(v.pinball.iter().map(|x| format!("{x:.6}")));
            rec.push(format!("{:.6}", v.mean));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<backtest>", e))
    }

    pub fn write_coverage_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["variant", "group", "label", "alpha", "n", "coverage"])?;
        for c in &self.coverage {
            w.write_record([
                c.variant.clone(),
                c.group.to_string(),
                c.label.clone(),
                c.alpha.to_string(),
                c.n.to_string(),
                format!("{:.6}", c.coverage),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<coverage>", e))
    }
}

pub(crate) fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// The uncalibrated ablation models: no references, and no log transform.
pub struct AblationModels {
    pub standard: ModelSet,
    pub linear: ModelSet,
}

pub fn train_ablations(prep: &Prepared<'_>) -> Result<AblationModels> {
    let alphas = &prep.cfg.eval.alphas;
    Ok(AblationModels {
        standard: train_models(prep, alphas, TargetTransform::Log1p, &FeatureSet::without_references())?,
        linear: train_models(prep, alphas, TargetTransform::Identity, &FeatureSet::all())?,
    })
}

/// Positions of `wanted` within `alphas`.
fn alpha_positions(alphas: &[f64], wanted: &[f64]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|&w| {
            alphas
                .iter()
                .position(|&a| (a - w).abs() < ALPHA_EPS)
                .ok_or(Error::AlphaNotInGrid(w))
        })
        .collect()
}

struct Accumulator {
    name: String,
    sums: Vec<f64>,
}

/// Per-title model lookup with rearranged predictions at the eval alphas.
struct Uncalibrated<'a> {
    set: &'a ModelSet,
    pos: Vec<usize>,
}

impl Uncalibrated<'_> {
    fn predict(&self, title: &TitleId, row: &TrainingRow) -> Option<Vec<f64>> {
        let models = self.set.get(title)?;
        let mut p = raw_predictions(models, &row.features);
        rearrange_sorted(&mut p);
        Some(self.pos.iter().map(|&i| p[i]).collect())
    }
}

/// Scores every variant on the test rows. `log` and `calibrated` cover the
/// model alphas; the ablations cover the evaluation alphas.
pub fn evaluate(
    prep: &Prepared<'_>,
    test_rows: &[TrainingRow],
    log: &ModelSet,
    calibrated: &BTreeMap<TitleId, CalibratedQuantileModel>,
    ablations: &AblationModels,
    manifest_hash: &str,
) -> Result<BacktestReport> {
    let ds: &Dataset = &prep.inputs.ds;
    let alphas = prep.cfg.eval.alphas.clone();
    let k = alphas.len();
    let scheme = &prep.cfg.calibration;
    let uncal = [
        (GBT_STANDARD, Uncalibrated { set: &ablations.standard, pos: alpha_positions(&ablations.standard.alphas, &alphas)? }),
        (GBT_LINEAR, Uncalibrated { set: &ablations.linear, pos: alpha_positions(&ablations.linear.alphas, &alphas)? }),
        (GBT_LOG, Uncalibrated { set: log, pos: alpha_positions(&log.alphas, &alphas)? }),
    ];
    let cal_pos = alpha_positions(&log.alphas, &alphas)?;
    let names = [NAIVE, S_NAIVE, GBT_STANDARD, GBT_LINEAR, GBT_LOG, GBT_LOG_GCQR];
    let mut acc: Vec<Accumulator> = names
        .iter()
        .map(|n| Accumulator {
            name: n.to_string(),
            sums: vec![0.0; k],
        })
        .collect();
    // (variant 0 = gbt_log, 1 = gcqr) x group x alpha: (n, covered)
    let mut cover = vec![vec![vec![(0usize, 0usize); k]; scheme.len()]; 2];
    let mut n_rows = 0usize;

    for row in test_rows {
        let title = &row.issue.title;
        let Some(cal_model) = calibrated.get(title) else {
            continue;
        };
        n_rows += 1;
        let d = row.target;
        let naive = BaselineModel::Naive.predict(ds, &row.issue, &row.pos, row.as_of)?;
        let snaive = BaselineModel::SeasonalNaive.predict(ds, &row.issue, &row.pos, row.as_of)?;
        let mut preds: Vec<Vec<f64>> = vec![vec![naive; k], vec![snaive; k]];
        for (name, u) in &uncal {
            preds.push(
                u.predict(title, row)
                    .ok_or_else(|| Error::Empty(format!("no {name} model for {title}")))?,
            );
        }
        let grid = cal_model.predict_grid(&row.features);
        preds.push(cal_pos.iter().map(|&i| grid[i]).collect());

        for (a, p) in acc.iter_mut().zip(&preds) {
            for (j, &alpha) in alphas.iter().enumerate() {
                a.sums[j] += pinball(alpha, d, p[j]);
            }
        }
        let g = scheme.group_of_row(&row.features);
        for (v, p) in [&preds[4], &preds[5]].into_iter().enumerate() {
            for j in 0..k {
                let cell = &mut cover[v][g][j];
                cell.0 += 1;
                cell.1 += usize::from(d <= p[j]);
            }
        }
    }
    if n_rows == 0 {
        return Err(Error::Empty("no test rows for any calibrated title".into()));
    }

    let variants = acc
        .into_iter()
        .map(|a| {
            let pinball: Vec<f64> = a.sums.iter().map(|s| s / n_rows as f64).collect();
            let mean = pinball.iter().sum::<f64>() / k as f64;
            VariantLoss {
                variant: a.name,
                pinball,
                mean,
            }
        })
        .collect();
    let mut coverage = Vec::new();
    for (v, name) in [GBT_LOG, GBT_LOG_GCQR].into_iter().enumerate() {
        for g in 0..scheme.len() {
            for (j, &alpha) in alphas.iter().enumerate() {
                let (n, c) = cover[v][g][j];
                coverage.push(CoverageCell {
                    variant: name.to_string(),
                    group: g,
                    label: scheme.label(g),
                    alpha,
                    n,
                    coverage: if n == 0 { 0.0 } else { c as f64 / n as f64 },
                });
            }
        }
    }
    Ok(BacktestReport {
        manifest_hash: manifest_hash.to_string(),
        cutoff: prep.cutoff(),
        features_as_of: prep.cfg.split.features_as_of,
        alphas,
        n_train_rows: prep.window_rows.len(),
        n_test_rows: n_rows,
        variants,
        coverage,
        calibration_warnings: prep.calibration_warnings(),
        skipped_titles: prep.skipped.clone(),
    })
}
