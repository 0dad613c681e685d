//! Histogram gradient-boosted regression trees on the pinball loss.
//!
//! Each round fits a least-squares tree to the pinball negative gradient of
//! the current residuals, then replaces every leaf value by the alpha-quantile
//! of the residuals that reached it. Missing values are routed by a
//! per-split default direction chosen while searching for the split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{FeatureEncoder, FeatureSet};
use super::pinball::{empirical_quantile, pinball_negative_gradient, PinballLoss};
use crate::domain::IssueKey;
use crate::error::{Error, Result};
use crate::features::{FeatureRow, TrainingRow};

pub const MODEL_FORMAT_VERSION: u32 = 1;

const MISSING_BIN: u8 = u8::MAX;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetTransform {
    Identity,
    Log1p,
}

impl TargetTransform {
    pub fn forward(self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => y,
            TargetTransform::Log1p => y.ln_1p(),
        }
    }

    pub fn inverse(self, v: f64) -> f64 {
        match self {
            TargetTransform::Identity => v,
            TargetTransform::Log1p => v.exp_m1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub learning_rate: f64,
    pub transform: TargetTransform,
    pub max_bins: usize,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 200,
            max_depth: 6,
            min_leaf: 20,
            learning_rate: 0.1,
            transform: TargetTransform::Log1p,
            max_bins: 64,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::invalid("min_leaf", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate", "must be in (0, 1]"));
        }
        if !(2..=254).contains(&self.max_bins) {
            return Err(Error::invalid("max_bins", "must be in 2..=254"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid("subsample", "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// `x <= threshold` goes left; missing values follow `default_left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        value: f64,
    },
}

impl Node {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = x[*feature];
                    let go_left = if v.is_nan() { *default_left } else { v <= *threshold };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            Node::Leaf { .. } => None,
            Node::Split {
                feature, left, right, ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub format_version: u32,
    pub alpha: f64,
    pub learning_rate: f64,
    pub base_score: f64,
    pub target_transform: TargetTransform,
    pub encoder: FeatureEncoder,
    pub trees: Vec<Node>,
    /// Issues whose rows the model was trained on.
    pub trained_on: Vec<IssueKey>,
}

impl GbtModel {
    /// Score on the transformed scale.
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn predict_encoded(&self, x: &[f64]) -> f64 {
        self.target_transform.inverse(self.raw_score(x)).max(0.0)
    }

    pub fn predict(&self, row: &FeatureRow) -> f64 {
        self.predict_encoded(&self.encoder.encode(row))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: GbtModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(
                "format_version",
                format!("unsupported model format {}", m.format_version),
            ));
        }
        let width = m.encoder.width();
        if m.trees.iter().filter_map(Node::max_feature).any(|f| f >= width) {
            return Err(Error::invalid("trees", "split references an undeclared feature column"));
        }
        Ok(m)
    }

    pub fn trained_on_contains(&self, key: &IssueKey) -> bool {
        self.trained_on.binary_search(key).is_ok()
    }
}

/// Encoded and binned training data shared by models of different alphas.
#[derive(Debug, Clone)]
pub struct TrainingMatrix {
    encoder: FeatureEncoder,
    /// Per column, the ascending upper edge of each bin.
    edges: Vec<Vec<f64>>,
    /// Per column, the bin of each row (`MISSING_BIN` for missing).
    bins: Vec<Vec<u8>>,
    targets: Vec<f64>,
    trained_on: Vec<IssueKey>,
}

impl TrainingMatrix {
    pub fn new(rows: &[TrainingRow], set: &FeatureSet, max_bins: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("training set is empty".into()));
        }
        let encoder = FeatureEncoder::fit(set, rows.iter().map(|r| &r.features))?;
        let width = encoder.width();
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len()); width];
        let mut buf = Vec::with_capacity(width);
        for r in rows {
            encoder.encode_into(&r.features, &mut buf);
            for (c, v) in buf.iter().enumerate() {
                columns[c].push(*v);
            }
        }
        let mut edges = Vec::with_capacity(width);
        let mut bins = Vec::with_capacity(width);
        for col in &columns {
            let e = bin_edges(col, max_bins);
            bins.push(
                col.iter()
                    .map(|&v| {
                        if v.is_nan() {
                            MISSING_BIN
                        } else {
                            e.partition_point(|&edge| edge < v).min(e.len() - 1) as u8
                        }
                    })
                    .collect(),
            );
            edges.push(e);
        }
        let mut trained_on: Vec<IssueKey> = rows.iter().map(|r| r.issue.clone()).collect();
        trained_on.sort();
        trained_on.dedup();
        Ok(TrainingMatrix {
            encoder,
            edges,
            bins,
            targets: rows.iter().map(|r| r.target).collect(),
            trained_on,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn encoder(&self) -> &FeatureEncoder {
        &self.encoder
    }
}

fn bin_edges(col: &[f64], max_bins: usize) -> Vec<f64> {
    let mut values: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
    if values.is_empty() {
        return vec![0.0];
    }
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct;
    }
    let n = values.len();
    let mut edges: Vec<f64> = (1..=max_bins)
        .map(|k| values[((k * n).div_ceil(max_bins)).clamp(1, n) - 1])
        .collect();
    edges.dedup();
    edges
}

/// Trains one model from rows.
pub fn fit_gbt(rows: &[TrainingRow], alpha: f64, params: &GbtParams, set: &FeatureSet) -> Result<GbtModel> {
    params.validate()?;
    let matrix = TrainingMatrix::new(rows, set, params.max_bins)?;
    fit_gbt_matrix(&matrix, alpha, params)
}

pub fn fit_gbt_matrix(m: &TrainingMatrix, alpha: f64, params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    PinballLoss::new(alpha)?;
    if m.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let n = m.len();
    let transform = params.transform;
    let y: Vec<f64> = m.targets.iter().map(|&t| transform.forward(t.max(0.0))).collect();
    let base_score = empirical_quantile(&mut y.clone(), alpha);
    let mut score = vec![base_score; n];
    let mut residual = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let layout = HistLayout::new(m);
    let mut trees = Vec::with_capacity(params.n_trees);

    for _ in 0..params.n_trees {
        for i in 0..n {
            residual[i] = y[i] - score[i];
            grad[i] = pinball_negative_gradient(alpha, residual[i]);
        }
        let rows: Vec<u32> = if params.subsample < 1.0 {
            (0..n as u32).filter(|_| rng.random::<f64>() < params.subsample).collect()
        } else {
            (0..n as u32).collect()
        };
        if rows.is_empty() {
            continue;
        }
        let grower = Grower {
            m,
            grad: &grad,
            residual: &residual,
            alpha,
            params,
            layout: &layout,
        };
        let sampled_all = rows.len() == n;
        let hist = grower.histogram(&rows);
        let mut leaves = Vec::new();
        let tree = grower.grow(rows, hist, 0, &mut leaves);
        if sampled_all {
            for (members, v) in leaves {
                for r in members {
                    score[r as usize] += params.learning_rate * v;
                }
            }
        } else {
            for (i, s) in score.iter_mut().enumerate() {
                *s += params.learning_rate * tree.eval_binned(&m.bins, i);
            }
        }
        trees.push(tree.into_node(&m.edges));
    }

    Ok(GbtModel {
        format_version: MODEL_FORMAT_VERSION,
        alpha,
        learning_rate: params.learning_rate,
        base_score,
        target_transform: transform,
        encoder: m.encoder.clone(),
        trees,
        trained_on: m.trained_on.clone(),
    })
}

enum TrainNode {
    Split {
        col: usize,
        bin: u8,
        default_left: bool,
        left: Box<TrainNode>,
        right: Box<TrainNode>,
    },
    Leaf(f64),
}

impl TrainNode {
    fn eval_binned(&self, bins: &[Vec<u8>], row: usize) -> f64 {
        let mut node = self;
        loop {
            match node {
                TrainNode::Leaf(v) => return *v,
                TrainNode::Split {
                    col,
                    bin,
                    default_left,
                    left,
                    right,
                } => {
                    let b = bins[*col][row];
                    let go_left = if b == MISSING_BIN { *default_left } else { b <= *bin };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    fn into_node(self, edges: &[Vec<f64>]) -> Node {
        match self {
            TrainNode::Leaf(value) => Node::Leaf { value },
            TrainNode::Split {
                col,
                bin,
                default_left,
                left,
                right,
            } => {
                let e = &edges[col];
                let threshold = if bin as usize + 1 >= e.len() {
                    f64::MAX
                } else {
                    e[bin as usize]
                };
                Node::Split {
                    feature: col,
                    threshold,
                    default_left,
                    left: Box::new(left.into_node(edges)),
                    right: Box::new(right.into_node(edges)),
                }
            }
        }
    }
}

/// Flat histogram: per column, one slot per bin plus a trailing missing slot.
struct HistLayout {
    offsets: Vec<usize>,
    total: usize,
    /// Row-major histogram slot of every (row, column).
    slots: Vec<u32>,
    width: usize,
}

impl HistLayout {
    fn new(m: &TrainingMatrix) -> Self {
        let mut offsets = Vec::with_capacity(m.edges.len());
        let mut total = 0;
        for e in &m.edges {
            offsets.push(total);
            total += e.len() + 1;
        }
        let width = m.edges.len();
        let mut slots = vec![0u32; m.len() * width];
        for (c, bins) in m.bins.iter().enumerate() {
            let off = offsets[c];
            let missing = off + m.edges[c].len();
            for (r, &b) in bins.iter().enumerate() {
                let slot = if b == MISSING_BIN { missing } else { off + b as usize };
                slots[r * width + c] = slot as u32;
            }
        }
        HistLayout {
            offsets,
            total,
            slots,
            width,
        }
    }
}

struct Hist {
    grad: Vec<f64>,
    count: Vec<u32>,
}

impl Hist {
    fn subtract(&self, other: &Hist) -> Hist {
        Hist {
            grad: self.grad.iter().zip(&other.grad).map(|(a, b)| a - b).collect(),
            count: self.count.iter().zip(&other.count).map(|(a, b)| a - b).collect(),
        }
    }
}

struct SplitChoice {
    col: usize,
    bin: u8,
    default_left: bool,
    gain: f64,
}

struct Grower<'a> {
    m: &'a TrainingMatrix,
    grad: &'a [f64],
    residual: &'a [f64],
    alpha: f64,
    params: &'a GbtParams,
    layout: &'a HistLayout,
}

impl Grower<'_> {
    fn histogram(&self, rows: &[u32]) -> Hist {
        let mut h = Hist {
            grad: vec![0.0; self.layout.total],
            count: vec![0; self.layout.total],
        };
        let w = self.layout.width;
        for &r in rows {
            let g = self.grad[r as usize];
            let start = r as usize * w;
            for &slot in &self.layout.slots[start..start + w] {
                h.grad[slot as usize] += g;
                h.count[slot as usize] += 1;
            }
        }
        h
    }

    fn leaf(&self, rows: Vec<u32>, leaves: &mut Vec<(Vec<u32>, f64)>) -> TrainNode {
        let mut r: Vec<f64> = rows.iter().map(|&i| self.residual[i as usize]).collect();
        let v = empirical_quantile(&mut r, self.alpha);
        leaves.push((rows, v));
        TrainNode::Leaf(v)
    }

    fn best_split(&self, h: &Hist, n: usize) -> Option<SplitChoice> {
        let min_leaf = self.params.min_leaf as u32;
        let n = n as u32;
        let mut best: Option<SplitChoice> = None;
        for (c, edges) in self.m.edges.iter().enumerate() {
            let off = self.layout.offsets[c];
            let nb = edges.len();
            let g_miss = h.grad[off + nb];
            let n_miss = h.count[off + nb];
            let g_total: f64 = h.grad[off..=off + nb].iter().sum();
            let parent = g_total * g_total / n as f64;
            let mut gl = 0.0;
            let mut nl = 0u32;
            for b in 0..nb {
                gl += h.grad[off + b];
                nl += h.count[off + b];
                if b + 1 == nb && n_miss == 0 {
                    break;
                }
                for default_left in [false, true] {
                    let (g_left, n_left) = if default_left {
                        (gl + g_miss, nl + n_miss)
                    } else {
                        (gl, nl)
                    };
                    let n_right = n - n_left;
                    if n_left < min_leaf || n_right < min_leaf {
                        continue;
                    }
                    let g_right = g_total - g_left;
                    let gain = g_left * g_left / n_left as f64 + g_right * g_right / n_right as f64 - parent;
                    if gain > MIN_GAIN && best.as_ref().is_none_or(|s| gain > s.gain) {
                        best = Some(SplitChoice {
                            col: c,
                            bin: b as u8,
                            default_left,
                            gain,
                        });
                    }
                }
            }
        }
        best
    }

    /// Grows a subtree, collecting each leaf's rows and value.
    fn grow(&self, rows: Vec<u32>, hist: Hist, depth: usize, leaves: &mut Vec<(Vec<u32>, f64)>) -> TrainNode {
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf {
            return self.leaf(rows, leaves);
        }
        let Some(split) = self.best_split(&hist, rows.len()) else {
            return self.leaf(rows, leaves);
        };
        let bins = &self.m.bins[split.col];
        let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| {
            let b = bins[r as usize];
            if b == MISSING_BIN {
                split.default_left
            } else {
                b <= split.bin
            }
        });
        drop(rows);
        let (left_hist, right_hist) = if left.len() <= right.len() {
            let lh = self.histogram(&left);
            let rh = hist.subtract(&lh);
            (lh, rh)
        } else {
            let rh = self.histogram(&right);
            let lh = hist.subtract(&rh);
            (lh, rh)
        };
        drop(hist);
        TrainNode::Split {
            col: split.col,
            bin: split.bin,
            default_left: split.default_left,
            left: Box::new(self.grow(left, left_hist, depth + 1, leaves)),
            right: Box::new(self.grow(right, right_hist, depth + 1, leaves)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tests_support::row_with;

    fn rows_from(xs: &[f64], ys: &[f64]) -> Vec<TrainingRow> {
        xs.iter().zip(ys).map(|(&x, &y)| row_with(x, y)).collect()
    }

    fn price_only() -> FeatureSet {
        FeatureSet {
            names: vec!["price".into()],
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ys = vec![3.0; 100];
        for alpha in [0.1, 0.5, 0.9] {
            let m = fit_gbt(&rows_from(&xs, &ys), alpha, &GbtParams::default(), &price_only()).unwrap();
            for x in [0.0, 50.0, 1e6] {
                let p = m.predict(&row_with(x, 0.0).features);
                assert!((p - 3.0).abs() < 1e-9, "alpha {alpha}: {p}");
            }
        }
    }

    #[test]
    fn fits_identity_at_median() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.5).collect();
        let rows = rows_from(&xs, &xs);
        let params = GbtParams {
            n_trees: 300,
            max_depth: 6,
            min_leaf: 1,
            learning_rate: 0.3,
            transform: TargetTransform::Identity,
            ..GbtParams::default()
        };
        let m = fit_gbt(&rows, 0.5, &params, &price_only()).unwrap();
        let loss: f64 = rows
            .iter()
            .map(|r| super::super::pinball(0.5, r.target, m.predict(&r.features)))
            .sum::<f64>()
            / rows.len() as f64;
        // a constant median scores about 6.25 here
        assert!(loss < 0.1, "training loss {loss}");
    }

    #[test]
    fn single_split_hand_trace() {
        let model = GbtModel {
            format_version: MODEL_FORMAT_VERSION,
            alpha: 0.5,
            learning_rate: 0.5,
            base_score: 1.0,
            target_transform: TargetTransform::Identity,
            encoder: FeatureEncoder {
                columns: vec![super::super::ColumnSpec {
                    feature: "price".into(),
                    level: None,
                }],
            },
            trees: vec![Node::Split {
                feature: 0,
                threshold: 2.0,
                default_left: false,
                left: Box::new(Node::Leaf { value: -1.0 }),
                right: Box::new(Node::Leaf { value: 4.0 }),
            }],
            trained_on: vec![],
        };
        // 1 + 0.5 * -1
        assert_eq!(model.predict_encoded(&[1.5]), 0.5);
        // 1 + 0.5 * 4
        assert_eq!(model.predict_encoded(&[2.5]), 3.0);
        assert_eq!(model.predict_encoded(&[f64::NAN]), 3.0);
        // boundary goes left
        assert_eq!(model.predict_encoded(&[2.0]), 0.5);
    }

    #[test]
    fn log_predictions_never_negative() {
        let xs: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let ys: Vec<f64> = (0..200).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 }).collect();
        let m = fit_gbt(&rows_from(&xs, &ys), 0.05, &GbtParams::default(), &price_only()).unwrap();
        for x in -5..20 {
            assert!(m.predict(&row_with(x as f64, 0.0).features) >= 0.0);
        }
    }

    #[test]
    fn missing_values_route_by_default_direction() {
        let mut rows = Vec::new();
        for i in 0..200 {
            let mut r = row_with(i as f64, if i % 2 == 0 { 10.0 } else { 1.0 });
            if i % 2 == 0 {
                r.features.mean_ref = None;
            } else {
                r.features.mean_ref = Some((i % 5) as f64);
            }
            rows.push(r);
        }
        let set = FeatureSet {
            names: vec!["mean_ref".into()],
        };
        let params = GbtParams {
            transform: TargetTransform::Identity,
            min_leaf: 5,
            ..GbtParams::default()
        };
        let m = fit_gbt(&rows, 0.5, &params, &set).unwrap();
        let mut missing = rows[0].features.clone();
        missing.mean_ref = None;
        let mut present = rows[1].features.clone();
        present.mean_ref = Some(2.0);
        assert!((m.predict(&missing) - 10.0).abs() < 1e-6);
        assert!((m.predict(&present) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn serialization_round_trips_bitwise() {
        let xs: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.3).sin().abs() * 5.0).collect();
        let m = fit_gbt(&rows_from(&xs, &ys), 0.8, &GbtParams { n_trees: 20, ..Default::default() }, &price_only())
            .unwrap();
        let json = m.to_json().unwrap();
        let back = GbtModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn training_is_deterministic() {
        let xs: Vec<f64> = (0..300).map(|i| ((i * 13) % 29) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.5 + (x * 3.0).cos()).map(f64::abs).collect();
        let params = GbtParams {
            n_trees: 15,
            subsample: 0.7,
            seed: 9,
            ..Default::default()
        };
        let a = fit_gbt(&rows_from(&xs, &ys), 0.7, &params, &price_only()).unwrap();
        let b = fit_gbt(&rows_from(&xs, &ys), 0.7, &params, &price_only()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn rejects_undeclared_feature_index() {
        let mut m = GbtModel {
            format_version: MODEL_FORMAT_VERSION,
            alpha: 0.5,
            learning_rate: 0.1,
            base_score: 0.0,
            target_transform: TargetTransform::Log1p,
            encoder: FeatureEncoder { columns: vec![] },
            trees: vec![],
            trained_on: vec![],
        };
        m.trees.push(Node::Split {
            feature: 3,
            threshold: 0.0,
            default_left: true,
            left: Box::new(Node::Leaf { value: 0.0 }),
            right: Box::new(Node::Leaf { value: 0.0 }),
        });
        assert!(GbtModel::from_json(&m.to_json().unwrap()).is_err());
    }

    #[test]
    fn empty_training_set_errors() {
        assert!(fit_gbt(&[], 0.5, &GbtParams::default(), &price_only()).is_err());
    }

    #[test]
    fn base_score_coverage_monotone_in_alpha() {
        let ys: Vec<f64> = (0..97).map(|i| ((i * 31) % 17) as f64).collect();
        let xs = vec![1.0; ys.len()];
        let rows = rows_from(&xs, &ys);
        let mut last = 0.0;
        for alpha in [0.1, 0.3, 0.5, 0.65, 0.8, 0.95] {
            let m = fit_gbt(&rows, alpha, &GbtParams { n_trees: 0, ..Default::default() }, &price_only()).unwrap();
            let pred = m.predict(&rows[0].features);
            let frac = ys.iter().filter(|&&y| y <= pred + 1e-9).count() as f64 / ys.len() as f64;
            assert!(frac >= last);
            last = frac;
        }
    }
}
