use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cost::CostConfig;
use crate::error::{Error, Result};
use crate::gcqr::GroupScheme;
use crate::optimizer::{AlphaGrid, SelectionCriteria, DEFAULT_SCENARIO_BUDGET};
use crate::qreg::GbtParams;

/// Which information test-time features may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesAsOf {
    /// Only records that ended before the cutoff, as when planning every
    /// test issue on the cutoff date.
    Cutoff,
    /// Records that ended before each issue starts; the models stay frozen
    /// at the cutoff.
    IssueStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dir: PathBuf,
    /// Defaults to `holidays.txt` in the data directory when present.
    pub holidays: Option<PathBuf>,
    /// Synthetic ground truth; plan evaluation scores against it when present.
    pub groundtruth: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: PathBuf::from("data"),
            holidays: None,
            groundtruth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub cutoff: Option<NaiveDate>,
    /// Used when no cutoff is given: the cutoff is this many weeks before the
    /// end of the data.
    pub test_weeks: u32,
    pub features_as_of: FeaturesAsOf,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            cutoff: None,
            test_weeks: 12,
            features_as_of: FeaturesAsOf::IssueStart,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub gbt: GbtParams,
    /// Only issues that started at most this many days before the cutoff
    /// become training rows; older history still feeds the features.
    pub train_window_days: Option<u32>,
    /// One model per alpha for every title instead of one per (title, alpha).
    pub shared: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gbt: GbtParams::default(),
            train_window_days: Some(365),
            shared: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub alphas: AlphaGrid,
    pub budget: usize,
    pub criteria: SelectionCriteria,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            alphas: AlphaGrid::default(),
            budget: DEFAULT_SCENARIO_BUDGET,
            criteria: SelectionCriteria::default(),
        }
    }
}

/// Which total-supply constraint plan evaluation plans against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupplyTarget {
    /// `n_total` and `delta` from the issue metadata.
    #[default]
    Issue,
    /// The historical plan's total, with `delta` kept at the same share.
    Historical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub alphas: Vec<f64>,
    /// Service level of the proportional-scaling baseline plan.
    pub baseline_alpha: f64,
    pub supply_target: SupplyTarget,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alphas: vec![0.65, 0.75, 0.85, 0.95, 0.99],
            baseline_alpha: 0.75,
            supply_target: SupplyTarget::Issue,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Percentage added to sales of out-of-stock records when reconstructing demand.
    pub r_pct: f64,
    pub out_dir: PathBuf,
    /// JSON cost model; the built-in defaults apply when absent.
    pub cost_file: Option<PathBuf>,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub calibration: GroupScheme,
    pub optimizer: OptimizerConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            r_pct: 30.0,
            out_dir: PathBuf::from("out"),
            cost_file: None,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            calibration: GroupScheme::default(),
            optimizer: OptimizerConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::Invalid { field, message } => Error::Invalid {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths in the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.dir);
        fix(&mut self.out_dir);
        for p in [&mut self.cost_file, &mut self.data.holidays, &mut self.data.groundtruth]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_pct.is_finite() && self.r_pct >= 0.0) {
            return Err(Error::invalid("r_pct", "must be non-negative"));
        }
        self.model.gbt.validate().map_err(|e| prefixed("model.gbt", e))?;
        self.calibration.validate().map_err(|e| prefixed("calibration", e))?;
        self.optimizer.alphas.validate().map_err(|e| prefixed("optimizer", e))?;
        if self.optimizer.budget == 0 {
            return Err(Error::invalid("optimizer.budget", "must be positive"));
        }
        AlphaGrid::new(self.eval.alphas.clone()).map_err(|e| prefixed("eval", e))?;
        if !(self.eval.baseline_alpha > 0.0 && self.eval.baseline_alpha < 1.0) {
            return Err(Error::invalid("eval.baseline_alpha", "must lie in (0, 1)"));
        }
        if self.split.test_weeks == 0 && self.split.cutoff.is_none() {
            return Err(Error::invalid("split.test_weeks", "must be positive when no cutoff is set"));
        }
        Ok(())
    }

    pub fn cost(&self) -> Result<CostConfig> {
        match &self.cost_file {
            Some(p) => CostConfig::load(p),
            None => Ok(CostConfig::default()),
        }
    }

    /// Every alpha a quantile model is trained for: the optimizer grid, the
    /// evaluation alphas and the baseline alpha, ascending.
    pub fn model_alphas(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .optimizer
            .alphas
            .alphas
            .iter()
            .chain(&self.eval.alphas)
            .chain(std::iter::once(&self.eval.baseline_alpha))
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup_by(|a, b| (*a - *b).abs() < crate::gcqr::ALPHA_EPS);
        all
    }
}
