//! End-to-end runs: training, calibration, backtest, plan evaluation and
//! plan export, each writing its reports under `out_dir/<run-id>/`.

pub mod backtest;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod plan_eval;
pub mod planner;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::domain::{IssueKey, TitleId};
use crate::error::{Error, Result};
use crate::gcqr::{CalibratedQuantileModel, CorrectionTable};
use crate::optimizer::{write_frontier_csv, PlanSet};
use crate::qreg::FeatureSet;

pub use backtest::BacktestReport;
pub use config::RunConfig;
pub use manifest::Manifest;
pub use pipeline::{Inputs, ModelSet, Prepared};
pub use plan_eval::PlanEvalReport;
pub use planner::Planner;

pub const PLANNER_FILE: &str = "planner.json";
pub const CORRECTIONS_FILE: &str = "corrections.csv";

/// A finished run: where it wrote, what it was computed from, what it found.
#[derive(Debug)]
pub struct RunOutput<T> {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub report: T,
}

pub struct Calibrated {
    pub models: ModelSet,
    pub table: CorrectionTable,
    pub by_title: BTreeMap<TitleId, CalibratedQuantileModel>,
}

/// Trains the planning models on every model alpha and calibrates them.
pub fn train_and_calibrate(prep: &Prepared<'_>) -> Result<Calibrated> {
    let models = pipeline::train_models(
        prep,
        &prep.cfg.model_alphas(),
        prep.cfg.model.gbt.transform,
        &FeatureSet::all(),
    )?;
    let (table, by_title) = pipeline::calibrate_models(prep, &models)?;
    Ok(Calibrated { models, table, by_title })
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn start(command: &str, prep: &Prepared<'_>) -> Result<(Manifest, PathBuf)> {
    let manifest = Manifest::new(command, prep.cfg, prep.cutoff(), prep.inputs)?;
    let dir = manifest.create_run_dir()?;
    Ok((manifest, dir))
}

fn write_corrections(dir: &Path, table: &CorrectionTable) -> Result<()> {
    table.write_csv("*", create_file(&dir.join(CORRECTIONS_FILE))?)
}

/// Writes one JSON model per (title, alpha) under `models/`.
pub fn run_train(cfg: &RunConfig, inputs: &Inputs) -> Result<RunOutput<ModelSet>> {
    let prep = Prepared::new(cfg, inputs)?;
    let (manifest, dir) = start("train", &prep)?;
    let models = pipeline::train_models(&prep, &cfg.model_alphas(), cfg.model.gbt.transform, &FeatureSet::all())?;
    for (title, set) in &models.by_title {
        let tdir = dir.join("models").join(title.as_str());
        std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        for m in set.iter() {
            manifest::write_bytes(&tdir.join(format!("alpha_{}.json", m.alpha)), m.to_json()?.as_bytes())?;
        }
    }
    Ok(RunOutput {
        dir,
        manifest,
        report: models,
    })
}

/// Trains, calibrates and stores the planner artifact the `plan` command
/// and the service load.
pub fn run_calibrate(cfg: &RunConfig, inputs: &Inputs) -> Result<RunOutput<Planner>> {
    let prep = Prepared::new(cfg, inputs)?;
    let (manifest, dir) = start("calibrate", &prep)?;
    let cal = train_and_calibrate(&prep)?;
    write_corrections(&dir, &cal.table)?;
    let planner = Planner::build(&prep, &cal.by_title, &manifest.hash())?;
    manifest::write_bytes(&dir.join(PLANNER_FILE), planner.to_json()?.as_bytes())?;
    Ok(RunOutput {
        dir,
        manifest,
        report: planner,
    })
}

pub fn load_planner(run_dir: &Path) -> Result<Planner> {
    let path = run_dir.join(PLANNER_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Planner::from_json(&text)
}

pub fn run_backtest(cfg: &RunConfig, inputs: &Inputs) -> Result<RunOutput<BacktestReport>> {
    let prep = Prepared::new(cfg, inputs)?;
    let (manifest, dir) = start("backtest", &prep)?;
    let cal = train_and_calibrate(&prep)?;
    let ablations = backtest::train_ablations(&prep)?;
    let test_rows = prep.test_rows()?;
    let report = backtest::evaluate(&prep, &test_rows, &cal.models, &cal.by_title, &ablations, &manifest.hash())?;
    write_backtest(&dir, &report)?;
    write_corrections(&dir, &cal.table)?;
    Ok(RunOutput { dir, manifest, report })
}

pub fn write_backtest(dir: &Path, report: &BacktestReport) -> Result<()> {
    manifest::write_json(&dir.join("backtest.json"), report)?;
    report.write_csv(create_file(&dir.join("backtest.csv"))?)?;
    report.write_coverage_csv(create_file(&dir.join("coverage.csv"))?)
}

pub fn run_plan_eval(cfg: &RunConfig, inputs: &Inputs) -> Result<RunOutput<PlanEvalReport>> {
    let prep = Prepared::new(cfg, inputs)?;
    let (manifest, dir) = start("plan-eval", &prep)?;
    let cal = train_and_calibrate(&prep)?;
    let planner = Planner::build(&prep, &cal.by_title, &manifest.hash())?;
    let issues: Vec<IssueKey> = prep.slice.test_issues(&inputs.ds).into_iter().collect();
    let report = plan_eval::evaluate_plans(&planner, &inputs.ds, inputs.truth.as_ref(), &issues, cfg.eval.supply_target, &inputs.cost)?;
    write_plan_eval(&dir, &report)?;
    Ok(RunOutput { dir, manifest, report })
}

pub fn write_plan_eval(dir: &Path, report: &PlanEvalReport) -> Result<()> {
    manifest::write_json(&dir.join("plan_eval.json"), report)?;
    report.write_csv(create_file(&dir.join("plan_eval.csv"))?)?;
    report.write_issues_csv(create_file(&dir.join("plan_eval_issues.csv"))?)
}

/// Plan exports for one issue: `pos,supply` CSVs with JSON KPI sidecars,
/// the frontier CSV and the whole plan set.
pub fn write_plan_set(dir: &Path, set: &PlanSet) -> Result<PathBuf> {
    let pdir = dir.join(format!("{}-{}", set.issue.title, set.issue.issue));
    std::fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    for plan in [&set.optimal_supply_plan, &set.optimal_distribution_plan] {
        plan.write_csv(create_file(&pdir.join(format!("{}.csv", plan.label)))?)?;
        manifest::write_json(&pdir.join(format!("{}.json", plan.label)), &plan.kpis_forecast)?;
    }
    write_frontier_csv(&set.scenario_frontier, create_file(&pdir.join("frontier.csv"))?)?;
    manifest::write_json(&pdir.join("planset.json"), set)?;
    Ok(pdir)
}

/// Plans the requested issues, or every test-view issue of a calibrated
/// title when none are given, with a planner trained from scratch.
pub fn run_plan(cfg: &RunConfig, inputs: &Inputs, issues: &[IssueKey]) -> Result<RunOutput<Vec<PlanSet>>> {
    let prep = Prepared::new(cfg, inputs)?;
    let (manifest, dir) = start("plan", &prep)?;
    let cal = train_and_calibrate(&prep)?;
    let planner = Planner::build(&prep, &cal.by_title, &manifest.hash())?;
    let targets: Vec<IssueKey> = if issues.is_empty() {
        prep.slice
            .test_issues(&inputs.ds)
            .into_iter()
            .filter(|k| planner.can_plan(&k.title))
            .collect()
    } else {
        issues.to_vec()
    };
    let sets = plan_with(&planner, inputs, &targets, &dir.join("plans"))?;
    Ok(RunOutput {
        dir,
        manifest,
        report: sets,
    })
}

/// Plans with an existing planner and writes the exports under `dir`.
pub fn plan_with(planner: &Planner, inputs: &Inputs, issues: &[IssueKey], dir: &Path) -> Result<Vec<PlanSet>> {
    let mut sets = Vec::with_capacity(issues.len());
    for key in issues {
        let set = planner.plan_issue(&inputs.ds, key)?;
        write_plan_set(dir, &set)?;
        sets.push(set);
    }
    Ok(sets)
}
