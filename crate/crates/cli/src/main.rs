use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use plateopt::domain::IssueKey;
use plateopt::harness::config::{FeaturesAsOf, SupplyTarget};
use plateopt::harness::manifest::{write_json, MANIFEST_FILE};
use plateopt::harness::{self, load_planner, plan_with, Inputs, Manifest, RunConfig};
use plateopt::ingest::{load_holidays, Dataset, HOLIDAYS_FILE};
use plateopt::optimizer::{OPTIMAL_DISTRIBUTION, OPTIMAL_SUPPLY};
use plateopt::rules::{apply_rules, load_rules, reconcile_constraint, ReconcileMode, RuleContext};
use plateopt::synth::{generate, GeneratorSpec};
use plateopt::{Error, Result};
use plateopt_service::{serve, AppState, ServiceConfig};

/// Supply planning for fixed-inventory retail networks.
#[derive(Debug, Parser)]
#[command(name = "plate-opt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with its ground truth.
    Generate {
        /// Generator TOML; built-in defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Load and check a dataset directory.
    Validate { dir: PathBuf },
    /// Train the quantile models.
    Train(RunArgs),
    /// Train, calibrate and store the planner used by `plan`, `rules` and `serve`.
    Calibrate(RunArgs),
    /// Pinball comparison of every model variant on the test view.
    Backtest(RunArgs),
    /// Score baseline and optimizer plans of every test issue.
    PlanEval(RunArgs),
    /// Supply plans for the given issues, or every test issue.
    Plan {
        #[command(flatten)]
        args: RunArgs,
        /// Reuse the planner of a `calibrate` run instead of training.
        #[arg(long = "run")]
        from_run: Option<PathBuf>,
        /// `title/issue`, repeatable.
        #[arg(long = "issue")]
        issues: Vec<IssueKey>,
    },
    /// Apply business rules to a plan of a calibrated run.
    Rules {
        #[arg(long = "run")]
        from_run: PathBuf,
        #[arg(long)]
        issue: IssueKey,
        /// JSON list of rules.
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, default_value = OPTIMAL_DISTRIBUTION)]
        label: String,
        /// Bring the adjusted plan back to the supply constraint.
        #[arg(long, value_enum)]
        reconcile: Option<Reconcile>,
        /// Defaults to `rules/` in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Serve the HTTP API over a calibrated run.
    Serve {
        #[arg(long = "run")]
        from_run: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Bearer token required on every endpoint but /health.
        #[arg(long)]
        token: Option<String>,
        /// Defaults to `audit.jsonl` in the run directory.
        #[arg(long)]
        audit: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Run configuration TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Take the configuration from an earlier run's manifest.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cutoff: Option<NaiveDate>,
    #[arg(long)]
    trees: Option<usize>,
    /// One model per alpha shared by every title.
    #[arg(long)]
    shared: bool,
    #[arg(long, value_enum)]
    features_as_of: Option<AsOf>,
    #[arg(long, value_enum)]
    supply_target: Option<Target>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AsOf {
    Cutoff,
    IssueStart,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    Issue,
    Historical,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Reconcile {
    Scale,
    Relax,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.manifest, &self.config) {
            (Some(m), _) => Manifest::load(m)?.config,
            (None, Some(c)) => RunConfig::load(c)?,
            (None, None) => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data.dir = d.clone();
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(c) = self.cutoff {
            cfg.split.cutoff = Some(c);
        }
        if let Some(t) = self.trees {
            cfg.model.gbt.n_trees = t;
        }
        if self.shared {
            cfg.model.shared = true;
        }
        if let Some(a) = self.features_as_of {
            cfg.split.features_as_of = match a {
                AsOf::Cutoff => FeaturesAsOf::Cutoff,
                AsOf::IssueStart => FeaturesAsOf::IssueStart,
            };
        }
        if let Some(t) = self.supply_target {
            cfg.eval.supply_target = match t {
                Target::Issue => SupplyTarget::Issue,
                Target::Historical => SupplyTarget::Historical,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The configuration a run was made with, pointed at `data` when given.
fn run_config(run: &Path, data: Option<&PathBuf>) -> Result<RunConfig> {
    let mut cfg = Manifest::load(&run.join(MANIFEST_FILE))?.config;
    if let Some(d) = data {
        cfg.data.dir = d.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn stdout() -> std::io::StdoutLock<'static> {
    std::io::stdout().lock()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { spec, out, seed } => {
            let mut spec = match spec {
                Some(p) => GeneratorSpec::load(&p)?,
                None => GeneratorSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            spec.validate()?;
            let generated = generate(&spec)?;
            generated.write_dir(&out)?;
            let ds = &generated.dataset;
            println!(
                "wrote {}: {} records, {} POS, {} issues",
                out.display(),
                ds.records().len(),
                ds.pos_meta().len(),
                ds.issue_meta().len()
            );
        }
        Command::Validate { dir } => {
            let ds = Dataset::load_dir(&dir)?;
            let holidays = dir.join(HOLIDAYS_FILE);
            let n_holidays = if holidays.exists() { load_holidays(&holidays)?.len() } else { 0 };
            println!(
                "ok: {} records, {} POS, {} issues, {} titles, {} holidays",
                ds.records().len(),
                ds.pos_meta().len(),
                ds.issue_meta().len(),
                ds.titles().len(),
                n_holidays
            );
        }
        Command::Train(args) => {
            let cfg = args.config()?;
            let out = harness::run_train(&cfg, &Inputs::load(&cfg)?)?;
            println!("{}", out.dir.display());
        }
        Command::Calibrate(args) => {
            let cfg = args.config()?;
            let out = harness::run_calibrate(&cfg, &Inputs::load(&cfg)?)?;
            for t in out.report.titles() {
                println!("calibrated {t}");
            }
            println!("{}", out.dir.display());
        }
        Command::Backtest(args) => {
            let cfg = args.config()?;
            let out = harness::run_backtest(&cfg, &Inputs::load(&cfg)?)?;
            out.report.write_csv(stdout())?;
            println!("{}", out.dir.display());
        }
        Command::PlanEval(args) => {
            let cfg = args.config()?;
            let out = harness::run_plan_eval(&cfg, &Inputs::load(&cfg)?)?;
            out.report.write_csv(stdout())?;
            println!(
                "conformance {}/{} ({:.3})",
                out.report.within_band, out.report.n_issues, out.report.conformance_rate
            );
            println!("{}", out.dir.display());
        }
        Command::Plan { args, from_run, issues } => {
            let (sets, dir) = match from_run {
                Some(r) => {
                    let cfg = run_config(&r, args.data.as_ref())?;
                    let inputs = Inputs::load(&cfg)?;
                    let planner = load_planner(&r)?;
                    let issues = if issues.is_empty() {
                        inputs
                            .ds
                            .issue_meta()
                            .values()
                            .filter(|m| m.period_start >= planner.cutoff() && planner.can_plan(&m.title))
                            .map(|m| m.key())
                            .filter(|k| !inputs.ds.issue_records(k).is_empty())
                            .collect()
                    } else {
                        issues
                    };
                    let dir = r.join("plans");
                    (plan_with(&planner, &inputs, &issues, &dir)?, dir)
                }
                None => {
                    let cfg = args.config()?;
                    let out = harness::run_plan(&cfg, &Inputs::load(&cfg)?, &issues)?;
                    (out.report, out.dir.join("plans"))
                }
            };
            let mut w = stdout();
            for s in &sets {
                let _ = writeln!(
                    w,
                    "{}: optimal_supply {} optimal_distribution {} ({:?})",
                    s.issue,
                    s.optimal_supply_plan.total(),
                    s.optimal_distribution_plan.total(),
                    s.constraint_status
                );
            }
            let _ = writeln!(w, "{}", dir.display());
        }
        Command::Rules {
            from_run,
            issue,
            rules,
            label,
            reconcile,
            out,
            data,
        } => {
            let cfg = run_config(&from_run, data.as_ref())?;
            let inputs = Inputs::load(&cfg)?;
            let planner = load_planner(&from_run)?;
            let rules = load_rules(&rules)?;
            let meta = inputs
                .ds
                .issue(&issue)
                .ok_or_else(|| Error::Reference(format!("unknown issue {issue}")))?;
            let set = planner.plan_issue(&inputs.ds, &issue)?;
            let plan = match label.as_str() {
                OPTIMAL_SUPPLY => &set.optimal_supply_plan,
                OPTIMAL_DISTRIBUTION => &set.optimal_distribution_plan,
                other => {
                    return Err(Error::invalid(
                        "label",
                        format!("expected {OPTIMAL_SUPPLY} or {OPTIMAL_DISTRIBUTION}, got {other}"),
                    ))
                }
            };
            let features = planner.plate_features(&inputs.ds, &issue)?;
            let demand = planner.scenario_demand(&inputs.ds, &issue, &plan.scenario)?;
            let ctx = RuleContext {
                issue: meta,
                features: &features,
                demand: &demand,
                cfg: &inputs.cost,
            };
            let (mut adjusted, report) = apply_rules(plan, &ctx, &rules)?;
            let mut summary = BTreeMap::new();
            if let Some(mode) = reconcile {
                let mode = match mode {
                    Reconcile::Scale => ReconcileMode::Scale,
                    Reconcile::Relax => ReconcileMode::Relax,
                };
                let (plan, status) = reconcile_constraint(&adjusted, meta.n_total, meta.delta, mode)?;
                adjusted = plan;
                adjusted.kpis_forecast = ctx.forecast_kpis(&adjusted.allocations)?;
                summary.insert("reconcile", serde_json::to_value(status)?);
            }
            let dir = out
                .unwrap_or_else(|| from_run.join("rules"))
                .join(format!("{}-{}", issue.title, issue.issue));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let csv_path = dir.join(format!("{label}.csv"));
            let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
            adjusted.write_csv(std::io::BufWriter::new(file))?;
            summary.insert("manifest_hash", serde_json::Value::String(planner.manifest_hash().to_string()));
            summary.insert("rules", serde_json::to_value(&report)?);
            summary.insert("kpis_forecast", serde_json::to_value(&adjusted.kpis_forecast)?);
            write_json(&dir.join(format!("{label}.rules.json")), &summary)?;
            println!(
                "{issue}: {} -> {} copies ({:+})",
                plan.total(),
                adjusted.total(),
                adjusted.total() as i64 - plan.total() as i64
            );
            println!("{}", dir.display());
        }
        Command::Serve {
            from_run,
            addr,
            token,
            audit,
            data,
        } => {
            let cfg = run_config(&from_run, data.as_ref())?;
            let inputs = Inputs::load(&cfg)?;
            let planner = load_planner(&from_run)?;
            let state = AppState::new(
                planner,
                inputs.ds,
                ServiceConfig {
                    token,
                    audit_log: Some(audit.unwrap_or_else(|| from_run.join("audit.jsonl"))),
                },
            )?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
            eprintln!("listening on http://{addr}");
            rt.block_on(serve(addr, state))
                .map_err(|e| Error::io(addr.to_string(), e))?;
        }
    }
    Ok(())
}
