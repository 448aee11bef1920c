//! The `aoii` command line: `analyze`, `simulate`, `optimize` and `sweep`.
//!
//! Every command writes its outputs and a `manifest.json` into `--out`.
//! Exit codes: 0 success, 2 input error, 3 numerical error.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{analyze, AnalysisReport, Metric};
use crate::channel::{DecodingModel, NormalApproximation};
use crate::error::{Error, Result, Violation};
use crate::model::{db_to_linear, ParamMap, PenaltySpec, Scenario, Strategy, StrategyClass};
use crate::optimizer::{evaluate_strategy_table, optimize, NelderMeadConfig, Objective, OptResult, OptimizeOptions, SweepRow};
use crate::simulator::{empirical_mep, run_replications, run_traced, MepEstimate, SimConfig, SimStats};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const REPORT_SCHEMA: &str = "report/1";
pub const CURVES_SCHEMA: &str = "curves/1";
pub const TRACE_SCHEMA: &str = "trace/1";

#[derive(Debug, Parser)]
#[command(name = "aoii", version, about = "AoII and penalty analysis of energy-harvesting slotted ALOHA")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed for simulation and optimizer starts.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form analysis of one strategy.
    Analyze {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[command(flatten)]
        penalty: PenaltyArgs,
    },
    /// Slot-level simulation of one strategy.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[command(flatten)]
        penalty: PenaltyArgs,
        /// Measured slots per replication (e.g. 1e6).
        #[arg(long, default_value = "1e6", value_parser = parse_count)]
        slots: u64,
        /// Discarded slots before measurement.
        #[arg(long, default_value = "1e4", value_parser = parse_count)]
        warmup: u64,
        /// Independent replications pooled into one result.
        #[arg(long, default_value_t = 1)]
        reps: u64,
        /// Also write a per-slot trace (single replication only).
        #[arg(long)]
        trace: bool,
    },
    /// Optimize the strategy of one class.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        class: StrategyClass,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        penalty: PenaltyArgs,
    },
    /// Optimize every class over a grid of total change rates.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Total change rates U*qbar, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "reactive,random,hybrid")]
        classes: Vec<StrategyClass>,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        penalty: PenaltyArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// U=1000, E=8, symmetric process, harvesting 0.005.
    Symmetric,
    /// As symmetric, with q01/q10 = 0.01 and harvesting 0.05 in state 1.
    Asymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Aoii,
    Penalty,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario family.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Total change rate U*qbar applied to the preset or file scenario.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Ratio q01/q10 used with --rate (default: 1, or 0.01 for the asymmetric preset).
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Noise variance in dB, overriding the scenario.
    #[arg(long)]
    pub noise_db: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StrategyArgs {
    /// Strategy JSON file.
    #[arg(long, conflicts_with_all = ["class", "pi"])]
    pub strategy: Option<PathBuf>,
    /// Strategy class for --pi.
    #[arg(long, requires = "pi")]
    pub class: Option<StrategyClass>,
    /// Free parameters of the class, comma separated; a single value sets all.
    #[arg(long, value_delimiter = ',', requires = "class")]
    pub pi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct PenaltyArgs {
    #[arg(long, default_value_t = 1)]
    pub alpha0: u32,
    #[arg(long, default_value_t = 1)]
    pub alpha1: u32,
}

impl PenaltyArgs {
    fn spec(&self) -> PenaltySpec {
        PenaltySpec::new(self.alpha0, self.alpha1)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    /// Minimized quantity; `penalty` uses --alpha0/--alpha1.
    #[arg(long, value_enum, default_value = "aoii")]
    pub objective: ObjectiveKind,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Objective evaluations per Nelder-Mead run.
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
    /// Nelder-Mead reruns from each start's incumbent.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    /// Coordinate-search passes after each Nelder-Mead run.
    #[arg(long, default_value_t = 0)]
    pub polish: usize,
}

impl SearchArgs {
    fn metric(&self, penalty: PenaltySpec) -> Metric {
        match self.objective {
            ObjectiveKind::Aoii => Metric::Aoii,
            ObjectiveKind::Penalty => Metric::Penalty(penalty),
        }
    }

    fn options(&self, seed: u64) -> Result<OptimizeOptions> {
        if self.starts == 0 || self.budget == 0 {
            return Err(Error::Validation(vec![Violation::new(
                "starts/budget",
                "must both be positive",
            )]));
        }
        Ok(OptimizeOptions {
            starts: self.starts,
            seed,
            nelder_mead: NelderMeadConfig {
                max_evaluations: self.budget,
                ..NelderMeadConfig::default()
            },
            restarts: self.restarts,
            initial_points: Vec::new(),
            coordinate_sweeps: self.polish,
        })
    }
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub argv: Vec<String>,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub scenario: Scenario,
    pub scenario_hash: String,
    pub inputs: serde_json::Value,
    pub outputs: Vec<String>,
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    if v < 0.0 || v.fract() != 0.0 || v > 1e15 {
        return Err(format!("{s:?} is not a non-negative integer"));
    }
    Ok(v as u64)
}

/// Hex SHA-256 of the scenario's JSON encoding.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let json = serde_json::to_string(scenario).expect("scenario serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Validation(vec![Violation::new(path.display().to_string(), e.to_string())])
    })?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Validation(vec![Violation::new(path.display().to_string(), e.to_string())])
    })
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let mut s = match (&args.scenario, args.preset) {
        (Some(p), _) => read_json(p)?,
        (None, Some(Preset::Asymmetric)) => Scenario::asymmetric_reference(args.rate.unwrap_or(1.0)),
        (None, _) => Scenario::symmetric_reference(args.rate.unwrap_or(1.0)),
    };
    if let Some(rate) = args.rate {
        let ratio = args.ratio.unwrap_or(match args.preset {
            Some(Preset::Asymmetric) => 0.01,
            _ if args.scenario.is_some() => s.q01 / s.q10,
            _ => 1.0,
        });
        check_rate(rate, "rate")?;
        check_rate(ratio, "ratio")?;
        s = s.with_change_rate(rate, ratio);
    }
    if let Some(db) = args.noise_db {
        s.noise_variance = db_to_linear(db);
    }
    let v = s.validate();
    if v.is_empty() {
        Ok(s)
    } else {
        Err(Error::Validation(v))
    }
}

/// Scenario at total change rate `rate` from the same base as `args`.
fn scenario_family(args: &ScenarioArgs) -> Result<impl Fn(f64) -> Scenario + Sync> {
    let base = load_scenario(&ScenarioArgs { rate: None, ..args.clone() })?;
    let ratio = args.ratio.unwrap_or(match args.preset {
        Some(Preset::Asymmetric) => 0.01,
        _ if args.scenario.is_some() => base.q01 / base.q10,
        _ => 1.0,
    });
    check_rate(ratio, "ratio")?;
    Ok(move |rate| base.with_change_rate(rate, ratio))
}

fn check_rate(v: f64, field: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(vec![Violation::new(field, format!("{v} must be a positive real"))]))
    }
}

fn load_strategy(args: &StrategyArgs, scenario: &Scenario) -> Result<Strategy> {
    let e = scenario.battery_capacity;
    let strategy = match (&args.strategy, args.class) {
        (Some(p), _) => read_json(p)?,
        (None, Some(class)) => {
            let map = ParamMap::new(class, e);
            match args.pi.len() {
                1 => Strategy::constant(class, e, args.pi[0]),
                n if n == map.len() => map.strategy(&args.pi),
                n => {
                    return Err(Error::Validation(vec![Violation::new(
                        "pi",
                        format!("{class} with E={e} has {} free parameters, got {n}", map.len()),
                    )]))
                }
            }
        }
        (None, None) => {
            return Err(Error::Validation(vec![Violation::new(
                "strategy",
                "give --strategy FILE or --class with --pi",
            )]))
        }
    };
    crate::model::validate(scenario, &strategy)?;
    Ok(strategy)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let f = fs::File::create(dir.join(name))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Row of `report.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub schema: &'static str,
    pub scenario_hash: String,
    pub mean_wed: f64,
    pub second_moment_wed: f64,
    pub mean_ced: f64,
    pub gamma: f64,
    pub average_penalty: f64,
    pub average_aoii: f64,
    pub misdetection_probability: f64,
}

/// Row of `curves.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub schema: &'static str,
    pub total_change_rate: f64,
    pub class: StrategyClass,
    pub objective: ObjectiveKind,
    pub objective_value: f64,
    pub average_aoii: f64,
    pub average_penalty: f64,
    pub misdetection_probability: f64,
    pub evaluations: usize,
    pub converged_starts: usize,
    pub status: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeOutput<'a> {
    pub scenario_hash: String,
    pub scenario: &'a Scenario,
    pub strategy: &'a Strategy,
    pub report: &'a AnalysisReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub average_aoii: f64,
    pub aoii_standard_error: f64,
    pub average_penalty: f64,
    pub penalty_standard_error: f64,
    pub mean_wed: f64,
    pub mean_ced: f64,
    pub misdetection: Option<MepEstimate>,
}

impl SimulationSummary {
    pub fn of(stats: &SimStats) -> Self {
        Self {
            average_aoii: stats.average_aoii(),
            aoii_standard_error: stats.aoii_standard_error(),
            average_penalty: stats.average_penalty(),
            penalty_standard_error: stats.penalty_standard_error(),
            mean_wed: stats.wed_pooled().mean(),
            mean_ced: stats.ced_pooled().mean(),
            misdetection: empirical_mep(stats).ok(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput<'a> {
    pub scenario_hash: String,
    pub summary: SimulationSummary,
    pub stats: &'a SimStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeOutput<'a> {
    pub scenario_hash: String,
    pub metric: Metric,
    pub options: &'a OptimizeOptions,
    pub result: &'a OptResult,
    pub report: &'a AnalysisReport,
}

fn curve_rows(rows: &[SweepRow], objective: ObjectiveKind) -> Vec<CurveRow> {
    rows.iter()
        .map(|r| CurveRow {
            schema: CURVES_SCHEMA,
            total_change_rate: r.total_change_rate,
            class: r.class,
            objective,
            objective_value: r.objective,
            average_aoii: r.average_aoii,
            average_penalty: r.average_penalty,
            misdetection_probability: r.misdetection_probability,
            evaluations: r.evaluations,
            converged_starts: r.converged_starts,
            status: if r.error.is_none() { "ok" } else { "failed" },
            error: r.error.clone().unwrap_or_default(),
        })
        .collect()
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

/// Runs a parsed command inside a pool of `--threads` workers.
pub fn execute(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Validation(vec![Violation::new("threads", "must be positive")]));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    pool.install(|| dispatch(cli, argv))
}

fn dispatch(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let model: Arc<dyn DecodingModel> = Arc::new(NormalApproximation);
    let manifest = |subcommand, scenario: &Scenario, inputs: serde_json::Value, outputs: &[&str]| RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        argv: argv.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        threads: cli.threads,
        scenario: scenario.clone(),
        scenario_hash: scenario_hash(scenario),
        inputs,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let out = &cli.out;

    match &cli.command {
        Command::Analyze { scenario, strategy, penalty } => {
            let s = load_scenario(scenario)?;
            let pi = load_strategy(strategy, &s)?;
            let report = analyze(&s, &pi, &penalty.spec(), model.as_ref())?;
            let hash = scenario_hash(&s);
            fs::create_dir_all(out)?;
            write_json(out, "report.json", &AnalyzeOutput {
                scenario_hash: hash.clone(),
                scenario: &s,
                strategy: &pi,
                report: &report,
            })?;
            write_csv(out, "report.csv", &[ReportRow {
                schema: REPORT_SCHEMA,
                scenario_hash: hash,
                mean_wed: report.mean_wed,
                second_moment_wed: report.second_moment_wed,
                mean_ced: report.mean_ced,
                gamma: report.gamma,
                average_penalty: report.average_penalty,
                average_aoii: report.average_aoii,
                misdetection_probability: report.misdetection_probability,
            }])?;
            let inputs = serde_json::json!({ "scenario": scenario, "strategy": pi, "penalty": penalty });
            write_json(out, "manifest.json", &manifest("analyze", &s, inputs, &["report.json", "report.csv"]))?;
        }
        Command::Simulate { scenario, strategy, penalty, slots, warmup, reps, trace } => {
            let s = load_scenario(scenario)?;
            let pi = load_strategy(strategy, &s)?;
            if *reps == 0 {
                return Err(Error::Validation(vec![Violation::new("reps", "must be positive")]));
            }
            if *trace && *reps != 1 {
                return Err(Error::Validation(vec![Violation::new("trace", "requires --reps 1")]));
            }
            let cfg = SimConfig {
                warmup_slots: *warmup,
                ..SimConfig::new(*slots, cli.seed)
            };
            let v = cfg.validate(s.num_devices);
            if !v.is_empty() {
                return Err(Error::Validation(v));
            }
            fs::create_dir_all(out)?;
            let mut outputs = vec!["stats.json"];
            let stats = if *trace {
                outputs.push("trace.csv");
                let mut w = BufWriter::new(fs::File::create(out.join("trace.csv"))?);
                let cfg = SimConfig {
                    seed: crate::simulator::replication_seed(cli.seed, 0),
                    ..cfg.clone()
                };
                let mut st = run_traced(&s, &pi, model.as_ref(), &penalty.spec(), &cfg, &mut w)?;
                st.seed = cli.seed;
                st
            } else {
                run_replications(&s, &pi, model.as_ref(), &penalty.spec(), &cfg, *reps)?
            };
            write_json(out, "stats.json", &SimulateOutput {
                scenario_hash: scenario_hash(&s),
                summary: SimulationSummary::of(&stats),
                stats: &stats,
            })?;
            let inputs = serde_json::json!({
                "scenario": scenario, "strategy": pi, "penalty": penalty,
                "slots": slots, "warmup": warmup, "reps": reps, "trace": trace,
                "replication_seeds": stats.replication_seeds, "trace_schema": TRACE_SCHEMA,
            });
            write_json(out, "manifest.json", &manifest("simulate", &s, inputs, &outputs))?;
        }
        Command::Optimize { scenario, class, search, penalty } => {
            let s = load_scenario(scenario)?;
            let metric = search.metric(penalty.spec());
            let options = search.options(cli.seed)?;
            let objective = Objective::new(s.clone(), metric, *class).with_model(model.clone());
            let res = optimize(&objective, &options);
            if !res.best_value.is_finite() {
                return Err(Error::Degenerate("no start reached a finite objective".into()));
            }
            let report = analyze(&s, &res.best_strategy, &penalty.spec(), model.as_ref())?;
            fs::create_dir_all(out)?;
            write_json(out, "optimize.json", &OptimizeOutput {
                scenario_hash: scenario_hash(&s),
                metric,
                options: &options,
                result: &res,
                report: &report,
            })?;
            write_json(out, "strategy.json", &res.best_strategy)?;
            let inputs = serde_json::json!({ "scenario": scenario, "class": class, "search": search, "penalty": penalty });
            write_json(out, "manifest.json", &manifest("optimize", &s, inputs, &["optimize.json", "strategy.json"]))?;
        }
        Command::Sweep { scenario, grid, classes, search, penalty } => {
            if grid.is_empty() {
                return Err(Error::Validation(vec![Violation::new("grid", "must not be empty")]));
            }
            for &g in grid {
                check_rate(g, "grid")?;
            }
            if classes.is_empty() {
                return Err(Error::Validation(vec![Violation::new("classes", "must not be empty")]));
            }
            let family = scenario_family(scenario)?;
            for &g in grid {
                let v = family(g).validate();
                if !v.is_empty() {
                    return Err(Error::Validation(v));
                }
            }
            let options = search.options(cli.seed)?;
            let rows = evaluate_strategy_table(
                &family,
                grid,
                classes,
                search.metric(penalty.spec()),
                penalty.spec(),
                &options,
                model.clone(),
            );
            fs::create_dir_all(out)?;
            write_csv(out, "curves.csv", &curve_rows(&rows, search.objective))?;
            write_json(out, "sweep.json", &rows)?;
            let inputs = serde_json::json!({
                "scenario": scenario, "grid": grid, "classes": classes, "search": search, "penalty": penalty,
            });
            write_json(out, "manifest.json", &manifest("sweep", &family(grid[0]), inputs, &["curves.csv", "sweep.json"]))?;
        }
    }
    Ok(())
}
