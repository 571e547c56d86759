//! Experiment orchestration: run (game, task, method) triples over seeds,
//! aggregate over seeds and write json/csv reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_method, Method};
use crate::dbcpi::{DbcpiConfig, RunResult};
use crate::environments::{build_game, requirement_preset, GAME_IDS, TASK_IDS};
use crate::error::{Error, Result};
use crate::game::{DensityObjective, GameSpec, MarkovGame, ObjectiveKind};

pub const OUTPUT_DIR_ENV: &str = "DBCE_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Built-in game id or path to a game-spec JSON file.
    pub game: String,
    pub task: String,
    pub method: String,
    /// Overrides the task preset; required for games loaded from a file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<DensityObjective>,
}

impl RunSpec {
    pub fn new(game: &str, task: &str, method: &str) -> Self {
        RunSpec { game: game.into(), task: task.into(), method: method.into(), objective: None }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub runs: Vec<RunSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Settings shared by all runs; the seed is replaced per run.
    #[serde(default)]
    pub dbcpi: DbcpiConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// With `false`, runtimes are reported as 0 so identical configs give
    /// byte-identical reports.
    #[serde(default = "yes")]
    pub record_timing: bool,
}

fn paper_methods(game: &str, task: &str) -> Vec<String> {
    let (wide_cap, shaping) = if game == "cae" { ("cm-25", "rm-0.5") } else { ("cm-5", "rm-1.5") };
    let mut methods = vec!["dbce".to_string(), "cm-0.05".into(), wide_cap.into()];
    if task == "safety" {
        methods.push(shaping.into());
    }
    methods
}

impl ExperimentConfig {
    pub fn new(runs: Vec<RunSpec>, seeds: Vec<u64>) -> Self {
        ExperimentConfig { runs, seeds, dbcpi: DbcpiConfig::default(), output_dir: None, record_timing: true }
    }

    /// Every game and task with the comparison methods used for each.
    pub fn paper_grid(seeds: Vec<u64>) -> Self {
        let mut runs = Vec::new();
        for g in GAME_IDS {
            for t in TASK_IDS {
                runs.extend(paper_methods(g, t).iter().map(|m| RunSpec::new(g, t, m)));
            }
        }
        Self::new(runs, seeds)
    }

    /// DBCE alone on the nine tasks.
    pub fn dbce_grid(seeds: Vec<u64>) -> Self {
        let runs = GAME_IDS
            .iter()
            .flat_map(|g| TASK_IDS.iter().map(move |t| RunSpec::new(g, t, "dbce")))
            .collect();
        Self::new(runs, seeds)
    }

    /// Named presets: `paper9` (3 seeds), `paper9-20` (20 seeds), `dbce9`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper9" => Ok(Self::paper_grid(default_seeds())),
            "paper9-20" => Ok(Self::paper_grid((0..20).collect())),
            "dbce9" => Ok(Self::dbce_grid(default_seeds())),
            other => Err(Error::UnknownId { kind: "preset", id: other.into() }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(default_output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        self.dbcpi.validate()?;
        for spec in &self.runs {
            resolve(spec)?;
        }
        Ok(())
    }
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Built-in id or game-spec JSON path.
pub fn load_game(id_or_path: &str) -> Result<MarkovGame> {
    if GAME_IDS.contains(&id_or_path) {
        build_game(id_or_path)
    } else if Path::new(id_or_path).is_file() {
        GameSpec::load(id_or_path)?.into_game()
    } else {
        Err(Error::UnknownId { kind: "game", id: id_or_path.into() })
    }
}

struct Resolved {
    game: MarkovGame,
    objective: DensityObjective,
    method: Method,
}

fn resolve(spec: &RunSpec) -> Result<Resolved> {
    let game = load_game(&spec.game)?;
    let objective = match &spec.objective {
        Some(obj) => obj.clone(),
        None => requirement_preset(&spec.game, &spec.task)?.0,
    };
    objective.validate(game.num_states())?;
    let method: Method = spec.method.parse()?;
    if method.needs_safety_task() && objective.kind != ObjectiveKind::MinDensity {
        return Err(Error::Config(format!("{} applies to safety tasks only, not {}", spec.method, spec.task)));
    }
    Ok(Resolved { game, objective, method })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub game: String,
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub game: String,
    pub task: String,
    pub method: String,
    pub runs: usize,
    pub error_mean: f64,
    pub error_std: f64,
    pub max_reg_mean: f64,
    pub max_reg_std: f64,
    pub max_bf_mean: f64,
    pub max_bf_std: f64,
    pub runtime_s_mean: f64,
    pub runtime_s_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl RunReport {
    /// Builds the report, grouping runs by (game, task, method) in first-seen order.
    pub fn from_runs(runs: Vec<RunResult>, failures: Vec<RunFailure>) -> Self {
        let mut keys: Vec<(String, String, String)> = Vec::new();
        for r in &runs {
            let key = (r.game.clone(), r.task.clone(), r.method.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let aggregates = keys
            .into_iter()
            .map(|(game, task, method)| {
                let group: Vec<&RunResult> =
                    runs.iter().filter(|r| r.game == game && r.task == task && r.method == method).collect();
                let stat = |f: fn(&RunResult) -> f64| mean_std(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
                let (error_mean, error_std) = stat(|r| r.error);
                let (max_reg_mean, max_reg_std) = stat(|r| r.max_reg);
                let (max_bf_mean, max_bf_std) = stat(|r| r.max_bf);
                let (runtime_s_mean, runtime_s_std) = stat(|r| r.runtime_s);
                Aggregate {
                    runs: group.len(),
                    game,
                    task,
                    method,
                    error_mean,
                    error_std,
                    max_reg_mean,
                    max_reg_std,
                    max_bf_mean,
                    max_bf_std,
                    runtime_s_mean,
                    runtime_s_std,
                }
            })
            .collect();
        RunReport { runs, failures, aggregates }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Runs every (spec, seed) pair in parallel. Invalid ids fail up front;
/// failures of individual runs are recorded in the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let resolved = cfg.runs.iter().map(resolve).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> =
        (0..cfg.runs.len()).flat_map(|k| cfg.seeds.iter().map(move |&seed| (k, seed))).collect();
    let outcomes: Vec<std::result::Result<RunResult, RunFailure>> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let (spec, r) = (&cfg.runs[k], &resolved[k]);
            let run_cfg = DbcpiConfig { seed, ..cfg.dbcpi.clone() };
            log::info!("running {} / {} / {} seed {seed}", spec.game, spec.task, spec.method);
            match run_method(&r.game, &r.objective, r.method, &run_cfg) {
                Ok(mut result) => {
                    result.game = spec.game.clone();
                    result.task = spec.task.clone();
                    result.method = spec.method.clone();
                    if !cfg.record_timing {
                        result.runtime_s = 0.0;
                    }
                    Ok(result)
                }
                Err(e) => {
                    log::warn!("{} / {} / {} seed {seed} failed: {e}", spec.game, spec.task, spec.method);
                    Err(RunFailure {
                        game: spec.game.clone(),
                        task: spec.task.clone(),
                        method: spec.method.clone(),
                        seed,
                        message: e.to_string(),
                    })
                }
            }
        })
        .collect();
    let (mut runs, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(RunReport::from_runs(runs, failures))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    TraceCsv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "trace-csv" => Ok(ReportFormat::TraceCsv),
            other => Err(Error::UnknownId { kind: "report format", id: other.into() }),
        }
    }
}

pub fn write_runs_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["game", "task", "method", "seed", "error", "max_reg", "max_bf", "runtime_s"])?;
    for r in &report.runs {
        w.write_record([
            r.game.clone(),
            r.task.clone(),
            r.method.clone(),
            r.seed.to_string(),
            r.error.to_string(),
            r.max_reg.to_string(),
            r.max_bf.to_string(),
            r.runtime_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "game",
        "task",
        "method",
        "runs",
        "error_mean",
        "error_std",
        "max_reg_mean",
        "max_reg_std",
        "max_bf_mean",
        "max_bf_std",
        "runtime_s_mean",
        "runtime_s_std",
    ])?;
    for a in &report.aggregates {
        let mut row = vec![a.game.clone(), a.task.clone(), a.method.clone(), a.runs.to_string()];
        row.extend(
            [
                a.error_mean,
                a.error_std,
                a.max_reg_mean,
                a.max_reg_std,
                a.max_bf_mean,
                a.max_bf_std,
                a.runtime_s_mean,
                a.runtime_s_std,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (run, iteration).
pub fn write_traces_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["game", "task", "method", "seed", "iteration", "error"])?;
    for r in &report.runs {
        for (k, e) in r.trace.iter().enumerate() {
            w.write_record([
                r.game.clone(),
                r.task.clone(),
                r.method.clone(),
                r.seed.to_string(),
                (k + 1).to_string(),
                e.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn report_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Writes `format` into `dir` and returns the files created.
pub fn emit_report(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = dir.join("report.json");
            fs::write(&path, report_json(report)?)?;
            written.push(path);
        }
        ReportFormat::Csv => {
            let runs = dir.join("runs.csv");
            write_runs_csv(report, fs::File::create(&runs)?)?;
            let aggregates = dir.join("aggregates.csv");
            write_aggregates_csv(report, fs::File::create(&aggregates)?)?;
            written.extend([runs, aggregates]);
        }
        ReportFormat::TraceCsv => {
            let path = dir.join("traces.csv");
            write_traces_csv(report, fs::File::create(&path)?)?;
            written.push(path);
        }
    }
    Ok(written)
}
