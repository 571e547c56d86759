use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dbce::baselines::{reward_modified_game, run_method, Method};
use dbce::dbcpi::{derive_seed, DbcpiConfig, EvalMode, SEED_ROLLOUT};
use dbce::environments::requirement_preset;
use dbce::game::{
    requirement_score, rollout, validate_game, write_trajectory_csv, DensityObjective, GameSpec, JointPolicy,
    MarkovGame, RequirementSpec, DEFAULT_ROLLOUT_STEPS,
};
use dbce::harness::{emit_report, load_game, run_experiment, ExperimentConfig, ReportFormat};
use dbce::lp::write_lp_text;
use dbce::stage::{build_stage_lp, QTables, StageSolveOptions};
use dbce::Error;
use serde_json::Value;

/// Density-based correlated equilibria of tabular Markov games
#[derive(Parser, Debug)]
#[command(name = "dbce", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one game/task with one method and print the run result as JSON
    Solve(SolveArgs),
    /// Run an experiment grid over seeds and write reports
    Experiment(ExperimentArgs),
    /// Roll out a policy, write the trajectory CSV and print requirement scores
    Rollout(RolloutArgs),
    /// Check a game for structural problems
    Validate(ValidateArgs),
    /// Print the stage LP for a Q snapshot in LP text format
    DumpLp(DumpLpArgs),
    /// Write a game as game-spec JSON
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct TaskArgs {
    /// Built-in game id (fairgamble, hunters, cae) or a game JSON file
    #[arg(long)]
    game: String,
    /// Task id (safety, freq-10, fairness)
    #[arg(long, default_value = "safety")]
    task: String,
    /// Density objective JSON file, replacing the task preset
    #[arg(long)]
    objective: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Number of policy-iteration rounds
    #[arg(long)]
    iters: Option<usize>,
    /// Policy evaluation: exact or sampled
    #[arg(long)]
    eval_mode: Option<EvalMode>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut DbcpiConfig) {
        if let Some(k) = self.iters {
            cfg.iterations = k;
        }
        if let Some(mode) = self.eval_mode {
            cfg.eval_mode = mode;
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// dbce, ceq, cm-<b> or rm-<p>
    #[arg(long, default_value = "dbce")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    run: RunArgs,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment config JSON
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in grid: paper9, paper9-20 or dbce9
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    run: RunArgs,
    /// Report formats to write
    #[arg(long, value_delimiter = ',', default_value = "json,csv,trace-csv")]
    format: Vec<ReportFormat>,
    /// Report runtimes as 0 so repeated runs give identical files
    #[arg(long)]
    no_timing: bool,
    /// Output directory (default: config value, then $DBCE_OUTPUT_DIR, then ./results)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RolloutArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Run result JSON (its policy is used) or a bare policy table
    #[arg(long)]
    policy: PathBuf,
    /// Requirement JSON file, replacing the task preset
    #[arg(long)]
    requirement: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ROLLOUT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectory CSV file (default: not written)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    game: String,
}

#[derive(Args, Debug)]
struct DumpLpArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, default_value = "dbce")]
    method: String,
    /// Q tables JSON, or a run result whose Q is used (default: zeros)
    #[arg(long)]
    q: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    game: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownId { .. } | Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            other => other?,
        },
    }
    Ok(())
}

fn read_json(path: &Path) -> CliResult<Value> {
    let bytes = fs::read(path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Reads `path` as JSON, descending into `field` when the document is an object holding it.
fn read_embedded<T: serde::de::DeserializeOwned>(path: &Path, field: &str) -> CliResult<T> {
    let mut value = read_json(path)?;
    if let Some(inner) = value.get_mut(field) {
        value = inner.take();
    }
    Ok(serde_json::from_value(value)?)
}

fn load_task(args: &TaskArgs) -> CliResult<(MarkovGame, DensityObjective)> {
    let game = load_game(&args.game)?;
    let objective = match &args.objective {
        Some(path) => serde_json::from_value(read_json(path)?)?,
        None => requirement_preset(&args.game, &args.task)?.0,
    };
    objective.validate(game.num_states())?;
    Ok((game, objective))
}

fn solve(args: SolveArgs) -> CliResult<()> {
    let (game, objective) = load_task(&args.task)?;
    let method: Method = args.method.parse()?;
    let mut cfg = DbcpiConfig { seed: args.seed, ..DbcpiConfig::default() };
    args.run.apply(&mut cfg);
    let mut result = run_method(&game, &objective, method, &cfg)?;
    result.game = args.task.game.clone();
    result.task = args.task.task.clone();
    result.method = args.method.clone();
    write_output(args.out.as_deref(), &serde_json::to_string_pretty(&result)?)
}

fn experiment(args: ExperimentArgs) -> CliResult<()> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Failure::Usage("--config or --preset is required".into())),
    };
    args.run.apply(&mut cfg.dbcpi);
    if args.no_timing {
        cfg.record_timing = false;
    }
    if let Some(dir) = &args.out {
        cfg.output_dir = Some(dir.clone());
    }
    let report = run_experiment(&cfg)?;
    let dir = cfg.output_dir();
    for format in &args.format {
        for path in emit_report(&report, *format, &dir)? {
            eprintln!("wrote {}", path.display());
        }
    }
    eprintln!("{} runs, {} failed", report.runs.len() + report.failures.len(), report.failures.len());
    for f in &report.failures {
        eprintln!("  {} / {} / {} seed {}: {}", f.game, f.task, f.method, f.seed, f.message);
    }
    Ok(())
}

fn rollout_cmd(args: RolloutArgs) -> CliResult<()> {
    let game = load_game(&args.task.game)?;
    let requirement: RequirementSpec = match &args.requirement {
        Some(path) => serde_json::from_value(read_json(path)?)?,
        None => requirement_preset(&args.task.game, &args.task.task)?.1,
    };
    let policy: JointPolicy = read_embedded(&args.policy, "policy")?;
    if policy.num_states() != game.num_states() || policy.num_joint() != game.num_joint() {
        return Err(Failure::Run(format!(
            "policy is {}x{}, game needs {}x{}",
            policy.num_states(),
            policy.num_joint(),
            game.num_states(),
            game.num_joint()
        )));
    }
    let seed = derive_seed(args.seed, SEED_ROLLOUT, 0);
    let traj = rollout(&game, &policy, args.steps, seed)?;
    if let Some(path) = &args.out {
        write_trajectory_csv(&game, &traj, fs::File::create(path)?)?;
    }
    let scores = serde_json::json!({
        "game": args.task.game,
        "task": args.task.task,
        "requirement": requirement.kind,
        "steps": traj.len(),
        "seed": args.seed,
        "score": requirement_score(&traj, &requirement),
    });
    write_output(None, &serde_json::to_string_pretty(&scores)?)
}

fn validate(args: ValidateArgs) -> CliResult<()> {
    let game = load_game(&args.game).map_err(|e| match e {
        Error::UnknownId { .. } => Failure::from(e),
        other => Failure::Run(format!("{}: {other}", args.game)),
    })?;
    let report = validate_game(&game);
    if report.is_valid() {
        println!("{}: valid ({} states, {} agents)", args.game, game.num_states(), game.num_agents());
        Ok(())
    } else {
        Err(Failure::Run(format!("{}: invalid\n{report}", args.game)))
    }
}

fn dump_lp(args: DumpLpArgs) -> CliResult<()> {
    let (game, objective) = load_task(&args.task)?;
    let q = match &args.q {
        Some(path) => read_embedded::<QTables>(path, "q")?,
        None => QTables::zeros(&game),
    };
    q.check_game(&game)?;
    let (game, opts) = match args.method.parse::<Method>()? {
        Method::Dbce => (game, StageSolveOptions::density(objective)),
        Method::Ceq => (game, StageSolveOptions::utilitarian()),
        Method::Cm(b) => (game, StageSolveOptions::utilitarian().with_cap(objective, b)),
        Method::Rm(p) => {
            (reward_modified_game(&game, &objective.primary_states(), p)?, StageSolveOptions::utilitarian())
        }
    };
    let lp = build_stage_lp(&game, &q, &opts)?;
    write_output(args.out.as_deref(), write_lp_text(&lp).trim_end())
}

fn export(args: ExportArgs) -> CliResult<()> {
    let game = load_game(&args.game)?;
    write_output(args.out.as_deref(), &serde_json::to_string_pretty(&GameSpec::from(&game))?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Experiment(a) => experiment(a),
        Command::Rollout(a) => rollout_cmd(a),
        Command::Validate(a) => validate(a),
        Command::DumpLp(a) => dump_lp(a),
        Command::Export(a) => export(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

