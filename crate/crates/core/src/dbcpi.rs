//! Density-based correlated policy iteration: alternate a stage-LP policy
//! improvement with evaluation of every agent's Q under the new policy.

use std::time::Instant;

use log::debug;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    bellman_flow_error, density_error, sample_index, validate_game, DensityObjective, JointPolicy, MarkovGame,
    OccupancyMeasure,
};
use crate::stage::{solve_stage_game, stage_regret, QTables, StageSolveOptions};

/// Slack below which the global-optimum condition counts as violated.
pub const GLOBAL_OPTIMUM_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Solve the policy-evaluation fixed point directly.
    Exact,
    /// Temporal-difference updates on sampled transitions.
    Sampled,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EvalMode::Exact),
            "sampled" | "td" => Ok(EvalMode::Sampled),
            other => Err(Error::UnknownId { kind: "eval mode", id: other.into() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbcpiConfig {
    /// Outer iterations.
    pub iterations: usize,
    pub eval_mode: EvalMode,
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// Multiplicative learning-rate decay per TD step, floored at `alpha_end`.
    pub alpha_decay: f64,
    /// TD stops once every update in the last `inner_window` steps moved Q
    /// by less than this, after the learning rate has reached its floor.
    pub inner_convergence_epsilon: f64,
    pub inner_window: usize,
    pub inner_max_steps: usize,
    pub seed: u64,
}

/// TD steps over which the default schedule decays from start to end rate.
pub const DEFAULT_DECAY_STEPS: f64 = 150_000.0;

impl Default for DbcpiConfig {
    fn default() -> Self {
        let (alpha_start, alpha_end) = (0.3, 0.001);
        Self {
            iterations: 250,
            eval_mode: EvalMode::Exact,
            alpha_start,
            alpha_end,
            alpha_decay: (alpha_end / alpha_start).powf(1.0 / DEFAULT_DECAY_STEPS),
            inner_convergence_epsilon: 1e-4,
            inner_window: 500,
            inner_max_steps: 200_000,
            seed: 0,
        }
    }
}

impl DbcpiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        if !(0.0..1.0).contains(&self.alpha_start) || !(0.0..1.0).contains(&self.alpha_end) {
            return Err(Error::Config("learning rates must lie in [0, 1)".into()));
        }
        if self.alpha_end > self.alpha_start {
            return Err(Error::Config("alpha_end must not exceed alpha_start".into()));
        }
        if !(self.alpha_decay > 0.0 && self.alpha_decay <= 1.0) {
            return Err(Error::Config("alpha_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Independent seed for `(component, index)` derived from a run seed.
pub fn derive_seed(seed: u64, component: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed
        .wrapping_add(component.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) const SEED_TD: u64 = 1;
pub const SEED_ROLLOUT: u64 = 2;

/// `Q_i = r_i + gamma * M Q_i` with `M[(s, j), (s', j')] = P(s' | s, j) pi(s', j')`,
/// solved by one LU factorization shared by all agents.
pub fn evaluate_policy_exact(game: &MarkovGame, policy: &JointPolicy) -> Result<QTables> {
    let (ns, nj) = (game.num_states(), game.num_joint());
    game.check_table_shape("policy", policy.num_states(), policy.num_joint())?;
    let n = ns * nj;
    let gamma = game.discount();
    let mut a = DMatrix::<f64>::identity(n, n);
    for s in 0..ns {
        for j in 0..nj {
            let row = s * nj + j;
            for (sn, p) in game.transition_row(s, j).iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                for jn in 0..nj {
                    let w = policy.prob(sn, jn);
                    if w != 0.0 {
                        a[(row, sn * nj + jn)] -= gamma * p * w;
                    }
                }
            }
        }
    }
    let rhs = DMatrix::from_fn(n, game.num_agents(), |k, i| game.reward_table(i)[k]);
    let lu = a.clone().lu();
    let mut q = lu.solve(&rhs).ok_or_else(|| Error::Numerical("singular evaluation system".into()))?;
    // one round of iterative refinement
    let residual = &rhs - &a * &q;
    if let Some(correction) = lu.solve(&residual) {
        q += correction;
    }
    let flat = (0..game.num_agents()).map(|i| q.column(i).iter().copied().collect()).collect();
    QTables::from_flat(ns, nj, flat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdOutcome {
    pub q: QTables,
    pub steps: usize,
    pub converged: bool,
}

/// Temporal-difference evaluation of `policy`, starting from `q_init`.
///
/// Start pairs cycle through every `(s, j)` in order, so each pair is
/// updated once per sweep. The learning rate restarts at `alpha_start` on
/// every call.
pub fn evaluate_policy_td(
    game: &MarkovGame,
    policy: &JointPolicy,
    q_init: &QTables,
    cfg: &DbcpiConfig,
    seed: u64,
) -> Result<TdOutcome> {
    cfg.validate()?;
    let (ns, nj) = (game.num_states(), game.num_joint());
    game.check_table_shape("policy", policy.num_states(), policy.num_joint())?;
    if q_init.num_agents() != game.num_agents() {
        return Err(Error::Shape("initial Q tables do not match the game".into()));
    }
    game.check_table_shape("initial Q", q_init.num_states(), q_init.num_joint())?;

    let gamma = game.discount();
    let mut q = q_init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = cfg.alpha_start;
    let mut quiet = 0usize;
    let pairs = ns * nj;
    let mut steps = 0;
    let mut converged = false;
    while steps < cfg.inner_max_steps {
        let k = steps % pairs;
        let (s, j) = (k / nj, k % nj);
        let rewards = game.sample_rewards(s, j, &mut rng);
        let next = sample_index(game.transition_row(s, j), &mut rng);
        let mut delta = 0.0_f64;
        for (i, r) in rewards.iter().enumerate() {
            let table = q.table_mut(i);
            let v_next: f64 = policy.row(next).iter().zip(table.row(next)).map(|(p, v)| p * v).sum();
            let old = table.get(s, j);
            let new = (1.0 - alpha) * old + alpha * (r + gamma * v_next);
            table.set(s, j, new);
            delta = delta.max((new - old).abs());
        }
        steps += 1;
        quiet = if delta < cfg.inner_convergence_epsilon { quiet + 1 } else { 0 };
        if alpha <= cfg.alpha_end && quiet >= cfg.inner_window && steps >= pairs {
            converged = true;
            break;
        }
        alpha = (alpha * cfg.alpha_decay).max(cfg.alpha_end);
    }
    Ok(TdOutcome { q, steps, converged })
}

pub fn evaluate_policy(
    game: &MarkovGame,
    policy: &JointPolicy,
    q_prev: &QTables,
    cfg: &DbcpiConfig,
    seed: u64,
) -> Result<QTables> {
    match cfg.eval_mode {
        EvalMode::Exact => evaluate_policy_exact(game, policy),
        EvalMode::Sampled => {
            let out = evaluate_policy_td(game, policy, q_prev, cfg, seed)?;
            if !out.converged {
                debug!("TD evaluation stopped after {} steps without converging", out.steps);
            }
            Ok(out.q)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOptimumCheck {
    pub holds: bool,
    /// `E_{j ~ pi(s)}[Q_i(s, j)] - max_j Q_i(s, j)`, indexed `[agent][state]`.
    pub slack: Vec<Vec<f64>>,
}

/// Whether `policy` attains, for every agent and state, the best expected Q
/// over all joint-action distributions. Diagnostic only.
pub fn check_global_optimum(game: &MarkovGame, policy: &JointPolicy, q: &QTables) -> Result<GlobalOptimumCheck> {
    game.check_table_shape("policy", policy.num_states(), policy.num_joint())?;
    game.check_table_shape("Q table", q.num_states(), q.num_joint())?;
    let slack: Vec<Vec<f64>> = (0..q.num_agents())
        .map(|i| {
            (0..game.num_states())
                .map(|s| {
                    let row = q.table(i).row(s);
                    let expected: f64 = policy.row(s).iter().zip(row).map(|(p, v)| p * v).sum();
                    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    expected - best
                })
                .collect()
        })
        .collect();
    let holds = slack.iter().flatten().all(|v| *v >= -GLOBAL_OPTIMUM_TOL);
    Ok(GlobalOptimumCheck { holds, slack })
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub game: String,
    pub task: String,
    pub method: String,
    pub seed: u64,
    /// Density error `phi'(f)` of the final occupancy.
    pub error: f64,
    /// Largest regret of the final occupancy under the final Q.
    pub max_reg: f64,
    /// Largest absolute Bellman-flow residual of the final occupancy.
    pub max_bf: f64,
    /// For reward-modified runs: largest regret under the Q of the final
    /// policy evaluated on the unmodified game.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_reg_original: Option<f64>,
    /// Density error after each outer iteration.
    pub trace: Vec<f64>,
    /// Outer iteration at which an exact-mode run reached a fixed point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_at: Option<usize>,
    pub global_optimum: bool,
    pub policy: JointPolicy,
    pub occupancy: OccupancyMeasure,
    pub q: QTables,
    pub runtime_s: f64,
    pub config: DbcpiConfig,
}

impl RunResult {
    pub fn labeled(mut self, game: &str, task: &str, method: &str) -> Self {
        self.game = game.into();
        self.task = task.into();
        self.method = method.into();
        self
    }

    /// `(error, max_reg, max_bf)` recomputed from the stored occupancy and Q.
    pub fn recompute_metrics(&self, game: &MarkovGame, objective: &DensityObjective) -> Result<(f64, f64, f64)> {
        final_metrics(game, &self.occupancy, &self.q, objective)
    }
}

pub(crate) fn final_metrics(
    game: &MarkovGame,
    f: &OccupancyMeasure,
    q: &QTables,
    objective: &DensityObjective,
) -> Result<(f64, f64, f64)> {
    let error = density_error(f, objective, game.discount())?;
    let max_reg = stage_regret(game, f, q)?.max;
    let max_bf = bellman_flow_error(game, f)?.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok((error, max_reg, max_bf))
}

/// Shared outer loop for DBCPI and the CE-Q baselines: `opts` fixes the
/// stage objective, `objective` the density error reported per iteration.
pub(crate) fn policy_iteration(
    game: &MarkovGame,
    opts: &StageSolveOptions,
    objective: &DensityObjective,
    cfg: &DbcpiConfig,
) -> Result<RunResult> {
    let started = Instant::now();
    cfg.validate()?;
    let report = validate_game(game);
    if !report.is_valid() {
        return Err(Error::InvalidGame(report.to_string()));
    }
    objective.validate(game.num_states())?;

    let mut q = QTables::zeros(game);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut last: Option<(OccupancyMeasure, JointPolicy)> = None;
    let mut fixed_point_at = None;
    for k in 0..cfg.iterations {
        let iteration = k + 1;
        let sol = solve_stage_game(game, &q, opts).map_err(|e| match e {
            Error::InfeasibleStage { .. } => Error::InfeasibleStage { iteration },
            Error::StageFailure { status, .. } => Error::StageFailure { iteration, status },
            other => other,
        })?;
        let err = density_error(&sol.occupancy, objective, game.discount())?;
        trace.push(err);
        let q_next = evaluate_policy(game, &sol.policy, &q, cfg, derive_seed(cfg.seed, SEED_TD, k as u64))?;
        let repeated = cfg.eval_mode == EvalMode::Exact
            && q_next == q
            && last.as_ref().is_some_and(|(f, _)| *f == sol.occupancy);
        q = q_next;
        last = Some((sol.occupancy, sol.policy));
        if repeated {
            // Exact mode is deterministic: every later iteration repeats this one.
            fixed_point_at = Some(iteration);
            trace.resize(cfg.iterations, err);
            break;
        }
    }
    let (occupancy, policy) = last.expect("at least one iteration");
    let (error, max_reg, max_bf) = final_metrics(game, &occupancy, &q, objective)?;
    let global_optimum = check_global_optimum(game, &policy, &q)?.holds;
    Ok(RunResult {
        game: String::new(),
        task: String::new(),
        method: String::new(),
        seed: cfg.seed,
        error,
        max_reg,
        max_bf,
        max_reg_original: None,
        trace,
        fixed_point_at,
        global_optimum,
        policy,
        occupancy,
        q,
        runtime_s: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
    })
}

/// Runs DBCPI on `game` with density objective `objective`.
pub fn dbcpi_run(game: &MarkovGame, objective: &DensityObjective, cfg: &DbcpiConfig) -> Result<RunResult> {
    let opts = StageSolveOptions::density(objective.clone());
    Ok(policy_iteration(game, &opts, objective, cfg)?.labeled("", "", "dbce"))
}
