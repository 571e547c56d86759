//! The stage-game linear program: with Q values frozen, find an occupancy
//! measure that is Bellman-flow feasible, correlated-equilibrium feasible for
//! the frozen Q, and optimal for a density or utilitarian objective.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    bellman_flow_error, policy_from_occupancy, signed_density_functional, DensityObjective, JointPolicy,
    MarkovGame, ObjectiveKind, OccupancyMeasure, StateActionTable,
};
use crate::lp::{solve_lp, Bound, LinearProgram, LpStatus, Relation, Sense};

/// BF residual above which a stage solution is logged as suspicious.
pub const BF_WARN_TOL: f64 = 1e-4;

/// Per-agent `Q_i(s, j)` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<StateActionTable>", try_from = "Vec<StateActionTable>")]
pub struct QTables {
    tables: Vec<StateActionTable>,
}

impl QTables {
    pub fn zeros(game: &MarkovGame) -> Self {
        Self::from_tables(
            (0..game.num_agents())
                .map(|_| StateActionTable::zeros(game.num_states(), game.num_joint()))
                .collect(),
        )
        .expect("uniform shapes")
    }

    pub fn from_tables(tables: Vec<StateActionTable>) -> Result<Self> {
        let Some(first) = tables.first() else {
            return Err(Error::Shape("Q tables need at least one agent".into()));
        };
        let (r, c) = (first.rows(), first.cols());
        if tables.iter().any(|t| t.rows() != r || t.cols() != c) {
            return Err(Error::Shape("Q tables of different agents differ in shape".into()));
        }
        if tables.iter().any(|t| t.as_slice().iter().any(|v| !v.is_finite())) {
            return Err(Error::Precondition("Q tables must be finite".into()));
        }
        Ok(Self { tables })
    }

    /// Builds tables from flat `s * J + j` vectors, one per agent.
    pub fn from_flat(num_states: usize, num_joint: usize, flat: Vec<Vec<f64>>) -> Result<Self> {
        let tables = flat
            .into_iter()
            .map(|v| StateActionTable::from_flat(num_states, num_joint, v))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tables(tables)
    }

    pub fn num_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn num_states(&self) -> usize {
        self.tables[0].rows()
    }

    pub fn num_joint(&self) -> usize {
        self.tables[0].cols()
    }

    pub fn get(&self, agent: usize, s: usize, j: usize) -> f64 {
        self.tables[agent].get(s, j)
    }

    pub fn table(&self, agent: usize) -> &StateActionTable {
        &self.tables[agent]
    }

    pub fn table_mut(&mut self, agent: usize) -> &mut StateActionTable {
        &mut self.tables[agent]
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &QTables) -> f64 {
        self.tables
            .iter()
            .zip(&other.tables)
            .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.tables.iter().flat_map(|t| t.as_slice()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Errors unless the tables match the game's agents, states and joint actions.
    pub fn check_game(&self, game: &MarkovGame) -> Result<()> {
        if self.num_agents() != game.num_agents() {
            return Err(Error::Shape(format!(
                "{} Q tables for {} agents",
                self.num_agents(),
                game.num_agents()
            )));
        }
        game.check_table_shape("Q table", self.num_states(), self.num_joint())
    }
}

impl From<QTables> for Vec<StateActionTable> {
    fn from(q: QTables) -> Self {
        q.tables
    }
}

impl TryFrom<Vec<StateActionTable>> for QTables {
    type Error = String;

    fn try_from(tables: Vec<StateActionTable>) -> std::result::Result<Self, String> {
        QTables::from_tables(tables).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveMode {
    /// Minimize the density error.
    Density(DensityObjective),
    /// Maximize the occupancy-weighted sum of all agents' Q values.
    Utilitarian,
    /// Zero objective: any point of the constrained CE set.
    Feasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSolveOptions {
    pub objective_mode: ObjectiveMode,
    /// Extra constraint `phi'(f) <= b`.
    pub extra_density_cap: Option<(DensityObjective, f64)>,
    pub feasibility_tolerance: f64,
}

impl StageSolveOptions {
    pub fn density(obj: DensityObjective) -> Self {
        Self { objective_mode: ObjectiveMode::Density(obj), extra_density_cap: None, feasibility_tolerance: 1e-7 }
    }

    pub fn utilitarian() -> Self {
        Self { objective_mode: ObjectiveMode::Utilitarian, extra_density_cap: None, feasibility_tolerance: 1e-7 }
    }

    pub fn with_cap(mut self, obj: DensityObjective, bound: f64) -> Self {
        self.extra_density_cap = Some((obj, bound));
        self
    }
}

/// Column of `f(s, j)` in the stage LP.
pub fn occupancy_var(game: &MarkovGame, s: usize, j: usize) -> usize {
    s * game.num_joint() + j
}

/// Coefficients of `sum_s c(s) rho_f(s)` over the LP columns.
fn density_row(game: &MarkovGame, per_state: &[f64], width: usize) -> Vec<f64> {
    let mut row = vec![0.0; width];
    for (s, &c) in per_state.iter().enumerate() {
        for j in 0..game.num_joint() {
            row[occupancy_var(game, s, j)] = c;
        }
    }
    row
}

pub fn build_stage_lp(game: &MarkovGame, q: &QTables, opts: &StageSolveOptions) -> Result<LinearProgram> {
    q.check_game(game)?;
    let ns = game.num_states();
    let nj = game.num_joint();
    let gamma = game.discount();
    let sense = match opts.objective_mode {
        ObjectiveMode::Density(_) | ObjectiveMode::Feasibility => Sense::Minimize,
        ObjectiveMode::Utilitarian => Sense::Maximize,
    };
    let mut lp = LinearProgram::new(ns * nj, sense);
    for s in 0..ns {
        for j in 0..nj {
            lp.var_names[occupancy_var(game, s, j)] = format!("f_s{s}_a{j}");
        }
    }

    // CE regret: for every (i, s, a, a'), sum_{j: j_i = a} f(s, j) [Q_i(s, j[i <- a']) - Q_i(s, j)] <= 0
    for i in 0..game.num_agents() {
        for s in 0..ns {
            for a in 0..game.num_actions(i) {
                for alt in 0..game.num_actions(i) {
                    let mut row = vec![0.0; ns * nj];
                    for j in (0..nj).filter(|&j| game.action_of(j, i) == a) {
                        let dev = game.replace_action(j, i, alt);
                        row[occupancy_var(game, s, j)] = q.get(i, s, dev) - q.get(i, s, j);
                    }
                    lp.add_named(format!("reg_i{i}_s{s}_a{a}_d{alt}"), row, Relation::Le, 0.0);
                }
            }
        }
    }

    // Bellman flow: sum_j f(s, j) - gamma sum_{s', j} P(s | s', j) f(s', j) = eta(s)
    for s in 0..ns {
        let mut row = vec![0.0; ns * nj];
        for j in 0..nj {
            row[occupancy_var(game, s, j)] += 1.0;
        }
        for sp in 0..ns {
            for j in 0..nj {
                let p = game.transition_row(sp, j)[s];
                if p != 0.0 {
                    row[occupancy_var(game, sp, j)] -= gamma * p;
                }
            }
        }
        lp.add_named(format!("bf_s{s}"), row, Relation::Eq, game.initial()[s]);
    }

    match &opts.objective_mode {
        ObjectiveMode::Density(obj) => {
            obj.validate(ns)?;
            let (coeffs, offset) = signed_density_functional(obj, gamma);
            match obj.kind {
                ObjectiveKind::MinDensity => {
                    lp.objective = density_row(game, &coeffs, ns * nj);
                }
                ObjectiveKind::FrequencyMatch | ObjectiveKind::DensityGap => {
                    // min t  s.t.  t >= L(f), t >= -L(f)
                    let t = lp.add_var("t", 1.0, Bound::default());
                    let width = lp.num_vars;
                    let mut upper = density_row(game, &coeffs, width).iter().map(|c| -c).collect::<Vec<_>>();
                    upper[t] = 1.0;
                    lp.add_named("epi_pos", upper, Relation::Ge, -offset);
                    let mut lower = density_row(game, &coeffs, width);
                    lower[t] = 1.0;
                    lp.add_named("epi_neg", lower, Relation::Ge, offset);
                }
            }
        }
        ObjectiveMode::Utilitarian => {
            for s in 0..ns {
                for j in 0..nj {
                    lp.objective[occupancy_var(game, s, j)] = (0..game.num_agents()).map(|i| q.get(i, s, j)).sum();
                }
            }
        }
        ObjectiveMode::Feasibility => {}
    }

    if let Some((cap, bound)) = &opts.extra_density_cap {
        if !(*bound >= 0.0) {
            return Err(Error::Precondition(format!("density cap {bound} must be nonnegative")));
        }
        cap.validate(ns)?;
        let (coeffs, offset) = signed_density_functional(cap, gamma);
        let width = lp.num_vars;
        let row = density_row(game, &coeffs, width);
        match cap.kind {
            ObjectiveKind::MinDensity => {
                lp.add_named("cap", row, Relation::Le, *bound);
            }
            ObjectiveKind::FrequencyMatch | ObjectiveKind::DensityGap => {
                let neg = row.iter().map(|c| -c).collect();
                lp.add_named("cap_pos", row, Relation::Le, bound + offset);
                lp.add_named("cap_neg", neg, Relation::Le, bound - offset);
            }
        }
    }

    Ok(lp)
}

/// Regrets `reg_f(s, i, a, a')` of an occupancy measure under frozen Q.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRegret {
    pub max: f64,
    /// Per agent, indexed `(s * |A_i| + a) * |A_i| + a'`.
    pub values: Vec<Vec<f64>>,
}

impl StageRegret {
    pub fn get(&self, game: &MarkovGame, agent: usize, s: usize, a: usize, alt: usize) -> f64 {
        let n = game.num_actions(agent);
        self.values[agent][(s * n + a) * n + alt]
    }
}

pub fn stage_regret(game: &MarkovGame, f: &OccupancyMeasure, q: &QTables) -> Result<StageRegret> {
    q.check_game(game)?;
    game.check_table_shape("occupancy", f.num_states(), f.num_joint())?;
    let mut max = f64::NEG_INFINITY;
    let mut values = Vec::with_capacity(game.num_agents());
    for i in 0..game.num_agents() {
        let n = game.num_actions(i);
        let mut table = vec![0.0; game.num_states() * n * n];
        for s in 0..game.num_states() {
            for j in 0..game.num_joint() {
                let mass = f.get(s, j);
                if mass == 0.0 {
                    continue;
                }
                let a = game.action_of(j, i);
                let here = q.get(i, s, j);
                for alt in 0..n {
                    let dev = game.replace_action(j, i, alt);
                    table[(s * n + a) * n + alt] += mass * (q.get(i, s, dev) - here);
                }
            }
        }
        max = table.iter().copied().fold(max, f64::max);
        values.push(table);
    }
    Ok(StageRegret { max, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageDiagnostics {
    pub lp_status: LpStatus,
    pub objective_value: f64,
    pub lp_iterations: usize,
    pub max_regret: f64,
    pub max_bf_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    pub occupancy: OccupancyMeasure,
    pub policy: JointPolicy,
    pub diagnostics: StageDiagnostics,
}

/// Solves the stage LP and converts its occupancy into a policy.
///
/// An infeasible LP is reported as [`Error::InfeasibleStage`] with iteration 0;
/// callers running an outer loop substitute their own iteration index.
pub fn solve_stage_game(game: &MarkovGame, q: &QTables, opts: &StageSolveOptions) -> Result<StageSolution> {
    let lp = build_stage_lp(game, q, opts)?;
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::InfeasibleStage { iteration: 0 }),
        status => {
            return Err(Error::StageFailure {
                iteration: 0,
                status: format!("{status:?}: {}", sol.diagnostics.unwrap_or_default()),
            })
        }
    }
    let (ns, nj) = (game.num_states(), game.num_joint());
    let table = StateActionTable::from_flat(ns, nj, sol.values[..ns * nj].to_vec())?;
    let occupancy = OccupancyMeasure::new(table)?;
    let policy = policy_from_occupancy(&occupancy)?;
    let max_regret = stage_regret(game, &occupancy, q)?.max;
    let max_bf_error = bellman_flow_error(game, &occupancy)?.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    if max_bf_error > BF_WARN_TOL {
        warn!("stage solution violates Bellman flow by {max_bf_error:e}");
    }
    if max_regret > opts.feasibility_tolerance {
        warn!("stage solution has regret {max_regret:e} above {:e}", opts.feasibility_tolerance);
    }
    Ok(StageSolution {
        occupancy,
        policy,
        diagnostics: StageDiagnostics {
            lp_status: sol.status,
            objective_value: sol.objective_value,
            lp_iterations: sol.iterations,
            max_regret,
            max_bf_error,
        },
    })
}
