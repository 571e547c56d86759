//! Comparison methods built on utilitarian CE-Q iteration: plain CE-Q, the
//! density-capped variant (CM-b) and constant reward shaping (RM-p).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dbcpi::{dbcpi_run, evaluate_policy_exact, policy_iteration, DbcpiConfig, RunResult};
use crate::error::{Error, Result};
use crate::game::{DensityObjective, MarkovGame, ObjectiveKind};
use crate::stage::{stage_regret, ObjectiveMode, StageSolveOptions};

/// A solution method, written in reports as `dbce`, `ceq`, `cm-<b>` or `rm-<p>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Dbce,
    Ceq,
    /// Utilitarian CE-Q with the density cap φ′(f) ≤ b.
    Cm(f64),
    /// Utilitarian CE-Q on a game with the (negative) constant p added at S*.
    Rm(f64),
}

impl Method {
    pub fn needs_safety_task(&self) -> bool {
        matches!(self, Method::Rm(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Dbce => f.write_str("dbce"),
            Method::Ceq => f.write_str("ceq"),
            Method::Cm(b) => write!(f, "cm-{b}"),
            Method::Rm(p) => write!(f, "rm-{}", p.abs()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownId { kind: "method", id: s.into() };
        let number = |text: &str| text.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(unknown);
        match s.to_ascii_lowercase().as_str() {
            "dbce" => Ok(Method::Dbce),
            "ceq" => Ok(Method::Ceq),
            other => {
                if let Some(b) = other.strip_prefix("cm-") {
                    let b = number(b)?;
                    if b < 0.0 {
                        return Err(unknown());
                    }
                    Ok(Method::Cm(b))
                } else if let Some(p) = other.strip_prefix("rm-") {
                    let p = number(p)?;
                    if p == 0.0 {
                        return Err(unknown());
                    }
                    Ok(Method::Rm(-p.abs()))
                } else {
                    Err(unknown())
                }
            }
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Copy of `game` with `p` added to every agent's reward in the states of `s_star`.
pub fn reward_modified_game(game: &MarkovGame, s_star: &[usize], p: f64) -> Result<MarkovGame> {
    if !(p < 0.0) {
        return Err(Error::Precondition(format!("reward modification needs p < 0, got {p}")));
    }
    if let Some(&s) = s_star.iter().find(|&&s| s >= game.num_states()) {
        return Err(Error::Precondition(format!("state {s} out of range")));
    }
    Ok(game.map_rewards(|_, s, _, r| if s_star.contains(&s) { r + p } else { r }))
}

/// Utilitarian CE-Q iteration, optionally with a density cap. `report` is the
/// objective used for the Error metric and the trace.
pub fn run_ce_q(
    game: &MarkovGame,
    cfg: &DbcpiConfig,
    cap: Option<(DensityObjective, f64)>,
    report: &DensityObjective,
) -> Result<RunResult> {
    let mut opts = StageSolveOptions::utilitarian();
    if let Some((obj, b)) = cap {
        opts = opts.with_cap(obj, b);
    }
    policy_iteration(game, &opts, report, cfg)
}

/// Stage objective used alongside the CM density cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapObjective {
    #[default]
    Utilitarian,
    Zero,
}

/// CM-b: CE iteration under the cap `phi'(f) <= b`, with the chosen stage objective.
pub fn run_constrained(
    game: &MarkovGame,
    objective: &DensityObjective,
    b: f64,
    stage_objective: CapObjective,
    cfg: &DbcpiConfig,
) -> Result<RunResult> {
    match stage_objective {
        CapObjective::Utilitarian => run_ce_q(game, cfg, Some((objective.clone(), b)), objective),
        CapObjective::Zero => {
            let opts = StageSolveOptions {
                objective_mode: ObjectiveMode::Feasibility,
                ..StageSolveOptions::utilitarian()
            }
            .with_cap(objective.clone(), b);
            policy_iteration(game, &opts, objective, cfg)
        }
    }
}

/// RM-p on a safety objective. The result's `max_reg` is measured on the
/// modified game, `max_reg_original` against the original game's Q.
pub fn run_reward_modified(
    game: &MarkovGame,
    objective: &DensityObjective,
    p: f64,
    cfg: &DbcpiConfig,
) -> Result<RunResult> {
    if objective.kind != ObjectiveKind::MinDensity {
        return Err(Error::Config("reward modification applies to safety tasks only".into()));
    }
    let modified = reward_modified_game(game, &objective.primary_states(), p)?;
    let mut result = run_ce_q(&modified, cfg, None, objective)?;
    let q_original = evaluate_policy_exact(game, &result.policy)?;
    result.max_reg_original = Some(stage_regret(game, &result.occupancy, &q_original)?.max);
    Ok(result)
}

/// Runs `method` and labels the result with its id.
pub fn run_method(
    game: &MarkovGame,
    objective: &DensityObjective,
    method: Method,
    cfg: &DbcpiConfig,
) -> Result<RunResult> {
    let mut result = match method {
        Method::Dbce => dbcpi_run(game, objective, cfg)?,
        Method::Ceq => run_ce_q(game, cfg, None, objective)?,
        Method::Cm(b) => run_constrained(game, objective, b, CapObjective::Utilitarian, cfg)?,
        Method::Rm(p) => run_reward_modified(game, objective, p, cfg)?,
    };
    result.method = method.to_string();
    Ok(result)
}
