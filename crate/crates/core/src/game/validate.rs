use std::fmt;

use serde::Serialize;

use super::{MarkovGame, PROB_TOL};

/// One violated game invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum Issue {
    NegativeTransition { state: usize, joint_action: usize, next_state: usize, value: f64 },
    TransitionRowSum { state: usize, joint_action: usize, sum: f64, deficit: f64 },
    NegativeInitial { state: usize, value: f64 },
    InitialSum { sum: f64, deficit: f64 },
    NonFiniteReward { agent: usize, state: usize, joint_action: usize },
    Discount { value: f64 },
    NoiseProbability { state: usize, sum: f64 },
    NoiseMean { state: usize, agent: usize, mean: f64 },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NegativeTransition { state, joint_action, next_state, value } => write!(
                f,
                "P({next_state} | s={state}, a={joint_action}) = {value} is negative"
            ),
            Issue::TransitionRowSum { state, joint_action, sum, deficit } => write!(
                f,
                "transition row (s={state}, a={joint_action}) sums to {sum} (deficit {deficit})"
            ),
            Issue::NegativeInitial { state, value } => {
                write!(f, "initial probability of state {state} is negative ({value})")
            }
            Issue::InitialSum { sum, deficit } => {
                write!(f, "initial distribution sums to {sum} (deficit {deficit})")
            }
            Issue::NonFiniteReward { agent, state, joint_action } => write!(
                f,
                "reward of agent {agent} at (s={state}, a={joint_action}) is not finite"
            ),
            Issue::Discount { value } => write!(f, "discount {value} is outside (0, 1)"),
            Issue::NoiseProbability { state, sum } => {
                write!(f, "reward noise probabilities in state {state} sum to {sum}")
            }
            Issue::NoiseMean { state, agent, mean } => write!(
                f,
                "reward noise of agent {agent} in state {state} has mean {mean}, expected 0"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "ok");
        }
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_game(game: &MarkovGame) -> ValidationReport {
    let mut issues = Vec::new();
    let ns = game.num_states();
    let nj = game.num_joint();

    for s in 0..ns {
        for j in 0..nj {
            let row = game.transition_row(s, j);
            for (next_state, &value) in row.iter().enumerate() {
                if !(value >= 0.0) {
                    issues.push(Issue::NegativeTransition { state: s, joint_action: j, next_state, value });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= PROB_TOL) {
                issues.push(Issue::TransitionRowSum { state: s, joint_action: j, sum, deficit: 1.0 - sum });
            }
        }
    }

    for (state, &value) in game.initial().iter().enumerate() {
        if !(value >= 0.0) {
            issues.push(Issue::NegativeInitial { state, value });
        }
    }
    let sum: f64 = game.initial().iter().sum();
    if !((sum - 1.0).abs() <= PROB_TOL) {
        issues.push(Issue::InitialSum { sum, deficit: 1.0 - sum });
    }

    for agent in 0..game.num_agents() {
        for (k, r) in game.reward_table(agent).iter().enumerate() {
            if !r.is_finite() {
                issues.push(Issue::NonFiniteReward { agent, state: k / nj, joint_action: k % nj });
            }
        }
    }

    let gamma = game.discount();
    if !(gamma > 0.0 && gamma < 1.0) {
        issues.push(Issue::Discount { value: gamma });
    }

    if let Some(noise) = game.noise() {
        for (state, outcomes) in noise.outcomes().iter().enumerate() {
            if outcomes.is_empty() {
                continue;
            }
            let sum: f64 = outcomes.iter().map(|o| o.p).sum();
            if outcomes.iter().any(|o| !(o.p >= 0.0)) || !((sum - 1.0).abs() <= PROB_TOL) {
                issues.push(Issue::NoiseProbability { state, sum });
            }
            for agent in 0..game.num_agents() {
                let mean: f64 = outcomes.iter().map(|o| o.p * o.offset[agent]).sum();
                if !(mean.abs() <= 1e-9) {
                    issues.push(Issue::NoiseMean { state, agent, mean });
                }
            }
        }
    }

    ValidationReport { issues }
}
