use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MarkovGame;
use crate::error::{Error, Result};

/// One outcome of the additive reward noise in a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseOutcome {
    pub p: f64,
    /// Per-agent offset added to the expected reward.
    pub offset: Vec<f64>,
}

/// Zero-mean reward noise, a discrete distribution of per-agent offsets for
/// each state. Expected rewards stay in the game's reward tables; samplers
/// add one drawn offset. States with no outcomes are noise-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardNoise {
    StateOffsets { outcomes: Vec<Vec<NoiseOutcome>> },
}

impl RewardNoise {
    pub fn state_offsets(outcomes: Vec<Vec<NoiseOutcome>>) -> Self {
        RewardNoise::StateOffsets { outcomes }
    }

    pub fn outcomes(&self) -> &[Vec<NoiseOutcome>] {
        match self {
            RewardNoise::StateOffsets { outcomes } => outcomes,
        }
    }

    pub(crate) fn check_shape(&self, num_states: usize, num_agents: usize) -> Result<()> {
        let outcomes = self.outcomes();
        if outcomes.len() != num_states {
            return Err(Error::Shape(format!(
                "reward noise covers {} states, game has {num_states}",
                outcomes.len()
            )));
        }
        for (s, list) in outcomes.iter().enumerate() {
            if list.iter().any(|o| o.offset.len() != num_agents) {
                return Err(Error::Shape(format!(
                    "reward noise offsets in state {s} do not have {num_agents} entries"
                )));
            }
        }
        Ok(())
    }
}

/// On-disk game description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub agents: usize,
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
    /// `[s][joint action][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `[agent][s][joint action]`, expected values when noise is present.
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub eta: Vec<f64>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic_rewards: Option<RewardNoise>,
}

impl GameSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn into_game(self) -> Result<MarkovGame> {
        if self.agents != self.actions.len() {
            return Err(Error::Shape(format!(
                "`agents` is {} but {} action lists are given",
                self.agents,
                self.actions.len()
            )));
        }
        let ns = self.states.len();
        let nj: usize = self.actions.iter().map(Vec::len).product();
        if self.transitions.len() != ns
            || self.transitions.iter().any(|rows| {
                rows.len() != nj || rows.iter().any(|row| row.len() != ns)
            })
        {
            return Err(Error::Shape(format!("transitions must be {ns}x{nj}x{ns}")));
        }
        if self.rewards.iter().any(|r| r.len() != ns || r.iter().any(|row| row.len() != nj)) {
            return Err(Error::Shape(format!("each reward table must be {ns}x{nj}")));
        }
        let transition = self.transitions.into_iter().flatten().flatten().collect();
        let rewards = self
            .rewards
            .into_iter()
            .map(|r| r.into_iter().flatten().collect())
            .collect();
        let game = MarkovGame::new(self.states, self.actions, transition, rewards, self.eta, self.gamma)?;
        match self.stochastic_rewards {
            Some(noise) => game.with_noise(noise),
            None => Ok(game),
        }
    }
}

impl From<&MarkovGame> for GameSpec {
    fn from(game: &MarkovGame) -> Self {
        let ns = game.num_states();
        let nj = game.num_joint();
        let transitions = (0..ns)
            .map(|s| (0..nj).map(|j| game.transition_row(s, j).to_vec()).collect())
            .collect();
        let rewards = (0..game.num_agents())
            .map(|i| game.reward_table(i).chunks(nj).map(<[f64]>::to_vec).collect())
            .collect();
        GameSpec {
            agents: game.num_agents(),
            states: game.state_names().to_vec(),
            actions: game.action_names().to_vec(),
            transitions,
            rewards,
            eta: game.initial().to_vec(),
            gamma: game.discount(),
            stochastic_rewards: game.noise().cloned(),
        }
    }
}
