//! Tabular N-player Markov games and the objects defined over them:
//! joint policies, occupancy measures and density objectives.
//!
//! Joint actions are flattened row-major with agent 0 most significant, so
//! for action counts `[2, 3]` the joint action `(1, 2)` has index `1 * 3 + 2`.
//! Every per-(state, joint action) table is stored flat as `s * J + j`
//! where `J` is the number of joint actions.

mod occupancy;
mod spec;
mod trajectory;
mod validate;

pub use occupancy::{
    bellman_flow_error, density_error, exact_occupancy, policy_from_occupancy,
    signed_density_functional,
};
pub use spec::{GameSpec, NoiseOutcome, RewardNoise};
pub use trajectory::{
    requirement_score, rollout, write_trajectory_csv, DEFAULT_ROLLOUT_STEPS, RequirementKind, RequirementSpec, Step,
    Trajectory,
};
pub use validate::{validate_game, Issue, ValidationReport};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability rows must sum to one within this tolerance.
pub const PROB_TOL: f64 = 1e-9;

/// Default discount factor.
pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGame {
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    strides: Vec<usize>,
    num_joint: usize,
    /// `P(s' | s, j)` at `(s * J + j) * S + s'`.
    transition: Vec<f64>,
    /// Expected reward of agent `i` at `rewards[i][s * J + j]`.
    rewards: Vec<Vec<f64>>,
    noise: Option<RewardNoise>,
    initial: Vec<f64>,
    discount: f64,
}

impl MarkovGame {
    /// Assembles a game, checking only that every table has the right shape.
    /// Probabilistic invariants are left to [`validate_game`].
    pub fn new(
        states: Vec<String>,
        actions: Vec<Vec<String>>,
        transition: Vec<f64>,
        rewards: Vec<Vec<f64>>,
        initial: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Shape("a game needs at least one agent".into()));
        }
        if states.is_empty() {
            return Err(Error::Shape("a game needs at least one state".into()));
        }
        if let Some(i) = actions.iter().position(|a| a.is_empty()) {
            return Err(Error::Shape(format!("agent {i} has no actions")));
        }
        let mut strides = vec![1; actions.len()];
        for i in (0..actions.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * actions[i + 1].len();
        }
        let num_joint = strides[0] * actions[0].len();
        let ns = states.len();
        if transition.len() != ns * num_joint * ns {
            return Err(Error::Shape(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                ns * num_joint * ns
            )));
        }
        if rewards.len() != actions.len() {
            return Err(Error::Shape(format!(
                "{} reward tables for {} agents",
                rewards.len(),
                actions.len()
            )));
        }
        if let Some(i) = rewards.iter().position(|r| r.len() != ns * num_joint) {
            return Err(Error::Shape(format!(
                "reward table of agent {i} has {} entries, expected {}",
                rewards[i].len(),
                ns * num_joint
            )));
        }
        if initial.len() != ns {
            return Err(Error::Shape(format!(
                "initial distribution has {} entries for {ns} states",
                initial.len()
            )));
        }
        Ok(Self {
            states,
            actions,
            strides,
            num_joint,
            transition,
            rewards,
            noise: None,
            initial,
            discount,
        })
    }

    /// Attaches zero-mean reward noise sampled on top of the expected rewards.
    pub fn with_noise(mut self, noise: RewardNoise) -> Result<Self> {
        noise.check_shape(self.num_states(), self.num_agents())?;
        self.noise = Some(noise);
        Ok(self)
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_joint(&self) -> usize {
        self.num_joint
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[Vec<String>] {
        &self.actions
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.actions.iter().map(Vec::len).collect()
    }

    pub fn num_actions(&self, agent: usize) -> usize {
        self.actions[agent].len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn noise(&self) -> Option<&RewardNoise> {
        self.noise.as_ref()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Distribution over next states after joint action `j` in state `s`.
    pub fn transition_row(&self, s: usize, j: usize) -> &[f64] {
        let ns = self.num_states();
        let start = (s * self.num_joint + j) * ns;
        &self.transition[start..start + ns]
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self, agent: usize, s: usize, j: usize) -> f64 {
        self.rewards[agent][s * self.num_joint + j]
    }

    /// Expected reward table of one agent, indexed `s * J + j`.
    pub fn reward_table(&self, agent: usize) -> &[f64] {
        &self.rewards[agent]
    }

    /// Draws one reward vector for `(s, j)`. Deterministic games return the
    /// expectation.
    pub fn sample_rewards<R: Rng + ?Sized>(&self, s: usize, j: usize, rng: &mut R) -> Vec<f64> {
        let mut r: Vec<f64> = (0..self.num_agents()).map(|i| self.reward(i, s, j)).collect();
        if let Some(noise) = &self.noise {
            let outcomes = &noise.outcomes()[s];
            if !outcomes.is_empty() {
                let probs: Vec<f64> = outcomes.iter().map(|o| o.p).collect();
                let k = sample_index(&probs, rng);
                for (ri, off) in r.iter_mut().zip(&outcomes[k].offset) {
                    *ri += off;
                }
            }
        }
        r
    }

    /// Index stride of agent `i` in the flattened joint-action space.
    pub fn stride(&self, agent: usize) -> usize {
        self.strides[agent]
    }

    /// Action taken by `agent` inside joint action `j`.
    pub fn action_of(&self, j: usize, agent: usize) -> usize {
        (j / self.strides[agent]) % self.actions[agent].len()
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.num_agents());
        actions.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn decode_joint(&self, j: usize) -> Vec<usize> {
        (0..self.num_agents()).map(|i| self.action_of(j, i)).collect()
    }

    /// Joint action `j` with agent `agent`'s component replaced by `action`.
    pub fn replace_action(&self, j: usize, agent: usize, action: usize) -> usize {
        let cur = self.action_of(j, agent);
        j - cur * self.strides[agent] + action * self.strides[agent]
    }

    pub fn joint_action_label(&self, j: usize) -> String {
        self.decode_joint(j)
            .iter()
            .enumerate()
            .map(|(i, &a)| self.actions[i][a].as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Copy of the game with every expected reward passed through `f(agent, s, j, r)`.
    pub fn map_rewards(&self, mut f: impl FnMut(usize, usize, usize, f64) -> f64) -> MarkovGame {
        let mut out = self.clone();
        let nj = self.num_joint;
        for (i, table) in out.rewards.iter_mut().enumerate() {
            for (k, r) in table.iter_mut().enumerate() {
                *r = f(i, k / nj, k % nj, *r);
            }
        }
        out
    }

    /// State-to-state transition matrix under `policy`, row-major `S x S`.
    pub fn state_transition_under(&self, policy: &JointPolicy) -> Vec<f64> {
        let ns = self.num_states();
        let mut m = vec![0.0; ns * ns];
        for s in 0..ns {
            for j in 0..self.num_joint {
                let p = policy.prob(s, j);
                if p == 0.0 {
                    continue;
                }
                for (sn, q) in self.transition_row(s, j).iter().enumerate() {
                    m[s * ns + sn] += p * q;
                }
            }
        }
        m
    }

    pub(crate) fn check_table_shape(&self, what: &str, states: usize, joint: usize) -> Result<()> {
        if states != self.num_states() || joint != self.num_joint {
            return Err(Error::Shape(format!(
                "{what} is {states}x{joint}, game is {}x{}",
                self.num_states(),
                self.num_joint
            )));
        }
        Ok(())
    }
}

/// Index drawn from a discrete distribution by inverse-CDF on one uniform.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// A dense `rows x cols` table stored row-major, serialized as nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct StateActionTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StateActionTable {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} table",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl From<StateActionTable> for Vec<Vec<f64>> {
    fn from(t: StateActionTable) -> Self {
        t.data.chunks(t.cols.max(1)).map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for StateActionTable {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err("ragged table".into());
        }
        let n = rows.len();
        Ok(Self { rows: n, cols, data: rows.into_iter().flatten().collect() })
    }
}

/// Per-state distribution over joint actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateActionTable", into = "StateActionTable")]
pub struct JointPolicy(StateActionTable);

impl JointPolicy {
    pub fn new(table: StateActionTable) -> Result<Self> {
        for s in 0..table.rows() {
            let row = table.row(s);
            if let Some(p) = row.iter().find(|p| !(**p >= 0.0)) {
                return Err(Error::Precondition(format!(
                    "policy entry {p} in state {s} is negative or not a number"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::Precondition(format!(
                    "policy row {s} sums to {sum}"
                )));
            }
        }
        Ok(Self(table))
    }

    pub fn uniform(num_states: usize, num_joint: usize) -> Self {
        let p = 1.0 / num_joint as f64;
        Self(StateActionTable { rows: num_states, cols: num_joint, data: vec![p; num_states * num_joint] })
    }

    /// Point mass on joint action `choice[s]` in every state.
    pub fn deterministic(num_joint: usize, choice: &[usize]) -> Self {
        let mut t = StateActionTable::zeros(choice.len(), num_joint);
        for (s, &j) in choice.iter().enumerate() {
            t.set(s, j, 1.0);
        }
        Self(t)
    }

    pub fn num_states(&self) -> usize {
        self.0.rows()
    }

    pub fn num_joint(&self) -> usize {
        self.0.cols()
    }

    pub fn prob(&self, s: usize, j: usize) -> f64 {
        self.0.get(s, j)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.0.row(s)
    }

    pub fn table(&self) -> &StateActionTable {
        &self.0
    }
}

impl TryFrom<StateActionTable> for JointPolicy {
    type Error = String;

    fn try_from(t: StateActionTable) -> std::result::Result<Self, String> {
        JointPolicy::new(t).map_err(|e| e.to_string())
    }
}

impl From<JointPolicy> for StateActionTable {
    fn from(p: JointPolicy) -> Self {
        p.0
    }
}

/// Discounted state/joint-action visitation mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupancyMeasure(StateActionTable);

impl OccupancyMeasure {
    /// Wraps a table, clamping entries in `[-1e-9, 0)` to zero. More negative
    /// entries are rejected.
    pub fn new(mut table: StateActionTable) -> Result<Self> {
        for v in table.as_mut_slice() {
            if *v < -PROB_TOL || v.is_nan() {
                return Err(Error::Precondition(format!("occupancy entry {v} is negative")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self(table))
    }

    /// Wraps a table without clamping or checking signs; only for measuring
    /// residuals of arbitrary candidate tables.
    pub fn raw(table: StateActionTable) -> Self {
        Self(table)
    }

    pub fn num_states(&self) -> usize {
        self.0.rows()
    }

    pub fn num_joint(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, s: usize, j: usize) -> f64 {
        self.0.get(s, j)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.0.row(s)
    }

    /// `sum_j f(s, j)`.
    pub fn state_density(&self, s: usize) -> f64 {
        self.0.row(s).iter().sum()
    }

    pub fn densities(&self) -> Vec<f64> {
        (0..self.num_states()).map(|s| self.state_density(s)).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.0.as_slice().iter().sum()
    }

    pub fn table(&self) -> &StateActionTable {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    MinDensity,
    FrequencyMatch,
    DensityGap,
}

/// Density error over weighted state sets.
///
/// * `MinDensity`: `sum_s w1(s) rho(s)`
/// * `FrequencyMatch`: `|sum_s w1(s) rho(s) - target_fraction / (1 - gamma)|`
/// * `DensityGap`: `|sum_s w1(s) rho(s) - sum_s w2(s) rho(s)|`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityObjective {
    pub kind: ObjectiveKind,
    pub weights_1: Vec<f64>,
    pub weights_2: Vec<f64>,
    pub target_fraction: f64,
}

impl DensityObjective {
    pub fn min_density(weights: Vec<f64>) -> Self {
        let n = weights.len();
        Self { kind: ObjectiveKind::MinDensity, weights_1: weights, weights_2: vec![0.0; n], target_fraction: 0.0 }
    }

    pub fn frequency_match(weights: Vec<f64>, target_fraction: f64) -> Self {
        let n = weights.len();
        Self { kind: ObjectiveKind::FrequencyMatch, weights_1: weights, weights_2: vec![0.0; n], target_fraction }
    }

    pub fn density_gap(weights_1: Vec<f64>, weights_2: Vec<f64>) -> Self {
        Self { kind: ObjectiveKind::DensityGap, weights_1, weights_2, target_fraction: 0.0 }
    }

    /// 0/1 weight vector of a plain state set.
    pub fn indicator(num_states: usize, set: &[usize]) -> Vec<f64> {
        let mut w = vec![0.0; num_states];
        for &s in set {
            w[s] = 1.0;
        }
        w
    }

    pub fn num_states(&self) -> usize {
        self.weights_1.len()
    }

    pub fn validate(&self, num_states: usize) -> Result<()> {
        if self.weights_1.len() != num_states || self.weights_2.len() != num_states {
            return Err(Error::Shape(format!(
                "objective weights have lengths {}/{}, game has {num_states} states",
                self.weights_1.len(),
                self.weights_2.len()
            )));
        }
        let bad = |w: &f64| !(*w >= 0.0) || !w.is_finite();
        if self.weights_1.iter().chain(&self.weights_2).any(bad) {
            return Err(Error::Precondition("objective weights must be finite and nonnegative".into()));
        }
        match self.kind {
            ObjectiveKind::MinDensity | ObjectiveKind::FrequencyMatch => {
                if self.weights_2.iter().any(|w| *w != 0.0) {
                    return Err(Error::Precondition(format!(
                        "{:?} objective must not carry second weights",
                        self.kind
                    )));
                }
            }
            ObjectiveKind::DensityGap => {}
        }
        if self.kind == ObjectiveKind::FrequencyMatch {
            if !(0.0..=1.0).contains(&self.target_fraction) {
                return Err(Error::Precondition(format!(
                    "target fraction {} outside [0, 1]",
                    self.target_fraction
                )));
            }
        } else if self.target_fraction != 0.0 {
            return Err(Error::Precondition(format!(
                "{:?} objective must not carry a target fraction",
                self.kind
            )));
        }
        Ok(())
    }

    /// States with positive first weight.
    pub fn primary_states(&self) -> Vec<usize> {
        (0..self.weights_1.len()).filter(|&s| self.weights_1[s] > 0.0).collect()
    }
}
