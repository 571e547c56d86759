use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_index, JointPolicy, MarkovGame};
use crate::error::{Error, Result};

/// Default rollout length.
pub const DEFAULT_ROLLOUT_STEPS: usize = 250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub joint_action: usize,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub seed: u64,
}

impl Trajectory {
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.state)
    }

    /// The first `len` steps.
    pub fn prefix(&self, len: usize) -> Trajectory {
        Trajectory { steps: self.steps[..len.min(self.steps.len())].to_vec(), seed: self.seed }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Samples `s0 ~ eta`, then `a ~ pi(s)`, rewards, and `s' ~ P(. | s, a)` for
/// `steps` steps.
pub fn rollout(game: &MarkovGame, policy: &JointPolicy, steps: usize, seed: u64) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::Precondition("rollout needs at least one step".into()));
    }
    game.check_table_shape("policy", policy.num_states(), policy.num_joint())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = sample_index(game.initial(), &mut rng);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let joint_action = sample_index(policy.row(state), &mut rng);
        let rewards = game.sample_rewards(state, joint_action, &mut rng);
        out.push(Step { state, joint_action, rewards });
        state = sample_index(game.transition_row(state, joint_action), &mut rng);
    }
    Ok(Trajectory { steps: out, seed })
}

/// Writes `step,state,joint_action,reward_1..reward_N`.
pub fn write_trajectory_csv<W: Write>(game: &MarkovGame, traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "state".into(), "joint_action".into()];
    header.extend((1..=game.num_agents()).map(|i| format!("reward_{i}")));
    w.write_record(&header)?;
    for (t, step) in traj.steps.iter().enumerate() {
        let mut rec = vec![
            t.to_string(),
            game.state_names()[step.state].clone(),
            game.joint_action_label(step.joint_action),
        ];
        rec.extend(step.rewards.iter().map(|r| r.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementKind {
    Safety,
    Frequency,
    Fairness,
}

/// Trajectory-level requirement. Sets are weight vectors over states; plain
/// sets use 0/1 weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementSpec {
    pub kind: RequirementKind,
    pub set_1: Vec<f64>,
    pub set_2: Vec<f64>,
    pub proportion: f64,
}

impl RequirementSpec {
    pub fn safety(set: Vec<f64>) -> Self {
        let n = set.len();
        Self { kind: RequirementKind::Safety, set_1: set, set_2: vec![0.0; n], proportion: 0.0 }
    }

    pub fn frequency(set: Vec<f64>, proportion: f64) -> Self {
        let n = set.len();
        Self { kind: RequirementKind::Frequency, set_1: set, set_2: vec![0.0; n], proportion }
    }

    pub fn fairness(set_1: Vec<f64>, set_2: Vec<f64>) -> Self {
        Self { kind: RequirementKind::Fairness, set_1, set_2, proportion: 0.0 }
    }
}

/// Score of a trajectory against a requirement; zero is perfect.
///
/// Safety counts visits to the set, Frequency is the signed difference
/// between the visit fraction and the proportion, Fairness the signed
/// difference of the two (weighted) counts.
pub fn requirement_score(traj: &Trajectory, req: &RequirementSpec) -> f64 {
    let count = |w: &[f64]| traj.states().map(|s| w.get(s).copied().unwrap_or(0.0)).sum::<f64>();
    match req.kind {
        RequirementKind::Safety => count(&req.set_1),
        RequirementKind::Frequency => {
            if traj.is_empty() {
                return -req.proportion;
            }
            count(&req.set_1) / traj.len() as f64 - req.proportion
        }
        RequirementKind::Fairness => count(&req.set_1) - count(&req.set_2),
    }
}
