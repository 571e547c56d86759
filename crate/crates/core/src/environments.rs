//! Benchmark games and their requirement presets.
//!
//! * `fairgamble`: two gamblers pick numbers 0..=2; the absolute difference
//!   selects which zero-mean game is played next.
//! * `hunters`: three hunters choose to hunt (go out) or guard (stay in).
//! * `cae`: three agents choose to explore or collect; the state records who
//!   explored last.

use crate::error::{Error, Result};
use crate::game::{DensityObjective, MarkovGame, NoiseOutcome, RequirementSpec, RewardNoise, DEFAULT_GAMMA};

pub const GAME_IDS: [&str; 3] = ["fairgamble", "hunters", "cae"];
pub const TASK_IDS: [&str; 3] = ["safety", "freq-10", "fairness"];

pub fn build_game(id: &str) -> Result<MarkovGame> {
    match id {
        "fairgamble" => Ok(build_fair_gamble()),
        "hunters" => Ok(build_hunters()),
        "cae" => Ok(build_collect_explore()),
        other => Err(Error::UnknownId { kind: "game", id: other.into() }),
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn coin(amount: f64) -> Vec<NoiseOutcome> {
    vec![
        NoiseOutcome { p: 0.5, offset: vec![amount, -amount] },
        NoiseOutcome { p: 0.5, offset: vec![-amount, amount] },
    ]
}

pub fn build_fair_gamble() -> MarkovGame {
    let states = names(&["G1", "G2", "G3"]);
    let numbers = names(&["0", "1", "2"]);
    let (ns, nj) = (3, 9);
    let mut transition = vec![0.0; ns * nj * ns];
    for s in 0..ns {
        for a1 in 0..3usize {
            for a2 in 0..3usize {
                let j = a1 * 3 + a2;
                transition[(s * nj + j) * ns + a1.abs_diff(a2)] = 1.0;
            }
        }
    }
    let noise = RewardNoise::state_offsets(vec![Vec::new(), coin(0.5), coin(1.0)]);
    MarkovGame::new(
        states,
        vec![numbers.clone(), numbers],
        transition,
        vec![vec![0.0; ns * nj]; 2],
        vec![1.0 / 3.0; 3],
        DEFAULT_GAMMA,
    )
    .and_then(|g| g.with_noise(noise))
    .expect("fair gamble tables are consistent")
}

pub const HUNT: usize = 0;
pub const GUARD: usize = 1;
const IN: usize = 0;
const OUT: usize = 1;

/// Location of hunter `i` (0 = in, 1 = out) in Hunters state `s`.
pub fn hunter_location(s: usize, i: usize) -> usize {
    (s >> (2 - i)) & 1
}

/// Reward vector of one Hunters round.
pub fn hunters_rewards(locations: [usize; 3], actions: [usize; 3]) -> [f64; 3] {
    let mut r = [0.0; 3];
    for h in 0..3 {
        match (actions[h], locations[h]) {
            (GUARD, _) => r.iter_mut().for_each(|v| *v += 0.5),
            (_, IN) => {
                for (k, v) in r.iter_mut().enumerate() {
                    *v += if k == h { 1.0 } else { 0.1 };
                }
            }
            _ => {
                for (k, v) in r.iter_mut().enumerate() {
                    *v += if k == h { 0.5 } else { -0.5 };
                }
            }
        }
    }
    if actions.iter().filter(|&&a| a == GUARD).count() <= 1 {
        r.iter_mut().for_each(|v| *v -= 3.0);
    }
    r
}

pub fn build_hunters() -> MarkovGame {
    let loc = ["in", "out"];
    let states: Vec<String> = (0..8)
        .map(|s| (0..3).map(|i| loc[hunter_location(s, i)]).collect::<Vec<_>>().join("-"))
        .collect();
    let actions = vec![names(&["hunt", "guard"]); 3];
    let (ns, nj) = (8, 8);
    let mut transition = vec![0.0; ns * nj * ns];
    let mut rewards = vec![vec![0.0; ns * nj]; 3];
    for s in 0..ns {
        let locations = [hunter_location(s, 0), hunter_location(s, 1), hunter_location(s, 2)];
        for j in 0..nj {
            let acts = [(j >> 2) & 1, (j >> 1) & 1, j & 1];
            let next = acts.iter().fold(0, |acc, &a| (acc << 1) | if a == HUNT { OUT } else { IN });
            transition[(s * nj + j) * ns + next] = 1.0;
            let r = hunters_rewards(locations, acts);
            for i in 0..3 {
                rewards[i][s * nj + j] = r[i];
            }
        }
    }
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    MarkovGame::new(states, actions, transition, rewards, initial, DEFAULT_GAMMA)
        .expect("hunters tables are consistent")
}

pub const EXPLORE: usize = 0;
pub const COLLECT: usize = 1;

pub fn build_collect_explore() -> MarkovGame {
    let states = names(&["none", "explorer-1", "explorer-2", "explorer-3"]);
    let actions = vec![names(&["explore", "collect"]); 3];
    let (ns, nj) = (4, 8);
    let mut transition = vec![0.0; ns * nj * ns];
    let mut reward = vec![0.0; ns * nj];
    for s in 0..ns {
        for j in 0..nj {
            let acts = [(j >> 2) & 1, (j >> 1) & 1, j & 1];
            let explorers: Vec<usize> = (0..3).filter(|&i| acts[i] == EXPLORE).collect();
            let row = &mut transition[(s * nj + j) * ns..(s * nj + j + 1) * ns];
            if explorers.is_empty() {
                row[0] = 1.0;
            } else {
                for &i in &explorers {
                    row[i + 1] = 1.0 / explorers.len() as f64;
                }
            }
            let collectors = 3 - explorers.len();
            let explored = if explorers.is_empty() { 0.0 } else { 1.0 };
            reward[s * nj + j] = explored + 0.3 * collectors as f64;
        }
    }
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    MarkovGame::new(states, actions, transition, vec![reward; 3], initial, DEFAULT_GAMMA)
        .expect("collect-and-explore tables are consistent")
}

/// Density objective and trajectory requirement for a benchmark task.
pub fn requirement_preset(game_id: &str, task_id: &str) -> Result<(DensityObjective, RequirementSpec)> {
    let unknown_task = || Error::UnknownId { kind: "task", id: task_id.into() };
    let (primary, secondary): (Vec<f64>, Vec<f64>) = match game_id {
        "fairgamble" => match task_id {
            "safety" | "freq-10" => (vec![0.0, 0.0, 1.0], vec![0.0; 3]),
            "fairness" => (vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
            _ => return Err(unknown_task()),
        },
        "hunters" => {
            let inside = |s: usize| (0..3).filter(|&i| hunter_location(s, i) == IN).count();
            let out = |s: usize, i: usize| if hunter_location(s, i) == OUT { 1.0 } else { 0.0 };
            match task_id {
                "safety" | "freq-10" => ((0..8).map(|s| if inside(s) <= 1 { 1.0 } else { 0.0 }).collect(), vec![0.0; 8]),
                "fairness" => ((0..8).map(|s| out(s, 0)).collect(), (0..8).map(|s| out(s, 1) + out(s, 2)).collect()),
                _ => return Err(unknown_task()),
            }
        }
        "cae" => match task_id {
            "safety" | "freq-10" => (vec![0.0, 1.0, 0.0, 0.0], vec![0.0; 4]),
            "fairness" => (vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]),
            _ => return Err(unknown_task()),
        },
        other => return Err(Error::UnknownId { kind: "game", id: other.into() }),
    };
    Ok(match task_id {
        "safety" => (DensityObjective::min_density(primary.clone()), RequirementSpec::safety(primary)),
        "freq-10" => (
            DensityObjective::frequency_match(primary.clone(), 0.1),
            RequirementSpec::frequency(primary, 0.1),
        ),
        _ => (
            DensityObjective::density_gap(primary.clone(), secondary.clone()),
            RequirementSpec::fairness(primary, secondary),
        ),
    })
}
