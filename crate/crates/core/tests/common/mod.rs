#![allow(dead_code)]

use dbce::game::{DensityObjective, JointPolicy, MarkovGame, ObjectiveKind, StateActionTable};
use dbce::dbcpi::DbcpiConfig;
use dbce::stage::{ObjectiveMode, QTables, StageSolveOptions};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize, min: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(min..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Random game with dense transitions and rewards in [-1, 1].
pub fn random_game(rng: &mut ChaCha8Rng, num_states: usize, actions: &[usize], gamma: f64) -> MarkovGame {
    random_game_with_rewards(rng, num_states, actions, gamma, -1.0..1.0)
}

pub fn random_game_with_rewards(
    rng: &mut ChaCha8Rng,
    num_states: usize,
    actions: &[usize],
    gamma: f64,
    reward_range: std::ops::Range<f64>,
) -> MarkovGame {
    let nj: usize = actions.iter().product();
    let mut transition = Vec::with_capacity(num_states * nj * num_states);
    for _ in 0..num_states * nj {
        transition.extend(random_distribution(rng, num_states, 0.0));
    }
    let rewards = (0..actions.len()).map(|_| (0..num_states * nj).map(|_| rng.gen_range(reward_range.clone())).collect()).collect();
    MarkovGame::new(
        names("s", num_states),
        actions.iter().map(|&n| names("a", n)).collect(),
        transition,
        rewards,
        random_distribution(rng, num_states, 0.0),
        gamma,
    )
    .unwrap()
}

/// Random small game: up to `max_states` states, up to 2 agents with up to 3 actions.
pub fn random_small_game(rng: &mut ChaCha8Rng, max_states: usize, gamma: f64) -> MarkovGame {
    let ns = rng.gen_range(1..=max_states);
    let agents = rng.gen_range(1..=2);
    let actions: Vec<usize> = (0..agents).map(|_| rng.gen_range(1..=3)).collect();
    random_game(rng, ns, &actions, gamma)
}

/// Random small game with rewards in [0, 1], so that Q is bounded away from zero
/// and relative errors are meaningful.
pub fn random_positive_game(rng: &mut ChaCha8Rng, max_states: usize, gamma: f64) -> MarkovGame {
    let ns = rng.gen_range(1..=max_states);
    let agents = rng.gen_range(1..=2);
    let actions: Vec<usize> = (0..agents).map(|_| rng.gen_range(1..=3)).collect();
    random_game_with_rewards(rng, ns, &actions, gamma, 0.0..1.0)
}

/// TD settings long enough for evaluation to settle: the learning rate decays
/// over 20,000 updates per state-action pair, with 50,000 steps to spare.
pub fn settled_td_config(game: &MarkovGame) -> DbcpiConfig {
    let cfg = DbcpiConfig::default();
    let decay_steps = 20_000.0 * (game.num_states() * game.num_joint()) as f64;
    DbcpiConfig {
        alpha_decay: (cfg.alpha_end / cfg.alpha_start).powf(1.0 / decay_steps),
        inner_max_steps: decay_steps as usize + 50_000,
        ..cfg
    }
}

/// Policy with every entry at least a few percent of its row.
pub fn full_support_policy(rng: &mut ChaCha8Rng, game: &MarkovGame) -> JointPolicy {
    let nj = game.num_joint();
    let data = (0..game.num_states()).flat_map(|_| random_distribution(rng, nj, 0.05)).collect();
    JointPolicy::new(StateActionTable::from_flat(game.num_states(), nj, data).unwrap()).unwrap()
}

pub fn random_q(rng: &mut ChaCha8Rng, game: &MarkovGame, scale: f64) -> QTables {
    let (ns, nj) = (game.num_states(), game.num_joint());
    let flat = (0..game.num_agents()).map(|_| (0..ns * nj).map(|_| rng.gen_range(-scale..scale)).collect()).collect();
    QTables::from_flat(ns, nj, flat).unwrap()
}

/// One-state game whose Q tables equal the given one-shot payoffs (scaled by 1/(1-gamma)).
pub fn single_state_game(payoffs: &[Vec<f64>], actions: &[usize], gamma: f64) -> MarkovGame {
    let nj: usize = actions.iter().product();
    MarkovGame::new(
        vec!["s".into()],
        actions.iter().map(|&n| names("a", n)).collect(),
        vec![1.0; nj],
        payoffs.to_vec(),
        vec![1.0],
        gamma,
    )
    .unwrap()
}

/// Vertices of `{x : eq rows hold, ineq rows (a.x <= b) hold}`, by solving every
/// square active set. Assumes the equality rows are independent and the set bounded.
pub fn polytope_vertices(n: usize, eq: &[(Vec<f64>, f64)], ineq: &[(Vec<f64>, f64)]) -> Vec<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};
    let k = n - eq.len();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    if k > ineq.len() {
        return vertices;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    loop {
        for (r, (row, rhs)) in eq.iter().chain(idx.iter().map(|&i| &ineq[i])).enumerate() {
            for c in 0..n {
                a[(r, c)] = row[c];
            }
            b[r] = *rhs;
        }
        if let Some(x) = a.clone().lu().solve(&b) {
            let feasible = x.iter().all(|v| v.is_finite())
                && eq.iter().all(|(row, rhs)| (dot(row, x.as_slice()) - rhs).abs() <= 1e-7)
                && ineq.iter().all(|(row, rhs)| dot(row, x.as_slice()) <= rhs + 1e-9);
            if feasible {
                vertices.push(x.iter().copied().collect());
            }
        }
        let mut i = k;
        loop {
            if i == 0 {
                return vertices;
            }
            i -= 1;
            if idx[i] < ineq.len() - k + i {
                idx[i] += 1;
                for t in i + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Occupancy-space CE polytope of the stage game `q`: Bellman-flow equalities,
/// nonzero regret rows and nonnegativity, written independently of the solver.
pub fn stage_polytope(game: &MarkovGame, q: &QTables) -> (usize, Vec<(Vec<f64>, f64)>, Vec<(Vec<f64>, f64)>) {
    let (ns, nj) = (game.num_states(), game.num_joint());
    let n = ns * nj;
    let counts = game.action_counts();
    let decode = |mut j: usize| {
        let mut acts = vec![0; counts.len()];
        for i in (0..counts.len()).rev() {
            acts[i] = j % counts[i];
            j /= counts[i];
        }
        acts
    };
    let encode = |acts: &[usize]| acts.iter().zip(&counts).fold(0, |acc, (a, c)| acc * c + a);
    let mut eq = Vec::new();
    for s in 0..ns {
        let mut row = vec![0.0; n];
        for j in 0..nj {
            row[s * nj + j] += 1.0;
            for sp in 0..ns {
                row[sp * nj + j] -= game.discount() * game.transition_row(sp, j)[s];
            }
        }
        eq.push((row, game.initial()[s]));
    }
    let mut ineq = Vec::new();
    for i in 0..counts.len() {
        for s in 0..ns {
            for a in 0..counts[i] {
                for alt in (0..counts[i]).filter(|&alt| alt != a) {
                    let mut row = vec![0.0; n];
                    for j in 0..nj {
                        let mut acts = decode(j);
                        if acts[i] != a {
                            continue;
                        }
                        acts[i] = alt;
                        row[s * nj + j] = q.get(i, s, encode(&acts)) - q.get(i, s, j);
                    }
                    if row.iter().any(|v| *v != 0.0) {
                        ineq.push((row, 0.0));
                    }
                }
            }
        }
    }
    for k in 0..n {
        let mut row = vec![0.0; n];
        row[k] = -1.0;
        ineq.push((row, 0.0));
    }
    (n, eq, ineq)
}

/// Signed density functional `(per-state coefficients, offset)` of an objective,
/// from the definitions: the error is `L` (MinDensity) or `|L|` (the others).
pub fn density_functional(obj: &DensityObjective, gamma: f64) -> (Vec<f64>, f64) {
    match obj.kind {
        ObjectiveKind::MinDensity => (obj.weights_1.clone(), 0.0),
        ObjectiveKind::FrequencyMatch => (obj.weights_1.clone(), obj.target_fraction / (1.0 - gamma)),
        ObjectiveKind::DensityGap => {
            (obj.weights_1.iter().zip(&obj.weights_2).map(|(a, b)| a - b).collect(), 0.0)
        }
    }
}

fn expand_states(per_state: &[f64], nj: usize) -> Vec<f64> {
    per_state.iter().flat_map(|&c| std::iter::repeat(c).take(nj)).collect()
}

/// Vertices of the CE polytope of `q`, intersected with the cap of `opts` if any.
pub fn ce_vertices(game: &MarkovGame, q: &QTables, opts: &StageSolveOptions) -> Vec<Vec<f64>> {
    let (n, eq, mut ineq) = stage_polytope(game, q);
    if let Some((cap, bound)) = &opts.extra_density_cap {
        let (c, k) = density_functional(cap, game.discount());
        let row = expand_states(&c, game.num_joint());
        ineq.push((row.clone(), bound + k));
        if cap.kind != ObjectiveKind::MinDensity {
            ineq.push((row.iter().map(|v| -v).collect(), bound - k));
        }
    }
    polytope_vertices(n, &eq, &ineq)
}

/// Optimal stage objective over a vertex list, or `None` if it is empty.
pub fn best_over_vertices(game: &MarkovGame, q: &QTables, opts: &StageSolveOptions, vertices: &[Vec<f64>]) -> Option<f64> {
    if vertices.is_empty() {
        return None;
    }
    let values: Vec<f64> = match &opts.objective_mode {
        ObjectiveMode::Density(obj) => {
            let (c, k) = density_functional(obj, game.discount());
            let row = expand_states(&c, game.num_joint());
            vertices.iter().map(|v| dot(&row, v) - k).collect()
        }
        _ => vertices.iter().map(|v| stage_value(game, q, opts, v)).collect(),
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(match &opts.objective_mode {
        ObjectiveMode::Feasibility => 0.0,
        ObjectiveMode::Utilitarian => hi,
        ObjectiveMode::Density(obj) => match obj.kind {
            ObjectiveKind::MinDensity => lo,
            // |L| is minimized at zero when the range straddles it, else at an end
            _ if lo <= 0.0 && hi >= 0.0 => 0.0,
            _ => lo.abs().min(hi.abs()),
        },
    })
}

/// Optimal stage objective by vertex enumeration, or `None` if the CE set
/// (with its optional cap) is empty.
pub fn brute_force_stage_value(game: &MarkovGame, q: &QTables, opts: &StageSolveOptions) -> Option<f64> {
    best_over_vertices(game, q, opts, &ce_vertices(game, q, opts))
}

/// Stage objective of an occupancy table evaluated from the definitions.
pub fn stage_value(game: &MarkovGame, q: &QTables, opts: &StageSolveOptions, f: &[f64]) -> f64 {
    let nj = game.num_joint();
    match &opts.objective_mode {
        ObjectiveMode::Feasibility => 0.0,
        ObjectiveMode::Utilitarian => {
            (0..f.len()).map(|k| f[k] * (0..game.num_agents()).map(|i| q.get(i, k / nj, k % nj)).sum::<f64>()).sum()
        }
        ObjectiveMode::Density(obj) => {
            let (c, k) = density_functional(obj, game.discount());
            let value = dot(&expand_states(&c, nj), f) - k;
            if obj.kind == ObjectiveKind::MinDensity { value } else { value.abs() }
        }
    }
}

/// Random stage game on one state: 2 agents with 2-3 actions each, Q in [-10, 10].
pub fn random_single_state_stage(rng: &mut ChaCha8Rng) -> (MarkovGame, QTables) {
    let actions = [rng.gen_range(2..=3), rng.gen_range(2..=3)];
    let nj = actions[0] * actions[1];
    let game = single_state_game(&[vec![0.0; nj], vec![0.0; nj]], &actions, 0.99);
    let q = random_q(rng, &game, 10.0);
    (game, q)
}

/// One option set per objective mode, with random weights over `num_states`.
pub fn all_modes(rng: &mut ChaCha8Rng, num_states: usize) -> Vec<StageSolveOptions> {
    let mut w = || (0..num_states).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<f64>>();
    let (w1, w2, w3, w4) = (w(), w(), w(), w());
    let c = rng.gen_range(0.0..1.0);
    vec![
        StageSolveOptions::utilitarian(),
        StageSolveOptions::density(DensityObjective::min_density(w1)),
        StageSolveOptions::density(DensityObjective::frequency_match(w2, c)),
        StageSolveOptions::density(DensityObjective::density_gap(w3, w4)),
        StageSolveOptions { objective_mode: ObjectiveMode::Feasibility, ..StageSolveOptions::utilitarian() },
    ]
}
