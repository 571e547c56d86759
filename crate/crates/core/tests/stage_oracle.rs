mod common;

use common::{
    all_modes, best_over_vertices, brute_force_stage_value, ce_vertices, random_game, random_q, random_single_state_stage, single_state_game, stage_value,
};
use dbce::dbcpi::{dbcpi_run, DbcpiConfig};
use dbce::environments::{build_fair_gamble, requirement_preset};
use dbce::game::{DensityObjective, OccupancyMeasure, StateActionTable};
use dbce::stage::{solve_stage_game, stage_regret, QTables, StageSolveOptions};
use dbce::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn chicken_welfare_maximizing_ce() {
    // (6,6) (2,7) / (7,2) (0,0): the best CE plays (6,6) half the time and each
    // asymmetric outcome a quarter, for a welfare of 10.5 per step.
    let q = QTables::from_flat(1, 4, vec![vec![6.0, 2.0, 7.0, 0.0], vec![6.0, 7.0, 2.0, 0.0]]).unwrap();
    let game = single_state_game(&[vec![0.0; 4], vec![0.0; 4]], &[2, 2], 0.99);
    let opts = StageSolveOptions::utilitarian();
    let oracle = brute_force_stage_value(&game, &q, &opts).unwrap();
    assert!((oracle - 1050.0).abs() < 1e-9, "{oracle}");
    let sol = solve_stage_game(&game, &q, &opts).unwrap();
    assert!((sol.diagnostics.objective_value - oracle).abs() <= 1e-6);
    let f = sol.occupancy.table().as_slice();
    for (k, expected) in [50.0, 25.0, 25.0, 0.0].iter().enumerate() {
        assert!((f[k] - expected).abs() <= 1e-6, "{f:?}");
    }
}

#[test]
fn single_state_games_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let (game, q) = random_single_state_stage(&mut rng);
        let vertices = ce_vertices(&game, &q, &StageSolveOptions::utilitarian());
        for opts in all_modes(&mut rng, 1) {
            let oracle = best_over_vertices(&game, &q, &opts, &vertices).expect("a CE always exists");
            let sol = solve_stage_game(&game, &q, &opts).unwrap();
            let f = sol.occupancy.table().as_slice();
            assert!(
                (sol.diagnostics.objective_value - oracle).abs() <= 1e-6,
                "case {case} {:?}: lp {} vs oracle {oracle}",
                opts.objective_mode,
                sol.diagnostics.objective_value
            );
            assert!((stage_value(&game, &q, &opts, f) - oracle).abs() <= 1e-6);
            assert!(sol.diagnostics.max_regret <= 1e-7, "case {case}: regret {}", sol.diagnostics.max_regret);
        }
    }
}

#[test]
fn two_state_games_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..20 {
        let game = random_game(&mut rng, 2, &[2, 2], 0.9);
        let q = random_q(&mut rng, &game, 5.0);
        let vertices = ce_vertices(&game, &q, &StageSolveOptions::utilitarian());
        for opts in all_modes(&mut rng, 2) {
            let oracle = best_over_vertices(&game, &q, &opts, &vertices).unwrap();
            let sol = solve_stage_game(&game, &q, &opts).unwrap();
            let value = stage_value(&game, &q, &opts, sol.occupancy.table().as_slice());
            assert!((value - oracle).abs() <= 1e-6, "case {case} {:?}: {value} vs {oracle}", opts.objective_mode);
            assert!(sol.diagnostics.max_regret <= 1e-7);
            assert!(sol.diagnostics.max_bf_error <= 1e-7);
        }
    }
}

#[test]
fn density_cap_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut infeasible = 0;
    for _ in 0..20 {
        let game = random_game(&mut rng, 2, &[2, 2], 0.9);
        let q = random_q(&mut rng, &game, 5.0);
        let cap = DensityObjective::min_density(vec![1.0, 0.0]);
        let bound = rng.gen_range(0.0..10.0);
        let opts = StageSolveOptions::utilitarian().with_cap(cap.clone(), bound);
        match (brute_force_stage_value(&game, &q, &opts), solve_stage_game(&game, &q, &opts)) {
            (Some(oracle), Ok(sol)) => {
                assert!((sol.diagnostics.objective_value - oracle).abs() <= 1e-6);
                assert!(sol.occupancy.state_density(0) <= bound + 1e-7);
            }
            (None, Err(Error::InfeasibleStage { .. })) => infeasible += 1,
            (oracle, sol) => panic!("oracle {oracle:?} vs solver {:?}", sol.map(|s| s.diagnostics)),
        }
    }
    assert!(infeasible > 0 && infeasible < 20, "{infeasible}");
}

#[test]
fn cap_tightening_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let game = random_game(&mut rng, 3, &[2, 2], 0.95);
        let q = random_q(&mut rng, &game, 5.0);
        let cap = DensityObjective::min_density(vec![0.0, 1.0, 1.0]);
        let uncapped = solve_stage_game(&game, &q, &StageSolveOptions::utilitarian()).unwrap();
        let loose = uncapped.occupancy.state_density(1) + uncapped.occupancy.state_density(2);
        // a cap that does not bind leaves the utilitarian optimum unchanged
        let same = solve_stage_game(&game, &q, &StageSolveOptions::utilitarian().with_cap(cap.clone(), loose + 1.0)).unwrap();
        assert!((same.diagnostics.objective_value - uncapped.diagnostics.objective_value).abs() <= 1e-6);

        let mut previous = f64::INFINITY;
        let mut was_feasible = true;
        for b in [loose, 0.75 * loose, 0.5 * loose, 0.25 * loose, 0.0] {
            match solve_stage_game(&game, &q, &StageSolveOptions::utilitarian().with_cap(cap.clone(), b)) {
                Ok(sol) => {
                    assert!(was_feasible, "feasible again after an infeasible, looser cap");
                    assert!(sol.diagnostics.objective_value <= previous + 1e-6);
                    previous = sol.diagnostics.objective_value;
                }
                Err(Error::InfeasibleStage { .. }) => was_feasible = false,
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn fair_gamble_fixed_point_is_a_stage_ce() {
    let game = build_fair_gamble();
    let (objective, _) = requirement_preset("fairgamble", "safety").unwrap();
    let run = dbcpi_run(&game, &objective, &DbcpiConfig::default()).unwrap();
    let sol = solve_stage_game(&game, &run.q, &StageSolveOptions::density(objective)).unwrap();
    assert!(sol.diagnostics.max_regret <= 1e-7);
    assert!(sol.diagnostics.max_bf_error <= 1e-7);
}

/// Regret by explicit summation over the deviation's action profile.
fn regret_oracle(game: &dbce::game::MarkovGame, f: &[f64], q: &QTables, i: usize, s: usize, a: usize, alt: usize) -> f64 {
    let counts = game.action_counts();
    let nj = game.num_joint();
    let mut total = 0.0;
    for j in 0..nj {
        let mut acts = Vec::new();
        let mut rest = j;
        for c in counts.iter().rev() {
            acts.push(rest % c);
            rest /= c;
        }
        acts.reverse();
        if acts[i] != a {
            continue;
        }
        acts[i] = alt;
        let dev = acts.iter().zip(&counts).fold(0, |acc, (x, c)| acc * c + x);
        total += f[s * nj + j] * (q.get(i, s, dev) - q.get(i, s, j));
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimal_stage_solutions_are_ce_occupancies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ns = rng.gen_range(1..=3);
        let actions: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=3)).collect();
        let game = random_game(&mut rng, ns, &actions, 0.99);
        let q = random_q(&mut rng, &game, 20.0);
        for opts in all_modes(&mut rng, ns) {
            let sol = solve_stage_game(&game, &q, &opts).unwrap();
            prop_assert!(sol.diagnostics.max_regret <= 1e-7, "{:?}", sol.diagnostics);
            prop_assert!(sol.diagnostics.max_bf_error <= 1e-7, "{:?}", sol.diagnostics);
            prop_assert!(sol.occupancy.table().as_slice().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn min_density_is_below_every_ce_vertex(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let game = random_game(&mut rng, 2, &[2, 2], 0.9);
        let q = random_q(&mut rng, &game, 5.0);
        let obj = DensityObjective::min_density(vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
        let opts = StageSolveOptions::density(obj);
        let sol = solve_stage_game(&game, &q, &opts).unwrap();
        for v in ce_vertices(&game, &q, &opts) {
            prop_assert!(sol.diagnostics.objective_value <= stage_value(&game, &q, &opts, &v) + 1e-6);
        }
    }

    #[test]
    fn stage_regret_matches_summation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let game = random_game(&mut rng, 2, &[2, 3], 0.9);
        let q = random_q(&mut rng, &game, 5.0);
        let f: Vec<f64> = (0..game.num_states() * game.num_joint()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let occ = OccupancyMeasure::new(StateActionTable::from_flat(2, 6, f.clone()).unwrap()).unwrap();
        let reg = stage_regret(&game, &occ, &q).unwrap();
        let mut max = f64::NEG_INFINITY;
        for i in 0..2 {
            for s in 0..2 {
                for a in 0..game.num_actions(i) {
                    for alt in 0..game.num_actions(i) {
                        let expected = regret_oracle(&game, &f, &q, i, s, a, alt);
                        prop_assert!((reg.get(&game, i, s, a, alt) - expected).abs() <= 1e-12);
                        max = max.max(expected);
                    }
                }
            }
        }
        prop_assert!((reg.max - max).abs() <= 1e-12);
    }
}
