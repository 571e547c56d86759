use dbce::baselines::{run_ce_q, run_constrained, run_method, run_reward_modified, CapObjective, Method};
use dbce::dbcpi::{evaluate_policy_exact, DbcpiConfig};
use dbce::environments::{build_collect_explore, build_fair_gamble, build_game, build_hunters, requirement_preset};
use dbce::game::DensityObjective;
use dbce::stage::{solve_stage_game, stage_regret, QTables, StageSolveOptions};
use dbce::Error;

fn short() -> DbcpiConfig {
    DbcpiConfig { iterations: 40, ..DbcpiConfig::default() }
}

#[test]
fn slack_cap_reproduces_plain_ce_q() {
    for (id, task) in [("hunters", "safety"), ("fairgamble", "freq-10")] {
        let game = build_game(id).unwrap();
        let (objective, _) = requirement_preset(id, task).unwrap();
        // no occupancy can exceed the total mass times the largest weight
        let wmax = objective.weights_1.iter().chain(&objective.weights_2).cloned().fold(0.0, f64::max);
        let b = wmax / (1.0 - game.discount()) + 1.0;
        let mut capped = run_constrained(&game, &objective, b, CapObjective::Utilitarian, &short()).unwrap();
        let mut plain = run_ce_q(&game, &short(), None, &objective).unwrap();
        capped.runtime_s = 0.0;
        plain.runtime_s = 0.0;
        assert_eq!(capped.trace, plain.trace, "{id} {task}");
        assert_eq!(capped.error, plain.error);
        assert_eq!(capped.policy, plain.policy);
    }
}

#[test]
fn slack_cap_leaves_stage_optima_unchanged() {
    // CaE stage games have many optimal vertices, so only the optimal values are compared
    let game = build_collect_explore();
    let (objective, _) = requirement_preset("cae", "fairness").unwrap();
    let b = 2.0 / (1.0 - game.discount()) + 1.0;
    let plain = StageSolveOptions::utilitarian();
    let capped = StageSolveOptions::utilitarian().with_cap(objective, b);
    let mut q = QTables::zeros(&game);
    for _ in 0..20 {
        let a = solve_stage_game(&game, &q, &plain).unwrap();
        let c = solve_stage_game(&game, &q, &capped).unwrap();
        let scale = 1.0 + a.diagnostics.objective_value.abs();
        assert!((a.diagnostics.objective_value - c.diagnostics.objective_value).abs() <= 1e-9 * scale);
        q = evaluate_policy_exact(&game, &a.policy).unwrap();
    }
}

#[test]
fn cm_feasible_runs_respect_the_cap_every_iteration() {
    let game = build_hunters();
    let (objective, _) = requirement_preset("hunters", "safety").unwrap();
    for stage_objective in [CapObjective::Utilitarian, CapObjective::Zero] {
        let run = run_constrained(&game, &objective, 5.0, stage_objective, &short()).unwrap();
        assert!(run.trace.iter().all(|e| *e <= 5.0 + 1e-6), "{:?}", run.trace);
        assert!(run.max_bf <= 1e-6);
    }
}

#[test]
fn tight_cap_on_fair_gamble_is_infeasible() {
    // every policy starts in G3 with probability 1/3, so rho(G3) >= 1/3 > 0.05
    let game = build_fair_gamble();
    let (objective, _) = requirement_preset("fairgamble", "safety").unwrap();
    match run_method(&game, &objective, Method::Cm(0.05), &short()) {
        Err(Error::InfeasibleStage { iteration }) => assert_eq!(iteration, 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn hunters_tight_cap_regret_exceeds_dbce() {
    let game = build_hunters();
    let (objective, _) = requirement_preset("hunters", "safety").unwrap();
    let cfg = DbcpiConfig::default();
    let dbce = run_method(&game, &objective, Method::Dbce, &cfg).unwrap();
    let cm = run_method(&game, &objective, Method::Cm(0.05), &cfg).unwrap();
    assert!(cm.max_reg > dbce.max_reg, "cm {} vs dbce {}", cm.max_reg, dbce.max_reg);
}

#[test]
fn reward_modified_runs_report_both_regrets() {
    for (id, p) in [("fairgamble", -1.5), ("hunters", -1.5), ("cae", -0.5)] {
        let game = build_game(id).unwrap();
        let (objective, _) = requirement_preset(id, "safety").unwrap();
        let run = run_reward_modified(&game, &objective, p, &short()).unwrap();
        let original = run.max_reg_original.expect("original-game regret");
        let q = evaluate_policy_exact(&game, &run.policy).unwrap();
        assert_eq!(original, stage_regret(&game, &run.occupancy, &q).unwrap().max);
        let json = serde_json::to_value(&run).unwrap();
        assert_eq!(json["max_reg_original"].as_f64(), Some(original));
    }
}

#[test]
fn method_labels_follow_ids() {
    let game = build_collect_explore();
    let (objective, _) = requirement_preset("cae", "safety").unwrap();
    for id in ["dbce", "ceq", "cm-25", "rm-0.5"] {
        let run = run_method(&game, &objective, id.parse().unwrap(), &short()).unwrap();
        assert_eq!(run.method, id);
        assert_eq!(run.trace.len(), 40);
    }
}

#[test]
fn reward_modification_needs_a_safety_objective() {
    let game = build_collect_explore();
    let objective = DensityObjective::frequency_match(vec![0.0, 1.0, 0.0, 0.0], 0.1);
    assert!(matches!(run_method(&game, &objective, Method::Rm(-0.5), &short()), Err(Error::Config(_))));
}
