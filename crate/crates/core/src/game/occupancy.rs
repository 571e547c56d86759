use nalgebra::{DMatrix, DVector};

use super::{DensityObjective, JointPolicy, MarkovGame, ObjectiveKind, OccupancyMeasure, StateActionTable, PROB_TOL};
use crate::error::{Error, Result};

/// Residual allowed on the linear solve before it is reported as a failure.
const SOLVE_RESIDUAL_LIMIT: f64 = 1e-6;

/// Occupancy measure of `policy`, from a direct solve of the state-density
/// equations `d = eta + gamma * P_pi^T d` followed by `f(s, j) = pi(s, j) d(s)`.
pub fn exact_occupancy(game: &MarkovGame, policy: &JointPolicy) -> Result<OccupancyMeasure> {
    game.check_table_shape("policy", policy.num_states(), policy.num_joint())?;
    let ns = game.num_states();
    let gamma = game.discount();
    let m = game.state_transition_under(policy);
    // (I - gamma * M^T) d = eta
    let a = DMatrix::from_fn(ns, ns, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        id - gamma * m[c * ns + r]
    });
    let eta = DVector::from_column_slice(game.initial());
    let d = a
        .lu()
        .solve(&eta)
        .ok_or_else(|| Error::Numerical("singular state-density system".into()))?;

    let nj = game.num_joint();
    let mut table = StateActionTable::zeros(ns, nj);
    for s in 0..ns {
        for j in 0..nj {
            table.set(s, j, (policy.prob(s, j) * d[s]).max(0.0));
        }
    }
    let f = OccupancyMeasure::raw(table);
    let worst = bellman_flow_error(game, &f)?.into_iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    if worst > SOLVE_RESIDUAL_LIMIT {
        return Err(Error::Numerical(format!("occupancy solve left a residual of {worst:e}")));
    }
    Ok(f)
}

/// `BFError_f(s) = sum_j f(s, j) - eta(s) - gamma * sum_{s', j} P(s | s', j) f(s', j)`.
pub fn bellman_flow_error(game: &MarkovGame, f: &OccupancyMeasure) -> Result<Vec<f64>> {
    game.check_table_shape("occupancy", f.num_states(), f.num_joint())?;
    let ns = game.num_states();
    let gamma = game.discount();
    let mut residual: Vec<f64> = (0..ns).map(|s| f.state_density(s) - game.initial()[s]).collect();
    for sp in 0..ns {
        for j in 0..game.num_joint() {
            let mass = f.get(sp, j);
            if mass == 0.0 {
                continue;
            }
            for (s, p) in game.transition_row(sp, j).iter().enumerate() {
                residual[s] -= gamma * p * mass;
            }
        }
    }
    Ok(residual)
}

/// Normalizes each state's row of `f`. States with total mass at most 1e-9
/// get the uniform distribution.
pub fn policy_from_occupancy(f: &OccupancyMeasure) -> Result<JointPolicy> {
    let (ns, nj) = (f.num_states(), f.num_joint());
    let mut table = StateActionTable::zeros(ns, nj);
    for s in 0..ns {
        let row = f.row(s);
        if let Some(v) = row.iter().find(|v| **v < -PROB_TOL || v.is_nan()) {
            return Err(Error::Precondition(format!("occupancy entry {v} in state {s} is negative")));
        }
        let total: f64 = row.iter().map(|v| v.max(0.0)).sum();
        for j in 0..nj {
            let p = if total <= PROB_TOL { 1.0 / nj as f64 } else { row[j].max(0.0) / total };
            table.set(s, j, p);
        }
        // Push the rounding drift of the row sum onto its largest entry.
        let sum: f64 = table.row(s).iter().sum();
        let (jmax, _) = table
            .row(s)
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (j, &p)| if p > acc.1 { (j, p) } else { acc });
        table.set(s, jmax, table.get(s, jmax) + (1.0 - sum));
    }
    JointPolicy::new(table)
}

/// Per-state coefficients `c` and offset `k` of the signed functional
/// `L(f) = sum_s c(s) rho_f(s) - k` whose value (MinDensity) or absolute
/// value (FrequencyMatch, DensityGap) is the density error.
pub fn signed_density_functional(obj: &DensityObjective, gamma: f64) -> (Vec<f64>, f64) {
    match obj.kind {
        ObjectiveKind::MinDensity => (obj.weights_1.clone(), 0.0),
        ObjectiveKind::FrequencyMatch => (obj.weights_1.clone(), obj.target_fraction / (1.0 - gamma)),
        ObjectiveKind::DensityGap => (
            obj.weights_1.iter().zip(&obj.weights_2).map(|(a, b)| a - b).collect(),
            0.0,
        ),
    }
}

/// Density error `phi'(f)` of an occupancy measure.
pub fn density_error(f: &OccupancyMeasure, obj: &DensityObjective, gamma: f64) -> Result<f64> {
    if obj.weights_1.len() != f.num_states() || obj.weights_2.len() != f.num_states() {
        return Err(Error::Shape(format!(
            "objective covers {} states, occupancy has {}",
            obj.weights_1.len(),
            f.num_states()
        )));
    }
    let (coeffs, offset) = signed_density_functional(obj, gamma);
    let value: f64 = coeffs.iter().enumerate().map(|(s, c)| c * f.state_density(s)).sum::<f64>() - offset;
    Ok(match obj.kind {
        ObjectiveKind::MinDensity => value,
        ObjectiveKind::FrequencyMatch | ObjectiveKind::DensityGap => value.abs(),
    })
}
