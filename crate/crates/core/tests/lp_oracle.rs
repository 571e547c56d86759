//! Random LPs checked against brute-force vertex enumeration and LP duality.

use dbce::lp::{solve_lp, Bound, LinearProgram, LpStatus, Relation, Sense};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const UPPER: f64 = 10.0;

fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=8);
    let sense = if rng.gen_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    let mut lp = LinearProgram::new(n, sense);
    lp.objective = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    for b in &mut lp.bounds {
        *b = Bound { lower: 0.0, upper: Some(UPPER) };
    }
    for _ in 0..m {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-4..=4) as f64).collect();
        let relation = match rng.gen_range(0..10) {
            0 => Relation::Eq,
            1..=3 => Relation::Ge,
            _ => Relation::Le,
        };
        let rhs = rng.gen_range(-10..=20) as f64 / 2.0;
        lp.add_constraint(coeffs, relation, rhs);
    }
    lp
}

/// Best objective over all vertices of the (bounded) feasible polytope, or
/// `None` when no vertex is feasible.
fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars;
    // Hyperplanes a.x = b; `equality` ones must be active at every vertex.
    let mut planes: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for c in &lp.constraints {
        planes.push((c.coeffs.clone(), c.rhs, c.relation == Relation::Eq));
    }
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        planes.push((e.clone(), 0.0, false));
        planes.push((e, lp.bounds[k].upper.unwrap(), false));
    }
    let eq: Vec<usize> = (0..planes.len()).filter(|&i| planes[i].2).collect();
    let ineq: Vec<usize> = (0..planes.len()).filter(|&i| !planes[i].2).collect();
    if eq.len() > n {
        // Over-determined equalities: fall back to trying all n-subsets of them.
        return enumerate_subsets(lp, &planes, &[], &(0..planes.len()).collect::<Vec<_>>(), n);
    }
    enumerate_subsets(lp, &planes, &eq, &ineq, n - eq.len())
}

fn enumerate_subsets(
    lp: &LinearProgram,
    planes: &[(Vec<f64>, f64, bool)],
    fixed: &[usize],
    pool: &[usize],
    k: usize,
) -> Option<f64> {
    let n = lp.num_vars;
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    if k > pool.len() {
        return None;
    }
    loop {
        let chosen: Vec<usize> = fixed.iter().copied().chain(idx.iter().map(|&i| pool[i])).collect();
        let a = DMatrix::from_fn(n, n, |r, c| planes[chosen[r]].0[c]);
        let b = DVector::from_iterator(n, chosen.iter().map(|&i| planes[i].1));
        if a.determinant().abs() > 1e-9 {
            if let Some(x) = a.lu().solve(&b) {
                let x: Vec<f64> = x.iter().copied().collect();
                if lp.max_row_violation(&x) <= 1e-9 && lp.max_bound_violation(&x) <= 1e-9 {
                    let v = lp.objective_value(&x);
                    best = Some(match (best, lp.sense) {
                        (None, _) => v,
                        (Some(b), Sense::Minimize) => b.min(v),
                        (Some(b), Sense::Maximize) => b.max(v),
                    });
                }
            }
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < pool.len() - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
        if k == 0 {
            return best;
        }
    }
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..300 {
        let lp = random_lp(&mut rng);
        let sol = solve_lp(&lp).unwrap();
        match vertex_enumeration(&lp) {
            Some(best) => {
                assert_eq!(sol.status, LpStatus::Optimal, "case {case}: {lp:?}");
                assert!(
                    (sol.objective_value - best).abs() <= 1e-7 * (1.0 + best.abs()),
                    "case {case}: simplex {} vs vertices {best}",
                    sol.objective_value
                );
                // independent feasibility re-check
                assert!(lp.max_row_violation(&sol.values) <= 1e-7, "case {case}");
                assert!(lp.max_bound_violation(&sol.values) <= 1e-9, "case {case}");
                optimal += 1;
            }
            None => {
                assert_eq!(sol.status, LpStatus::Infeasible, "case {case}");
                infeasible += 1;
            }
        }
    }
    assert!(optimal > 100 && infeasible > 10, "{optimal} optimal / {infeasible} infeasible");
}

#[test]
fn primal_and_dual_optima_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=6);
        let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-3.0..5.0)).collect()).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..4.0)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum::<f64>() - rng.gen_range(0.0..2.0))
            .collect();

        // min c.x, Ax >= b, x >= 0
        let mut primal = LinearProgram::new(n, Sense::Minimize);
        primal.objective = c.clone();
        for (row, bi) in a.iter().zip(&b) {
            primal.add_constraint(row.clone(), Relation::Ge, *bi);
        }
        // max b.y, A^T y <= c, y >= 0
        let mut dual = LinearProgram::new(m, Sense::Maximize);
        dual.objective = b.clone();
        for k in 0..n {
            dual.add_constraint(a.iter().map(|row| row[k]).collect(), Relation::Le, c[k]);
        }
        let p = solve_lp(&primal).unwrap();
        let d = solve_lp(&dual).unwrap();
        assert_eq!(p.status, LpStatus::Optimal, "case {case}");
        assert_eq!(d.status, LpStatus::Optimal, "case {case}");
        assert!(
            (p.objective_value - d.objective_value).abs() <= 1e-6,
            "case {case}: primal {} dual {}",
            p.objective_value,
            d.objective_value
        );
    }
}
