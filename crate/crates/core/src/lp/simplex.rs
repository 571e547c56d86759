//! Two-phase dense tableau simplex with Bland's smallest-index rule.
//!
//! The program is rewritten as `min c'x, Ax = b, x >= 0, b >= 0`: lower
//! bounds are shifted out, free variables split, upper bounds become rows,
//! `<=` rows get a slack, `>=` rows a surplus plus an artificial, and `=`
//! rows an artificial. Phase one drives the artificials to zero; phase two
//! optimizes the real objective with the artificial columns barred. Rows are
//! equilibrated, and the tableau is periodically rebuilt from an LU
//! factorization of the basis so round-off does not accumulate across pivots.

use nalgebra::{DMatrix, DVector};

use super::{LinearProgram, LpSolution, LpStatus, Relation, Sense, FEASIBILITY_TOL, PIVOT_TOL};
use crate::error::Result;

const COST_TOL: f64 = 1e-9;
const RATIO_TIE_TOL: f64 = 1e-12;
const SMALL_PIVOT_RATIO: f64 = 1e-3;
const REINVERT_EVERY: usize = 50;

#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shifted { col: usize, lower: f64 },
    Split { plus: usize, minus: usize },
}

struct StandardForm {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    num_cols: usize,
    first_artificial: usize,
    initial_basis: Vec<usize>,
    var_map: Vec<VarMap>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let mut var_map = Vec::with_capacity(lp.num_vars);
        let mut num_struct = 0;
        for b in &lp.bounds {
            if b.lower.is_finite() {
                var_map.push(VarMap::Shifted { col: num_struct, lower: b.lower });
                num_struct += 1;
            } else {
                var_map.push(VarMap::Split { plus: num_struct, minus: num_struct + 1 });
                num_struct += 2;
            }
        }

        let mut raw: Vec<(Vec<f64>, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| (c.coeffs.clone(), c.relation, c.rhs))
            .collect();
        for (k, b) in lp.bounds.iter().enumerate() {
            if let Some(u) = b.upper {
                let mut e = vec![0.0; lp.num_vars];
                e[k] = 1.0;
                raw.push((e, Relation::Le, u));
            }
        }

        let mut structural = Vec::with_capacity(raw.len());
        for (coeffs, mut rel, mut rhs) in raw {
            let mut row = vec![0.0; num_struct];
            for (k, &a) in coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match var_map[k] {
                    VarMap::Shifted { col, lower } => {
                        row[col] += a;
                        rhs -= a * lower;
                    }
                    VarMap::Split { plus, minus } => {
                        row[plus] += a;
                        row[minus] -= a;
                    }
                }
            }
            let norm = row.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
                rhs /= norm;
            }
            if rhs < 0.0 || (rhs == 0.0 && rel == Relation::Ge) {
                row.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            structural.push((row, rel, rhs));
        }

        let num_slack = structural.iter().filter(|r| r.1 != Relation::Eq).count();
        let num_art = structural.iter().filter(|r| r.1 != Relation::Le).count();
        let first_slack = num_struct;
        let first_artificial = num_struct + num_slack;
        let num_cols = first_artificial + num_art;

        let mut rows = Vec::with_capacity(structural.len());
        let mut rhs = Vec::with_capacity(structural.len());
        let mut initial_basis = Vec::with_capacity(structural.len());
        let (mut next_slack, mut next_art) = (first_slack, first_artificial);
        for (mut row, rel, b) in structural {
            row.resize(num_cols, 0.0);
            match rel {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    initial_basis.push(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    initial_basis.push(next_art);
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    initial_basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(row);
            rhs.push(b);
        }

        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; num_cols];
        for (k, m) in var_map.iter().enumerate() {
            let c = sign * lp.objective[k];
            match *m {
                VarMap::Shifted { col, .. } => cost[col] = c,
                VarMap::Split { plus, minus } => {
                    cost[plus] = c;
                    cost[minus] = -c;
                }
            }
        }

        StandardForm { rows, rhs, cost, num_cols, first_artificial, initial_basis, var_map }
    }
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    IterationCap,
}

struct Tableau {
    width: usize,
    data: Vec<f64>,
    reduced: Vec<f64>,
    basis: Vec<usize>,
    /// Standard-form row behind each tableau row.
    row_ids: Vec<usize>,
    pivots: usize,
    cap: usize,
    cost: Vec<f64>,
}

impl Tableau {
    fn new(sf: &StandardForm) -> Self {
        let width = sf.num_cols + 1;
        let mut data = Vec::with_capacity(sf.rows.len() * width);
        for (row, b) in sf.rows.iter().zip(&sf.rhs) {
            data.extend_from_slice(row);
            data.push(*b);
        }
        let m = sf.rows.len();
        Tableau {
            width,
            data,
            reduced: vec![0.0; width],
            basis: sf.initial_basis.clone(),
            row_ids: (0..m).collect(),
            pivots: 0,
            cap: 10 * (m + sf.num_cols) * 1000,
            cost: vec![0.0; sf.num_cols],
        }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.width - 1]
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.width;
        self.cost = cost.to_vec();
        let cost = &self.cost;
        self.reduced[..w - 1].copy_from_slice(cost);
        self.reduced[w - 1] = 0.0;
        for i in 0..self.m() {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.data[i * w..(i + 1) * w];
            for (d, a) in self.reduced.iter_mut().zip(row) {
                *d -= cb * a;
            }
        }
    }

    fn objective(&self) -> f64 {
        -self.reduced[self.width - 1]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.at(r, e);
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        self.data[r * w + e] = 1.0;
        let prow: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m() {
            if i == r {
                continue;
            }
            let factor = self.data[i * w + e];
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.data[i * w..(i + 1) * w];
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= factor * pv;
            }
            row[e] = 0.0;
            if row[w - 1] < 0.0 {
                row[w - 1] = 0.0;
            }
        }
        let factor = self.reduced[e];
        if factor != 0.0 {
            for (d, pv) in self.reduced.iter_mut().zip(&prow) {
                *d -= factor * pv;
            }
            self.reduced[e] = 0.0;
        }
        self.basis[r] = e;
        self.pivots += 1;
    }

    /// Recomputes the tableau as `B^-1 [A | b]` from the standard-form rows.
    /// Leaves the tableau untouched when the basis matrix is singular.
    fn reinvert(&mut self, sf: &StandardForm) {
        let (m, w) = (self.m(), self.width);
        if m == 0 {
            return;
        }
        let b_mat = DMatrix::from_fn(m, m, |r, c| sf.rows[self.row_ids[r]][self.basis[c]]);
        let full = DMatrix::from_fn(m, w, |r, c| {
            let id = self.row_ids[r];
            if c + 1 == w {
                sf.rhs[id]
            } else {
                sf.rows[id][c]
            }
        });
        let Some(t) = b_mat.lu().solve(&full) else {
            return;
        };
        if t.iter().any(|v| !v.is_finite()) {
            return;
        }
        for i in 0..m {
            for j in 0..w {
                self.data[i * w + j] = t[(i, j)];
            }
            for (k, &col) in self.basis.iter().enumerate() {
                self.data[i * w + col] = if k == i { 1.0 } else { 0.0 };
            }
            if self.data[i * w + w - 1] < 0.0 {
                self.data[i * w + w - 1] = 0.0;
            }
        }
        let cost = std::mem::take(&mut self.cost);
        self.price(&cost);
    }

    /// Bland's rule: lowest-index improving column enters, ratio ties leave
    /// by lowest basic index.
    fn run(&mut self, sf: &StandardForm, allowed: usize, cost_scale: f64) -> PhaseOutcome {
        let tol = COST_TOL * cost_scale;
        let mut since_reinvert = 0;
        loop {
            if self.pivots >= self.cap {
                return PhaseOutcome::IterationCap;
            }
            if since_reinvert >= REINVERT_EVERY {
                self.reinvert(sf);
                since_reinvert = 0;
            }
            let Some(e) = (0..allowed).find(|&j| self.reduced[j] < -tol) else {
                if since_reinvert > 0 {
                    // confirm optimality on a freshly computed tableau
                    self.reinvert(sf);
                    since_reinvert = 0;
                    if (0..allowed).any(|j| self.reduced[j] < -tol) {
                        continue;
                    }
                }
                return PhaseOutcome::Optimal;
            };
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m() {
                let a = self.at(i, e);
                if a > PIVOT_TOL {
                    best_ratio = best_ratio.min(self.rhs(i) / a);
                }
            }
            if best_ratio == f64::INFINITY {
                return PhaseOutcome::Unbounded;
            }
            // Among ratio ties Bland picks the lowest basic index, unless that
            // pivot is tiny next to the largest tied one.
            let limit = best_ratio + RATIO_TIE_TOL * (1.0 + best_ratio.abs());
            let ties: Vec<usize> =
                (0..self.m()).filter(|&i| self.at(i, e) > PIVOT_TOL && self.rhs(i) / self.at(i, e) <= limit).collect();
            let bland = *ties.iter().min_by_key(|&&i| self.basis[i]).expect("nonempty");
            let largest = *ties
                .iter()
                .max_by(|&&i, &&k| self.at(i, e).total_cmp(&self.at(k, e)))
                .expect("nonempty");
            let r = if self.at(bland, e) < SMALL_PIVOT_RATIO * self.at(largest, e) { largest } else { bland };
            self.pivot(r, e);
            since_reinvert += 1;
        }
    }

    fn remove_row(&mut self, i: usize) {
        let w = self.width;
        self.data.drain(i * w..(i + 1) * w);
        self.basis.remove(i);
        self.row_ids.remove(i);
    }
}

fn failure(status: LpStatus, iterations: usize, diagnostics: Option<String>) -> LpSolution {
    LpSolution { status, values: Vec::new(), objective_value: f64::NAN, iterations, diagnostics }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let sf = StandardForm::build(lp);
    let mut tab = Tableau::new(&sf);
    let first_art = sf.first_artificial;

    if sf.num_cols > first_art {
        let phase_one: Vec<f64> = (0..sf.num_cols).map(|j| if j >= first_art { 1.0 } else { 0.0 }).collect();
        tab.price(&phase_one);
        match tab.run(&sf, sf.num_cols, 1.0) {
            PhaseOutcome::Optimal => {}
            PhaseOutcome::Unbounded => {
                return Ok(failure(
                    LpStatus::NumericalFailure,
                    tab.pivots,
                    Some("phase one reported an unbounded ray".into()),
                ));
            }
            PhaseOutcome::IterationCap => {
                return Ok(failure(
                    LpStatus::NumericalFailure,
                    tab.pivots,
                    Some(format!("iteration cap {} reached in phase one", tab.cap)),
                ));
            }
        }
        let scale = 1.0 + sf.rhs.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        if tab.objective() > FEASIBILITY_TOL * scale {
            return Ok(failure(LpStatus::Infeasible, tab.pivots, None));
        }
        // Drive zero-level artificials out of the basis; rows where that is
        // impossible are linearly dependent and dropped.
        let mut i = 0;
        while i < tab.m() {
            if tab.basis[i] < first_art {
                i += 1;
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..first_art {
                let a = tab.at(i, j).abs();
                if a > PIVOT_TOL && best.map_or(true, |(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            match best {
                Some((j, _)) => {
                    tab.pivot(i, j);
                    i += 1;
                }
                None => tab.remove_row(i),
            }
        }
    }

    let cost_scale = 1.0 + sf.cost.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    tab.price(&sf.cost);
    match tab.run(&sf, first_art, cost_scale) {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::Unbounded => return Ok(failure(LpStatus::Unbounded, tab.pivots, None)),
        PhaseOutcome::IterationCap => {
            return Ok(failure(
                LpStatus::NumericalFailure,
                tab.pivots,
                Some(format!("iteration cap {} reached in phase two", tab.cap)),
            ));
        }
    }

    let mut x_std = vec![0.0; sf.num_cols];
    for (i, &col) in tab.basis.iter().enumerate() {
        x_std[col] = tab.rhs(i).max(0.0);
    }
    if let Some(polished) = polish(&sf, &tab) {
        x_std = polished;
    }

    let values: Vec<f64> = sf
        .var_map
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, lower } => lower + x_std[col],
            VarMap::Split { plus, minus } => x_std[plus] - x_std[minus],
        })
        .collect();

    let row_violation = lp.max_row_violation(&values);
    if row_violation > FEASIBILITY_TOL * (1.0 + sf.rhs.iter().fold(0.0_f64, |m, b| m.max(b.abs()))) {
        return Ok(failure(
            LpStatus::NumericalFailure,
            tab.pivots,
            Some(format!("optimal basis violates a row by {row_violation:e}")),
        ));
    }
    let objective_value = lp.objective_value(&values);
    Ok(LpSolution { status: LpStatus::Optimal, values, objective_value, iterations: tab.pivots, diagnostics: None })
}

/// Re-solves `B x_B = b` on the original standard-form rows. Returns `None`
/// when the basis matrix is singular or the result is clearly infeasible.
fn polish(sf: &StandardForm, tab: &Tableau) -> Option<Vec<f64>> {
    let m = tab.m();
    if m == 0 {
        return Some(vec![0.0; sf.num_cols]);
    }
    let b_mat = DMatrix::from_fn(m, m, |r, c| sf.rows[tab.row_ids[r]][tab.basis[c]]);
    let rhs = DVector::from_iterator(m, tab.row_ids.iter().map(|&r| sf.rhs[r]));
    let xb = b_mat.lu().solve(&rhs)?;
    if xb.iter().any(|v| !v.is_finite() || *v < -1e-7) {
        return None;
    }
    let mut x = vec![0.0; sf.num_cols];
    for (c, &col) in tab.basis.iter().enumerate() {
        x[col] = xb[c].max(0.0);
    }
    Some(x)
}
