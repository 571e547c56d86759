//! Dense linear programs and a two-phase primal simplex solver.

mod simplex;
mod text;

pub use simplex::solve_lp;
pub use text::write_lp_text;

use crate::error::{Error, Result};

/// Feasibility tolerance for constraint rows of an optimal solution.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Tolerance on variable bounds of an optimal solution.
pub const BOUND_TOL: f64 = 1e-9;
/// Smallest pivot element the simplex accepts.
pub const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    /// May be `f64::NEG_INFINITY` for a free variable.
    pub lower: f64,
    pub upper: Option<f64>,
}

impl Default for Bound {
    fn default() -> Self {
        Bound { lower: 0.0, upper: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bound>,
    pub var_names: Vec<String>,
}

impl LinearProgram {
    /// Empty program over `num_vars` nonnegative variables with a zero objective.
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        Self {
            num_vars,
            sense,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![Bound::default(); num_vars],
            var_names: (0..num_vars).map(|k| format!("x{k}")).collect(),
        }
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, relation, rhs, name: None });
        self.constraints.len() - 1
    }

    pub fn add_named(&mut self, name: impl Into<String>, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, relation, rhs, name: Some(name.into()) });
        self.constraints.len() - 1
    }

    /// Appends a variable and returns its index; existing rows are padded with zeros.
    pub fn add_var(&mut self, name: impl Into<String>, objective: f64, bound: Bound) -> usize {
        self.num_vars += 1;
        self.objective.push(objective);
        self.bounds.push(bound);
        self.var_names.push(name.into());
        for c in &mut self.constraints {
            c.coeffs.push(0.0);
        }
        self.num_vars - 1
    }

    pub fn check(&self) -> Result<()> {
        let n = self.num_vars;
        if self.objective.len() != n || self.bounds.len() != n || self.var_names.len() != n {
            return Err(Error::Shape(format!("LP objective/bounds/names do not have {n} entries")));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Precondition("LP objective has a non-finite coefficient".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::Shape(format!("constraint {i} has {} coefficients, expected {n}", c.coeffs.len())));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::Precondition(format!("constraint {i} is not finite")));
            }
        }
        for (k, b) in self.bounds.iter().enumerate() {
            let upper_ok = b.upper.map_or(true, |u| u.is_finite() && u >= b.lower);
            if b.lower.is_nan() || b.lower == f64::INFINITY || !upper_ok {
                return Err(Error::Precondition(format!("variable {k} has invalid bounds {b:?}")));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any constraint row at `x`; zero when feasible.
    pub fn max_row_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
                match c.relation {
                    Relation::Le => (lhs - c.rhs).max(0.0),
                    Relation::Ge => (c.rhs - lhs).max(0.0),
                    Relation::Eq => (lhs - c.rhs).abs(),
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest violation of any variable bound at `x`.
    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        self.bounds
            .iter()
            .zip(x)
            .map(|(b, v)| {
                let low = (b.lower - v).max(0.0);
                let high = b.upper.map_or(0.0, |u| (v - u).max(0.0));
                low.max(high)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap hit or the basis became numerically unusable.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values; empty unless `status` is `Optimal`.
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Simplex pivots over both phases.
    pub iterations: usize,
    pub diagnostics: Option<String>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
