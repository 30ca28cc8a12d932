use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SolverError;

/// Row relation of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Le => f.write_str("<="),
            Relation::Ge => f.write_str(">="),
            Relation::Eq => f.write_str("="),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }

    /// Signed violation of the row at `x` (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A mixed-binary linear program.
///
/// Variables carry box bounds (infinite ends allowed); variables flagged in
/// `binary` are restricted to {0, 1} and have their bounds clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
    pub binary: Vec<bool>,
    pub sense: Sense,
}

impl MilpModel {
    /// Model over `num_vars` free continuous variables with a zero objective.
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
            binary: vec![false; num_vars],
            sense,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints
            .push(Constraint::new(coeffs, relation, rhs));
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    /// Marks `var` binary and tightens its bounds to `[0, 1]`.
    pub fn set_binary(&mut self, var: usize) {
        self.binary[var] = true;
        let (l, u) = self.bounds[var];
        self.bounds[var] = (l.max(0.0), u.min(1.0));
    }

    pub fn is_pure_lp(&self) -> bool {
        !self.binary.iter().any(|&b| b)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.num_vars();
        if self.bounds.len() != n || self.binary.len() != n {
            return Err(SolverError::InvalidModel(format!(
                "objective has {n} entries but bounds/binary have {}/{}",
                self.bounds.len(),
                self.binary.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(SolverError::InvalidModel(
                "non-finite objective coefficient".into(),
            ));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(SolverError::InvalidModel(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if row.coeffs.iter().any(|a| !a.is_finite()) || !row.rhs.is_finite() {
                return Err(SolverError::InvalidModel(format!(
                    "constraint {i} has a non-finite entry"
                )));
            }
        }
        for (j, &(l, u)) in self.bounds.iter().enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(SolverError::InvalidModel(format!(
                    "variable {j} has invalid bounds"
                )));
            }
            if self.binary[j] && (l < 0.0 || u > 1.0) {
                return Err(SolverError::InvalidModel(format!(
                    "binary variable {j} has bounds outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(l, u), &v)| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NodeLimit => "node_limit",
        })
    }
}

/// Result of an LP or MILP solve.
///
/// Under [`SolveStatus::NodeLimit`] the best incumbent, if any, is carried in
/// `objective_value`/`solution` but is not proven optimal.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective_value: Option<f64>,
    pub solution: Option<Vec<f64>>,
    pub nodes_explored: usize,
    pub wall_time: Duration,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn proven_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Numerical tolerances shared by the LP kernel and branch-and-bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub integrality: f64,
    pub pivot: f64,
    pub optimality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-7,
            integrality: 1e-6,
            pivot: 1e-10,
            optimality: 1e-9,
        }
    }
}
