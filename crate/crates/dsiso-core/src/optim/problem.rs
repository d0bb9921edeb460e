//! Linear/mixed-integer program description shared by the solvers.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Constraint comparison operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

/// One sparse constraint row `Σ coeffs·x  cmp  rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// A linear program with bounded variables and optional binary flags.
///
/// Constraint storage is sparse; variables carry names so problems can be
/// round-tripped through the LP text format.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    /// Sparse objective coefficients.
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub binary: Vec<bool>,
    /// Groups of binary variables constrained to sum to exactly 1; used by
    /// the branch-and-bound to branch multi-way. The corresponding equality
    /// row must be added explicitly as well.
    pub one_hot_groups: Vec<Vec<usize>>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            constraints: Vec::new(),
            names: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            binary: Vec::new(),
            one_hot_groups: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    /// Adds a continuous variable and returns its index. Use
    /// `f64::NEG_INFINITY` / `f64::INFINITY` for free directions.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.binary.push(false);
        self.names.len() - 1
    }

    /// Adds a binary variable (bounds `[0, 1]`, integrality flagged).
    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        let idx = self.add_var(name, 0.0, 1.0);
        self.binary[idx] = true;
        idx
    }

    /// Sets (overwrites) the objective coefficient of a variable.
    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        if let Some(entry) = self.objective.iter_mut().find(|(v, _)| *v == var) {
            entry.1 = coeff;
        } else if coeff != 0.0 {
            self.objective.push((var, coeff));
        }
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        cmp: Cmp,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            cmp,
            rhs,
        });
    }

    /// Declares a one-hot group (the members must be binary) and adds the
    /// `Σ = 1` row.
    pub fn add_one_hot_group(&mut self, name: impl Into<String>, members: Vec<usize>) {
        let coeffs: Vec<(usize, f64)> = members.iter().map(|&v| (v, 1.0)).collect();
        self.add_constraint(name, coeffs, Cmp::Eq, 1.0);
        self.one_hot_groups.push(members);
    }

    pub fn has_binaries(&self) -> bool {
        self.binary.iter().any(|&b| b)
    }

    /// Structural validation: finite coefficients, consistent bounds,
    /// in-range variable references.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (v, c) in &self.objective {
            if *v >= n || !c.is_finite() {
                return Err(Error::InvalidInput(alloc::format!(
                    "bad objective term on variable {v}"
                )));
            }
        }
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(Error::InvalidInput(alloc::format!(
                    "inconsistent bounds on variable {} ({lo} > {hi})",
                    self.names[j]
                )));
            }
        }
        for row in &self.constraints {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidInput(alloc::format!(
                    "non-finite rhs in row {}",
                    row.name
                )));
            }
            for (v, c) in &row.coeffs {
                if *v >= n || !c.is_finite() {
                    return Err(Error::InvalidInput(alloc::format!(
                        "bad coefficient in row {}",
                        row.name
                    )));
                }
            }
        }
        for group in &self.one_hot_groups {
            for &v in group {
                if v >= n || !self.binary[v] {
                    return Err(Error::InvalidInput(
                        "one-hot group member is not a binary variable".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Dense objective value of a point.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v]).sum()
    }
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration/node limit reached; incumbent (if any) is returned.
    Limit,
}

/// Solver output. For MILP solves `duals` refers to the LP relaxation at
/// the optimal node and `node_count` is the number of explored nodes.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub node_count: usize,
    /// Proven relative gap (MILP) or certified duality gap (LP).
    pub gap: f64,
}

/// Centralized solver tolerances.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub feasibility: f64,
    pub optimality: f64,
    pub integrality: f64,
    pub max_iterations: usize,
    pub max_nodes: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            optimality: 1e-6,
            integrality: 1e-6,
            max_iterations: 50_000,
            max_nodes: 2_000_000,
        }
    }
}
