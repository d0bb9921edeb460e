//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors produced while building models, running the observer, or solving
/// synthesis problems.
///
/// The variants are grouped by the kind of failure so that callers (in
/// particular the CLI) can map them to distinct exit statuses:
/// assumption violations, infeasible synthesis, runtime inconsistency
/// events, and plain input errors.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Mismatched or invalid dimensions in user input.
    Dimension(String),
    /// Structurally invalid input (e.g. an interval with lower > upper).
    InvalidInput(String),
    /// A modelling assumption required by the design does not hold
    /// (e.g. `C2 * G2` rank deficient, or an unverified detectability
    /// certificate).
    AssumptionViolated(String),
    /// An intersection became empty at runtime: the observed data is
    /// outside the model class. Carries agent index, round, and coordinate.
    Inconsistency {
        agent: usize,
        round: usize,
        coordinate: usize,
    },
    /// A synthesis problem was proven infeasible.
    Infeasible(String),
    /// The numerical backend failed (stall, iteration limit, ...).
    Solver(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::AssumptionViolated(msg) => write!(f, "assumption violated: {msg}"),
            Error::Inconsistency {
                agent,
                round,
                coordinate,
            } => write!(
                f,
                "inconsistency event: empty intersection at agent {agent}, round {round}, coordinate {coordinate}"
            ),
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::Solver(msg) => write!(f, "solver failure: {msg}"),
        }
    }
}

#[cfg(test)]
impl std::error::Error for Error {}
