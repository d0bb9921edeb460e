//! Certified error bounds for a fixed selection.
//!
//! With `ρ̂ = ‖σ*𝒜ₓ‖∞ < 1` the comparison dynamics give the transient
//! envelope
//!
//! ```text
//! ‖e_x,k‖∞ ≤ ρ̂ᵏ ‖e_x,0‖∞ + (1 − ρ̂ᵏ)/(1 − ρ̂) · maxᵢ ‖πₓⁱ‖∞
//! ```
//!
//! and the input-estimation envelope
//! `‖e_d,k‖∞ ≤ maxᵢ‖𝒜_dⁱ‖∞ · ‖e_x,k‖∞ + maxᵢ‖π_dⁱ‖∞`. The spectral
//! radius `ρ* = ρ(σ*𝒜ₓ)` is reported alongside as the asymptotic decay
//! rate.

#[allow(unused_imports)]
use nalgebra::ComplexField;

use crate::synthesis::central::sigma_a_dense;
use crate::synthesis::error_system::{spectral_radius, ErrorSystem, SwitchingMatrix};
use crate::{Error, Result};

/// Certified envelopes of the stacked framer errors.
#[derive(Debug, Clone)]
pub struct ErrorBounds {
    /// Row-sum contraction factor `‖σ*𝒜ₓ‖∞`.
    pub rho_hat: f64,
    /// Spectral radius `ρ(σ*𝒜ₓ)`.
    pub rho_star: f64,
    /// `maxᵢ ‖πₓⁱ‖∞` — per-step state-error inflow.
    pub pi_x_max: f64,
    /// `maxᵢ ‖π_dⁱ‖∞` — per-step input-error inflow.
    pub pi_d_max: f64,
    /// `maxᵢ ‖𝒜_dⁱ‖∞` — sensitivity of the input error to the state error.
    pub a_d_norm: f64,
    /// Asymptotic state-error level (`∞` when `ρ̂ ≥ 1`).
    pub steady_state_x: f64,
    /// Asymptotic input-error level (`∞` when `ρ̂ ≥ 1`).
    pub steady_state_d: f64,
}

impl ErrorBounds {
    /// Transient state-error envelope after `k` steps from `‖e_x,0‖∞ = e0`.
    pub fn transient_x(&self, e0: f64, k: usize) -> f64 {
        let rk = self.rho_hat.powi(k as i32);
        if self.rho_hat < 1.0 {
            rk * e0 + (1.0 - rk) / (1.0 - self.rho_hat) * self.pi_x_max
        } else {
            rk * e0 + k as f64 * self.pi_x_max
        }
    }

    /// Transient input-error envelope after `k ≥ 1` steps.
    pub fn transient_d(&self, e0: f64, k: usize) -> f64 {
        self.a_d_norm * self.transient_x(e0, k) + self.pi_d_max
    }
}

fn row_sum(m: &nalgebra::DMatrix<f64>, s: usize) -> f64 {
    (0..m.ncols()).map(|t| m[(s, t)]).sum()
}

/// Computes the certified bounds of a fixed selection over an assembled
/// error system. `rho_hat ≥ 1` is reported, not rejected, so callers can
/// surface a failed certification.
pub fn error_bounds(sys: &ErrorSystem, sigma: &SwitchingMatrix) -> Result<ErrorBounds> {
    if sigma.agents() != sys.agents || sigma.coords() != sys.n {
        return Err(Error::Dimension(
            "switching matrix does not match the error system".into(),
        ));
    }
    let mut rho_hat = 0.0f64;
    for row in &sigma.row_choice {
        for (s, &j) in row.iter().enumerate() {
            rho_hat = rho_hat.max(row_sum(&sys.a_x[j], s));
        }
    }
    let rho_star = spectral_radius(&sigma_a_dense(&sys.a_x, sigma))?;

    let pi_x_max = sys.pi_x.iter().map(|p| p.amax()).fold(0.0f64, f64::max);
    let pi_d_max = sys.pi_d.iter().map(|p| p.amax()).fold(0.0f64, f64::max);
    let a_d_norm = sys
        .a_d
        .iter()
        .flat_map(|m| (0..m.nrows()).map(move |s| row_sum(m, s)))
        .fold(0.0f64, f64::max);

    let steady_state_x = if rho_hat < 1.0 {
        pi_x_max / (1.0 - rho_hat)
    } else {
        f64::INFINITY
    };
    let steady_state_d = if rho_hat < 1.0 {
        a_d_norm * steady_state_x + pi_d_max
    } else {
        f64::INFINITY
    };
    Ok(ErrorBounds {
        rho_hat,
        rho_star,
        pi_x_max,
        pi_d_max,
        a_d_norm,
        steady_state_x,
        steady_state_d,
    })
}
