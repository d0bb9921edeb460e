//! Observer gain design and stability certification.
//!
//! Two synthesis paths are provided:
//!
//! * **Centralized**: a mixed-integer program over the switching matrix and
//!   weighted gain variables whose optimum certifies collective
//!   input-to-state stability with a noise gain `γ*` (solved by a
//!   structured branch-and-bound over neighbor-selection rows).
//! * **Distributed**: each agent solves small row-separable LPs to make as
//!   many of its error-matrix rows contractive as possible; a one-round
//!   exchange then verifies that every coordinate is covered by some
//!   neighbor (collective positive detectability), after which per-row
//!   error-minimizing LPs pick the final gains.

pub mod bounds;
pub mod central;
pub mod cpdn;
pub mod error_system;

pub use bounds::{error_bounds, ErrorBounds};
pub use central::{
    agent_comparison_blocks, centralized_milp, design_value_for_sigma, enumerate_sigmas,
    export_milp, fixed_sigma_lp, sigma_a_dense, MilpConfig,
};
pub use cpdn::{build_sigma_star, cpdn_verify, error_min, stabilize_lp, CpdnCertificate};
pub use error_system::{
    assemble_error_system, comparison_step, greedy_sigma, spectral_radius, ErrorSystem,
    SwitchingMatrix,
};

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::decouple::DecoupledAgentSystem;
use crate::interval::IntervalVector;
use crate::jss::{jss_decompose, VectorField};
use crate::observer::ObserverGains;
use crate::Result;

/// Gain-independent per-agent quantities used by every synthesis problem.
///
/// `a`/`b` and the tight bounds come from the JSS decomposition of the
/// agent-effective field `g = (I − G₂M₂C₂) f − ΦC₁ x`; the rest are the
/// decoupling matrices that enter `Ψ` and the measurement offset.
#[derive(Debug, Clone)]
pub struct AgentSynthesisData {
    pub n: usize,
    /// Measurement rows available for gain design (`l − r`).
    pub m: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f_rho_x: DMatrix<f64>,
    pub f_rho_w: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub phi_d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub g2m2: DMatrix<f64>,
    /// Noise interval widths `δⁱ_η = (δ_w, δⁱ_v, δⁱ_v)`.
    pub delta_eta: DVector<f64>,
    /// Disturbance widths alone (`δ_w`).
    pub delta_w: DVector<f64>,
    /// Measurement-noise widths alone (`δⁱ_v`).
    pub delta_v: DVector<f64>,
}

impl AgentSynthesisData {
    pub fn new(sys: &DecoupledAgentSystem, plant: &VectorField) -> Result<Self> {
        let proj = sys.projection();
        let shift = -(&sys.phi * &sys.c1);
        let g_field = plant.linear_map(&proj, Some(&shift))?;
        let jss = jss_decompose(&g_field, &[])?;
        let delta_w = plant.domain_w().width();
        let delta_v = sys.sensing.noise_box.width();
        let eta = IntervalVector::stack(&[
            plant.domain_w(),
            &sys.sensing.noise_box,
            &sys.sensing.noise_box,
        ]);
        Ok(Self {
            n: sys.state_dim(),
            m: sys.c2.nrows(),
            a: jss.a(),
            b: jss.b(),
            f_rho_x: jss.tight_bound_x().clone(),
            f_rho_w: jss.tight_bound_w().clone(),
            c2: sys.c2.clone(),
            phi_d1: &sys.phi * &sys.d1,
            d2: sys.d2.clone(),
            g2m2: &sys.g2 * &sys.m2,
            delta_eta: eta.width(),
            delta_w,
            delta_v,
        })
    }

    /// Disturbance dimension `n_w`.
    pub fn nw(&self) -> usize {
        self.b.ncols()
    }

    /// Measurement-noise dimension `n_v`.
    pub fn nv(&self) -> usize {
        self.delta_v.len()
    }
}

/// A full synthesis outcome, shared by both paths.
#[derive(Debug, Clone)]
pub struct SynthesisSolution {
    pub gains: Vec<ObserverGains>,
    /// Certified noise gain (centralized path only).
    pub gamma_star: Option<f64>,
    pub sigma_star: SwitchingMatrix,
    /// Spectral radius of `σ* 𝒜ₓ` under the final gains.
    pub rho_star: f64,
    /// Positivity certificate `p` (centralized path only).
    pub p: Option<DVector<f64>>,
    /// Branch-and-bound gap trajectory: `(nodes, best_bound, incumbent)`.
    pub gap_log: Vec<(usize, f64, f64)>,
}
