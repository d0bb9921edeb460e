//! Switched comparison dynamics of the network error.
//!
//! For each agent the framer-width dynamics are dominated by a nonnegative
//! linear comparison system:
//!
//! ```text
//! e_x,k+1 ≤ σˣ(𝒜ₓ e_x,k + ℬₓ δ_η)        e_d,k ≤ σᵈ(𝒜_d e_x,k + ℬ_d δ_η)
//! ```
//!
//! with per-agent blocks `𝒜ₓⁱ = |Ãⁱ| + |Tⁱ| F̄ⁱ_ρ,x`, noise blocks built
//! from `|Ψⁱ|` / `|Λⁱ|`, and a switching matrix `σ` that models the
//! neighborhood min/max exchange: each row `(i, s)` of the network error
//! may be replaced by the corresponding row of any neighbor.

use alloc::vec::Vec;
#[allow(unused_imports)]
use nalgebra::ComplexField;
use nalgebra::{DMatrix, DVector};

use crate::decouple::EquivalentDynamics;
use crate::interval::SignSplitMatrix;
use crate::netsim::CommGraph;
use crate::observer::InputEstimationModel;
use crate::{Error, Result};

/// Per-agent and stacked matrices of the comparison dynamics.
#[derive(Debug, Clone)]
pub struct ErrorSystem {
    pub n: usize,
    pub agents: usize,
    /// `𝒜ₓⁱ` blocks (`n×n`, nonnegative).
    pub a_x: Vec<DMatrix<f64>>,
    /// `𝒜_dⁱ` blocks (`p×n`, nonnegative).
    pub a_d: Vec<DMatrix<f64>>,
    /// `ℬₓⁱ` blocks (`n×dim(ηⁱ)`, nonnegative).
    pub b_x: Vec<DMatrix<f64>>,
    /// `ℬ_dⁱ` blocks (`p×dim(ηⁱ)`, nonnegative).
    pub b_d: Vec<DMatrix<f64>>,
    /// Per-agent noise interval widths `δⁱ_η = (δ_w, δⁱ_v, δⁱ_v)`.
    pub delta_eta: Vec<DVector<f64>>,
    /// Per-agent additive error offsets `πⁱₓ = ℬₓⁱ δⁱ_η` plus the
    /// decomposition-gap noise term (see `assemble_error_system`).
    pub pi_x: Vec<DVector<f64>>,
    pub pi_d: Vec<DVector<f64>>,
}

impl ErrorSystem {
    /// Input dimension of agent blocks (`p` rows of `𝒜_d`).
    pub fn input_dim(&self) -> usize {
        self.a_d.first().map(|m| m.nrows()).unwrap_or(0)
    }

    /// Dense block-diagonal `𝒜ₓ` (`Nn×Nn`).
    pub fn a_x_dense(&self) -> DMatrix<f64> {
        block_diag(&self.a_x)
    }

    /// Dense block-diagonal `ℬₓ`; columns are the per-agent η stacks.
    pub fn b_x_dense(&self) -> DMatrix<f64> {
        block_diag(&self.b_x)
    }

    /// The stacked noise-width vector matching [`Self::b_x_dense`] columns.
    pub fn delta_eta_dense(&self) -> DVector<f64> {
        let total: usize = self.delta_eta.iter().map(|d| d.len()).sum();
        let mut out = DVector::zeros(total);
        let mut at = 0;
        for d in &self.delta_eta {
            out.rows_mut(at, d.len()).copy_from(d);
            at += d.len();
        }
        out
    }
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Builds the comparison-system blocks from the per-agent runtime algebra.
pub fn assemble_error_system(
    eqs: &[EquivalentDynamics],
    input_models: &[InputEstimationModel],
) -> Result<ErrorSystem> {
    if eqs.is_empty() || eqs.len() != input_models.len() {
        return Err(Error::Dimension(
            "one equivalent-dynamics and one input model per agent are required".into(),
        ));
    }
    let n = eqs[0].a_tilde.nrows();
    let nw = eqs[0].jss.field().noise_dim();
    let mut a_x = Vec::new();
    let mut a_d = Vec::new();
    let mut b_x = Vec::new();
    let mut b_d = Vec::new();
    let mut delta_eta = Vec::new();
    let mut pi_x = Vec::new();
    let mut pi_d = Vec::new();

    for (eq, im) in eqs.iter().zip(input_models) {
        if eq.a_tilde.nrows() != n {
            return Err(Error::Dimension("agents disagree on state dimension".into()));
        }
        let t_abs = SignSplitMatrix::new(&eq.gains.t).abs().clone();
        let f_rho_x = eq.jss.tight_bound_x();
        let f_rho_w = eq.jss.tight_bound_w();
        let ax = SignSplitMatrix::new(&eq.a_tilde).abs() + &t_abs * f_rho_x;

        let eta_dim = eq.psi.ncols();
        // ℬₓ = |Ψ| + [ |T| F̄_ρ,w , 0 , 0 ].
        let mut bx = SignSplitMatrix::new(&eq.psi).abs().clone();
        bx.view_mut((0, 0), (n, nw)).add_assign_from(&(&t_abs * f_rho_w));

        let ad = SignSplitMatrix::new(&im.jss.a()).abs() + im.jss.tight_bound_x();
        let p = im.input_dim();
        let mut bd = SignSplitMatrix::new(&im.lambda).abs().clone();
        bd.view_mut((0, 0), (p, nw)).add_assign_from(im.jss.tight_bound_w());

        let de = eq.eta_box.width();
        debug_assert_eq!(de.len(), eta_dim);
        pi_x.push(&bx * &de);
        pi_d.push(&bd * &de);
        a_x.push(ax);
        a_d.push(ad);
        b_x.push(bx);
        b_d.push(bd);
        delta_eta.push(de);
    }

    Ok(ErrorSystem {
        n,
        agents: eqs.len(),
        a_x,
        a_d,
        b_x,
        b_d,
        delta_eta,
        pi_x,
        pi_d,
    })
}

trait AddAssignView {
    fn add_assign_from(&mut self, other: &DMatrix<f64>);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_from(&mut self, other: &DMatrix<f64>) {
        debug_assert_eq!(self.shape(), other.shape());
        for j in 0..other.ncols() {
            for i in 0..other.nrows() {
                self[(i, j)] += other[(i, j)];
            }
        }
    }
}

/// A switching matrix over the stacked error vector: row `(i, s)` selects
/// agent `row_choice[i][s] ∈ 𝒩ᵢ` (same coordinate `s`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchingMatrix {
    pub row_choice: Vec<Vec<usize>>,
}

impl SwitchingMatrix {
    /// The identity selection (every agent keeps its own rows).
    pub fn identity(agents: usize, n: usize) -> Self {
        Self {
            row_choice: (0..agents).map(|i| alloc::vec![i; n]).collect(),
        }
    }

    pub fn agents(&self) -> usize {
        self.row_choice.len()
    }

    pub fn coords(&self) -> usize {
        self.row_choice.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Checks the choices against the communication graph.
    pub fn respects(&self, graph: &CommGraph) -> bool {
        self.row_choice
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&j| graph.is_neighbor(i, j)))
    }

    /// Applies the selection to a stacked vector (`Nn` entries).
    pub fn select(&self, stacked: &DVector<f64>) -> DVector<f64> {
        let n = self.coords();
        let mut out = DVector::zeros(self.agents() * n);
        for (i, row) in self.row_choice.iter().enumerate() {
            for (s, &j) in row.iter().enumerate() {
                out[i * n + s] = stacked[j * n + s];
            }
        }
        out
    }

    /// Dense binary expansion (`Nn×Nn`).
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.coords();
        let dim = self.agents() * n;
        let mut out = DMatrix::zeros(dim, dim);
        for (i, row) in self.row_choice.iter().enumerate() {
            for (s, &j) in row.iter().enumerate() {
                out[(i * n + s, j * n + s)] = 1.0;
            }
        }
        out
    }
}

/// One comparison step `σ(𝒜ₓ e + ℬₓ δ)` on the stacked error.
pub fn comparison_step(
    err: &DVector<f64>,
    sigma: &SwitchingMatrix,
    sys: &ErrorSystem,
    noise: &DVector<f64>,
) -> DVector<f64> {
    let n = sys.n;
    let mut pre = DVector::zeros(sys.agents * n);
    let mut noise_at = 0;
    for i in 0..sys.agents {
        let e_i = err.rows(i * n, n).into_owned();
        let eta_dim = sys.b_x[i].ncols();
        let d_i = noise.rows(noise_at, eta_dim).into_owned();
        noise_at += eta_dim;
        let v = &sys.a_x[i] * e_i + &sys.b_x[i] * d_i;
        pre.rows_mut(i * n, n).copy_from(&v);
    }
    sigma.select(&pre)
}

/// The greedy neighbor choice of the runtime: per `(i, s)` pick the
/// neighbor with the smallest error, ties broken by the lowest index.
pub fn greedy_sigma(errors: &[DVector<f64>], graph: &CommGraph) -> SwitchingMatrix {
    let n = errors.first().map(|e| e.len()).unwrap_or(0);
    let mut row_choice = Vec::with_capacity(errors.len());
    for i in 0..errors.len() {
        let mut row = Vec::with_capacity(n);
        for s in 0..n {
            let mut best = usize::MAX;
            let mut best_val = f64::INFINITY;
            for &j in graph.neighborhood(i) {
                if errors[j][s] < best_val {
                    best_val = errors[j][s];
                    best = j;
                }
            }
            row.push(best);
        }
        row_choice.push(row);
    }
    SwitchingMatrix { row_choice }
}

/// Spectral radius of a nonnegative matrix: shifted power iteration
/// (tolerance 1e-10) with a dense eigensolve fallback, cross-checked
/// against the `‖·‖∞` upper bound.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("spectral radius needs a square matrix".into()));
    }
    let dim = m.nrows();
    if dim == 0 {
        return Ok(0.0);
    }
    let inf_norm: f64 = (0..dim)
        .map(|i| (0..dim).map(|j| m[(i, j)].abs()).sum())
        .fold(0.0, f64::max);
    if inf_norm == 0.0 {
        return Ok(0.0);
    }

    // Power iteration on M + I (aperiodic shift); ρ(M) = λ − 1.
    let shifted = m + DMatrix::identity(dim, dim);
    let mut v = DVector::from_element(dim, 1.0);
    let mut lambda = 0.0f64;
    for _ in 0..20_000 {
        let w = &shifted * &v;
        let norm = w.amax();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm;
        let vn = w / norm;
        if (next - lambda).abs() <= 1e-10 * (1.0 + next.abs()) {
            let rho = next - 1.0;
            return Ok(rho.clamp(0.0, inf_norm));
        }
        lambda = next;
        v = vn;
    }

    // Fallback: dense eigensolve.
    let eig = m.clone().complex_eigenvalues();
    let rho = eig.iter().map(|c| c.norm_sqr().sqrt()).fold(0.0f64, f64::max);
    Ok(rho.min(inf_norm))
}
