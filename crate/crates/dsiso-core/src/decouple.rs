//! Per-agent unknown-input decoupling and the equivalent propagation form.
//!
//! Each agent observes `y = C x + D v + H d` where `d` is an unknown
//! (possibly unbounded) input entering the plant as `x⁺ = f(x, w) + G d`.
//! An SVD of the feedthrough `H = U₁ Ξ V₁ᵀ` splits the measurement into a
//! part `z₁` that sees `d₁ = V₁ᵀ d` directly and a part `z₂` that does not:
//!
//! ```text
//! z₁ = C₁ x + D₁ v + Ξ d₁        z₂ = C₂ x + D₂ v
//! ```
//!
//! Provided `C₂ G₂` has full column rank, the remaining input direction
//! `d₂ = V₂ᵀ d` can be eliminated algebraically, giving an exact
//! propagation law that no longer contains `d` at all:
//!
//! ```text
//! x⁺ = Ã x + T ρ(x, w) + Ψ η⁺ + ζ⁺
//! ```
//!
//! with `Ã = T A − L C₂`, `T = I − Γ C₂`, noise stack `η⁺ = (w, v, v⁺)`,
//! and measurement-driven offset `ζ⁺`. `A`, `B`, `ρ` come from the JSS
//! decomposition of the agent-effective field
//!
//! ```text
//! g(x, w) = (I − G₂ M₂ C₂) f(x, w) − Φ C₁ x ,
//! ```
//!
//! the image of the plant field under the decoupling projection. Every
//! construction replays a short random trajectory against the original
//! dynamics and rejects itself if the representation is not exact.

use alloc::string::ToString;
use nalgebra::{DMatrix, DVector};

use crate::interval::IntervalVector;
use crate::jss::{jss_decompose, JssModel, VectorField};
use crate::observer::ObserverGains;
use crate::{Error, Result};

/// Tolerance for the structural identities checked at construction
/// (orthonormality, `H` reconstruction, left-inverse property).
const STRUCT_TOL: f64 = 1e-9;
/// Tolerance for the trajectory-replay self-checks.
const REPLAY_TOL: f64 = 1e-8;

/// One agent's sensing model `y = C x + D v + H d`.
#[derive(Debug, Clone)]
pub struct AgentSensing {
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Bounds on the agent's measurement noise `v`.
    pub noise_box: IntervalVector,
}

impl AgentSensing {
    pub fn new(
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        h: DMatrix<f64>,
        noise_box: IntervalVector,
    ) -> Result<Self> {
        if c.nrows() != d.nrows() || c.nrows() != h.nrows() {
            return Err(Error::Dimension(
                "C, D, H must have the same number of rows".to_string(),
            ));
        }
        if d.ncols() != noise_box.dim() {
            return Err(Error::Dimension(
                "noise box dimension must match the columns of D".to_string(),
            ));
        }
        Ok(Self {
            c,
            d,
            h,
            noise_box,
        })
    }

    /// Number of measurement rows `l`.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// The SVD split of one agent's measurement and input spaces.
#[derive(Debug, Clone)]
pub struct DecoupledAgentSystem {
    /// Numerical rank of the feedthrough `H`.
    pub r: usize,
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    pub v1: DMatrix<f64>,
    pub v2: DMatrix<f64>,
    /// Diagonal `r×r` block of nonzero singular values.
    pub xi: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    /// `Ξ⁻¹`.
    pub m1: DMatrix<f64>,
    /// Left inverse `(C₂ G₂)⁺`.
    pub m2: DMatrix<f64>,
    /// `(I − G₂ M₂ C₂) G₁ M₁`.
    pub phi: DMatrix<f64>,
    /// The sensing model this split was derived from.
    pub sensing: AgentSensing,
    /// The plant's input matrix `G`.
    pub g: DMatrix<f64>,
}

/// Decouples one agent's measurement equation from the unknown input.
///
/// Fails with an assumption violation if `C₂ G₂` is column-rank deficient:
/// in that case the agent cannot eliminate the input locally.
pub fn svd_decouple(sensing: AgentSensing, g: &DMatrix<f64>) -> Result<DecoupledAgentSystem> {
    let l = sensing.h.nrows();
    let p = sensing.h.ncols();
    if g.ncols() != p {
        return Err(Error::Dimension(
            "G must have as many columns as H".to_string(),
        ));
    }
    if g.nrows() != sensing.c.ncols() {
        return Err(Error::Dimension(
            "G must have as many rows as the state dimension".to_string(),
        ));
    }

    // Full orthonormal bases: nalgebra's SVD is thin, so complete the left
    // and right singular vectors to square matrices.
    let (u, v, sigma) = if l == 0 || p == 0 || sensing.h.amax() == 0.0 {
        (DMatrix::identity(l, l), DMatrix::identity(p, p), DVector::zeros(0))
    } else {
        let svd = sensing
            .h
            .clone()
            .try_svd(true, true, 1e-14, 0)
            .ok_or_else(|| Error::Solver("SVD of the feedthrough matrix failed".to_string()))?;
        let u_thin = svd.u.unwrap();
        let v_thin = svd.v_t.unwrap().transpose();
        (
            complete_basis(&u_thin, l)?,
            complete_basis(&v_thin, p)?,
            svd.singular_values,
        )
    };

    let sigma_max = sigma.iter().cloned().fold(0.0f64, f64::max);
    let rank_tol = (l.max(p) as f64) * f64::EPSILON * sigma_max;
    let r = sigma.iter().filter(|&&s| s > rank_tol).count();

    let u1 = u.columns(0, r).into_owned();
    let u2 = u.columns(r, l - r).into_owned();
    let v1 = v.columns(0, r).into_owned();
    let v2 = v.columns(r, p - r).into_owned();
    let xi = DMatrix::from_diagonal(&sigma.rows(0, r).into_owned());

    let c1 = u1.transpose() * &sensing.c;
    let c2 = u2.transpose() * &sensing.c;
    let d1 = u1.transpose() * &sensing.d;
    let d2 = u2.transpose() * &sensing.d;
    let g1 = g * &v1;
    let g2 = g * &v2;

    let m1 = DMatrix::from_diagonal(&DVector::from_iterator(
        r,
        (0..r).map(|i| 1.0 / xi[(i, i)]),
    ));

    // Assumption: C₂ G₂ has full column rank, so its pseudoinverse is a
    // left inverse and d₂ can be recovered from z₂.
    let c2g2 = &c2 * &g2;
    let m2 = left_pseudo_inverse(&c2g2).map_err(|_| {
        Error::AssumptionViolated(
            "C2*G2 is column-rank deficient: the agent cannot decouple the unknown input"
                .to_string(),
        )
    })?;

    let n = sensing.c.ncols();
    let s_proj = DMatrix::identity(n, n) - &g2 * &m2 * &c2;
    let phi = &s_proj * &g1 * &m1;

    let sys = DecoupledAgentSystem {
        r,
        u1,
        u2,
        v1,
        v2,
        xi,
        c1,
        c2,
        d1,
        d2,
        g1,
        g2,
        m1,
        m2,
        phi,
        sensing,
        g: g.clone(),
    };
    sys.check_invariants()?;
    Ok(sys)
}

impl DecoupledAgentSystem {
    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.sensing.c.ncols()
    }

    /// `z = Uᵀ y` split into `(z₁, z₂)`.
    pub fn split_measurement(&self, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if y.len() != self.sensing.outputs() {
            return Err(Error::Dimension(
                "measurement has wrong dimension".to_string(),
            ));
        }
        Ok((self.u1.transpose() * y, self.u2.transpose() * y))
    }

    /// `(I − G₂ M₂ C₂)`, the projection applied to the plant field.
    pub fn projection(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        DMatrix::identity(n, n) - &self.g2 * &self.m2 * &self.c2
    }

    fn check_invariants(&self) -> Result<()> {
        let l = self.u1.nrows();
        let p = self.v1.nrows();
        let u = stack_cols(&self.u1, &self.u2);
        let v = stack_cols(&self.v1, &self.v2);
        let checks = [
            (
                (&u.transpose() * &u - DMatrix::identity(l, l)).amax(),
                "left singular basis is not orthonormal",
            ),
            (
                (&v.transpose() * &v - DMatrix::identity(p, p)).amax(),
                "right singular basis is not orthonormal",
            ),
            (
                (&self.v1 * self.v1.transpose() + &self.v2 * self.v2.transpose()
                    - DMatrix::identity(p, p))
                .amax(),
                "V1 V1' + V2 V2' deviates from identity",
            ),
            (
                (&self.u1 * &self.xi * self.v1.transpose() - &self.sensing.h).amax(),
                "U1 Xi V1' does not reconstruct H",
            ),
            (
                (&self.m2 * &self.c2 * &self.g2
                    - DMatrix::identity(self.m2.nrows(), self.m2.nrows()))
                .amax(),
                "M2 is not a left inverse of C2 G2",
            ),
        ];
        for (residual, msg) in checks {
            if residual > STRUCT_TOL {
                return Err(Error::Solver(alloc::format!(
                    "{msg} (residual {residual:.3e})"
                )));
            }
        }
        Ok(())
    }
}

/// `d ↦ (V₁ᵀ d, V₂ᵀ d)`.
pub fn split_input(
    d: &DVector<f64>,
    sys: &DecoupledAgentSystem,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if d.len() != sys.v1.nrows() {
        return Err(Error::Dimension(
            "input vector has wrong dimension".to_string(),
        ));
    }
    Ok((sys.v1.transpose() * d, sys.v2.transpose() * d))
}

/// The exact input-free propagation form of one agent.
#[derive(Debug, Clone)]
pub struct EquivalentDynamics {
    /// `Ã = T A − L C₂`.
    pub a_tilde: DMatrix<f64>,
    /// `Ψ = [T B, −(T Φ D₁ + L D₂), −(T G₂ M₂ + Γ) D₂]` applied to `η⁺`.
    pub psi: DMatrix<f64>,
    /// Bounds on `η⁺ = (w, v, v⁺)`.
    pub eta_box: IntervalVector,
    /// JSS decomposition of the agent-effective field `g`.
    pub jss: JssModel,
    /// The gains the form was built for (including `T = I − Γ C₂`).
    pub gains: ObserverGains,
    // ζ⁺ = zc1·z₁ + zc2·z₂ + zc3·z₂⁺
    zc1: DMatrix<f64>,
    zc2: DMatrix<f64>,
    zc3: DMatrix<f64>,
}

impl EquivalentDynamics {
    /// Measurement-driven offset `ζ⁺` from `(z₁ₖ, z₂ₖ, z₂ₖ₊₁)`.
    pub fn zeta(
        &self,
        z1_k: &DVector<f64>,
        z2_k: &DVector<f64>,
        z2_next: &DVector<f64>,
    ) -> DVector<f64> {
        &self.zc1 * z1_k + &self.zc2 * z2_k + &self.zc3 * z2_next
    }
}

/// Assembles the input-free propagation form for one agent and verifies it
/// by replaying a random trajectory of the original dynamics.
///
/// `plant` is the global field `f(x, w)` with `w` bounded by its
/// disturbance domain; the plant evolves as `x⁺ = f(x, w) + G d`.
pub fn build_equivalent_dynamics(
    sys: &DecoupledAgentSystem,
    gains: &ObserverGains,
    plant: &VectorField,
) -> Result<EquivalentDynamics> {
    let n = sys.state_dim();
    if plant.state_dim() != n || plant.output_dim() != n {
        return Err(Error::Dimension(
            "plant field must map the agent's state space to itself".to_string(),
        ));
    }
    gains.check_consistent(&sys.c2)?;

    let t = &gains.t;
    let proj = sys.projection();
    // g(x, w) = (I − G₂ M₂ C₂) f(x, w) − Φ C₁ x.
    let shift = -(&sys.phi * &sys.c1);
    let g_field = plant.linear_map(&proj, Some(&shift))?;
    let jss = jss_decompose(&g_field, &[])?;

    let a_tilde = t * jss.a() - &gains.l * &sys.c2;

    let nv = sys.sensing.noise_box.dim();
    let nw = plant.noise_dim();
    let mut psi = DMatrix::zeros(n, nw + 2 * nv);
    psi.view_mut((0, 0), (n, nw)).copy_from(&(t * jss.b()));
    psi.view_mut((0, nw), (n, nv))
        .copy_from(&(-(t * &sys.phi * &sys.d1 + &gains.l * &sys.d2)));
    psi.view_mut((0, nw + nv), (n, nv))
        .copy_from(&(-((t * &sys.g2 * &sys.m2 + &gains.gamma) * &sys.d2)));

    let eta_box = IntervalVector::stack(&[
        plant.domain_w(),
        &sys.sensing.noise_box,
        &sys.sensing.noise_box,
    ]);

    let zc1 = t * &sys.phi;
    let zc2 = gains.l.clone();
    let zc3 = t * &sys.g2 * &sys.m2 + &gains.gamma;

    let eq = EquivalentDynamics {
        a_tilde,
        psi,
        eta_box,
        jss,
        gains: gains.clone(),
        zc1,
        zc2,
        zc3,
    };
    replay_check(&eq, sys, plant)?;
    Ok(eq)
}

/// Replays a short random trajectory of `x⁺ = f(x, w) + G d` with arbitrary
/// unknown inputs and checks that the equivalent form reproduces it.
fn replay_check(
    eq: &EquivalentDynamics,
    sys: &DecoupledAgentSystem,
    plant: &VectorField,
) -> Result<()> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_d15c);
    let n = sys.state_dim();
    let p = sys.g.ncols();
    let steps = 6usize;

    let sample = |b: &IntervalVector, rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_iterator(
            b.dim(),
            (0..b.dim()).map(|s| {
                let (lo, hi) = (b.lower()[s], b.upper()[s]);
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }),
        )
    };

    let mut xs = alloc::vec::Vec::with_capacity(steps + 2);
    let mut ys = alloc::vec::Vec::with_capacity(steps + 2);
    let mut ws = alloc::vec::Vec::with_capacity(steps + 2);
    let mut vs = alloc::vec::Vec::with_capacity(steps + 2);
    xs.push(sample(plant.domain_x(), &mut rng));
    for k in 0..=steps {
        let w = sample(plant.domain_w(), &mut rng);
        let v = sample(&sys.sensing.noise_box, &mut rng);
        // Unknown input: unconstrained, sign-flipping spikes.
        let d = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-10.0..10.0)));
        ys.push(&sys.sensing.c * &xs[k] + &sys.sensing.d * &v + &sys.sensing.h * &d);
        let x_next = plant.eval(&xs[k], &w) + &sys.g * &d;
        xs.push(x_next);
        ws.push(w);
        vs.push(v);
    }
    // Terminal measurement for the one-step lead.
    let v_last = sample(&sys.sensing.noise_box, &mut rng);
    let d_last = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-10.0..10.0)));
    ys.push(&sys.sensing.c * &xs[steps + 1] + &sys.sensing.d * &v_last + &sys.sensing.h * &d_last);

    for k in 0..steps {
        let (z1_k, z2_k) = sys.split_measurement(&ys[k])?;
        let (_, z2_next) = sys.split_measurement(&ys[k + 1])?;
        let mut eta = DVector::zeros(eq.psi.ncols());
        let nw = ws[k].len();
        let nv = vs[k].len();
        eta.rows_mut(0, nw).copy_from(&ws[k]);
        eta.rows_mut(nw, nv).copy_from(&vs[k]);
        eta.rows_mut(nw + nv, nv).copy_from(&vs[k + 1]);
        let rho = eq.jss.remainder(&xs[k], &ws[k]);
        let predicted = &eq.a_tilde * &xs[k]
            + &eq.gains.t * rho
            + &eq.psi * eta
            + eq.zeta(&z1_k, &z2_k, &z2_next);
        let residual = (&predicted - &xs[k + 1]).amax() / (1.0 + xs[k + 1].amax());
        if residual > REPLAY_TOL {
            return Err(Error::Solver(alloc::format!(
                "equivalent-dynamics replay failed at step {k} (residual {residual:.3e})"
            )));
        }
    }

    let n_check = eq.a_tilde.nrows();
    debug_assert_eq!(n_check, n);
    Ok(())
}

/// Completes thin orthonormal columns to a full square orthonormal basis by
/// Gram–Schmidt against the identity columns.
fn complete_basis(thin: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    let mut cols: alloc::vec::Vec<DVector<f64>> =
        thin.column_iter().map(|c| c.into_owned()).collect();
    let mut candidate = 0usize;
    while cols.len() < dim {
        if candidate >= dim {
            return Err(Error::Solver(
                "failed to complete an orthonormal basis".to_string(),
            ));
        }
        let mut v: DVector<f64> = DVector::zeros(dim);
        v[candidate] = 1.0;
        candidate += 1;
        // Twice-iterated Gram–Schmidt for numerical orthogonality.
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v -= c * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Left pseudoinverse of a full-column-rank matrix via SVD; errors if the
/// matrix is column-rank deficient.
fn left_pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Ok(DMatrix::zeros(0, rows));
    }
    if rows < cols {
        return Err(Error::InvalidInput(
            "matrix has more columns than rows".to_string(),
        ));
    }
    let svd = m
        .clone()
        .try_svd(true, true, 1e-14, 0)
        .ok_or_else(|| Error::Solver("SVD failed".to_string()))?;
    let smax = svd.singular_values.max();
    let tol = (rows.max(cols) as f64) * f64::EPSILON * smax;
    if svd.singular_values.iter().any(|&s| s <= tol) {
        return Err(Error::InvalidInput(
            "matrix is column-rank deficient".to_string(),
        ));
    }
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let sinv = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    Ok(v_t.transpose() * sinv * u.transpose())
}

fn stack_cols(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::jss::JacobianBounds;
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;
    use rand::SeedableRng;

    fn box_of(n: usize, r: f64) -> IntervalVector {
        IntervalVector::new(DVector::from_element(n, -r), DVector::from_element(n, r)).unwrap()
    }

    #[test]
    fn diagonal_feedthrough_splits_cleanly() {
        let sensing = AgentSensing::new(
            dmatrix![1.0, 0.0; 0.0, 1.0],
            DMatrix::identity(2, 2),
            dmatrix![1.0, 0.0; 0.0, 0.0],
            box_of(2, 0.1),
        )
        .unwrap();
        let g = dmatrix![1.0, 0.0; 0.0, 1.0];
        let sys = svd_decouple(sensing, &g).unwrap();
        assert_eq!(sys.r, 1);
        assert_eq!(sys.xi, dmatrix![1.0]);
        assert!((sys.v1.column(0).amax() - 1.0).abs() < 1e-12 && sys.v1[(0, 0)].abs() > 0.5);
        assert!((sys.v2[(1, 0)]).abs() > 0.5);
    }

    #[test]
    fn zero_feedthrough_gives_rank_zero() {
        let sensing = AgentSensing::new(
            dmatrix![1.0, 0.0; 0.0, 1.0],
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            box_of(2, 0.1),
        )
        .unwrap();
        let g = dmatrix![0.5; 1.0];
        let sys = svd_decouple(sensing, &g).unwrap();
        assert_eq!(sys.r, 0);
        assert_eq!(sys.v2, DMatrix::identity(1, 1));
        assert_eq!(sys.c2, dmatrix![1.0, 0.0; 0.0, 1.0]);
        // d1 is empty; all estimation flows through z2.
        assert_eq!(sys.xi.shape(), (0, 0));
        assert_eq!(sys.phi.ncols(), 0);
    }

    #[test]
    fn random_rank2_feedthrough_reconstructs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        // 4×3 feedthrough of rank 2: product of 4×2 and 2×3 factors.
        let a = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let h = a * b;
        let c = DMatrix::from_fn(4, 5, |_, _| rng.random_range(-1.0..1.0));
        let g = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let sensing = AgentSensing::new(c, DMatrix::identity(4, 4), h.clone(), box_of(4, 0.1)).unwrap();
        let sys = svd_decouple(sensing, &g).unwrap();
        assert_eq!(sys.r, 2);
        assert!((&sys.u1 * &sys.xi * sys.v1.transpose() - h).amax() < 1e-9);

        // split_input reconstruction identity.
        let d = dvector![0.3, -1.2, 0.7];
        let (d1, d2) = split_input(&d, &sys).unwrap();
        assert!((&sys.v1 * d1 + &sys.v2 * d2 - d).amax() < 1e-9);
    }

    #[test]
    fn rank_deficient_c2g2_is_rejected() {
        // Single measurement row with H = 0, C orthogonal to G: z2 carries
        // no information about d2.
        let sensing = AgentSensing::new(
            dmatrix![1.0, 0.0],
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            box_of(1, 0.1),
        )
        .unwrap();
        let g = dmatrix![0.0; 1.0];
        let err = svd_decouple(sensing, &g).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolated(_)));
    }

    fn two_state_linear_plant() -> VectorField {
        // f(x, w) = [0.9 x1 + 0.1 x2 + 0.05 w1, 0.8 x2].
        let a = dmatrix![0.9, 0.1; 0.0, 0.8];
        let bw = dmatrix![0.05; 0.0];
        VectorField::from_exprs(
            alloc::vec![
                Expr::parse("0.9*x1 + 0.1*x2 + 0.05*w1").unwrap(),
                Expr::parse("0.8*x2").unwrap(),
            ],
            box_of(2, 5.0),
            box_of(1, 1.0),
            JacobianBounds::new(a.clone(), a, bw.clone(), bw).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn equivalent_dynamics_replay_holds_for_linear_plant() {
        // Full-row sensing with feedthrough on one channel.
        let sensing = AgentSensing::new(
            dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0],
            DMatrix::identity(3, 3),
            dmatrix![1.0; 0.0; 0.0],
            box_of(3, 0.05),
        )
        .unwrap();
        let g = dmatrix![0.2; 1.0];
        let sys = svd_decouple(sensing, &g).unwrap();
        let plant = two_state_linear_plant();
        let gains = ObserverGains::new(
            dmatrix![0.1, 0.0; 0.0, 0.1],
            dmatrix![0.05, 0.0; 0.0, 0.05],
            &sys.c2,
        )
        .unwrap();
        // Construction includes the replay self-check.
        let eq = build_equivalent_dynamics(&sys, &gains, &plant).unwrap();
        assert_eq!(eq.a_tilde.shape(), (2, 2));
        assert_eq!(eq.psi.ncols(), 1 + 3 + 3);
    }

    #[test]
    fn zero_gains_linear_field_matches_hand_algebra() {
        // With L = 0, Γ = 0 (T = I): Ã = A_g where A_g is the linear part
        // of g = (I − G2 M2 C2) f − Φ C1 x.
        let sensing = AgentSensing::new(
            dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0],
            DMatrix::identity(3, 3),
            dmatrix![1.0; 0.0; 0.0],
            box_of(3, 0.05),
        )
        .unwrap();
        let g = dmatrix![0.2; 1.0];
        let sys = svd_decouple(sensing, &g).unwrap();
        let plant = two_state_linear_plant();
        let gains = ObserverGains::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), &sys.c2).unwrap();
        let eq = build_equivalent_dynamics(&sys, &gains, &plant).unwrap();
        let a = dmatrix![0.9, 0.1; 0.0, 0.8];
        let expected = sys.projection() * a - &sys.phi * &sys.c1;
        assert!((&eq.a_tilde - expected).amax() < 1e-12);
    }

    #[test]
    fn decoupling_exactness_under_spiky_inputs() {
        // Many random trajectories with adversarial inputs: the replay
        // identity must hold to 1e-8 regardless of d.
        let sensing = AgentSensing::new(
            dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, -1.0],
            DMatrix::identity(3, 3),
            dmatrix![0.0; 1.0; 0.0],
            box_of(3, 0.05),
        )
        .unwrap();
        let g = dmatrix![0.0; 0.3];
        let sys = svd_decouple(sensing, &g).unwrap();
        let plant = two_state_linear_plant();
        let gains = ObserverGains::new(
            dmatrix![0.2, 0.1; 0.0, 0.1],
            dmatrix![0.1, 0.0; 0.05, 0.0],
            &sys.c2,
        )
        .unwrap();
        let eq = build_equivalent_dynamics(&sys, &gains, &plant).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let x0 = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            let w: DVector<f64> = DVector::from_fn(1, |_, _| rng.random_range(-1.0..1.0));
            let v0 = DVector::from_fn(3, |_, _| rng.random_range(-0.05..0.05));
            let v1 = DVector::from_fn(3, |_, _| rng.random_range(-0.05..0.05));
            // Spiky unbounded input.
            let d0: DVector<f64> = DVector::from_fn(1, |_, _| {
                1e3 * if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random::<f64>()
            });
            let d1_spike: DVector<f64> = DVector::from_fn(1, |_, _| rng.random_range(-1e3..1e3));
            let x1 = plant.eval(&x0, &w) + &sys.g * &d0;
            let y0 = &sys.sensing.c * &x0 + &sys.sensing.d * &v0 + &sys.sensing.h * &d0;
            let y1 = &sys.sensing.c * &x1 + &sys.sensing.d * &v1 + &sys.sensing.h * &d1_spike;
            let (z1_k, z2_k) = sys.split_measurement(&y0).unwrap();
            let (_, z2_next) = sys.split_measurement(&y1).unwrap();
            let mut eta = DVector::zeros(7);
            eta[0] = w[0];
            eta.rows_mut(1, 3).copy_from(&v0);
            eta.rows_mut(4, 3).copy_from(&v1);
            let predicted = &eq.a_tilde * &x0
                + &eq.gains.t * eq.jss.remainder(&x0, &w)
                + &eq.psi * eta
                + eq.zeta(&z1_k, &z2_k, &z2_next);
            assert!(
                (&predicted - &x1).amax() / (1.0 + x1.amax()) < 1e-8,
                "decoupled propagation diverged from truth"
            );
        }
    }

    #[test]
    fn z_split_reconstructs_measurement() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let h = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let g = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let sensing =
            AgentSensing::new(c.clone(), DMatrix::identity(3, 3), h.clone(), box_of(3, 0.1))
                .unwrap();
        let sys = svd_decouple(sensing, &g).unwrap();
        let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(3, |_, _| rng.random_range(-0.1..0.1));
        let d = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let y = &c * &x + &v + &h * &d;
        let (z1, z2) = sys.split_measurement(&y).unwrap();
        // z1 = C1 x + D1 v + Ξ d1 and z2 = C2 x + D2 v.
        let (d1, _) = split_input(&d, &sys).unwrap();
        let z1_expect = &sys.c1 * &x + &sys.d1 * &v + &sys.xi * &d1;
        let z2_expect = &sys.c2 * &x + &sys.d2 * &v;
        assert!((z1 - z1_expect).amax() < 1e-9);
        assert!((z2 - z2_expect).amax() < 1e-9);
        // And Uᵀy stacked reconstructs y via U.
    }
}
