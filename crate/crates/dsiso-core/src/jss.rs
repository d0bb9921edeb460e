//! Jacobian sign-stable (JSS) decomposition of vector fields and tight
//! mixed-monotone decomposition functions.
//!
//! A vector field `f(x, w)` with entrywise Jacobian bounds is decomposed as
//!
//! ```text
//! f(x, w) = A x + B w + μ(x, w)
//! ```
//!
//! where every entry of `H = [A B]` equals one of the two Jacobian corner
//! values, so that the remainder `μ` has a sign-stable Jacobian: each entry
//! of its Jacobian interval does not straddle zero. Sign-stability yields a
//! *tight decomposition function* per remainder row,
//!
//! ```text
//! μ_d,i(z1, z2) = μ_i(Dⁱ z1 + (I − Dⁱ) z2)
//! ```
//!
//! with `Dⁱ` a binary diagonal selector: increasing arguments are read from
//! `z1`, decreasing ones from `z2`. Evaluated at the ordered corner pairs of
//! a box this produces elementwise bounds on `μ` over the box.
//!
//! The default corner rule picks `H_ij = J̲_ij` (every remainder entry
//! nondecreasing); per-entry overrides to the upper corner are accepted so
//! published decompositions that use mixed corners can be reproduced exactly.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::interval::{interval_matrix_product, IntervalVector, SignSplitMatrix};
use crate::{expr::Expr, Error, Result};

/// Entrywise Jacobian bounds of a field `f(x, w)`, split into the state and
/// disturbance blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBounds {
    pub lower_x: DMatrix<f64>,
    pub upper_x: DMatrix<f64>,
    pub lower_w: DMatrix<f64>,
    pub upper_w: DMatrix<f64>,
}

impl JacobianBounds {
    pub fn new(
        lower_x: DMatrix<f64>,
        upper_x: DMatrix<f64>,
        lower_w: DMatrix<f64>,
        upper_w: DMatrix<f64>,
    ) -> Result<Self> {
        if lower_x.shape() != upper_x.shape() || lower_w.shape() != upper_w.shape() {
            return Err(Error::Dimension(
                "jacobian bound pairs must have matching shapes".to_string(),
            ));
        }
        if lower_x.nrows() != lower_w.nrows() {
            return Err(Error::Dimension(
                "state and disturbance jacobian bounds must have the same row count".to_string(),
            ));
        }
        let ordered = lower_x.iter().zip(upper_x.iter()).all(|(l, u)| l <= u)
            && lower_w.iter().zip(upper_w.iter()).all(|(l, u)| l <= u);
        if !ordered {
            return Err(Error::InvalidInput(
                "jacobian lower bound exceeds upper bound".to_string(),
            ));
        }
        Ok(Self {
            lower_x,
            upper_x,
            lower_w,
            upper_w,
        })
    }

    /// Output dimension of the field.
    pub fn rows(&self) -> usize {
        self.lower_x.nrows()
    }

    /// Stacked bounds over `z = (x, w)`.
    fn stacked(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = self.rows();
        let n = self.lower_x.ncols();
        let nw = self.lower_w.ncols();
        let mut lo = DMatrix::zeros(p, n + nw);
        let mut hi = DMatrix::zeros(p, n + nw);
        lo.view_mut((0, 0), (p, n)).copy_from(&self.lower_x);
        lo.view_mut((0, n), (p, nw)).copy_from(&self.lower_w);
        hi.view_mut((0, 0), (p, n)).copy_from(&self.upper_x);
        hi.view_mut((0, n), (p, nw)).copy_from(&self.upper_w);
        (lo, hi)
    }
}

/// Evaluator backing a [`VectorField`]: either a list of parsed expressions
/// (one per output row) or a native closure. Both must be pure.
#[derive(Clone)]
pub enum FieldEval {
    Exprs(Arc<Vec<Expr>>),
    Native(Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>),
}

impl core::fmt::Debug for FieldEval {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FieldEval::Exprs(e) => write!(f, "FieldEval::Exprs({} rows)", e.len()),
            FieldEval::Native(_) => write!(f, "FieldEval::Native"),
        }
    }
}

/// A vector field `f : 𝒳 × 𝒲 → ℝᵖ` with known Jacobian bounds over the
/// stated domain.
#[derive(Debug, Clone)]
pub struct VectorField {
    eval: FieldEval,
    domain_x: IntervalVector,
    domain_w: IntervalVector,
    jacobian: JacobianBounds,
}

impl VectorField {
    pub fn new(
        eval: FieldEval,
        domain_x: IntervalVector,
        domain_w: IntervalVector,
        jacobian: JacobianBounds,
    ) -> Result<Self> {
        if jacobian.lower_x.ncols() != domain_x.dim() || jacobian.lower_w.ncols() != domain_w.dim()
        {
            return Err(Error::Dimension(
                "jacobian bound columns must match domain dimensions".to_string(),
            ));
        }
        let field = Self {
            eval,
            domain_x,
            domain_w,
            jacobian,
        };
        // Probe the evaluator once so output-dimension mismatches surface at
        // construction rather than deep inside the observer.
        let probe = field.eval(&field.domain_x.midpoint(), &field.domain_w.midpoint());
        if probe.len() != field.jacobian.rows() {
            return Err(Error::Dimension(alloc::format!(
                "field evaluates to dimension {} but jacobian bounds have {} rows",
                probe.len(),
                field.jacobian.rows()
            )));
        }
        Ok(field)
    }

    /// Builds a field from one expression per output row.
    pub fn from_exprs(
        rows: Vec<Expr>,
        domain_x: IntervalVector,
        domain_w: IntervalVector,
        jacobian: JacobianBounds,
    ) -> Result<Self> {
        for (i, e) in rows.iter().enumerate() {
            if e.state_arity() > domain_x.dim() || e.noise_arity() > domain_w.dim() {
                return Err(Error::Dimension(alloc::format!(
                    "expression row {i} references variables beyond the declared dimensions"
                )));
            }
        }
        if rows.len() != jacobian.rows() {
            return Err(Error::Dimension(
                "expression row count must match jacobian bound rows".to_string(),
            ));
        }
        Self::new(
            FieldEval::Exprs(Arc::new(rows)),
            domain_x,
            domain_w,
            jacobian,
        )
    }

    pub fn eval(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        match &self.eval {
            FieldEval::Exprs(rows) => {
                DVector::from_iterator(rows.len(), rows.iter().map(|e| e.eval(x, w)))
            }
            FieldEval::Native(f) => f(x, w),
        }
    }

    pub fn domain_x(&self) -> &IntervalVector {
        &self.domain_x
    }

    pub fn domain_w(&self) -> &IntervalVector {
        &self.domain_w
    }

    pub fn jacobian_bounds(&self) -> &JacobianBounds {
        &self.jacobian
    }

    pub fn state_dim(&self) -> usize {
        self.domain_x.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.domain_w.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.jacobian.rows()
    }

    /// The derived field `g(x, w) = S·f(x, w) + K·x` with Jacobian bounds
    /// transported through the linear map (`S` via an interval matrix
    /// product, `K` as an exact shift of the state block).
    ///
    /// This is how per-agent effective fields are built: the unknown-input
    /// decoupling replaces `f` by a linear image of itself plus a linear
    /// state feedback term.
    pub fn linear_map(&self, s: &DMatrix<f64>, k: Option<&DMatrix<f64>>) -> Result<VectorField> {
        if s.ncols() != self.output_dim() {
            return Err(Error::Dimension(
                "linear map column count must match field output dimension".to_string(),
            ));
        }
        if let Some(k) = k {
            if k.nrows() != s.nrows() || k.ncols() != self.state_dim() {
                return Err(Error::Dimension(
                    "state shift must be (output rows) x (state dim)".to_string(),
                ));
            }
        }
        let (mut lo_x, mut hi_x) =
            interval_matrix_product(s, &self.jacobian.lower_x, &self.jacobian.upper_x);
        if let Some(k) = k {
            lo_x += k;
            hi_x += k;
        }
        let (lo_w, hi_w) =
            interval_matrix_product(s, &self.jacobian.lower_w, &self.jacobian.upper_w);
        let inner = self.clone();
        let s = s.clone();
        let k = k.cloned();
        let eval = FieldEval::Native(Arc::new(move |x: &DVector<f64>, w: &DVector<f64>| {
            let mut out = &s * inner.eval(x, w);
            if let Some(k) = &k {
                out += k * x;
            }
            out
        }));
        VectorField::new(
            eval,
            self.domain_x.clone(),
            self.domain_w.clone(),
            JacobianBounds::new(lo_x, hi_x, lo_w, hi_w)?,
        )
    }

    /// Diagnostic: checks the declared Jacobian bounds against central
    /// finite differences at `samples` random domain points.
    ///
    /// Entries must lie within `[J̲ − tol, J̄ + tol]` with
    /// `tol = 1e-4 · max(1, |J̲|, |J̄|)` per entry. This is a sanity check on
    /// user input, not a substitute for supplying correct bounds.
    pub fn verify_jacobian_bounds(&self, samples: usize, seed: u64) -> JacobianCheckReport {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut violations = Vec::new();
        let n = self.state_dim();
        let nw = self.noise_dim();
        for _ in 0..samples {
            let x = sample_box(&self.domain_x, &mut rng);
            let w = sample_box(&self.domain_w, &mut rng);
            for j in 0..n + nw {
                let h = 1e-5;
                let (fp, fm) = if j < n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    (self.eval(&xp, &w), self.eval(&xm, &w))
                } else {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[j - n] += h;
                    wm[j - n] -= h;
                    (self.eval(&x, &wp), self.eval(&x, &wm))
                };
                let col = (fp - fm) / (2.0 * h);
                for i in 0..self.output_dim() {
                    let (lo, hi) = if j < n {
                        (self.jacobian.lower_x[(i, j)], self.jacobian.upper_x[(i, j)])
                    } else {
                        (
                            self.jacobian.lower_w[(i, j - n)],
                            self.jacobian.upper_w[(i, j - n)],
                        )
                    };
                    let scale = 1.0f64.max(lo.abs()).max(hi.abs());
                    let tol = 1e-4 * scale;
                    if col[i] < lo - tol || col[i] > hi + tol {
                        violations.push(JacobianViolation {
                            row: i,
                            col: j,
                            estimate: col[i],
                            lower: lo,
                            upper: hi,
                        });
                    }
                }
            }
        }
        JacobianCheckReport {
            samples,
            violations,
        }
    }
}

fn sample_box<R: rand::Rng>(b: &IntervalVector, rng: &mut R) -> DVector<f64> {
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
}

/// One out-of-bounds finite-difference Jacobian entry.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianViolation {
    pub row: usize,
    /// Stacked column index over `(x, w)`.
    pub col: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Result of [`VectorField::verify_jacobian_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianCheckReport {
    pub samples: usize,
    pub violations: Vec<JacobianViolation>,
}

impl JacobianCheckReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Corner choice for one entry of the linear part `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    /// `H_ij = J̲_ij` (remainder entry nondecreasing) — the default rule.
    Lower,
    /// `H_ij = J̄_ij` (remainder entry nonincreasing).
    Upper,
}

/// Per-entry override of the corner rule: `(row, stacked column, corner)`
/// where stacked columns index `(x₁..xₙ, w₁..w_m)`.
pub type CornerOverride = (usize, usize, Corner);

/// The additive-remainder JSS decomposition `f = A x + B w + μ(x, w)`.
#[derive(Debug, Clone)]
pub struct JssModel {
    field: VectorField,
    /// Stacked linear part `H = [A B]` (every entry a Jacobian corner).
    h: DMatrix<f64>,
    /// Per-row selector diagonals over stacked `z = (x, w)`:
    /// `true` = read from the first (increasing) argument.
    selectors: Vec<Vec<bool>>,
    /// Rows grouped by identical selector so each group costs one field
    /// evaluation in [`Self::decomposition_value`].
    selector_groups: Vec<(Vec<bool>, Vec<usize>)>,
    /// Tight over-bound matrices `F̄ = J̄⁺ + J̲⁻` of the field's Jacobians.
    tight_x: DMatrix<f64>,
    tight_w: DMatrix<f64>,
}

/// Decomposes `field` with the corner rule `H_ij = J̲_ij` plus the given
/// per-entry overrides.
pub fn jss_decompose(field: &VectorField, overrides: &[CornerOverride]) -> Result<JssModel> {
    let (j_lo, j_hi) = field.jacobian_bounds().stacked();
    let p = j_lo.nrows();
    let nz = j_lo.ncols();
    let mut h = j_lo.clone();
    for &(row, col, corner) in overrides {
        if row >= p || col >= nz {
            return Err(Error::Dimension(alloc::format!(
                "corner override ({row}, {col}) out of bounds for a {p}x{nz} jacobian"
            )));
        }
        if corner == Corner::Upper {
            h[(row, col)] = j_hi[(row, col)];
        }
    }

    // Classify each remainder entry by its Jacobian interval [J̲−H, J̄−H].
    // With H at a corner exactly one side is zero, so the entry is always
    // sign-stable; the check guards against future non-corner H values.
    let mut selectors = Vec::with_capacity(p);
    for i in 0..p {
        let mut row_sel = Vec::with_capacity(nz);
        for j in 0..nz {
            let rem_lo = j_lo[(i, j)] - h[(i, j)];
            let rem_hi = j_hi[(i, j)] - h[(i, j)];
            let sel = if rem_lo >= 0.0 {
                true // nondecreasing: take from the first argument
            } else if rem_hi <= 0.0 {
                false // nonincreasing: take from the second argument
            } else {
                return Err(Error::InvalidInput(alloc::format!(
                    "remainder jacobian entry ({i}, {j}) straddles zero: not sign-stable"
                )));
            };
            row_sel.push(sel);
        }
        selectors.push(row_sel);
    }

    let mut selector_groups: Vec<(Vec<bool>, Vec<usize>)> = Vec::new();
    for (i, sel) in selectors.iter().enumerate() {
        if let Some(g) = selector_groups.iter_mut().find(|(mask, _)| mask == sel) {
            g.1.push(i);
        } else {
            selector_groups.push((sel.clone(), vec![i]));
        }
    }

    let jb = field.jacobian_bounds();
    let tight_x = tight_over_bound(&jb.lower_x, &jb.upper_x);
    let tight_w = tight_over_bound(&jb.lower_w, &jb.upper_w);

    Ok(JssModel {
        field: field.clone(),
        h,
        selectors,
        selector_groups,
        tight_x,
        tight_w,
    })
}

/// `F̄ = J̄⁺ + J̲⁻` (entrywise nonnegative).
fn tight_over_bound(j_lo: &DMatrix<f64>, j_hi: &DMatrix<f64>) -> DMatrix<f64> {
    SignSplitMatrix::new(j_hi).plus() + SignSplitMatrix::new(j_lo).minus()
}

impl JssModel {
    pub fn field(&self) -> &VectorField {
        &self.field
    }

    /// State block `A` of the linear part.
    pub fn a(&self) -> DMatrix<f64> {
        let n = self.field.state_dim();
        self.h.columns(0, n).into_owned()
    }

    /// Disturbance block `B` of the linear part.
    pub fn b(&self) -> DMatrix<f64> {
        let n = self.field.state_dim();
        let nw = self.field.noise_dim();
        self.h.columns(n, nw).into_owned()
    }

    /// Stacked linear part `H = [A B]`.
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Per-row selector diagonals (`true` ⇒ the remainder is nondecreasing
    /// in that stacked coordinate).
    pub fn selectors(&self) -> &[Vec<bool>] {
        &self.selectors
    }

    /// `F̄ₓ = (J̄ₓ)⁺ + (J̲ₓ)⁻` of the decomposed field.
    pub fn tight_bound_x(&self) -> &DMatrix<f64> {
        &self.tight_x
    }

    /// `F̄_w = (J̄_w)⁺ + (J̲_w)⁻` of the decomposed field.
    pub fn tight_bound_w(&self) -> &DMatrix<f64> {
        &self.tight_w
    }

    /// Remainder `μ(x, w) = f(x, w) − A x − B w`.
    pub fn remainder(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let n = self.field.state_dim();
        let nw = self.field.noise_dim();
        self.field.eval(x, w) - self.h.columns(0, n) * x - self.h.columns(n, nw) * w
    }

    /// Tight decomposition function of the remainder,
    /// `μ_d,i(z1, z2) = μ_i(Dⁱ z1 + (I − Dⁱ) z2)` with `z = (x, w)`.
    ///
    /// The arguments must be elementwise ordered (`z1 ≥ z2` or `z1 ≤ z2`);
    /// unordered pairs are rejected rather than clamped.
    pub fn decomposition_value(
        &self,
        x1: &DVector<f64>,
        w1: &DVector<f64>,
        x2: &DVector<f64>,
        w2: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = self.field.state_dim();
        let nw = self.field.noise_dim();
        if x1.len() != n || x2.len() != n || w1.len() != nw || w2.len() != nw {
            return Err(Error::Dimension(
                "decomposition arguments have wrong dimensions".to_string(),
            ));
        }
        let ge = x1.iter().zip(x2.iter()).all(|(a, b)| a >= b)
            && w1.iter().zip(w2.iter()).all(|(a, b)| a >= b);
        let le = x1.iter().zip(x2.iter()).all(|(a, b)| a <= b)
            && w1.iter().zip(w2.iter()).all(|(a, b)| a <= b);
        if !ge && !le {
            return Err(Error::InvalidInput(
                "decomposition arguments must be elementwise ordered".to_string(),
            ));
        }

        let mut out = DVector::zeros(self.h.nrows());
        let mut xa = DVector::zeros(n);
        let mut wa = DVector::zeros(nw);
        for (mask, rows) in &self.selector_groups {
            for j in 0..n {
                xa[j] = if mask[j] { x1[j] } else { x2[j] };
            }
            for j in 0..nw {
                wa[j] = if mask[n + j] { w1[j] } else { w2[j] };
            }
            let mu = self.remainder(&xa, &wa);
            for &i in rows {
                out[i] = mu[i];
            }
        }
        Ok(out)
    }

    /// Over-bound `F̄ₓ·εₓ + F̄_w·ε_w` on the decomposition gap
    /// `μ_d(x̄, w̄, x̲, w̲) − μ_d(x̲, w̲, x̄, w̄)` for the given boxes.
    pub fn remainder_gap_bound(
        &self,
        box_x: &IntervalVector,
        box_w: &IntervalVector,
    ) -> Result<DVector<f64>> {
        if box_x.dim() != self.field.state_dim() || box_w.dim() != self.field.noise_dim() {
            return Err(Error::Dimension(
                "gap bound boxes have wrong dimensions".to_string(),
            ));
        }
        Ok(&self.tight_x * box_x.width() + &self.tight_w * box_w.width())
    }
}
