//! Interval vectors and sign-split matrix arithmetic.
//!
//! An [`IntervalVector`] is a box `[lower, upper]` in ℝⁿ. A
//! [`SignSplitMatrix`] caches the decomposition `M = M⁺ − M⁻` together with
//! `|M| = M⁺ + M⁻`, which is the basic tool for propagating boxes through
//! linear maps: for any `x ∈ [x̲, x̄]`,
//!
//! ```text
//! M⁺x̲ − M⁻x̄  ≤  M x  ≤  M⁺x̄ − M⁻x̲.
//! ```
//!
//! All comparisons are exact floating-point `≤` (no epsilon), so containment
//! statements proved with these operations are conservative.

use alloc::string::ToString;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A nonempty axis-aligned box `[lower, upper] ⊂ ℝⁿ`.
///
/// Invariant: `lower[s] ≤ upper[s]` for every coordinate `s`; construction
/// rejects violations. Values are immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

/// Raised by [`IntervalVector::intersect`] when the result is empty in some
/// coordinate. Callers attach context (agent, round) as appropriate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmptyIntersection {
    /// First coordinate (0-based) in which the intersection is empty.
    pub coordinate: usize,
}

impl IntervalVector {
    /// Builds a box from bound vectors, rejecting `lower > upper` and
    /// non-finite entries.
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(
                "interval lower/upper lengths differ".to_string(),
            ));
        }
        for s in 0..lower.len() {
            if !lower[s].is_finite() || !upper[s].is_finite() {
                return Err(Error::InvalidInput(
                    "interval bounds must be finite".to_string(),
                ));
            }
            if lower[s] > upper[s] {
                return Err(Error::InvalidInput(alloc::format!(
                    "interval lower bound exceeds upper bound in coordinate {s}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The degenerate box `[x, x]`.
    pub fn point(x: DVector<f64>) -> Self {
        Self {
            lower: x.clone(),
            upper: x,
        }
    }

    /// The symmetric box `[-radius, radius]` (all entries of `radius` must be
    /// nonnegative).
    pub fn symmetric(radius: &DVector<f64>) -> Result<Self> {
        Self::new(-radius, radius.clone())
    }

    /// Dimension of the ambient space.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Per-coordinate width `upper − lower` (entrywise ≥ 0).
    pub fn width(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    /// Midpoint of the box.
    pub fn midpoint(&self) -> DVector<f64> {
        (&self.upper + &self.lower) * 0.5
    }

    /// `max_s (upper[s] − lower[s])`; 0 for the empty-dimension box.
    pub fn inf_norm_width(&self) -> f64 {
        let mut m = 0.0;
        for s in 0..self.dim() {
            let w = self.upper[s] - self.lower[s];
            if w > m {
                m = w;
            }
        }
        m
    }

    /// Exact elementwise membership test.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        (0..self.dim()).all(|s| self.lower[s] <= x[s] && x[s] <= self.upper[s])
    }

    /// True if `self ⊆ other` elementwise.
    pub fn is_subset_of(&self, other: &IntervalVector) -> bool {
        debug_assert_eq!(self.dim(), other.dim());
        (0..self.dim()).all(|s| other.lower[s] <= self.lower[s] && self.upper[s] <= other.upper[s])
    }

    /// Elementwise intersection `[max(lowers), min(uppers)]`.
    ///
    /// An empty result in any coordinate is surfaced as an
    /// [`EmptyIntersection`] event, never silently clamped; the first
    /// offending coordinate is reported.
    pub fn intersect(
        &self,
        other: &IntervalVector,
    ) -> core::result::Result<IntervalVector, EmptyIntersection> {
        debug_assert_eq!(self.dim(), other.dim());
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        for s in 0..self.dim() {
            if other.lower[s] > lower[s] {
                lower[s] = other.lower[s];
            }
            if other.upper[s] < upper[s] {
                upper[s] = other.upper[s];
            }
            if lower[s] > upper[s] {
                return Err(EmptyIntersection { coordinate: s });
            }
        }
        Ok(IntervalVector { lower, upper })
    }

    /// Concatenates boxes into a single higher-dimensional box.
    pub fn stack(parts: &[&IntervalVector]) -> IntervalVector {
        let dim: usize = parts.iter().map(|b| b.dim()).sum();
        let mut lower = DVector::zeros(dim);
        let mut upper = DVector::zeros(dim);
        let mut at = 0;
        for b in parts {
            lower.rows_mut(at, b.dim()).copy_from(&b.lower);
            upper.rows_mut(at, b.dim()).copy_from(&b.upper);
            at += b.dim();
        }
        IntervalVector { lower, upper }
    }

    /// All `2ⁿ` corner points of the box (intended for small `n` in tests).
    pub fn corners(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        assert!(n <= 20, "corner enumeration is exponential in dimension");
        let mut out = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            let mut x = self.lower.clone();
            for s in 0..n {
                if mask & (1 << s) != 0 {
                    x[s] = self.upper[s];
                }
            }
            out.push(x);
        }
        out
    }
}

/// The decomposition `M = plus − minus` with `plus = max(M, 0)`,
/// `minus = plus − M`, and `abs = plus + minus`, all entrywise nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSplitMatrix {
    plus: DMatrix<f64>,
    minus: DMatrix<f64>,
    abs: DMatrix<f64>,
}

impl SignSplitMatrix {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let plus = m.map(|e| if e > 0.0 { e } else { 0.0 });
        let minus = &plus - m;
        let abs = &plus + &minus;
        Self { plus, minus, abs }
    }

    pub fn plus(&self) -> &DMatrix<f64> {
        &self.plus
    }

    pub fn minus(&self) -> &DMatrix<f64> {
        &self.minus
    }

    pub fn abs(&self) -> &DMatrix<f64> {
        &self.abs
    }

    /// Reconstructs the original matrix `plus − minus`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.plus - &self.minus
    }

    /// The interval image `[A⁺x̲ − A⁻x̄, A⁺x̄ − A⁻x̲]` of a box under the
    /// linear map; contains `Ax` for every `x` in the box.
    pub fn image(&self, box_: &IntervalVector) -> IntervalVector {
        debug_assert_eq!(self.plus.ncols(), box_.dim());
        let lower = &self.plus * &box_.lower - &self.minus * &box_.upper;
        let upper = &self.plus * &box_.upper - &self.minus * &box_.lower;
        IntervalVector { lower, upper }
    }
}

/// One-shot interval image of a box under `A` (see [`SignSplitMatrix::image`]).
pub fn affine_image(a: &DMatrix<f64>, box_: &IntervalVector) -> Result<IntervalVector> {
    if a.ncols() != box_.dim() {
        return Err(Error::Dimension(alloc::format!(
            "matrix has {} columns but box has dimension {}",
            a.ncols(),
            box_.dim()
        )));
    }
    Ok(SignSplitMatrix::new(a).image(box_))
}

/// Entrywise bounds `[lo, hi]` on the matrix product `S · J` where `J` ranges
/// over the interval matrix `[j_lo, j_hi]`.
///
/// Used to transport Jacobian bounds through a fixed linear map:
/// `lo = S⁺ j_lo − S⁻ j_hi` and `hi = S⁺ j_hi − S⁻ j_lo`.
pub fn interval_matrix_product(
    s: &DMatrix<f64>,
    j_lo: &DMatrix<f64>,
    j_hi: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    debug_assert_eq!(s.ncols(), j_lo.nrows());
    debug_assert_eq!(j_lo.shape(), j_hi.shape());
    let split = SignSplitMatrix::new(s);
    let lo = split.plus() * j_lo - split.minus() * j_hi;
    let hi = split.plus() * j_hi - split.minus() * j_lo;
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn construction_rejects_inverted_bounds() {
        let err = IntervalVector::new(dvector![0.0, 2.0], dvector![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn construction_rejects_non_finite() {
        assert!(IntervalVector::new(dvector![f64::NEG_INFINITY], dvector![0.0]).is_err());
        assert!(IntervalVector::new(dvector![0.0], dvector![f64::NAN]).is_err());
    }

    #[test]
    fn affine_image_matches_hand_computed_hull() {
        // A = [[1,-2],[0,3]], box = ([-1,1],[0,2]) -> ([-5,1],[0,6]).
        let a = dmatrix![1.0, -2.0; 0.0, 3.0];
        let b = IntervalVector::new(dvector![-1.0, 0.0], dvector![1.0, 2.0]).unwrap();
        let img = affine_image(&a, &b).unwrap();
        assert_eq!(img.lower(), &dvector![-5.0, 0.0]);
        assert_eq!(img.upper(), &dvector![1.0, 6.0]);
    }

    #[test]
    fn affine_image_identity_is_identity() {
        let b = IntervalVector::new(dvector![-1.0, 0.5], dvector![2.0, 0.75]).unwrap();
        let img = affine_image(&DMatrix::identity(2, 2), &b).unwrap();
        assert_eq!(&img, &b);
    }

    #[test]
    fn affine_image_of_point_box_is_point() {
        let a = dmatrix![2.0, 1.0; 0.5, 0.0];
        let x = dvector![3.0, -1.0];
        let img = affine_image(&a, &IntervalVector::point(x.clone())).unwrap();
        assert_eq!(img.lower(), &(&a * &x));
        assert_eq!(img.upper(), &(&a * &x));
    }

    #[test]
    fn affine_image_rejects_dimension_mismatch() {
        let a = DMatrix::<f64>::zeros(2, 3);
        let b = IntervalVector::point(dvector![0.0, 0.0]);
        assert!(matches!(affine_image(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn intersect_overlapping() {
        let a = IntervalVector::new(dvector![0.0], dvector![2.0]).unwrap();
        let b = IntervalVector::new(dvector![1.0], dvector![3.0]).unwrap();
        let c = a.intersect(&b).unwrap();
        assert_eq!(c.lower(), &dvector![1.0]);
        assert_eq!(c.upper(), &dvector![2.0]);
    }

    #[test]
    fn intersect_with_superset_returns_subset() {
        let inner = IntervalVector::new(dvector![0.2, 0.3], dvector![0.4, 0.5]).unwrap();
        let outer = IntervalVector::new(dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        assert_eq!(inner.intersect(&outer).unwrap(), inner);
    }

    #[test]
    fn intersect_disjoint_reports_coordinate() {
        let a = IntervalVector::new(dvector![5.0, 0.0], dvector![6.0, 1.0]).unwrap();
        let b = IntervalVector::new(dvector![5.5, 2.0], dvector![7.0, 3.0]).unwrap();
        let err = a.intersect(&b).unwrap_err();
        assert_eq!(err.coordinate, 1);
    }

    #[test]
    fn inf_norm_width_examples() {
        let b = IntervalVector::new(dvector![0.0, 0.0], dvector![1.0, 3.0]).unwrap();
        assert_eq!(b.inf_norm_width(), 3.0);
        assert_eq!(IntervalVector::point(dvector![4.0]).inf_norm_width(), 0.0);
        let c = IntervalVector::new(dvector![-1.0], dvector![1.0]).unwrap();
        assert_eq!(c.inf_norm_width(), 2.0);
    }

    #[test]
    fn sign_split_reconstructs_exactly() {
        let m = dmatrix![1.5, -2.25; 0.0, -0.0];
        let s = SignSplitMatrix::new(&m);
        assert_eq!(s.reconstruct(), m);
        assert!(s.plus().iter().all(|&e| e >= 0.0));
        assert!(s.minus().iter().all(|&e| e >= 0.0));
        assert_eq!(s.abs(), &dmatrix![1.5, 2.25; 0.0, 0.0]);
    }

    #[test]
    fn interval_matrix_product_contains_sampled_products() {
        let s = dmatrix![1.0, -2.0; 0.5, 3.0];
        let j_lo = dmatrix![-1.0, 0.0; 2.0, -3.0];
        let j_hi = dmatrix![1.0, 0.5; 2.5, -1.0];
        let (lo, hi) = interval_matrix_product(&s, &j_lo, &j_hi);
        // Products with corner J's must stay inside the bounds.
        for mask in 0..16u32 {
            let mut j = j_lo.clone();
            for (idx, e) in j.iter_mut().enumerate() {
                if mask & (1 << idx) != 0 {
                    *e = j_hi[(idx % 2, idx / 2)];
                }
            }
            // Rebuild properly entry by entry to avoid index confusion.
            let mut jj = j_lo.clone();
            let mut bit = 0;
            for c in 0..2 {
                for r in 0..2 {
                    if mask & (1 << bit) != 0 {
                        jj[(r, c)] = j_hi[(r, c)];
                    }
                    bit += 1;
                }
            }
            let _ = j;
            let p = &s * &jj;
            for r in 0..2 {
                for c in 0..2 {
                    assert!(lo[(r, c)] <= p[(r, c)] + 1e-12);
                    assert!(p[(r, c)] <= hi[(r, c)] + 1e-12);
                }
            }
        }
    }

    fn small_box(n: usize) -> impl Strategy<Value = IntervalVector> {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(0.0f64..5.0, n),
        )
            .prop_map(|(lo, w)| {
                let lower = DVector::from_vec(lo);
                let upper = &lower + DVector::from_vec(w);
                IntervalVector::new(lower, upper).unwrap()
            })
    }

    fn small_matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-5.0f64..5.0, r * c)
            .prop_map(move |v| DMatrix::from_vec(r, c, v))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2500))]

        // Containment: Ax ∈ affine_image(A, box) for x ∈ box. Together with
        // the sibling suites this exercises ≥ 10⁴ random triples.
        #[test]
        fn affine_image_contains_member_images(
            a in small_matrix(3, 3),
            b in small_box(3),
            t in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let x = b.lower() + b.width().component_mul(&DVector::from_vec(t));
            let img = affine_image(&a, &b).unwrap();
            prop_assert!(img.contains(&(&a * &x)));
        }

        // Tightness for nonnegative A: every face of the output is attained
        // by a vertex of the input box.
        #[test]
        fn affine_image_tight_for_nonnegative_matrix(
            a in prop::collection::vec(0.0f64..5.0, 9)
                .prop_map(|v| DMatrix::from_vec(3, 3, v)),
            b in small_box(3),
        ) {
            let img = affine_image(&a, &b).unwrap();
            // For nonnegative A the hull is attained at the box corners
            // lower (for the lower face) and upper (for the upper face).
            let at_lower = &a * b.lower();
            let at_upper = &a * b.upper();
            for s in 0..3 {
                prop_assert!((img.lower()[s] - at_lower[s]).abs() <= 1e-12);
                prop_assert!((img.upper()[s] - at_upper[s]).abs() <= 1e-12);
            }
        }

        #[test]
        fn intersect_properties(a in small_box(4), b in small_box(4), c in small_box(4)) {
            // Commutative.
            match (a.intersect(&b), b.intersect(&a)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(&x, &y),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "commutativity violated in emptiness"),
            }
            // Idempotent.
            prop_assert_eq!(a.intersect(&a).unwrap(), a.clone());
            // Associative (when all defined).
            if let (Ok(ab), Ok(bc)) = (a.intersect(&b), b.intersect(&c)) {
                match (ab.intersect(&c), a.intersect(&bc)) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(&x, &y),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "associativity violated in emptiness"),
                }
            }
            // Width-nonincreasing in every coordinate.
            if let Ok(x) = a.intersect(&b) {
                let wa = a.width();
                let wb = b.width();
                let wx = x.width();
                for s in 0..4 {
                    prop_assert!(wx[s] <= wa[s] && wx[s] <= wb[s]);
                }
            }
        }
    }
}
