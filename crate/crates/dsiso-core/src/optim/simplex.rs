//! Bounded-variable two-phase revised simplex.
//!
//! Standard form used internally: `min cᵀx  s.t.  A x + s = b,  l ≤ x ≤ u`
//! with one slack column per row (its bounds encode the row sense) and
//! phase-1 artificial columns where the initial slack basis is infeasible.
//! The basis inverse is kept dense and refactorized periodically; Dantzig
//! pricing with a Bland fallback guards against cycling. Optimal results
//! are certified by primal residuals and reduced-cost conditions, plus a
//! duality-gap check whenever the dual value is finite.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::problem::{Cmp, LinearProgram, Sense, SolveResult, Status, Tolerances};
use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 128;

/// Solves a pure LP (binary flags, if any, are relaxed to their bounds).
pub fn solve_lp(lp: &LinearProgram, tol: &Tolerances) -> Result<SolveResult> {
    solve_lp_with_bounds(lp, &lp.lower, &lp.upper, tol)
}

/// Solves the LP with overridden variable bounds (used by branch-and-bound).
pub fn solve_lp_with_bounds(
    lp: &LinearProgram,
    lower: &[f64],
    upper: &[f64],
    tol: &Tolerances,
) -> Result<SolveResult> {
    lp.validate()?;
    let mut tab = Tableau::build(lp, lower, upper)?;

    // Phase 1: minimize the artificial sum if any artificials were needed.
    if tab.has_artificials {
        let status = tab.optimize(Phase::One, tol)?;
        if status == Status::Limit {
            return Ok(tab.result(lp, Status::Limit, tol));
        }
        let infeas: f64 = tab.artificial_sum();
        #[cfg(feature = "solver-trace")]
        std::eprintln!("phase1 done: artificial sum {infeas:.3e}");
        if infeas > tol.feasibility.max(1e-7) {
            return Ok(tab.result(lp, Status::Infeasible, tol));
        }
        tab.seal_artificials();
    }

    let status = tab.optimize(Phase::Two, tol)?;
    Ok(tab.result(lp, status, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    /// Total columns: structural + slacks + artificials.
    ncols: usize,
    n_struct: usize,
    /// Sparse columns of the equality system.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Phase-2 costs (min sense).
    cost: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    value: Vec<f64>,
    binv: DMatrix<f64>,
    has_artificials: bool,
    art_start: usize,
    /// Flips to −1 when the original objective is a maximization.
    obj_scale: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram, lower: &[f64], upper: &[f64], ) -> Result<Self> {
        let m = lp.constraints.len();
        let n_struct = lp.num_vars();
        let obj_scale = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        let mut rhs = vec![0.0; m];
        for (i, row) in lp.constraints.iter().enumerate() {
            rhs[i] = row.rhs;
            for &(v, c) in &row.coeffs {
                cols[v].push((i, c));
            }
        }
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        let mut cost: Vec<f64> = vec![0.0; n_struct];
        for &(v, c) in &lp.objective {
            cost[v] += obj_scale * c;
        }

        // Slack columns.
        for (i, row) in lp.constraints.iter().enumerate() {
            cols.push(vec![(i, 1.0)]);
            cost.push(0.0);
            match row.cmp {
                Cmp::Le => {
                    lo.push(0.0);
                    hi.push(f64::INFINITY);
                }
                Cmp::Eq => {
                    lo.push(0.0);
                    hi.push(0.0);
                }
                Cmp::Ge => {
                    lo.push(f64::NEG_INFINITY);
                    hi.push(0.0);
                }
            }
        }

        // Nonbasic start: every structural and slack at its bound nearest 0
        // (free variables sit at 0).
        let ncols0 = cols.len();
        let mut state = vec![VarState::AtLower; ncols0];
        let mut value = vec![0.0; ncols0];
        for j in 0..ncols0 {
            let (l, u) = (lo[j], hi[j]);
            let v = if l.is_finite() && u.is_finite() {
                if l.abs() <= u.abs() {
                    state[j] = VarState::AtLower;
                    l
                } else {
                    state[j] = VarState::AtUpper;
                    u
                }
            } else if l.is_finite() {
                state[j] = VarState::AtLower;
                l
            } else if u.is_finite() {
                state[j] = VarState::AtUpper;
                u
            } else {
                state[j] = VarState::AtLower; // free at 0
                0.0
            };
            value[j] = v;
        }

        // Residuals decide which rows get an artificial basic column and
        // which can use their slack directly.
        let mut residual = rhs.clone();
        for (j, col) in cols.iter().enumerate().take(n_struct) {
            if value[j] != 0.0 {
                for &(i, c) in col {
                    residual[i] -= c * value[j];
                }
            }
        }

        let mut basis = vec![usize::MAX; m];
        let mut has_artificials = false;
        let art_start = ncols0;
        let mut cols = cols;
        let mut lo = lo;
        let mut hi = hi;
        let mut cost = cost;
        let mut state = state;
        let mut value = value;
        let mut binv_diag = vec![1.0; m];
        for i in 0..m {
            let slack = n_struct + i;
            let r = residual[i];
            if r >= lo[slack] - 1e-12 && r <= hi[slack] + 1e-12 {
                basis[i] = slack;
                state[slack] = VarState::Basic(i);
                // Not `f64::clamp`: residuals inside the tolerance band can
                // sit marginally outside the bounds, flipping min past max.
                value[slack] = r.max(lo[slack]).min(hi[slack]);
            } else {
                // Slack stays at its nearest bound (already set); absorb the
                // remaining residual with an artificial of matching sign.
                let slack_val = value[slack];
                let need = r - slack_val;
                let sign = if need >= 0.0 { 1.0 } else { -1.0 };
                cols.push(vec![(i, sign)]);
                lo.push(0.0);
                hi.push(f64::INFINITY);
                cost.push(0.0);
                let art = cols.len() - 1;
                basis[i] = art;
                state.push(VarState::Basic(i));
                value.push(need.abs());
                has_artificials = true;
                binv_diag[i] = sign;
            }
        }
        let ncols = cols.len();

        // Initial basis matrix is diagonal ±1 by construction.
        let mut binv = DMatrix::zeros(m, m);
        for i in 0..m {
            binv[(i, i)] = binv_diag[i];
        }

        Ok(Self {
            m,
            ncols,
            n_struct,
            cols,
            lower: lo,
            upper: hi,
            cost,
            rhs,
            basis,
            state,
            value,
            binv,
            has_artificials,
            art_start,
            obj_scale,
        })
    }

    fn phase_cost(&self, phase: Phase, j: usize) -> f64 {
        match phase {
            Phase::One => {
                if j >= self.art_start {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => self.cost[j],
        }
    }

    fn artificial_sum(&self) -> f64 {
        (self.art_start..self.ncols).map(|j| self.value[j]).sum()
    }

    /// After phase 1: pin artificials to zero so phase 2 cannot revive them.
    fn seal_artificials(&mut self) {
        for j in self.art_start..self.ncols {
            self.upper[j] = 0.0;
            if !matches!(self.state[j], VarState::Basic(_)) {
                self.state[j] = VarState::AtLower;
                self.value[j] = 0.0;
            }
        }
    }

    /// Dual vector `y = c_B B⁻¹` for the given phase.
    fn duals(&self, phase: Phase) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for i in 0..self.m {
            let cb = self.phase_cost(phase, self.basis[i]);
            if cb != 0.0 {
                for k in 0..self.m {
                    y[k] += cb * self.binv[(i, k)];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, phase: Phase, j: usize, y: &[f64]) -> f64 {
        let mut d = self.phase_cost(phase, j);
        for &(i, c) in &self.cols[j] {
            d -= y[i] * c;
        }
        d
    }

    fn col_in_basis_coords(&self, j: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; self.m];
        for &(i, c) in &self.cols[j] {
            if c != 0.0 {
                for k in 0..self.m {
                    alpha[k] += self.binv[(k, i)] * c;
                }
            }
        }
        alpha
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.m, self.m);
        for (i, &j) in self.basis.iter().enumerate() {
            for &(row, c) in &self.cols[j] {
                b[(row, i)] = c;
            }
        }
        b
    }

    /// Replaces linearly dependent basis columns with their pivot row's
    /// slack column, evicting the dependent variables to their nearest
    /// bound. Returns whether any replacement happened.
    fn repair_basis(&mut self) -> bool {
        // Gaussian elimination with partial pivoting over the basis
        // columns; a column without a usable pivot is dependent.
        let mut work = self.basis_matrix();
        let m = self.m;
        let mut row_used = vec![false; m];
        let mut dependent: Vec<usize> = Vec::new(); // basis positions
        let mut pivot_row_of: Vec<usize> = vec![usize::MAX; m];
        for col in 0..m {
            let mut best = (usize::MAX, 0.0f64);
            for r in 0..m {
                if !row_used[r] && work[(r, col)].abs() > best.1 {
                    best = (r, work[(r, col)].abs());
                }
            }
            if best.1 < 1e-10 {
                dependent.push(col);
                continue;
            }
            let pr = best.0;
            row_used[pr] = true;
            pivot_row_of[col] = pr;
            let piv = work[(pr, col)];
            for c2 in (col + 1)..m {
                let factor = work[(pr, c2)] / piv;
                if factor != 0.0 {
                    for r in 0..m {
                        if !row_used[r] {
                            work[(r, c2)] -= factor * work[(r, col)];
                        }
                    }
                }
            }
        }
        if dependent.is_empty() {
            return false;
        }
        let mut free_rows: Vec<usize> = (0..m).filter(|&r| !row_used[r]).collect();
        for pos in dependent {
            let Some(row) = free_rows.pop() else { break };
            let out = self.basis[pos];
            self.state[out] = if self.lower[out].is_finite() {
                self.value[out] = self.lower[out];
                VarState::AtLower
            } else if self.upper[out].is_finite() {
                self.value[out] = self.upper[out];
                VarState::AtUpper
            } else {
                self.value[out] = 0.0;
                VarState::AtLower
            };
            let slack = self.n_struct + row;
            self.basis[pos] = slack;
            self.state[slack] = VarState::Basic(pos);
        }
        true
    }

    fn refactorize(&mut self) -> Result<()> {
        // binv maps b-space to basis coordinates: binv * B = I, and basic
        // column order matches basis rows, so invert and reorder.
        let mut repaired = false;
        let inv = match self.basis_matrix().try_inverse() {
            Some(inv) => inv,
            None => {
                if !self.repair_basis() {
                    return Err(Error::Solver(
                        "singular basis during refactorization".into(),
                    ));
                }
                #[cfg(feature = "solver-trace")]
                std::eprintln!("basis repaired (m={})", self.m);
                repaired = true;
                self.basis_matrix().try_inverse().ok_or_else(|| {
                    Error::Solver("singular basis during refactorization".into())
                })?
            }
        };
        self.binv = inv;
        // Recompute basic values from the nonbasic ones.
        let mut resid = self.rhs.clone();
        for j in 0..self.ncols {
            if !matches!(self.state[j], VarState::Basic(_)) && self.value[j] != 0.0 {
                for &(i, c) in &self.cols[j] {
                    resid[i] -= c * self.value[j];
                }
            }
        }
        for i in 0..self.m {
            let mut v = 0.0;
            for k in 0..self.m {
                v += self.binv[(i, k)] * resid[k];
            }
            self.value[self.basis[i]] = v;
        }
        if repaired {
            // Evicting dependent columns can break primal feasibility;
            // refuse to continue silently if it did.
            for i in 0..self.m {
                let j = self.basis[i];
                let v = self.value[j];
                if v < self.lower[j] - 1e-6 || v > self.upper[j] + 1e-6 {
                    return Err(Error::Solver(
                        "basis repair lost primal feasibility".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn optimize(&mut self, phase: Phase, tol: &Tolerances) -> Result<Status> {
        let mut iterations = 0usize;
        let mut degenerate_run = 0usize;
        let mut since_refactor = 0usize;
        // `y = c_B B⁻¹` is maintained incrementally across pivots and
        // recomputed from scratch on every refactorization.
        let mut y = self.duals(phase);
        loop {
            iterations += 1;
            #[cfg(feature = "solver-trace")]
            if iterations % 1000 == 0 {
                std::eprintln!(
                    "simplex {:?}: iter {iterations}, m={}, degen_run={degenerate_run}",
                    phase,
                    self.m
                );
            }
            if iterations > tol.max_iterations {
                return Ok(Status::Limit);
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactorize()?;
                since_refactor = 0;
                y = self.duals(phase);
            }

            let bland = degenerate_run > 64;
            // Columns rejected this iteration because entering them would
            // require pivoting on a near-zero entry.
            let mut rejected: Vec<usize> = Vec::new();
            let (e, d_e, dir, alpha, t_max, leaving) = loop {
                // Entering variable: most violating reduced cost (Dantzig),
                // or the lowest-index violation under Bland's rule.
                let mut entering: Option<(usize, f64, f64)> = None; // (col, d, dir)
                for j in 0..self.ncols {
                    if matches!(self.state[j], VarState::Basic(_)) {
                        continue;
                    }
                    if phase == Phase::Two && j >= self.art_start {
                        continue; // sealed artificials never re-enter
                    }
                    if rejected.contains(&j) {
                        continue;
                    }
                    let d = self.reduced_cost(phase, j, &y);
                    let free = self.lower[j].is_infinite() && self.upper[j].is_infinite();
                    let dir = match self.state[j] {
                        VarState::AtLower if free => {
                            if d < -tol.optimality {
                                1.0
                            } else if d > tol.optimality {
                                -1.0
                            } else {
                                continue;
                            }
                        }
                        VarState::AtLower => {
                            if d < -tol.optimality {
                                1.0
                            } else {
                                continue;
                            }
                        }
                        VarState::AtUpper => {
                            if d > tol.optimality {
                                -1.0
                            } else {
                                continue;
                            }
                        }
                        VarState::Basic(_) => unreachable!(),
                    };
                    if bland {
                        entering = Some((j, d, dir));
                        break;
                    }
                    match entering {
                        Some((_, best, _)) if d.abs() <= best.abs() => {}
                        _ => entering = Some((j, d, dir)),
                    }
                }
                let Some((e, d_e, dir)) = entering else {
                    if rejected.is_empty() {
                        // Certify the claimed optimum on an exact inverse:
                        // accumulated drift must not hide infeasibility.
                        self.refactorize()?;
                        for i in 0..self.m {
                            let j = self.basis[i];
                            let v = self.value[j];
                            if v < self.lower[j] - 1e-6 || v > self.upper[j] + 1e-6 {
                                return Err(Error::Solver(
                                    "numerical loss of primal feasibility".into(),
                                ));
                            }
                        }
                        return Ok(Status::Optimal);
                    }
                    // Every improving column was rejected for numerical
                    // reasons; retry once on a fresh inverse, otherwise
                    // give up rather than corrupt the basis.
                    if since_refactor > 0 {
                        self.refactorize()?;
                        since_refactor = 0;
                        y = self.duals(phase);
                        rejected.clear();
                        continue;
                    }
                    return Err(Error::Solver(
                        "simplex stalled on near-singular pivots".into(),
                    ));
                };

                let alpha = self.col_in_basis_coords(e);
                // Ratio test: how far can the entering variable move?
                let own_limit = if self.lower[e].is_finite() && self.upper[e].is_finite() {
                    self.upper[e] - self.lower[e]
                } else {
                    f64::INFINITY
                };
                let row_limit = |i: usize, a: f64| -> Option<(f64, VarState)> {
                    let bj = self.basis[i];
                    let xb = self.value[bj];
                    if a > 0.0 {
                        self.lower[bj]
                            .is_finite()
                            .then(|| (((xb - self.lower[bj]) / a).max(0.0), VarState::AtLower))
                    } else {
                        self.upper[bj]
                            .is_finite()
                            .then(|| (((self.upper[bj] - xb) / (-a)).max(0.0), VarState::AtUpper))
                    }
                };
                // Pass 1: the tightest blocking limit. Rows with a pivot
                // entry below PIVOT_TOL cannot be pivoted on, but they must
                // still bound the step: their basic variable would drift by
                // `t · |a|` (fatal for equality slacks, which stay basic at
                // zero-width bounds). Allow at most DRIFT_CAP of violation.
                const RATIO_TOL: f64 = 1e-12;
                const DRIFT_CAP: f64 = 1e-10;
                // Pivot acceptability is relative to the column's largest
                // entry: dividing by a relatively tiny pivot poisons the
                // maintained inverse.
                let alpha_inf = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                let piv_tol = PIVOT_TOL.max(1e-7 * alpha_inf);
                let mut t_max = own_limit;
                for i in 0..self.m {
                    let a = dir * alpha[i];
                    if a.abs() < RATIO_TOL {
                        continue;
                    }
                    if let Some((limit, _)) = row_limit(i, a) {
                        if a.abs() >= piv_tol {
                            t_max = t_max.min(limit);
                        } else {
                            t_max = t_max.min(limit + DRIFT_CAP / a.abs());
                        }
                    }
                }
                // Pass 2: among pivotable rows blocking within a small band
                // of the limit, prefer the largest pivot magnitude for
                // stability (ties break by smaller row index).
                let band = t_max + 1e-9 * (1.0 + t_max.abs());
                let mut leaving: Option<(usize, VarState)> = None; // (basis row, bound hit)
                let mut best_piv = 0.0f64;
                if t_max.is_finite() {
                    for i in 0..self.m {
                        let a = dir * alpha[i];
                        if a.abs() < piv_tol {
                            continue;
                        }
                        if let Some((limit, hit)) = row_limit(i, a) {
                            if limit <= band && a.abs() > best_piv {
                                best_piv = a.abs();
                                leaving = Some((i, hit));
                                t_max = limit;
                            }
                        }
                    }
                    if own_limit <= t_max {
                        // The entering variable's own bound is at least as
                        // tight: flip it instead of pivoting.
                        leaving = None;
                        t_max = own_limit;
                    }
                }

                if t_max.is_infinite() {
                    return Ok(Status::Unbounded);
                }
                if leaving.is_none() && own_limit > t_max {
                    // Only near-zero pivot rows block this column; entering
                    // it is numerically unsafe. Price a different column.
                    rejected.push(e);
                    continue;
                }
                break (e, d_e, dir, alpha, t_max, leaving);
            };
            degenerate_run = if t_max < 1e-12 {
                degenerate_run + 1
            } else {
                0
            };

            // Apply the step.
            for i in 0..self.m {
                let bj = self.basis[i];
                self.value[bj] -= dir * t_max * alpha[i];
            }
            self.value[e] += dir * t_max;

            match leaving {
                None => {
                    // Bound flip: entering moved to its opposite bound.
                    self.state[e] = match self.state[e] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        VarState::Basic(_) => unreachable!(),
                    };
                    self.value[e] = match self.state[e] {
                        VarState::AtLower => self.lower[e],
                        VarState::AtUpper => self.upper[e],
                        VarState::Basic(_) => unreachable!(),
                    };
                }
                Some((row, hit)) => {
                    let out = self.basis[row];
                    self.state[out] = hit;
                    self.value[out] = match hit {
                        VarState::AtLower => self.lower[out],
                        VarState::AtUpper => self.upper[out],
                        VarState::Basic(_) => unreachable!(),
                    };
                    self.basis[row] = e;
                    self.state[e] = VarState::Basic(row);
                    // Elementary update of B⁻¹ with pivot alpha[row].
                    let piv = alpha[row];
                    if piv.abs() < PIVOT_TOL {
                        self.refactorize()?;
                        since_refactor = 0;
                        y = self.duals(phase);
                        continue;
                    }
                    for i in 0..self.m {
                        if i == row {
                            continue;
                        }
                        let factor = alpha[i] / piv;
                        if factor != 0.0 {
                            for k in 0..self.m {
                                let v = self.binv[(row, k)];
                                self.binv[(i, k)] -= factor * v;
                            }
                        }
                    }
                    for k in 0..self.m {
                        self.binv[(row, k)] /= piv;
                    }
                    // Incremental dual update: y' = y + d_e · (row of B'⁻¹);
                    // keeps every other basic reduced cost at zero exactly.
                    for k in 0..self.m {
                        y[k] += d_e * self.binv[(row, k)];
                    }
                    since_refactor += 1;
                }
            }
        }
    }

    /// Extracts a `SolveResult` in the caller's sense convention.
    fn result(&self, lp: &LinearProgram, status: Status, tol: &Tolerances) -> SolveResult {
        let x: Vec<f64> = (0..self.n_struct).map(|j| self.value[j]).collect();
        #[cfg(feature = "solver-trace")]
        if status == Status::Optimal {
            let mut worst = 0.0f64;
            for (i, row) in lp.constraints.iter().enumerate() {
                let lhs: f64 = row.coeffs.iter().map(|&(v, c)| c * x[v]).sum();
                let viol = match row.cmp {
                    Cmp::Le => lhs - row.rhs,
                    Cmp::Ge => row.rhs - lhs,
                    Cmp::Eq => (lhs - row.rhs).abs(),
                };
                if viol > worst {
                    worst = viol;
                    std::eprintln!("row {i} violation {viol:.3e}");
                }
            }
            for j in 0..self.n_struct {
                let v = x[j];
                let bv = (lp.lower[j] - v).max(v - lp.upper[j]);
                if bv > worst {
                    worst = bv;
                    std::eprintln!("var {j} bound violation {bv:.3e}");
                }
            }
        }
        let mut duals: Vec<f64> = self.duals(Phase::Two);
        for d in &mut duals {
            *d *= self.obj_scale;
        }
        let objective = lp.objective_value(&x);
        let gap = if status == Status::Optimal {
            self.certified_gap(tol)
        } else {
            f64::INFINITY
        };
        SolveResult {
            status,
            objective,
            x,
            duals,
            node_count: 0,
            gap,
        }
    }

    /// Best-effort duality gap: finite when every reduced cost points at a
    /// finite bound; falls back to 0 when the reduced-cost optimality
    /// conditions hold exactly (which simplex termination guarantees).
    fn certified_gap(&self, tol: &Tolerances) -> f64 {
        let y = self.duals(Phase::Two);
        let mut dual_obj: f64 = (0..self.m).map(|i| y[i] * self.rhs[i]).sum();
        for j in 0..self.art_start {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let d = self.reduced_cost(Phase::Two, j, &y);
            if d > tol.optimality {
                if self.lower[j].is_finite() {
                    dual_obj += d * self.lower[j];
                } else {
                    return 0.0;
                }
            } else if d < -tol.optimality {
                if self.upper[j].is_finite() {
                    dual_obj += d * self.upper[j];
                } else {
                    return 0.0;
                }
            }
        }
        let primal: f64 = (0..self.art_start)
            .map(|j| self.phase_cost(Phase::Two, j) * self.value[j])
            .sum();
        (primal - dual_obj).abs() / (1.0 + primal.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::problem::{Cmp, LinearProgram, Sense, Tolerances};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn min_x_subject_to_x_ge_1() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 0.0, f64::INFINITY);
        lp.set_objective(x, 1.0);
        lp.add_constraint("c1", vec![(x, 1.0)], Cmp::Ge, 1.0);
        let res = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 1.0).abs() < 1e-9);
        assert!(res.gap < 1e-6);
    }

    #[test]
    fn infeasible_pair() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        lp.set_objective(x, 1.0);
        lp.add_constraint("c1", vec![(x, 1.0)], Cmp::Le, 0.0);
        lp.add_constraint("c2", vec![(x, 1.0)], Cmp::Ge, 1.0);
        let res = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        lp.set_objective(x, 1.0);
        lp.add_constraint("c1", vec![(x, 1.0)], Cmp::Le, 5.0);
        let res = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Unbounded);
    }

    #[test]
    fn maximization_and_upper_bounds() {
        // max 3x + 2y s.t. x + y ≤ 4, x ≤ 2, y ≤ 3, x,y ≥ 0 → (2,2) → 10.
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 0.0, 2.0);
        let y = lp.add_var("y", 0.0, 3.0);
        lp.set_objective(x, 3.0);
        lp.set_objective(y, 2.0);
        lp.add_constraint("cap", vec![(x, 1.0), (y, 1.0)], Cmp::Le, 4.0);
        let res = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 10.0).abs() < 1e-8);
        assert!((res.x[0] - 2.0).abs() < 1e-8 && (res.x[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn equality_and_free_variables() {
        // min |t| encoded as t = a − b, a,b ≥ 0, t free, t = −3.5.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let t = lp.add_var("t", f64::NEG_INFINITY, f64::INFINITY);
        let a = lp.add_var("a", 0.0, f64::INFINITY);
        let b = lp.add_var("b", 0.0, f64::INFINITY);
        lp.set_objective(a, 1.0);
        lp.set_objective(b, 1.0);
        lp.add_constraint("fix", vec![(t, 1.0)], Cmp::Eq, -3.5);
        lp.add_constraint("split", vec![(t, 1.0), (a, -1.0), (b, 1.0)], Cmp::Eq, 0.0);
        let res = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 3.5).abs() < 1e-8);
    }

    #[test]
    fn random_lps_match_corner_enumeration() {
        // Random 5-var LPs over box [0, 1]⁵ with 4 ≤-rows: the optimum of a
        // feasible bounded LP is attained at a vertex; compare against the
        // best feasible corner of the box plus active-set enumeration by
        // brute force sampling of basic solutions through corner scan.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..40 {
            let mut lp = LinearProgram::new(Sense::Minimize);
            let vars: Vec<usize> = (0..5)
                .map(|j| lp.add_var(alloc::format!("x{j}"), 0.0, 1.0))
                .collect();
            for &v in &vars {
                lp.set_objective(v, rng.random_range(-1.0..1.0));
            }
            for i in 0..4 {
                let coeffs: Vec<(usize, f64)> = vars
                    .iter()
                    .map(|&v| (v, rng.random_range(-1.0..1.0)))
                    .collect();
                lp.add_constraint(alloc::format!("r{i}"), coeffs, Cmp::Le, rng.random_range(0.5..2.0));
            }
            let res = solve_lp(&lp, &tol()).unwrap();
            assert_eq!(res.status, Status::Optimal, "trial {trial}");
            // The solution must be feasible and no box corner that is
            // feasible may beat it.
            for row in &lp.constraints {
                let lhs: f64 = row.coeffs.iter().map(|&(v, c)| c * res.x[v]).sum();
                assert!(lhs <= row.rhs + 1e-7);
            }
            let mut best_corner = f64::INFINITY;
            for mask in 0..(1u32 << 5) {
                let x: Vec<f64> = (0..5).map(|j| ((mask >> j) & 1) as f64).collect();
                let feasible = lp.constraints.iter().all(|row| {
                    row.coeffs.iter().map(|&(v, c)| c * x[v]).sum::<f64>() <= row.rhs + 1e-12
                });
                if feasible {
                    best_corner = best_corner.min(lp.objective_value(&x));
                }
            }
            assert!(
                res.objective <= best_corner + 1e-7,
                "trial {trial}: {} > {}",
                res.objective,
                best_corner
            );
        }
    }

    #[test]
    fn duality_gap_is_certified() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 0.0, 10.0);
        let y = lp.add_var("y", 0.0, 10.0);
        lp.set_objective(x, 2.0);
        lp.set_objective(y, 3.0);
        lp.add_constraint("c", vec![(x, 1.0), (y, 1.0)], Cmp::Ge, 4.0);
        let res = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 8.0).abs() < 1e-8);
        assert!(res.gap < 1e-6);
        // Dual of the covering row should be ≈ 2 (the cheaper coefficient).
        assert!((res.duals[0] - 2.0).abs() < 1e-6);
    }
}
