//! Centralized gain design: a mixed-integer program over the neighbor
//! switching matrix and weighted gain variables.
//!
//! With the positivity certificate restricted to a replicated diagonal
//! weighting `P = I_N ⊗ diag(q)`, the products between `diag(q)`-scaled
//! gains and the selection variables linearize exactly: for a fixed
//! selection the problem is an LP in `q`, `Γ̃ʲ = diag(q)Γʲ`,
//! `L̃ʲ = diag(q)Lʲ` and entrywise majorants `X, Z, W` of
//! `T̃A − L̃C₂`, `T̃` and `Ψ̃`. Only the *count matrix*
//! `c_{j,s} = #{i : ν_{i,s} = j}` of a selection enters that LP, so the
//! branch-and-bound over selection rows memoizes node relaxations by
//! partial counts (rows not yet assigned simply contribute nothing, which
//! is a valid relaxation because every contribution is nonnegative).
//!
//! The same problem is also available as an explicit big-M formulation
//! with one-hot binaries for file export and for cross-checking the
//! structured search on small instances.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::interval::SignSplitMatrix;
use crate::netsim::CommGraph;
use crate::observer::ObserverGains;
use crate::optim::{solve_lp, Cmp, LinearProgram, Sense, SolveResult, Status, Tolerances};
use crate::synthesis::error_system::{spectral_radius, SwitchingMatrix};
use crate::synthesis::{AgentSynthesisData, SynthesisSolution};
use crate::{Error, Result};

/// Knobs of the centralized design problem. The variable boxes are part of
/// the problem definition (they bound the big-M constants), so the
/// structured search, the explicit export and the enumeration oracle all
/// share them.
#[derive(Debug, Clone)]
pub struct MilpConfig {
    /// Box on the weighted gain entries `Γ̃`, `L̃`.
    pub gain_box: f64,
    /// Upper bound on the diagonal weights `q`.
    pub q_max: f64,
    /// Strictness margin of the stability and noise rows.
    pub epsilon: f64,
    /// LP solver tolerances for node relaxations.
    pub tol: Tolerances,
    /// Node budget of the structured branch-and-bound.
    pub max_nodes: usize,
}

impl Default for MilpConfig {
    fn default() -> Self {
        Self {
            gain_box: 1e3,
            q_max: 1e3,
            epsilon: 1e-6,
            tol: Tolerances::default(),
            max_nodes: 500_000,
        }
    }
}

/// Gain-independent matrix products reused by every node LP.
struct AgentProducts {
    c2a: DMatrix<f64>,
    c2b: DMatrix<f64>,
    c2phid1: DMatrix<f64>,
    g2m2d2: DMatrix<f64>,
    c2g2m2d2: DMatrix<f64>,
}

fn products(d: &AgentSynthesisData) -> AgentProducts {
    let g2m2d2 = &d.g2m2 * &d.d2;
    AgentProducts {
        c2a: &d.c2 * &d.a,
        c2b: &d.c2 * &d.b,
        c2phid1: &d.c2 * &d.phi_d1,
        c2g2m2d2: &d.c2 * &g2m2d2,
        g2m2d2,
    }
}

/// Variable indices of one design-LP row block `(j, s)`. Each majorant
/// entry is a nonnegative pair `(p, n)` with `p − n` pinned to the
/// underlying expression, so `p + n` over-bounds its absolute value (and
/// equals it at any optimum that pressures the sum down).
struct RowVars {
    gt: Vec<usize>,
    lt: Vec<usize>,
    x: Vec<(usize, usize)>,
    z: Vec<(usize, usize)>,
    w: Vec<(usize, usize)>,
}

struct VarMap {
    q: Vec<usize>,
    gamma: usize,
    /// Per agent: coordinate `s` → its variable block (only instantiated
    /// rows are present).
    rows: Vec<BTreeMap<usize, RowVars>>,
    /// Per future row: candidate `(j, λ-variable)` routing weights.
    lam: Vec<Vec<(usize, usize)>>,
}

fn merge_coeffs(map: BTreeMap<usize, f64>) -> Vec<(usize, f64)> {
    map.into_iter().filter(|&(_, c)| c != 0.0).collect()
}

/// Pins `p − n = expr + constant` with fresh `p, n ≥ 0` and returns the
/// pair; `p + n` then majorizes `|expr + constant|` (one equality row
/// instead of two inequalities — half the constraint count).
fn majorant_split(
    lp: &mut LinearProgram,
    name: &str,
    expr: &BTreeMap<usize, f64>,
    constant: f64,
) -> (usize, usize) {
    let p = lp.add_var(format!("{name}p"), 0.0, f64::INFINITY);
    let nvar = lp.add_var(format!("{name}n"), 0.0, f64::INFINITY);
    let mut row = expr.clone();
    *row.entry(p).or_insert(0.0) += -1.0;
    *row.entry(nvar).or_insert(0.0) += 1.0;
    lp.add_constraint(format!("{name}e"), merge_coeffs(row), Cmp::Eq, -constant);
    (p, nvar)
}

/// Instantiates the variable block and the majorant rows for one `(j, s)`
/// design row, returning the block's indices.
///
/// Every defining expression is homogeneous of degree one in
/// `(q_s, Γ̃_s, L̃_s)`, so the same block encodes a *count-scaled* copy:
/// with `qterm = (v, α)` the weight enters as `α·v` (e.g. `v = q_s`,
/// `α = c` for a fixed count `c`, or `v = qc_{j,s}` for a product
/// variable `qc = c·q_s` when the count is fractional), and the gain
/// variables then stand for count-scaled gains bounded by `gain_cap`.
fn add_row_block(
    lp: &mut LinearProgram,
    d: &AgentSynthesisData,
    pr: &AgentProducts,
    qterm: (usize, f64),
    gain_cap: f64,
    j: usize,
    s: usize,
) -> RowVars {
    let n = d.n;
    let m = d.m;
    let nw = d.nw();
    let nv = d.nv();
    let eta = nw + 2 * nv;
    let (qvar, qscale) = qterm;
    let gt: Vec<usize> = (0..m)
        .map(|r| lp.add_var(format!("gt_{j}_{s}_{r}"), -gain_cap, gain_cap))
        .collect();
    let lt: Vec<usize> = (0..m)
        .map(|r| lp.add_var(format!("lt_{j}_{s}_{r}"), -gain_cap, gain_cap))
        .collect();

    // X ≥ ±(T̃A − L̃C₂) row s: entries q_s A_{s,t} − Γ̃_s(C₂A)_t − L̃_s(C₂)_t.
    let mut x = Vec::with_capacity(n);
    for t in 0..n {
        let mut expr = BTreeMap::new();
        expr.insert(qvar, qscale * d.a[(s, t)]);
        for r in 0..m {
            *expr.entry(gt[r]).or_insert(0.0) += -pr.c2a[(r, t)];
            *expr.entry(lt[r]).or_insert(0.0) += -d.c2[(r, t)];
        }
        x.push(majorant_split(lp, &format!("mx_{j}_{s}_{t}"), &expr, 0.0));
    }
    // Z ≥ ±T̃ row s: q_s δ_{s,t} − Γ̃_s(C₂)_t.
    let mut z = Vec::with_capacity(n);
    for t in 0..n {
        let mut expr = BTreeMap::new();
        if s == t {
            expr.insert(qvar, qscale);
        }
        for r in 0..m {
            *expr.entry(gt[r]).or_insert(0.0) += -d.c2[(r, t)];
        }
        z.push(majorant_split(lp, &format!("mz_{j}_{s}_{t}"), &expr, 0.0));
    }
    // W ≥ ±Ψ̃ row s, with Ψ̃ = [T̃B | −(T̃ΦD₁ + L̃D₂) | −(T̃G₂M₂ + Γ̃)D₂].
    let mut w = Vec::with_capacity(eta);
    for u in 0..eta {
        let mut expr = BTreeMap::new();
        if u < nw {
            expr.insert(qvar, qscale * d.b[(s, u)]);
            for r in 0..m {
                *expr.entry(gt[r]).or_insert(0.0) += -pr.c2b[(r, u)];
            }
        } else if u < nw + nv {
            let u2 = u - nw;
            expr.insert(qvar, qscale * d.phi_d1[(s, u2)]);
            for r in 0..m {
                *expr.entry(gt[r]).or_insert(0.0) += -pr.c2phid1[(r, u2)];
                *expr.entry(lt[r]).or_insert(0.0) += d.d2[(r, u2)];
            }
        } else {
            let u2 = u - nw - nv;
            expr.insert(qvar, qscale * pr.g2m2d2[(s, u2)]);
            for r in 0..m {
                *expr.entry(gt[r]).or_insert(0.0) += -pr.c2g2m2d2[(r, u2)] + d.d2[(r, u2)];
            }
        }
        w.push(majorant_split(lp, &format!("mw_{j}_{s}_{u}"), &expr, 0.0));
    }
    RowVars { gt, lt, x, z, w }
}

/// Rows not yet assigned by the search: each future row `(i, s)` must
/// eventually land on one `j ∈ 𝒩ᵢ`.
struct FutureLoad<'a> {
    rows: &'a [(usize, usize)],
    graph: &'a CommGraph,
}

/// Builds the design LP for a fixed (possibly partial) count matrix
/// `counts[j][s]`; blocks with a zero count are not instantiated.
///
/// With a `FutureLoad`, still-unassigned rows are routed fractionally:
/// per-row convex weights λ extend the block counts to affine
/// expressions `c = c̄ + Σλ`, and the count-scaled blocks stay linear
/// because every defining expression is homogeneous in `(q_s, gains)` —
/// the only genuine product, `qc = c·q_s`, is relaxed by its McCormick
/// envelope and pinned exactly in aggregate by
/// `Σ_j qc_{j,s} = N·q_s` (each agent owns exactly one row per
/// coordinate). Every completion of the partial assignment is feasible
/// here with integral λ, so the optimum is a valid lower bound; with no
/// future rows the program is the exact fixed-count design LP.
fn build_design_lp(
    agents: &[AgentSynthesisData],
    prods: &[AgentProducts],
    counts: &[Vec<u32>],
    future: Option<&FutureLoad<'_>>,
    cfg: &MilpConfig,
) -> (LinearProgram, VarMap) {
    let n = agents[0].n;
    let n_agents = agents.len();
    let eps = cfg.epsilon;
    let gbox = cfg.gain_box;
    let (qlo, qhi) = (1.0 + eps, cfg.q_max);
    let mut lp = LinearProgram::new(Sense::Minimize);
    let q: Vec<usize> = (0..n)
        .map(|t| lp.add_var(format!("q_{t}"), qlo, qhi))
        .collect();
    let gamma = lp.add_var("gamma", eps, f64::INFINITY);
    lp.set_objective(gamma, 1.0);

    // Routing weights per future row, grouped by the receiving (j, s).
    let mut lam_of: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n]; n_agents];
    let mut lam_rows: Vec<Vec<(usize, usize)>> = Vec::new();
    if let Some(fut) = future {
        for (f, &(i, s)) in fut.rows.iter().enumerate() {
            let mut one_hot = Vec::new();
            let mut cands = Vec::new();
            for &j in fut.graph.neighborhood(i) {
                let lam = lp.add_var(format!("fl_{f}_{j}"), 0.0, 1.0);
                one_hot.push((lam, 1.0));
                lam_of[j][s].push(lam);
                cands.push((j, lam));
            }
            lp.add_constraint(format!("fr_{f}"), one_hot, Cmp::Eq, 1.0);
            lam_rows.push(cands);
        }
    }

    let mut rows: Vec<BTreeMap<usize, RowVars>> = Vec::with_capacity(n_agents);
    // Per coordinate: aggregate `qc` terms and the fixed-count q-weight
    // for the exact product cut.
    let mut agg_qc: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut agg_fixed: Vec<f64> = vec![0.0; n];
    for (j, d) in agents.iter().enumerate() {
        let mut blocks = BTreeMap::new();
        for s in 0..n {
            let clo = counts[j][s] as f64;
            let lams = &lam_of[j][s];
            let lmax = lams.len() as f64;
            let chi = clo + lmax;
            if chi == 0.0 {
                continue;
            }
            if lams.is_empty() {
                // Purely integral count: qc ≡ c̄·q_s, gains scale with c̄.
                agg_fixed[s] += clo;
                blocks.insert(
                    s,
                    add_row_block(&mut lp, d, &prods[j], (q[s], clo), gbox * clo, j, s),
                );
                continue;
            }
            // Fractional count c = c̄ + Σλ: product variable qc = c·q_s
            // with its McCormick envelope over q ∈ [qlo, qhi],
            // c ∈ [c̄, c̄ + Σmax].
            let qc = lp.add_var(format!("qc_{j}_{s}"), qlo * clo, qhi * chi);
            agg_qc[s].push((qc, 1.0));
            let mc = |lp: &mut LinearProgram,
                      tag: &str,
                      qcoef: f64,
                      lcoef: f64,
                      cmp: Cmp,
                      rhs: f64| {
                let mut coeffs = vec![(qc, 1.0), (q[s], -qcoef)];
                coeffs.extend(lams.iter().map(|&l| (l, -lcoef)));
                lp.add_constraint(format!("mc{tag}_{j}_{s}"), coeffs, cmp, rhs);
            };
            mc(&mut lp, "a", clo, qlo, Cmp::Ge, 0.0);
            mc(&mut lp, "b", chi, qhi, Cmp::Ge, -qhi * lmax);
            mc(&mut lp, "c", chi, qlo, Cmp::Le, -qlo * lmax);
            mc(&mut lp, "d", clo, qhi, Cmp::Le, 0.0);
            let rv = add_row_block(&mut lp, d, &prods[j], (qc, 1.0), gbox * chi, j, s);
            // Count-scaled gain caps: |g̃| ≤ gbox·(c̄ + Σλ).
            for &g in rv.gt.iter().chain(rv.lt.iter()) {
                for (tag, sign) in [("p", 1.0), ("n", -1.0)] {
                    let mut coeffs = vec![(g, sign)];
                    coeffs.extend(lams.iter().map(|&l| (l, -gbox)));
                    lp.add_constraint(
                        format!("gc{tag}_{g}"),
                        coeffs,
                        Cmp::Le,
                        gbox * clo,
                    );
                }
            }
            blocks.insert(s, rv);
        }
        rows.push(blocks);
    }
    if future.is_some() {
        for s in 0..n {
            let mut coeffs = agg_qc[s].clone();
            coeffs.push((q[s], agg_fixed[s] - n_agents as f64));
            lp.add_constraint(format!("agg_{s}"), coeffs, Cmp::Eq, 0.0);
        }
    }

    for (j, d) in agents.iter().enumerate() {
        if rows[j].is_empty() {
            continue;
        }
        let nw = d.nw();
        let eta = nw + 2 * d.nv();
        // Stability: Σ_s (X̃_{s,t} + (Z̃F̄_x)_{s,t}) + 1 + ε ≤ q_t, with
        // the blocks already count-scaled (vacuously true at zero load
        // since q_t ≥ 1 + ε).
        for t in 0..n {
            let mut expr = BTreeMap::new();
            for rv in rows[j].values() {
                let (xp, xn) = rv.x[t];
                *expr.entry(xp).or_insert(0.0) += 1.0;
                *expr.entry(xn).or_insert(0.0) += 1.0;
                for k in 0..n {
                    let (zp, zn) = rv.z[k];
                    *expr.entry(zp).or_insert(0.0) += d.f_rho_x[(k, t)];
                    *expr.entry(zn).or_insert(0.0) += d.f_rho_x[(k, t)];
                }
            }
            *expr.entry(q[t]).or_insert(0.0) += -1.0;
            lp.add_constraint(
                format!("st_{j}_{t}"),
                merge_coeffs(expr),
                Cmp::Le,
                -(1.0 + eps),
            );
        }
        // Noise: Σ_s (W̃_{s,u} + (Z̃F̄_w)_{s,u}) + ε ≤ γ.
        for u in 0..eta {
            let mut expr = BTreeMap::new();
            for rv in rows[j].values() {
                let (wp, wn) = rv.w[u];
                *expr.entry(wp).or_insert(0.0) += 1.0;
                *expr.entry(wn).or_insert(0.0) += 1.0;
                if u < nw {
                    for k in 0..n {
                        let (zp, zn) = rv.z[k];
                        *expr.entry(zp).or_insert(0.0) += d.f_rho_w[(k, u)];
                        *expr.entry(zn).or_insert(0.0) += d.f_rho_w[(k, u)];
                    }
                }
            }
            *expr.entry(gamma).or_insert(0.0) += -1.0;
            lp.add_constraint(format!("ns_{j}_{u}"), merge_coeffs(expr), Cmp::Le, -eps);
        }
    }

    (lp, VarMap { q, gamma, rows, lam: lam_rows })
}

fn solve_counts(
    agents: &[AgentSynthesisData],
    prods: &[AgentProducts],
    counts: &[Vec<u32>],
    future: Option<&FutureLoad<'_>>,
    cfg: &MilpConfig,
) -> Result<Option<(SolveResult, VarMap)>> {
    let (lp, map) = build_design_lp(agents, prods, counts, future, cfg);
    let res = solve_lp(&lp, &cfg.tol)?;
    match res.status {
        Status::Optimal => Ok(Some((res, map))),
        Status::Infeasible => Ok(None),
        Status::Unbounded => Err(Error::Solver(
            "design relaxation reported unbounded; the problem is bounded by construction".into(),
        )),
        Status::Limit => Err(Error::Solver(
            "LP iteration limit reached in a design relaxation".into(),
        )),
    }
}

fn counts_from_choices(choices: &[usize], agents: usize, n: usize) -> Vec<Vec<u32>> {
    let mut counts = vec![vec![0u32; n]; agents];
    for (r, &j) in choices.iter().enumerate() {
        counts[j][r % n] += 1;
    }
    counts
}

fn sigma_from_choices(choices: &[usize], agents: usize, n: usize) -> SwitchingMatrix {
    SwitchingMatrix {
        row_choice: (0..agents)
            .map(|i| choices[i * n..(i + 1) * n].to_vec())
            .collect(),
    }
}

/// Per-agent comparison blocks `(𝒜ʲ, ℬʲ)` of the error dynamics under
/// concrete gains: `𝒜 = |TA − LC₂| + |T|F̄ρₓ` and
/// `ℬ = |Ψ| + [|T|F̄ρ_w, 0, 0]`.
pub fn agent_comparison_blocks(
    d: &AgentSynthesisData,
    g: &ObserverGains,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = d.n;
    let nw = d.nw();
    let nv = d.nv();
    let t_abs = SignSplitMatrix::new(&g.t).abs().clone();
    let a_tilde = &g.t * &d.a - &g.l * &d.c2;
    let a_blk = SignSplitMatrix::new(&a_tilde).abs() + &t_abs * &d.f_rho_x;

    let mut psi = DMatrix::zeros(n, nw + 2 * nv);
    psi.view_mut((0, 0), (n, nw)).copy_from(&(&g.t * &d.b));
    psi.view_mut((0, nw), (n, nv))
        .copy_from(&(-(&g.t * &d.phi_d1 + &g.l * &d.d2)));
    psi.view_mut((0, nw + nv), (n, nv))
        .copy_from(&(-((&g.t * &d.g2m2 + &g.gamma) * &d.d2)));
    let mut b_blk = SignSplitMatrix::new(&psi).abs().clone();
    let extra = &t_abs * &d.f_rho_w;
    for u in 0..nw {
        for s in 0..n {
            b_blk[(s, u)] += extra[(s, u)];
        }
    }
    (a_blk, b_blk)
}

/// Dense `σ𝒜` over the stacked error, built from per-agent blocks.
pub fn sigma_a_dense(blocks: &[DMatrix<f64>], sigma: &SwitchingMatrix) -> DMatrix<f64> {
    let n = sigma.coords();
    let agents = sigma.agents();
    let mut out = DMatrix::zeros(agents * n, agents * n);
    for (i, row) in sigma.row_choice.iter().enumerate() {
        for (s, &j) in row.iter().enumerate() {
            for t in 0..n {
                out[(i * n + s, j * n + t)] = blocks[j][(s, t)];
            }
        }
    }
    out
}

/// Noise-gain verification LP for a *fixed* switching matrix and fixed
/// gains: minimize `γ` over a positive weighting `p` with
/// `pᵀ(σ𝒜)_t − p_t ≤ −1` per state column and `(pᵀσℬ)_u ≤ γ − 1e−6` per
/// noise column. With `replicated = true` the weighting is restricted to
/// `p = 1_N ⊗ q`, matching the centralized design problem.
pub fn fixed_sigma_lp(
    a_blocks: &[DMatrix<f64>],
    b_blocks: &[DMatrix<f64>],
    sigma: &SwitchingMatrix,
    replicated: bool,
    tol: &Tolerances,
) -> Result<(f64, DVector<f64>)> {
    let agents = a_blocks.len();
    if agents == 0 || b_blocks.len() != agents || sigma.agents() != agents {
        return Err(Error::Dimension(
            "block lists and switching matrix must agree on the agent count".into(),
        ));
    }
    let n = a_blocks[0].nrows();
    if sigma.coords() != n || a_blocks.iter().any(|a| a.shape() != (n, n)) {
        return Err(Error::Dimension(
            "comparison blocks must be square and match the switching matrix".into(),
        ));
    }

    let mut lp = LinearProgram::new(Sense::Minimize);
    let p_vars: Vec<usize> = if replicated {
        (0..n)
            .map(|s| lp.add_var(format!("q_{s}"), 1e-6, f64::INFINITY))
            .collect()
    } else {
        (0..agents * n)
            .map(|r| lp.add_var(format!("p_{r}"), 1e-6, f64::INFINITY))
            .collect()
    };
    let p_of = |i: usize, s: usize| if replicated { p_vars[s] } else { p_vars[i * n + s] };
    let gamma = lp.add_var("gamma", 0.0, f64::INFINITY);
    lp.set_objective(gamma, 1.0);

    // Rows of σ𝒜 grouped by selected agent: (i, s) contributes the row
    // (𝒜^{ν})_{s,·} in ν's column block.
    for j in 0..agents {
        let selectors: Vec<(usize, usize)> = sigma
            .row_choice
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |&(_, &v)| v == j)
                    .map(move |(s, _)| (i, s))
            })
            .collect();
        if selectors.is_empty() {
            continue;
        }
        for t in 0..n {
            let mut expr = BTreeMap::new();
            for &(i, s) in &selectors {
                *expr.entry(p_of(i, s)).or_insert(0.0) += a_blocks[j][(s, t)];
            }
            *expr.entry(p_of(j, t)).or_insert(0.0) += -1.0;
            lp.add_constraint(format!("st_{j}_{t}"), merge_coeffs(expr), Cmp::Le, -1.0);
        }
        for u in 0..b_blocks[j].ncols() {
            let mut expr = BTreeMap::new();
            for &(i, s) in &selectors {
                *expr.entry(p_of(i, s)).or_insert(0.0) += b_blocks[j][(s, u)];
            }
            *expr.entry(gamma).or_insert(0.0) += -1.0;
            lp.add_constraint(format!("ns_{j}_{u}"), merge_coeffs(expr), Cmp::Le, -1e-6);
        }
    }

    let res = solve_lp(&lp, tol)?;
    match res.status {
        Status::Optimal => {
            let p = if replicated {
                DVector::from_fn(agents * n, |r, _| res.x[p_vars[r % n]])
            } else {
                DVector::from_fn(agents * n, |r, _| res.x[p_vars[r]])
            };
            Ok((res.objective, p))
        }
        Status::Infeasible => Err(Error::Infeasible(
            "no positive weighting certifies the fixed switching matrix".into(),
        )),
        _ => Err(Error::Solver("verification LP did not converge".into())),
    }
}

/// All switching matrices compatible with the graph (cartesian product of
/// closed neighborhoods per row). Intended for small cross-check
/// instances; refuses to build more than `limit` matrices.
pub fn enumerate_sigmas(
    graph: &CommGraph,
    n: usize,
    limit: usize,
) -> Result<Vec<SwitchingMatrix>> {
    let agents = graph.agent_count();
    let mut total: usize = 1;
    for i in 0..agents {
        for _ in 0..n {
            total = total.saturating_mul(graph.neighborhood(i).len());
            if total > limit {
                return Err(Error::InvalidInput(format!(
                    "switching-matrix enumeration would exceed {limit} instances"
                )));
            }
        }
    }
    let mut out = Vec::with_capacity(total);
    let mut choices = vec![0usize; agents * n];
    loop {
        let resolved: Vec<usize> = choices
            .iter()
            .enumerate()
            .map(|(r, &idx)| graph.neighborhood(r / n)[idx])
            .collect();
        out.push(sigma_from_choices(&resolved, agents, n));
        // Odometer increment over the per-row neighborhood sizes.
        let mut pos = 0;
        loop {
            if pos == choices.len() {
                return Ok(out);
            }
            choices[pos] += 1;
            if choices[pos] < graph.neighborhood(pos / n).len() {
                break;
            }
            choices[pos] = 0;
            pos += 1;
        }
    }
}

/// Design-LP value for one fixed switching matrix (the enumeration
/// oracle's per-σ subproblem).
pub fn design_value_for_sigma(
    agents: &[AgentSynthesisData],
    sigma: &SwitchingMatrix,
    cfg: &MilpConfig,
) -> Result<f64> {
    let prods: Vec<AgentProducts> = agents.iter().map(products).collect();
    let n = agents[0].n;
    let flat: Vec<usize> = sigma.row_choice.iter().flatten().copied().collect();
    let counts = counts_from_choices(&flat, agents.len(), n);
    match solve_counts(agents, &prods, &counts, None, cfg)? {
        Some((res, _)) => Ok(res.objective),
        None => Err(Error::Infeasible(
            "fixed switching matrix admits no stabilizing gains".into(),
        )),
    }
}

struct Node {
    bound: f64,
    /// Whether `bound` is this node's own relaxation value (true) or one
    /// inherited from cheaper estimates (false, still a valid lower bound).
    evaluated: bool,
    seq: usize,
    /// Chosen neighbor per *branching position* (rows are branched in a
    /// hardest-first order, not in row order).
    choices: Vec<usize>,
    /// Flattened count matrix `counts[j][s]` at `j * n + s`.
    key: Vec<u32>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap → invert: smallest bound pops first, FIFO tie-break.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Solves the centralized design problem to proven optimality.
///
/// Branches over the stacked error coordinates `(i, s)`, assigning each
/// to a neighbor `j ∈ 𝒩ᵢ`. Node relaxations are design LPs over partial
/// count matrices; since a node's subproblem depends only on its counts
/// and depth (and depth is the count sum), nodes are deduplicated by
/// count key and LP values are memoized by the same key. Rows are
/// branched hardest-first (by their best single-row relaxation value),
/// and those single-row values double as lower-bound floors — both for
/// the row just assigned and for every row still open — so bounds rise
/// long before full depth. LPs are spent lazily, only when a node is
/// popped as the current best bound. The distributed design seeds the
/// incumbent; the search is best-bound with a gap trajectory recorded in
/// the returned solution.
pub fn centralized_milp(
    agents: &[AgentSynthesisData],
    graph: &CommGraph,
    cfg: &MilpConfig,
) -> Result<SynthesisSolution> {
    let n_agents = agents.len();
    if n_agents == 0 || graph.agent_count() != n_agents {
        return Err(Error::Dimension(
            "one synthesis-data entry per graph agent is required".into(),
        ));
    }
    let n = agents[0].n;
    if agents.iter().any(|d| d.n != n) {
        return Err(Error::Dimension("agents disagree on state dimension".into()));
    }
    let prods: Vec<AgentProducts> = agents.iter().map(products).collect();
    let nrows = n_agents * n;

    // Single-row relaxations: a row (i, s) assigned to j forces
    // γ ≥ γ₁[j][s] under any completion, so min_{j ∈ 𝒩ᵢ} γ₁ is a floor
    // for the row. The floors drive the branch order and prune children
    // whose own singleton is already infeasible.
    let mut singleton: BTreeMap<(usize, usize), Option<f64>> = BTreeMap::new();
    let mut row_floor = vec![0.0f64; nrows];
    for r in 0..nrows {
        let (i, s) = (r / n, r % n);
        let mut best = f64::INFINITY;
        for &j in graph.neighborhood(i) {
            let v = match singleton.get(&(j, s)) {
                Some(&v) => v,
                None => {
                    let mut counts = vec![vec![0u32; n]; n_agents];
                    counts[j][s] = 1;
                    let v = solve_counts(agents, &prods, &counts, None, cfg)?
                        .map(|(res, _)| res.objective);
                    singleton.insert((j, s), v);
                    v
                }
            };
            if let Some(v) = v {
                best = best.min(v);
            }
        }
        if best.is_infinite() {
            return Err(Error::Infeasible(format!(
                "no neighbor of agent {i} admits stabilizing gains for coordinate {s}"
            )));
        }
        row_floor[r] = best;
    }
    // Coordinate-major, hardest coordinate first: completing an entire
    // coordinate's rows early makes the partial relaxation include that
    // coordinate's full load, so bounds bind long before full depth.
    let mut coord_weight = vec![0.0f64; n];
    for r in 0..nrows {
        coord_weight[r % n] += row_floor[r];
    }
    let mut order: Vec<usize> = (0..nrows).collect();
    order.sort_by(|&a, &b| {
        coord_weight[b % n]
            .total_cmp(&coord_weight[a % n])
            .then_with(|| row_floor[b].total_cmp(&row_floor[a]))
    });
    // floor_from[pos]: best floor among rows still unassigned at `pos`
    // (a suffix maximum, trivial here because the order is descending).
    let mut floor_from = vec![f64::NEG_INFINITY; nrows + 1];
    for pos in (0..nrows).rev() {
        floor_from[pos] = floor_from[pos + 1].max(row_floor[order[pos]]);
    }
    // Branch-position choices → row-ordered flat choices.
    let resolve = |pos_choices: &[usize]| -> Vec<usize> {
        let mut flat = vec![0usize; nrows];
        for (p, &j) in pos_choices.iter().enumerate() {
            flat[order[p]] = j;
        }
        flat
    };

    // Node relaxation value for a count key. The key's sum is the node
    // depth, which fixes the set of still-unassigned rows; those enter
    // the LP as fractional future load. At full depth the value is the
    // exact design-LP objective.
    let mut memo: BTreeMap<Vec<u32>, Option<f64>> = BTreeMap::new();
    let mut lp_solves = 0usize;
    let value_of = |key: &[u32],
                        memo: &mut BTreeMap<Vec<u32>, Option<f64>>,
                        lp_solves: &mut usize|
     -> Result<Option<f64>> {
        if let Some(v) = memo.get(key) {
            return Ok(*v);
        }
        *lp_solves += 1;
        let counts: Vec<Vec<u32>> = key.chunks(n).map(|c| c.to_vec()).collect();
        let depth: u32 = key.iter().sum();
        let fut_rows: Vec<(usize, usize)> = order[depth as usize..]
            .iter()
            .map(|&r| (r / n, r % n))
            .collect();
        let fut = FutureLoad {
            rows: &fut_rows,
            graph,
        };
        let v = solve_counts(agents, &prods, &counts, Some(&fut), cfg)?
            .map(|(res, _)| res.objective);
        memo.insert(key.to_vec(), v);
        Ok(v)
    };
    let key_of = |counts: &[Vec<u32>]| -> Vec<u32> { counts.iter().flatten().copied().collect() };
    // Rounding dive: route every unassigned row to its largest relaxation
    // routing weight and price the completed assignment exactly (a single
    // memoized full-depth LP). Keeps the incumbent near the frontier so
    // push-time pruning engages.
    let round_dive = |res: &SolveResult,
                      map: &VarMap,
                      prefix: &[usize],
                      memo: &mut BTreeMap<Vec<u32>, Option<f64>>,
                      lp_solves: &mut usize|
     -> Result<Option<(Vec<usize>, f64)>> {
        let mut choices = prefix.to_vec();
        for cands in &map.lam {
            let &(j, _) = cands
                .iter()
                .max_by(|a, b| res.x[a.1].total_cmp(&res.x[b.1]))
                .expect("future rows always have routing candidates");
            choices.push(j);
        }
        let flat = resolve(&choices);
        let key = key_of(&counts_from_choices(&flat, n_agents, n));
        Ok(value_of(&key, memo, lp_solves)?.map(|v| (flat, v)))
    };

    // Incumbent seed: the distributed design produces a graph-respecting
    // switching matrix from cheap per-agent LPs; pricing it with one
    // design LP gives a strong initial upper bound.
    let mut incumbent_val = f64::INFINITY;
    let mut incumbent: Option<Vec<usize>> = None;
    let seeded: Result<Vec<usize>> = (|| {
        let mut row_bounds = Vec::with_capacity(n_agents);
        for d in agents {
            row_bounds.push(super::cpdn::stabilize_lp(d, &cfg.tol)?.1);
        }
        let cert = super::cpdn::cpdn_verify(&row_bounds, graph)?;
        let sigma = super::cpdn::build_sigma_star(&cert)?;
        Ok(sigma.row_choice.iter().flatten().copied().collect())
    })();
    if let Ok(choices) = seeded {
        let key = key_of(&counts_from_choices(&choices, n_agents, n));
        if let Some(v) = value_of(&key, &mut memo, &mut lp_solves)? {
            incumbent_val = v;
            incumbent = Some(choices);
        }
    }

    let mut gap_log: Vec<(usize, f64, f64)> = Vec::new();
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut enqueued: alloc::collections::BTreeSet<Vec<u32>> = alloc::collections::BTreeSet::new();
    let mut seq = 0usize;
    let root_key = vec![0u32; nrows];
    #[cfg(feature = "solver-trace")]
    eprintln!(
        "bnb: singletons done, lps {lp_solves}, incumbent {incumbent_val:.6}"
    );
    let root_fut: Vec<(usize, usize)> = order.iter().map(|&r| (r / n, r % n)).collect();
    lp_solves += 1;
    let Some((root_res, root_map)) = solve_counts(
        agents,
        &prods,
        &vec![vec![0u32; n]; n_agents],
        Some(&FutureLoad {
            rows: &root_fut,
            graph,
        }),
        cfg,
    )?
    else {
        return Err(Error::Infeasible(
            "the design problem is infeasible even without selection load".into(),
        ));
    };
    let root = root_res.objective;
    memo.insert(root_key.clone(), Some(root));
    if let Some((flat, v)) = round_dive(&root_res, &root_map, &[], &mut memo, &mut lp_solves)? {
        if v < incumbent_val {
            incumbent_val = v;
            incumbent = Some(flat);
        }
    }
    #[cfg(feature = "solver-trace")]
    eprintln!(
        "bnb: root bound {root:.6}, floor {:.6}, incumbent {incumbent_val:.6}",
        floor_from[0]
    );
    enqueued.insert(root_key.clone());
    heap.push(Node {
        bound: root.max(floor_from[0]),
        evaluated: true,
        seq,
        choices: Vec::new(),
        key: root_key,
    });

    // Best-bound search with lazy relaxations: children inherit the
    // parent's bound (plus their assigned row's singleton floor) and are
    // only priced with their own LP when popped, so LPs are spent
    // exclusively on nodes that could still be best. Deduplication by
    // count key collapses all permutations of equivalent assignments.
    let gap_eps = |inc: f64| 1e-7 * (1.0 + inc.abs());
    let mut nodes = 0usize;
    let mut next_dive = 0usize;
    let mut proven_bound = f64::NEG_INFINITY;
    while let Some(node) = heap.pop() {
        nodes += 1;
        proven_bound = proven_bound.max(node.bound);
        if nodes % 64 == 0 {
            gap_log.push((nodes, proven_bound, incumbent_val));
        }
        #[cfg(feature = "solver-trace")]
        if nodes % 8 == 0 {
            eprintln!(
                "bnb: nodes {nodes} depth {} heap {} lps {lp_solves} bound {proven_bound:.6} inc {incumbent_val:.6}",
                node.choices.len(),
                heap.len()
            );
        }
        if incumbent_val.is_finite() && node.bound >= incumbent_val - gap_eps(incumbent_val) {
            proven_bound = incumbent_val;
            break;
        }
        if nodes > cfg.max_nodes {
            return Err(Error::Solver(format!(
                "node budget exhausted: bound {proven_bound:.6e}, incumbent {incumbent_val:.6e}"
            )));
        }
        if !node.evaluated {
            let v = if let Some(&v) = memo.get(&node.key) {
                v
            } else {
                lp_solves += 1;
                let counts: Vec<Vec<u32>> = node.key.chunks(n).map(|c| c.to_vec()).collect();
                let fut_rows: Vec<(usize, usize)> = order[node.choices.len()..]
                    .iter()
                    .map(|&r| (r / n, r % n))
                    .collect();
                let fut = FutureLoad {
                    rows: &fut_rows,
                    graph,
                };
                let sol = solve_counts(agents, &prods, &counts, Some(&fut), cfg)?;
                let v = sol.as_ref().map(|(res, _)| res.objective);
                memo.insert(node.key.clone(), v);
                if let Some((res, map)) = &sol {
                    if let Some((flat, dv)) =
                        round_dive(res, map, &node.choices, &mut memo, &mut lp_solves)?
                    {
                        if dv < incumbent_val {
                            incumbent_val = dv;
                            incumbent = Some(flat);
                            gap_log.push((nodes, proven_bound, incumbent_val));
                        }
                    }
                }
                v
            };
            let Some(v) = v else {
                continue; // infeasible partial counts stay infeasible
            };
            seq += 1;
            heap.push(Node {
                bound: v.max(node.bound),
                evaluated: true,
                seq,
                choices: node.choices,
                key: node.key,
            });
            continue;
        }
        let pos = node.choices.len();
        if pos == nrows {
            if node.bound < incumbent_val {
                incumbent_val = node.bound;
                incumbent = Some(resolve(&node.choices));
                gap_log.push((nodes, proven_bound, incumbent_val));
            }
            continue;
        }
        let r = order[pos];
        let (i, s) = (r / n, r % n);
        for &j in graph.neighborhood(i) {
            // A child whose own singleton is infeasible cannot complete.
            let Some(g1) = singleton[&(j, s)] else {
                continue;
            };
            let bound = node.bound.max(g1);
            if incumbent_val.is_finite() && bound >= incumbent_val - gap_eps(incumbent_val) {
                continue; // cannot improve the incumbent
            }
            let mut key = node.key.clone();
            key[j * n + s] += 1;
            if !enqueued.insert(key.clone()) {
                continue;
            }
            seq += 1;
            let mut choices = node.choices.clone();
            choices.push(j);
            heap.push(Node {
                bound,
                evaluated: false,
                seq,
                choices,
                key,
            });
        }
    }
    gap_log.push((nodes, proven_bound, incumbent_val));

    let choices = incumbent.ok_or_else(|| {
        Error::Infeasible("no switching matrix admits collectively stabilizing gains".into())
    })?;
    finish_solution(agents, &prods, graph, &choices, cfg, gap_log)
}

fn finish_solution(
    agents: &[AgentSynthesisData],
    prods: &[AgentProducts],
    graph: &CommGraph,
    choices: &[usize],
    cfg: &MilpConfig,
    gap_log: Vec<(usize, f64, f64)>,
) -> Result<SynthesisSolution> {
    let n_agents = agents.len();
    let n = agents[0].n;
    let counts = counts_from_choices(choices, n_agents, n);
    let (res, map) = solve_counts(agents, prods, &counts, None, cfg)?.ok_or_else(|| {
        Error::Solver("optimal counts no longer solvable on re-solve".into())
    })?;
    let q = DVector::from_fn(n, |t, _| res.x[map.q[t]]);
    let gamma_star = res.x[map.gamma];

    let mut gains = Vec::with_capacity(n_agents);
    for (j, d) in agents.iter().enumerate() {
        let mut l = DMatrix::zeros(n, d.m);
        let mut g = DMatrix::zeros(n, d.m);
        for (&s, rv) in &map.rows[j] {
            // Blocks carry count-scaled weighted gains: g̃ = c·q_s·gain.
            let scale = counts[j][s] as f64 * q[s];
            for r in 0..d.m {
                l[(s, r)] = res.x[rv.lt[r]] / scale;
                g[(s, r)] = res.x[rv.gt[r]] / scale;
            }
        }
        gains.push(ObserverGains::new(l, g, &d.c2)?);
    }

    let sigma = sigma_from_choices(choices, n_agents, n);
    if !sigma.respects(graph) {
        return Err(Error::Solver(
            "selected switching matrix violates the communication graph".into(),
        ));
    }

    let blocks: Vec<(DMatrix<f64>, DMatrix<f64>)> = agents
        .iter()
        .zip(&gains)
        .map(|(d, g)| agent_comparison_blocks(d, g))
        .collect();
    let a_blocks: Vec<DMatrix<f64>> = blocks.iter().map(|(a, _)| a.clone()).collect();

    // Certificate re-check on the true (non-majorant) blocks.
    let p = DVector::from_fn(n_agents * n, |r, _| q[r % n]);
    let check_tol = 1e-6 * (1.0 + q.amax());
    for j in 0..n_agents {
        let selectors: Vec<(usize, usize)> = sigma
            .row_choice
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |&(_, &v)| v == j)
                    .map(move |(s, _)| (i, s))
            })
            .collect();
        for t in 0..n {
            let lhs: f64 = selectors
                .iter()
                .map(|&(_, s)| q[s] * blocks[j].0[(s, t)])
                .sum();
            if lhs > q[t] - 1.0 + check_tol {
                return Err(Error::Solver(format!(
                    "stability certificate violated at agent {j}, column {t}"
                )));
            }
        }
        for u in 0..blocks[j].1.ncols() {
            let lhs: f64 = selectors
                .iter()
                .map(|&(_, s)| q[s] * blocks[j].1[(s, u)])
                .sum();
            if lhs > gamma_star + check_tol {
                return Err(Error::Solver(format!(
                    "noise certificate violated at agent {j}, column {u}"
                )));
            }
        }
    }

    let rho_star = spectral_radius(&sigma_a_dense(&a_blocks, &sigma))?;
    Ok(SynthesisSolution {
        gains,
        gamma_star: Some(gamma_star),
        sigma_star: sigma,
        rho_star,
        p: Some(p),
        gap_log,
    })
}

/// Explicit big-M / one-hot formulation of the same design problem, for
/// LP-file export and independent cross-checks via the generic
/// branch-and-bound. Identical variable boxes make its optimum coincide
/// with the structured search.
pub fn export_milp(
    agents: &[AgentSynthesisData],
    graph: &CommGraph,
    cfg: &MilpConfig,
) -> Result<LinearProgram> {
    let n_agents = agents.len();
    if n_agents == 0 || graph.agent_count() != n_agents {
        return Err(Error::Dimension(
            "one synthesis-data entry per graph agent is required".into(),
        ));
    }
    let n = agents[0].n;
    let eps = cfg.epsilon;
    let gbox = cfg.gain_box;
    let prods: Vec<AgentProducts> = agents.iter().map(products).collect();

    let mut lp = LinearProgram::new(Sense::Minimize);
    let q: Vec<usize> = (0..n)
        .map(|t| lp.add_var(format!("q_{t}"), 1.0 + eps, cfg.q_max))
        .collect();
    let gamma = lp.add_var("gamma", eps, f64::INFINITY);
    lp.set_objective(gamma, 1.0);

    // Entrywise upper bounds on the majorants, implied by the variable
    // boxes; they double as big-M constants.
    let colabs = |m: &DMatrix<f64>, c: usize| -> f64 { (0..m.nrows()).map(|r| m[(r, c)].abs()).sum() };
    let mut rowvars: Vec<Vec<RowVars>> = Vec::with_capacity(n_agents);
    let mut ua: Vec<DMatrix<f64>> = Vec::with_capacity(n_agents);
    let mut ub: Vec<DMatrix<f64>> = Vec::with_capacity(n_agents);
    for (j, d) in agents.iter().enumerate() {
        let pr = &prods[j];
        let nw = d.nw();
        let nv = d.nv();
        let eta = nw + 2 * nv;
        let mut ux = DMatrix::zeros(n, n);
        let mut uz = DMatrix::zeros(n, n);
        let mut uw = DMatrix::zeros(n, eta);
        for s in 0..n {
            for t in 0..n {
                ux[(s, t)] = cfg.q_max * d.a[(s, t)].abs()
                    + gbox * (colabs(&pr.c2a, t) + colabs(&d.c2, t));
                uz[(s, t)] =
                    if s == t { cfg.q_max } else { 0.0 } + gbox * colabs(&d.c2, t);
            }
            for u in 0..eta {
                uw[(s, u)] = if u < nw {
                    cfg.q_max * d.b[(s, u)].abs() + gbox * colabs(&pr.c2b, u)
                } else if u < nw + nv {
                    let u2 = u - nw;
                    cfg.q_max * d.phi_d1[(s, u2)].abs()
                        + gbox * (colabs(&pr.c2phid1, u2) + colabs(&d.d2, u2))
                } else {
                    let u2 = u - nw - nv;
                    cfg.q_max * pr.g2m2d2[(s, u2)].abs()
                        + gbox * (colabs(&pr.c2g2m2d2, u2) + colabs(&d.d2, u2))
                };
            }
        }
        let mut rows = Vec::with_capacity(n);
        for s in 0..n {
            let rv = add_row_block(&mut lp, d, pr, (q[s], 1.0), gbox, j, s);
            // Cap the majorant pair components so the big-M constants stay
            // valid (each component alone never needs to exceed the entry
            // bound, so the pair sum is at most twice it).
            for t in 0..n {
                lp.upper[rv.x[t].0] = ux[(s, t)];
                lp.upper[rv.x[t].1] = ux[(s, t)];
                lp.upper[rv.z[t].0] = uz[(s, t)];
                lp.upper[rv.z[t].1] = uz[(s, t)];
            }
            for u in 0..eta {
                lp.upper[rv.w[u].0] = uw[(s, u)];
                lp.upper[rv.w[u].1] = uw[(s, u)];
            }
            rows.push(rv);
        }
        let mut ua_j = DMatrix::zeros(n, n);
        let mut ub_j = DMatrix::zeros(n, eta);
        for s in 0..n {
            for t in 0..n {
                ua_j[(s, t)] = 2.0
                    * (ux[(s, t)]
                        + (0..n).map(|k| uz[(s, k)] * d.f_rho_x[(k, t)]).sum::<f64>());
            }
            for u in 0..eta {
                ub_j[(s, u)] = 2.0
                    * (uw[(s, u)]
                        + if u < nw {
                            (0..n).map(|k| uz[(s, k)] * d.f_rho_w[(k, u)]).sum::<f64>()
                        } else {
                            0.0
                        });
            }
        }
        rowvars.push(rows);
        ua.push(ua_j);
        ub.push(ub_j);
    }

    // Selection binaries with one-hot rows, and linearization variables
    // y ≥ (selected contribution).
    let mut stab_terms: Vec<Vec<Vec<(usize, f64)>>> =
        (0..n_agents).map(|_| vec![Vec::new(); n]).collect();
    let mut noise_terms: Vec<Vec<Vec<(usize, f64)>>> = agents
        .iter()
        .map(|d| vec![Vec::new(); d.nw() + 2 * d.nv()])
        .collect();
    for i in 0..n_agents {
        for s in 0..n {
            let members: Vec<usize> = graph
                .neighborhood(i)
                .iter()
                .map(|&j| lp.add_binary(format!("sig_{i}_{s}_{j}")))
                .collect();
            lp.add_one_hot_group(format!("oh_{i}_{s}"), members.clone());
            for (&j, &sig) in graph.neighborhood(i).iter().zip(&members) {
                let d = &agents[j];
                let rv = &rowvars[j][s];
                for t in 0..n {
                    let m_big = ua[j][(s, t)];
                    let y = lp.add_var(format!("ya_{i}_{s}_{j}_{t}"), 0.0, m_big);
                    let mut expr: BTreeMap<usize, f64> = BTreeMap::new();
                    expr.insert(rv.x[t].0, 1.0);
                    expr.insert(rv.x[t].1, 1.0);
                    for k in 0..n {
                        *expr.entry(rv.z[k].0).or_insert(0.0) += d.f_rho_x[(k, t)];
                        *expr.entry(rv.z[k].1).or_insert(0.0) += d.f_rho_x[(k, t)];
                    }
                    *expr.entry(sig).or_insert(0.0) += m_big;
                    *expr.entry(y).or_insert(0.0) += -1.0;
                    lp.add_constraint(
                        format!("la_{i}_{s}_{j}_{t}"),
                        merge_coeffs(expr),
                        Cmp::Le,
                        m_big,
                    );
                    stab_terms[j][t].push((y, 1.0));
                }
                let eta = d.nw() + 2 * d.nv();
                for u in 0..eta {
                    let m_big = ub[j][(s, u)];
                    let y = lp.add_var(format!("yb_{i}_{s}_{j}_{u}"), 0.0, m_big);
                    let mut expr: BTreeMap<usize, f64> = BTreeMap::new();
                    expr.insert(rv.w[u].0, 1.0);
                    expr.insert(rv.w[u].1, 1.0);
                    if u < d.nw() {
                        for k in 0..n {
                            *expr.entry(rv.z[k].0).or_insert(0.0) += d.f_rho_w[(k, u)];
                            *expr.entry(rv.z[k].1).or_insert(0.0) += d.f_rho_w[(k, u)];
                        }
                    }
                    *expr.entry(sig).or_insert(0.0) += m_big;
                    *expr.entry(y).or_insert(0.0) += -1.0;
                    lp.add_constraint(
                        format!("lb_{i}_{s}_{j}_{u}"),
                        merge_coeffs(expr),
                        Cmp::Le,
                        m_big,
                    );
                    noise_terms[j][u].push((y, 1.0));
                }
            }
        }
    }
    for j in 0..n_agents {
        for t in 0..n {
            let mut coeffs = stab_terms[j][t].clone();
            coeffs.push((q[t], -1.0));
            lp.add_constraint(format!("st_{j}_{t}"), coeffs, Cmp::Le, -(1.0 + eps));
        }
        for (u, terms) in noise_terms[j].iter().enumerate() {
            let mut coeffs = terms.clone();
            coeffs.push((gamma, -1.0));
            lp.add_constraint(format!("ns_{j}_{u}"), coeffs, Cmp::Le, -eps);
        }
    }
    lp.validate()?;
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decouple::{svd_decouple, AgentSensing};
    use crate::interval::IntervalVector;
    use crate::jss::{FieldEval, JacobianBounds, VectorField};
    use crate::optim::solve_milp;
    use alloc::sync::Arc;
    use nalgebra::dmatrix;

    fn linear_field(
        a0: DMatrix<f64>,
        b0: DMatrix<f64>,
        x_half: f64,
        w_half: f64,
    ) -> VectorField {
        let n = a0.nrows();
        let nw = b0.ncols();
        let (a1, b1) = (a0.clone(), b0.clone());
        let eval = FieldEval::Native(Arc::new(move |x: &DVector<f64>, w: &DVector<f64>| {
            &a1 * x + &b1 * w
        }));
        VectorField::new(
            eval,
            IntervalVector::symmetric(&DVector::from_element(n, x_half)).unwrap(),
            IntervalVector::symmetric(&DVector::from_element(nw, w_half)).unwrap(),
            JacobianBounds::new(a0.clone(), a0, b0.clone(), b0).unwrap(),
        )
        .unwrap()
    }

    fn toy_agent(
        a0: &DMatrix<f64>,
        b0: &DMatrix<f64>,
        c: DMatrix<f64>,
        g: DMatrix<f64>,
        noise_half: f64,
    ) -> AgentSynthesisData {
        let l = c.nrows();
        let field = linear_field(a0.clone(), b0.clone(), 2.0, 0.1);
        let sensing = AgentSensing::new(
            c,
            DMatrix::identity(l, l),
            DMatrix::zeros(l, g.ncols()),
            IntervalVector::symmetric(&DVector::from_element(l, noise_half)).unwrap(),
        )
        .unwrap();
        let sys = svd_decouple(sensing, &g).unwrap();
        AgentSynthesisData::new(&sys, &field).unwrap()
    }

    fn two_agent_instance() -> (Vec<AgentSynthesisData>, CommGraph) {
        let a0 = dmatrix![0.9, 0.3; 0.1, 0.8];
        let b0 = dmatrix![0.1; 0.05];
        let g = dmatrix![1.0; 0.0];
        let d0 = toy_agent(&a0, &b0, DMatrix::identity(2, 2), g.clone(), 0.01);
        let d1 = toy_agent(&a0, &b0, dmatrix![1.0, 0.4], g, 0.02);
        let graph = CommGraph::from_adjacency(2, &[(0, 1)]).unwrap();
        (vec![d0, d1], graph)
    }

    #[test]
    fn structured_search_matches_enumeration_and_bigm() {
        let (agents, graph) = two_agent_instance();
        let cfg = MilpConfig::default();
        let sol = centralized_milp(&agents, &graph, &cfg).unwrap();
        let gamma = sol.gamma_star.unwrap();

        // Oracle: enumerate every switching matrix and solve its LP.
        let mut best = f64::INFINITY;
        for sigma in enumerate_sigmas(&graph, 2, 10_000).unwrap() {
            if let Ok(v) = design_value_for_sigma(&agents, &sigma, &cfg) {
                best = best.min(v);
            }
        }
        assert!(
            (gamma - best).abs() <= 1e-6 * (1.0 + best.abs()),
            "structured {gamma} vs enumeration {best}"
        );

        // Cross-check against the explicit big-M formulation.
        let lp = export_milp(&agents, &graph, &cfg).unwrap();
        let res = solve_milp(&lp, &cfg.tol).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!(
            (res.objective - best).abs() <= 1e-5 * (1.0 + best.abs()),
            "big-M {} vs enumeration {best}",
            res.objective
        );
        assert!(sol.rho_star < 1.0, "rho_star = {}", sol.rho_star);
        assert!(!sol.gap_log.is_empty());
    }

    #[test]
    fn fixed_sigma_certificate_is_consistent() {
        let (agents, graph) = two_agent_instance();
        let cfg = MilpConfig::default();
        let sol = centralized_milp(&agents, &graph, &cfg).unwrap();
        let gamma = sol.gamma_star.unwrap();
        let blocks: Vec<(DMatrix<f64>, DMatrix<f64>)> = agents
            .iter()
            .zip(&sol.gains)
            .map(|(d, g)| agent_comparison_blocks(d, g))
            .collect();
        let a: Vec<DMatrix<f64>> = blocks.iter().map(|(x, _)| x.clone()).collect();
        let b: Vec<DMatrix<f64>> = blocks.iter().map(|(_, x)| x.clone()).collect();
        let (g_rep, p_rep) =
            fixed_sigma_lp(&a, &b, &sol.sigma_star, true, &cfg.tol).unwrap();
        let (g_free, _) = fixed_sigma_lp(&a, &b, &sol.sigma_star, false, &cfg.tol).unwrap();
        assert!(g_rep <= gamma + 1e-6, "{g_rep} vs {gamma}");
        assert!(g_free <= g_rep + 1e-6, "{g_free} vs {g_rep}");
        assert!(p_rep.min() > 0.0);
    }

    #[test]
    fn undetectable_mode_is_infeasible() {
        // x₁ is unstable and completely unobserved by either agent.
        let a0 = dmatrix![1.2, 0.0; 0.0, 0.5];
        let b0 = dmatrix![0.1; 0.05];
        let g = dmatrix![0.0; 1.0];
        let c = dmatrix![0.0, 1.0];
        let d0 = toy_agent(&a0, &b0, c.clone(), g.clone(), 0.01);
        let d1 = toy_agent(&a0, &b0, c, g, 0.01);
        let graph = CommGraph::from_adjacency(2, &[(0, 1)]).unwrap();
        let err = centralized_milp(&[d0, d1], &graph, &MilpConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err:?}");
    }
}
