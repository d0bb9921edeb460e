//! Distributed gain design via collective positive detectability over
//! neighborhoods (CPDN).
//!
//! Each agent independently solves one tiny LP per state coordinate that
//! minimizes the comparison-matrix row sum it can achieve with its own
//! measurements. A single exchange round then checks that every
//! coordinate of every agent is covered by at least one neighbor whose
//! row is contractive; if so, the fixed selection `σ*` built from those
//! neighbors satisfies `‖σ*𝒜ₓ‖∞ < 1`. A second family of per-row LPs
//! re-optimizes the gains for noise sensitivity while keeping the
//! certified rows contractive.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::netsim::{execute_round, CommGraph};
use crate::observer::ObserverGains;
use crate::optim::{solve_lp, Cmp, LinearProgram, Sense, Status, Tolerances};
use crate::synthesis::error_system::SwitchingMatrix;
use crate::synthesis::AgentSynthesisData;
use crate::{Error, Result};

/// Strictness margin kept on contractive rows.
const ROW_MARGIN: f64 = 1e-6;

/// Outcome of the detectability exchange.
#[derive(Debug, Clone)]
pub struct CpdnCertificate {
    /// Contractive coordinate sets `𝕁ⁱ` (sorted).
    pub j_sets: Vec<Vec<usize>>,
    /// Candidate row-bound matrices `Pⁱ` published during the exchange
    /// (`Pⁱ_{s,t}` bounds `|𝒜ₓⁱ|_{s,t}` under agent `i`'s gains).
    pub row_bounds: Vec<DMatrix<f64>>,
    /// Chosen covering neighbor per `(i, s)`; `None` marks an uncovered row.
    pub nu: Vec<Vec<Option<usize>>>,
    /// `true` iff every row is covered.
    pub verified: bool,
    /// Uncovered `(agent, coordinate)` pairs.
    pub uncovered: Vec<(usize, usize)>,
}

fn merge_coeffs(map: BTreeMap<usize, f64>) -> Vec<(usize, f64)> {
    map.into_iter().filter(|&(_, c)| c != 0.0).collect()
}

fn majorant_pair(
    lp: &mut LinearProgram,
    name: &str,
    expr: &BTreeMap<usize, f64>,
    constant: f64,
    bound_var: usize,
) {
    let mut pos = expr.clone();
    *pos.entry(bound_var).or_insert(0.0) += -1.0;
    lp.add_constraint(format!("{name}p"), merge_coeffs(pos), Cmp::Le, -constant);
    let mut neg: BTreeMap<usize, f64> = expr.iter().map(|(&v, &c)| (v, -c)).collect();
    *neg.entry(bound_var).or_insert(0.0) += -1.0;
    lp.add_constraint(format!("{name}n"), merge_coeffs(neg), Cmp::Le, constant);
}

struct RowProblemVars {
    gam: Vec<usize>,
    ell: Vec<usize>,
    x: Vec<usize>,
    z: Vec<usize>,
}

/// Shared part of both per-row LPs: variables for one gain row plus the
/// majorants of `(TA − LC₂)_s` and `T_s`, with constants folded in
/// (`T_s = e_sᵀ − Γ_s C₂`).
fn row_problem_base(
    lp: &mut LinearProgram,
    d: &AgentSynthesisData,
    c2a: &DMatrix<f64>,
    s: usize,
) -> RowProblemVars {
    let n = d.n;
    let m = d.m;
    let gam: Vec<usize> = (0..m)
        .map(|r| lp.add_var(format!("g{r}"), f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    let ell: Vec<usize> = (0..m)
        .map(|r| lp.add_var(format!("l{r}"), f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    let x: Vec<usize> = (0..n)
        .map(|t| lp.add_var(format!("x{t}"), 0.0, f64::INFINITY))
        .collect();
    let z: Vec<usize> = (0..n)
        .map(|t| lp.add_var(format!("z{t}"), 0.0, f64::INFINITY))
        .collect();
    for t in 0..n {
        let mut expr = BTreeMap::new();
        for r in 0..m {
            *expr.entry(gam[r]).or_insert(0.0) += -c2a[(r, t)];
            *expr.entry(ell[r]).or_insert(0.0) += -d.c2[(r, t)];
        }
        majorant_pair(lp, &format!("mx{t}"), &expr, d.a[(s, t)], x[t]);
    }
    for t in 0..n {
        let mut expr = BTreeMap::new();
        for r in 0..m {
            *expr.entry(gam[r]).or_insert(0.0) += -d.c2[(r, t)];
        }
        let delta = if s == t { 1.0 } else { 0.0 };
        majorant_pair(lp, &format!("mz{t}"), &expr, delta, z[t]);
    }
    RowProblemVars { gam, ell, x, z }
}

/// Row-sum contribution coefficients of the contraction objective:
/// `Σ_t X_t + Σ_k Z_k (Σ_t F̄ρₓ)_{k}`.
fn contraction_terms(d: &AgentSynthesisData, rv: &RowProblemVars) -> Vec<(usize, f64)> {
    let n = d.n;
    let mut coeffs = Vec::with_capacity(2 * n);
    for t in 0..n {
        coeffs.push((rv.x[t], 1.0));
    }
    for k in 0..n {
        let fsum: f64 = (0..n).map(|t| d.f_rho_x[(k, t)]).sum();
        if fsum != 0.0 {
            coeffs.push((rv.z[k], fsum));
        }
    }
    coeffs
}

/// Per-agent contraction design: one LP per state coordinate minimizing
/// the achievable comparison row sum. Returns the gains and the row-bound
/// matrix `P` (`P_{s,t} = X*_t + (Z*F̄ρₓ)_t` for row `s`).
pub fn stabilize_lp(
    d: &AgentSynthesisData,
    tol: &Tolerances,
) -> Result<(ObserverGains, DMatrix<f64>)> {
    let n = d.n;
    let m = d.m;
    let c2a = &d.c2 * &d.a;
    let mut l = DMatrix::zeros(n, m);
    let mut g = DMatrix::zeros(n, m);
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let rv = row_problem_base(&mut lp, d, &c2a, s);
        for (v, c) in contraction_terms(d, &rv) {
            lp.set_objective(v, c);
        }
        let res = solve_lp(&lp, tol)?;
        if res.status != Status::Optimal {
            return Err(Error::Solver(format!(
                "row contraction LP did not solve for coordinate {s}"
            )));
        }
        for r in 0..m {
            g[(s, r)] = res.x[rv.gam[r]];
            l[(s, r)] = res.x[rv.ell[r]];
        }
        for t in 0..n {
            p[(s, t)] = res.x[rv.x[t]]
                + (0..n)
                    .map(|k| res.x[rv.z[k]] * d.f_rho_x[(k, t)])
                    .sum::<f64>();
        }
    }
    Ok((ObserverGains::new(l, g, &d.c2)?, p))
}

/// Runs the one-round detectability exchange: each agent publishes its
/// row-bound matrix, then picks, per coordinate, the lowest-index neighbor
/// whose corresponding row sum is below one.
pub fn cpdn_verify(
    row_bounds: &[DMatrix<f64>],
    graph: &CommGraph,
) -> Result<CpdnCertificate> {
    let n = row_bounds
        .first()
        .map(|p| p.nrows())
        .ok_or_else(|| Error::InvalidInput("no agents to verify".into()))?;
    if row_bounds.len() != graph.agent_count() {
        return Err(Error::Dimension(
            "one row-bound matrix per graph agent is required".into(),
        ));
    }
    let j_sets: Vec<Vec<usize>> = row_bounds
        .iter()
        .map(|p| {
            (0..n)
                .filter(|&s| (0..n).map(|t| p[(s, t)]).sum::<f64>() < 1.0)
                .collect()
        })
        .collect();

    let nu = execute_round(graph, row_bounds, |_, inbox| {
        let mut row = Vec::with_capacity(n);
        for s in 0..n {
            // Inboxes arrive in ascending neighbor order, so the first hit
            // is the lowest index.
            let pick = inbox
                .iter()
                .find(|(_, p)| (0..n).map(|t| p[(s, t)]).sum::<f64>() < 1.0)
                .map(|&(j, _)| j);
            row.push(pick);
        }
        Ok(row)
    })?;

    let mut uncovered = Vec::new();
    for (i, row) in nu.iter().enumerate() {
        for (s, pick) in row.iter().enumerate() {
            if pick.is_none() {
                uncovered.push((i, s));
            }
        }
    }
    Ok(CpdnCertificate {
        j_sets,
        row_bounds: row_bounds.to_vec(),
        verified: uncovered.is_empty(),
        nu,
        uncovered,
    })
}

/// Noise-minimizing redesign of one agent's gains: per row, minimize the
/// width contribution `(Π_w δ_w + Π_v δᵢ_v)_s` subject to keeping the rows
/// in `j_set` contractive. Returns the gains and the per-row objective
/// values.
pub fn error_min(
    d: &AgentSynthesisData,
    j_set: &[usize],
    tol: &Tolerances,
) -> Result<(ObserverGains, DVector<f64>)> {
    let n = d.n;
    let m = d.m;
    let nw = d.nw();
    let nv = d.nv();
    let c2a = &d.c2 * &d.a;
    let c2b = &d.c2 * &d.b;
    let c2phid1 = &d.c2 * &d.phi_d1;
    let g2m2d2 = &d.g2m2 * &d.d2;
    let c2g2m2d2 = &d.c2 * &g2m2d2;

    let mut l = DMatrix::zeros(n, m);
    let mut g = DMatrix::zeros(n, m);
    let mut levels = DVector::zeros(n);
    for s in 0..n {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let rv = row_problem_base(&mut lp, d, &c2a, s);
        let p1: Vec<usize> = (0..nw)
            .map(|u| lp.add_var(format!("p1_{u}"), 0.0, f64::INFINITY))
            .collect();
        let p2: Vec<usize> = (0..nv)
            .map(|u| lp.add_var(format!("p2_{u}"), 0.0, f64::INFINITY))
            .collect();
        let p3: Vec<usize> = (0..nv)
            .map(|u| lp.add_var(format!("p3_{u}"), 0.0, f64::INFINITY))
            .collect();

        // P1 ≥ ±(TB)_s.
        for u in 0..nw {
            let mut expr = BTreeMap::new();
            for r in 0..m {
                *expr.entry(rv.gam[r]).or_insert(0.0) += -c2b[(r, u)];
            }
            majorant_pair(&mut lp, &format!("m1{u}"), &expr, d.b[(s, u)], p1[u]);
        }
        // P2 ≥ ±(TΦD₁ + LD₂)_s.
        for u in 0..nv {
            let mut expr = BTreeMap::new();
            for r in 0..m {
                *expr.entry(rv.gam[r]).or_insert(0.0) += -c2phid1[(r, u)];
                *expr.entry(rv.ell[r]).or_insert(0.0) += d.d2[(r, u)];
            }
            majorant_pair(&mut lp, &format!("m2{u}"), &expr, d.phi_d1[(s, u)], p2[u]);
        }
        // P3 ≥ ±((TG₂M₂ + Γ)D₂)_s.
        for u in 0..nv {
            let mut expr = BTreeMap::new();
            for r in 0..m {
                *expr.entry(rv.gam[r]).or_insert(0.0) += -c2g2m2d2[(r, u)] + d.d2[(r, u)];
            }
            majorant_pair(&mut lp, &format!("m3{u}"), &expr, g2m2d2[(s, u)], p3[u]);
        }

        if j_set.contains(&s) {
            lp.add_constraint(
                "contract",
                contraction_terms(d, &rv),
                Cmp::Le,
                1.0 - ROW_MARGIN,
            );
        }

        // Objective: noise widths through the row.
        for u in 0..nw {
            lp.set_objective(p1[u], d.delta_w[u]);
        }
        for k in 0..n {
            let c: f64 = (0..nw).map(|u| d.f_rho_w[(k, u)] * d.delta_w[u]).sum();
            if c != 0.0 {
                lp.set_objective(rv.z[k], c);
            }
        }
        for u in 0..nv {
            lp.set_objective(p2[u], d.delta_v[u]);
            lp.set_objective(p3[u], d.delta_v[u]);
        }

        let res = solve_lp(&lp, tol)?;
        if res.status != Status::Optimal {
            return Err(Error::Solver(format!(
                "noise-minimization LP did not solve for coordinate {s}"
            )));
        }
        for r in 0..m {
            g[(s, r)] = res.x[rv.gam[r]];
            l[(s, r)] = res.x[rv.ell[r]];
        }
        levels[s] = res.objective;
    }
    Ok((ObserverGains::new(l, g, &d.c2)?, levels))
}

/// Builds the fixed selection `σ*` from a verified certificate.
pub fn build_sigma_star(cert: &CpdnCertificate) -> Result<SwitchingMatrix> {
    if !cert.verified {
        return Err(Error::Infeasible(format!(
            "{} error rows are not covered by any contractive neighbor",
            cert.uncovered.len()
        )));
    }
    Ok(SwitchingMatrix {
        row_choice: cert
            .nu
            .iter()
            .map(|row| row.iter().map(|p| p.unwrap()).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decouple::{svd_decouple, AgentSensing};
    use crate::interval::IntervalVector;
    use crate::jss::{FieldEval, JacobianBounds, VectorField};
    use crate::synthesis::central::agent_comparison_blocks;
    use alloc::sync::Arc;
    use alloc::vec;
    use nalgebra::dmatrix;

    fn toy_agent(
        a0: &DMatrix<f64>,
        b0: &DMatrix<f64>,
        c: DMatrix<f64>,
        g: DMatrix<f64>,
        noise_half: f64,
    ) -> AgentSynthesisData {
        let n = a0.nrows();
        let nw = b0.ncols();
        let (a1, b1) = (a0.clone(), b0.clone());
        let eval = FieldEval::Native(Arc::new(move |x: &DVector<f64>, w: &DVector<f64>| {
            &a1 * x + &b1 * w
        }));
        let field = VectorField::new(
            eval,
            IntervalVector::symmetric(&DVector::from_element(n, 2.0)).unwrap(),
            IntervalVector::symmetric(&DVector::from_element(nw, 0.1)).unwrap(),
            JacobianBounds::new(a0.clone(), a0.clone(), b0.clone(), b0.clone()).unwrap(),
        )
        .unwrap();
        let lrows = c.nrows();
        let sensing = AgentSensing::new(
            c,
            DMatrix::identity(lrows, lrows),
            DMatrix::zeros(lrows, g.ncols()),
            IntervalVector::symmetric(&DVector::from_element(lrows, noise_half)).unwrap(),
        )
        .unwrap();
        let sys = svd_decouple(sensing, &g).unwrap();
        AgentSynthesisData::new(&sys, &field).unwrap()
    }

    /// Two agents, each observing only one coordinate; coverage requires
    /// the neighbor's row for the unseen coordinate.
    fn split_instance() -> (Vec<AgentSynthesisData>, CommGraph) {
        let a0 = dmatrix![0.9, 0.2; 0.1, 0.85];
        let b0 = dmatrix![0.05; 0.05];
        let g = dmatrix![1.0; 1.0];
        let d0 = toy_agent(&a0, &b0, dmatrix![1.0, 0.0; 0.3, 1.0], g.clone(), 0.01);
        let d1 = toy_agent(&a0, &b0, dmatrix![0.0, 1.0; 1.0, 0.2], g, 0.01);
        let graph = CommGraph::from_adjacency(2, &[(0, 1)]).unwrap();
        (vec![d0, d1], graph)
    }

    #[test]
    fn stabilize_exchange_and_redesign_yield_contraction() {
        let (agents, graph) = split_instance();
        let tol = Tolerances::default();
        let mut bounds = Vec::new();
        for d in &agents {
            let (_, p) = stabilize_lp(d, &tol).unwrap();
            assert!(p.iter().all(|&v| v >= -1e-9), "row bounds must be nonnegative");
            bounds.push(p);
        }
        let cert = cpdn_verify(&bounds, &graph).unwrap();
        assert!(cert.verified, "uncovered rows: {:?}", cert.uncovered);
        let sigma = build_sigma_star(&cert).unwrap();
        assert!(sigma.respects(&graph));

        // Redesign for noise and confirm the selected rows stay
        // contractive under the *final* gains.
        let mut final_gains = Vec::new();
        for (d, js) in agents.iter().zip(&cert.j_sets) {
            let (gains, levels) = error_min(d, js, &tol).unwrap();
            assert!(levels.iter().all(|&v| v >= 0.0));
            final_gains.push(gains);
        }
        let blocks: Vec<DMatrix<f64>> = agents
            .iter()
            .zip(&final_gains)
            .map(|(d, g)| agent_comparison_blocks(d, g).0)
            .collect();
        let mut worst = 0.0f64;
        for (i, row) in sigma.row_choice.iter().enumerate() {
            for (s, &j) in row.iter().enumerate() {
                let rowsum: f64 = (0..agents[i].n).map(|t| blocks[j][(s, t)]).sum();
                worst = worst.max(rowsum);
            }
        }
        assert!(worst < 1.0, "selected rows must contract, got {worst}");
    }

    #[test]
    fn uncovered_rows_are_reported() {
        // Neither agent sees x₁ and it is marginally unstable.
        let a0 = dmatrix![1.05, 0.0; 0.0, 0.5];
        let b0 = dmatrix![0.05; 0.05];
        let g = dmatrix![0.0; 1.0];
        let c = dmatrix![0.0, 1.0];
        let d0 = toy_agent(&a0, &b0, c.clone(), g.clone(), 0.01);
        let d1 = toy_agent(&a0, &b0, c, g, 0.01);
        let graph = CommGraph::from_adjacency(2, &[(0, 1)]).unwrap();
        let tol = Tolerances::default();
        let bounds: Vec<DMatrix<f64>> = [&d0, &d1]
            .iter()
            .map(|d| stabilize_lp(d, &tol).unwrap().1)
            .collect();
        let cert = cpdn_verify(&bounds, &graph).unwrap();
        assert!(!cert.verified);
        assert!(cert.uncovered.contains(&(0, 0)) && cert.uncovered.contains(&(1, 0)));
        assert!(matches!(
            build_sigma_star(&cert).unwrap_err(),
            Error::Infeasible(_)
        ));
    }
}
