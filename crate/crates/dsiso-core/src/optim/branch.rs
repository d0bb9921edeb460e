//! Best-bound branch-and-bound over LP relaxations.
//!
//! Binary variables only. Declared one-hot groups are branched multi-way
//! (one child per member forced to 1), which matches the switching-matrix
//! structure of the synthesis problems; remaining binaries branch 0/1 on
//! the most fractional variable. Node selection is best-bound with ties
//! broken by creation order, so solves are deterministic.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;

use super::problem::{LinearProgram, Sense, SolveResult, Status, Tolerances};
use super::simplex::solve_lp_with_bounds;
#[allow(unused_imports)]
use nalgebra::ComplexField;

use crate::Result;

struct Node {
    lower: Vec<f64>,
    upper: Vec<f64>,
    bound: f64,
    seq: usize,
}

// Max-heap: order so that the best (smallest, in min-sense) bound pops
// first, ties by earliest creation.
impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Solves a binary MILP to proven optimality (relative gap below the
/// configured tolerance) or returns the best incumbent on hitting limits.
pub fn solve_milp(lp: &LinearProgram, tol: &Tolerances) -> Result<SolveResult> {
    lp.validate()?;
    if !lp.has_binaries() {
        return solve_lp_with_bounds(lp, &lp.lower, &lp.upper, tol);
    }
    // Work in min-sense internally.
    let flip = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let root = solve_lp_with_bounds(lp, &lp.lower, &lp.upper, tol)?;
    match root.status {
        Status::Infeasible => return Ok(root),
        Status::Unbounded => return Ok(root),
        _ => {}
    }
    let mut incumbent: Option<SolveResult> = None;
    let mut incumbent_val = f64::INFINITY;
    let mut nodes_explored = 1usize;

    let root_bound = flip * root.objective;
    if let Some(res) = integral_candidate(lp, root, tol) {
        // Root relaxation already integral.
        let mut res = res;
        res.node_count = 1;
        res.gap = 0.0;
        return Ok(res);
    }
    heap.push(Node {
        lower: lp.lower.clone(),
        upper: lp.upper.clone(),
        bound: root_bound,
        seq,
    });

    let mut status = Status::Optimal;
    while let Some(node) = heap.pop() {
        // Global best bound is this node's bound (best-bound order).
        if node.bound >= incumbent_val - tol.optimality * (1.0 + incumbent_val.abs()) {
            break; // proven optimal
        }
        if nodes_explored >= tol.max_nodes {
            status = Status::Limit;
            break;
        }

        let relax = solve_lp_with_bounds(lp, &node.lower, &node.upper, tol)?;
        nodes_explored += 1;
        match relax.status {
            Status::Infeasible => continue,
            Status::Unbounded => {
                // A bounded-binary MILP with unbounded relaxation: report.
                return Ok(relax);
            }
            Status::Limit => {
                status = Status::Limit;
                continue;
            }
            Status::Optimal => {}
        }
        let bound = flip * relax.objective;
        if bound >= incumbent_val - tol.optimality * (1.0 + incumbent_val.abs()) {
            continue;
        }
        if let Some(cand) = integral_candidate(lp, relax.clone(), tol) {
            let val = flip * cand.objective;
            if val < incumbent_val {
                incumbent_val = val;
                incumbent = Some(cand);
            }
            continue;
        }

        // Branch: prefer the one-hot group with the most fractional mass.
        let frac = |v: usize| {
            let x = relax.x[v];
            (x - x.round()).abs()
        };
        let mut group_pick: Option<(usize, f64)> = None;
        for (gi, group) in lp.one_hot_groups.iter().enumerate() {
            let score: f64 = group.iter().map(|&v| frac(v)).sum();
            if score > tol.integrality {
                match group_pick {
                    Some((_, best)) if score <= best => {}
                    _ => group_pick = Some((gi, score)),
                }
            }
        }
        if let Some((gi, _)) = group_pick {
            let group = &lp.one_hot_groups[gi];
            for &v in group {
                // Child: v = 1, all other members 0.
                let mut lo = node.lower.clone();
                let mut hi = node.upper.clone();
                if node.upper[v] < 0.5 {
                    continue; // already excluded
                }
                for &o in group {
                    if o == v {
                        lo[o] = 1.0;
                        hi[o] = 1.0;
                    } else {
                        lo[o] = 0.0;
                        hi[o] = 0.0;
                    }
                }
                seq += 1;
                heap.push(Node {
                    lower: lo,
                    upper: hi,
                    bound,
                    seq,
                });
            }
        } else {
            // Plain binary branching on the most fractional variable.
            let mut pick: Option<(usize, f64)> = None;
            for v in 0..lp.num_vars() {
                if lp.binary[v] {
                    let f = frac(v);
                    if f > tol.integrality {
                        match pick {
                            Some((_, best)) if f <= best => {}
                            _ => pick = Some((v, f)),
                        }
                    }
                }
            }
            let (v, _) = pick.expect("non-integral relaxation must have a fractional binary");
            for fixed in [0.0, 1.0] {
                let mut lo = node.lower.clone();
                let mut hi = node.upper.clone();
                lo[v] = fixed;
                hi[v] = fixed;
                seq += 1;
                heap.push(Node {
                    lower: lo,
                    upper: hi,
                    bound,
                    seq,
                });
            }
        }
    }

    match incumbent {
        Some(mut res) => {
            let best_bound = heap
                .peek()
                .map(|n| n.bound)
                .unwrap_or(incumbent_val)
                .min(incumbent_val);
            res.node_count = nodes_explored;
            res.gap = ((incumbent_val - best_bound).abs()) / (1.0 + incumbent_val.abs());
            res.status = if status == Status::Limit && res.gap > tol.optimality {
                Status::Limit
            } else {
                Status::Optimal
            };
            Ok(res)
        }
        None => Ok(SolveResult {
            status: if status == Status::Limit {
                Status::Limit
            } else {
                Status::Infeasible
            },
            objective: f64::NAN,
            x: vec![],
            duals: vec![],
            node_count: nodes_explored,
            gap: f64::INFINITY,
        }),
    }
}

/// If all binaries are integral within tolerance, round them exactly and
/// return the result as an incumbent candidate.
fn integral_candidate(
    lp: &LinearProgram,
    mut res: SolveResult,
    tol: &Tolerances,
) -> Option<SolveResult> {
    for v in 0..lp.num_vars() {
        if lp.binary[v] {
            let x = res.x[v];
            if (x - x.round()).abs() > tol.integrality {
                return None;
            }
        }
    }
    for v in 0..lp.num_vars() {
        if lp.binary[v] {
            res.x[v] = res.x[v].round();
        }
    }
    res.objective = lp.objective_value(&res.x);
    Some(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::problem::{Cmp, LinearProgram, Sense, Tolerances};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn knapsack_toy_matches_enumeration() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c ≤ 4.
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_binary("a");
        let b = lp.add_binary("b");
        let c = lp.add_binary("c");
        lp.set_objective(a, 5.0);
        lp.set_objective(b, 4.0);
        lp.set_objective(c, 3.0);
        lp.add_constraint("w", vec![(a, 2.0), (b, 3.0), (c, 1.0)], Cmp::Le, 4.0);
        let res = solve_milp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Optimal);
        // Enumerate all 8 assignments.
        let mut best = f64::NEG_INFINITY;
        for mask in 0..8u32 {
            let x: Vec<f64> = (0..3).map(|j| ((mask >> j) & 1) as f64).collect();
            if 2.0 * x[0] + 3.0 * x[1] + x[2] <= 4.0 {
                best = best.max(lp.objective_value(&x));
            }
        }
        assert!((res.objective - best).abs() < 1e-8);
        assert!(res.gap <= 1e-6);
    }

    #[test]
    fn all_binaries_fixed_equals_lp() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let a = lp.add_binary("a");
        let x = lp.add_var("x", 0.0, 10.0);
        lp.set_objective(x, 1.0);
        lp.add_constraint("link", vec![(x, 1.0), (a, -3.0)], Cmp::Ge, 0.0);
        // Fix a = 1 via bounds.
        lp.lower[a] = 1.0;
        let res = solve_milp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 3.0).abs() < 1e-8);
    }

    #[test]
    fn one_hot_group_branches_multiway() {
        // Pick exactly one of three options, each enabling a different cost
        // floor: min y s.t. y ≥ 4 s1 + 2 s2 + 7 s3, Σ s = 1.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let s: Vec<usize> = (0..3).map(|i| lp.add_binary(alloc::format!("s{i}"))).collect();
        let y = lp.add_var("y", 0.0, f64::INFINITY);
        lp.set_objective(y, 1.0);
        lp.add_one_hot_group("pick", s.clone());
        lp.add_constraint(
            "floor",
            vec![(y, 1.0), (s[0], -4.0), (s[1], -2.0), (s[2], -7.0)],
            Cmp::Ge,
            0.0,
        );
        let res = solve_milp(&lp, &tol()).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 2.0).abs() < 1e-8);
        assert!((res.x[s[1]] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn random_small_milps_match_exhaustive() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for trial in 0..25 {
            let nb = 6usize;
            let mut lp = LinearProgram::new(Sense::Minimize);
            let bins: Vec<usize> = (0..nb).map(|i| lp.add_binary(alloc::format!("b{i}"))).collect();
            let y = lp.add_var("y", -50.0, 50.0);
            lp.set_objective(y, 1.0);
            for &b in &bins {
                lp.set_objective(b, rng.random_range(-2.0..2.0));
            }
            // y ≥ Σ cᵢ bᵢ (two random covering rows).
            for r in 0..2 {
                let mut coeffs = vec![(y, 1.0)];
                for &b in &bins {
                    coeffs.push((b, -rng.random_range(-3.0..3.0)));
                }
                lp.add_constraint(alloc::format!("r{r}"), coeffs, Cmp::Ge, rng.random_range(-1.0..1.0));
            }
            let res = solve_milp(&lp, &tol()).unwrap();
            assert_eq!(res.status, Status::Optimal, "trial {trial}");

            // Exhaustive oracle over 64 assignments with the LP solved for y.
            let mut best = f64::INFINITY;
            for mask in 0..(1u32 << nb) {
                let xb: Vec<f64> = (0..nb).map(|j| ((mask >> j) & 1) as f64).collect();
                // y must exceed each row's implied floor.
                let mut y_min = -50.0f64;
                for row in &lp.constraints {
                    let mut rest = 0.0;
                    for &(v, c) in &row.coeffs {
                        if v != y {
                            rest += c * xb[v];
                        }
                    }
                    // row: y + rest ≥ rhs → y ≥ rhs − rest.
                    y_min = y_min.max(row.rhs - rest);
                }
                if y_min <= 50.0 {
                    let mut obj = y_min;
                    for (j, &b) in bins.iter().enumerate() {
                        let c = lp
                            .objective
                            .iter()
                            .find(|(v, _)| *v == b)
                            .map(|&(_, c)| c)
                            .unwrap_or(0.0);
                        obj += c * xb[j];
                    }
                    best = best.min(obj);
                }
            }
            assert!(
                (res.objective - best).abs() < 1e-6,
                "trial {trial}: milp {} vs oracle {}",
                res.objective,
                best
            );
        }
    }
}
