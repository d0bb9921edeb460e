//! Communication graph and synchronous round execution.
//!
//! The network is a fixed undirected graph; each estimation round is a
//! barrier-synchronized exchange: every agent publishes its payload, then
//! every agent consumes the payloads of its *closed* neighborhood (itself
//! included) in sender-index order. This in-process fabric guarantees that
//! no payload ever crosses a non-edge and that rounds are deterministic.

use alloc::string::ToString;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::{Error, Result};

/// An undirected communication graph over `N` agents with closed
/// neighborhoods (`i ∈ 𝒩ᵢ` always).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    /// Sorted closed neighborhoods.
    neighborhoods: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds the graph from a Laplacian-like integer matrix: symmetric,
    /// zero row sums, off-diagonal entries in `{0, ±1}` (either sign
    /// convention is accepted). `j ∈ 𝒩ᵢ` iff `L_ij ≠ 0` or `j = i`.
    pub fn from_laplacian(l: &DMatrix<f64>) -> Result<Self> {
        let n = l.nrows();
        if l.ncols() != n {
            return Err(Error::Dimension("Laplacian must be square".to_string()));
        }
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                row_sum += l[(i, j)];
                if (l[(i, j)] - l[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(
                        "Laplacian must be symmetric".to_string(),
                    ));
                }
                if i != j && l[(i, j)] != 0.0 && l[(i, j)].abs() != 1.0 {
                    return Err(Error::InvalidInput(
                        "off-diagonal Laplacian entries must be 0 or ±1".to_string(),
                    ));
                }
            }
            if row_sum.abs() > 1e-12 {
                return Err(Error::InvalidInput(
                    "Laplacian rows must sum to zero".to_string(),
                ));
            }
        }
        let neighborhoods = (0..n)
            .map(|i| {
                let mut nb: Vec<usize> = (0..n)
                    .filter(|&j| j == i || l[(i, j)] != 0.0)
                    .collect();
                nb.sort_unstable();
                nb
            })
            .collect();
        Ok(Self { n, neighborhoods })
    }

    /// Builds the graph from open adjacency lists (self-loops added).
    pub fn from_adjacency(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighborhoods: Vec<Vec<usize>> = (0..n).map(|i| alloc::vec![i]).collect();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput("edge endpoint out of range".to_string()));
            }
            if a != b {
                neighborhoods[a].push(b);
                neighborhoods[b].push(a);
            }
        }
        for nb in &mut neighborhoods {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Self { n, neighborhoods })
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    /// Closed neighborhood of `i`, sorted ascending.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.neighborhoods[i].binary_search(&j).is_ok()
    }
}

/// Runs one barrier-synchronized exchange round.
///
/// All payloads in `published` are treated as already sent; the handler for
/// agent `i` sees only the payloads of its closed neighborhood, paired with
/// sender indices in ascending order. A handler failure aborts the round
/// with agent attribution.
pub fn execute_round<T, O>(
    graph: &CommGraph,
    published: &[T],
    mut handler: impl FnMut(usize, &[(usize, &T)]) -> Result<O>,
) -> Result<Vec<O>> {
    if published.len() != graph.agent_count() {
        return Err(Error::Dimension(
            "one published payload per agent is required".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(graph.agent_count());
    for i in 0..graph.agent_count() {
        let inbox: Vec<(usize, &T)> = graph
            .neighborhood(i)
            .iter()
            .map(|&j| (j, &published[j]))
            .collect();
        out.push(handler(i, &inbox).map_err(|e| match e {
            Error::Inconsistency { .. } => e,
            other => Error::Solver(alloc::format!("agent {i} round handler failed: {other}")),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn six_agent_laplacian() -> DMatrix<f64> {
        dmatrix![
            -3.0,  1.0,  0.0,  1.0,  1.0,  0.0;
             1.0, -2.0,  1.0,  0.0,  0.0,  0.0;
             0.0,  1.0, -3.0,  1.0,  0.0,  1.0;
             1.0,  0.0,  1.0, -4.0,  1.0,  1.0;
             1.0,  0.0,  0.0,  1.0, -3.0,  1.0;
             0.0,  0.0,  1.0,  1.0,  1.0, -3.0
        ]
    }

    #[test]
    fn six_agent_laplacian_neighborhoods() {
        let g = CommGraph::from_laplacian(&six_agent_laplacian()).unwrap();
        assert_eq!(g.neighborhood(0), &[0, 1, 3, 4]);
        assert_eq!(g.neighborhood(1), &[0, 1, 2]);
        assert_eq!(g.neighborhood(5), &[2, 3, 4, 5]);
        assert!(g.is_neighbor(0, 4));
        assert!(!g.is_neighbor(0, 2));
    }

    #[test]
    fn single_agent_graph() {
        let g = CommGraph::from_laplacian(&dmatrix![0.0]).unwrap();
        assert_eq!(g.neighborhood(0), &[0]);
    }

    #[test]
    fn complete_triangle() {
        let l = dmatrix![
            -2.0, 1.0, 1.0;
             1.0, -2.0, 1.0;
             1.0, 1.0, -2.0
        ];
        let g = CommGraph::from_laplacian(&l).unwrap();
        for i in 0..3 {
            assert_eq!(g.neighborhood(i), &[0, 1, 2]);
        }
    }

    #[test]
    fn rejects_asymmetric_and_bad_row_sums() {
        let asym = dmatrix![-1.0, 1.0; 0.0, 0.0];
        assert!(CommGraph::from_laplacian(&asym).is_err());
        let bad_sum = dmatrix![-1.0, 1.0; 1.0, -2.0];
        assert!(CommGraph::from_laplacian(&bad_sum).is_err());
    }

    #[test]
    fn round_respects_graph_and_ordering() {
        let g = CommGraph::from_adjacency(3, &[(0, 1), (1, 2)]).unwrap();
        let published = alloc::vec![10, 20, 30];
        let sums = execute_round(&g, &published, |_, inbox| {
            Ok(inbox.iter().map(|(_, &v)| v).sum::<i32>())
        })
        .unwrap();
        // Agent 0 sees {0,1}, agent 1 sees all, agent 2 sees {1,2}.
        assert_eq!(sums, alloc::vec![30, 60, 50]);
    }

    #[test]
    fn echo_round_is_identity() {
        let g = CommGraph::from_adjacency(2, &[(0, 1)]).unwrap();
        let published = alloc::vec![1.5, -2.5];
        let next = execute_round(&g, &published, |i, inbox| {
            Ok(*inbox.iter().find(|(j, _)| *j == i).unwrap().1)
        })
        .unwrap();
        assert_eq!(next, published);
    }
}
