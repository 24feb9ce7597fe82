//! Undirected, unweighted junction graphs and the operators built on them.

mod sparse;
mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sparse::CsrMatrix;
pub use spectral::{cheb_adjoint, cheb_apply, LambdaMode, SpectralOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("node {0} is isolated (degree 0)")]
    IsolatedNode(usize),
    #[error("power iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("adjacency matrix is not a symmetric 0/1 matrix with zero diagonal")]
    InvalidAdjacency,
}

/// Symmetric 0/1 adjacency stored as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphTopology {
    n: usize,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl GraphTopology {
    /// Builds a graph from an edge list. Duplicate and reversed edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::EmptyGraph);
        }
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for index in [a, b] {
                if index >= n {
                    return Err(GraphError::IndexOutOfRange { index, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &norm {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(GraphTopology {
            n,
            neighbors,
            edges: norm,
        })
    }

    pub fn from_dense<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, GraphError> {
        let n = rows.len();
        let mut edges = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(GraphError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &a) in row.iter().enumerate() {
                let mirrored = rows[j].as_ref().get(i).copied();
                if a > 1 || mirrored != Some(a) || (i == j && a != 0) {
                    return Err(GraphError::InvalidAdjacency);
                }
                if a == 1 && i < j {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn adjacency_dense(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.n]; self.n];
        for &(i, j) in &self.edges {
            a[i][j] = 1;
            a[j][i] = 1;
        }
        a
    }

    pub fn adjacency(&self) -> CsrMatrix {
        CsrMatrix::from_rows(
            self.n,
            self.neighbors
                .iter()
                .map(|nb| nb.iter().map(|&j| (j, 1.0)).collect())
                .collect(),
        )
    }

    /// Combinatorial Laplacian `D − A`.
    pub fn laplacian(&self) -> CsrMatrix {
        let rows = (0..self.n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.neighbors[i].iter().map(|&j| (j, -1.0)).collect();
                row.push((i, self.degree(i) as f64));
                row
            })
            .collect();
        CsrMatrix::from_rows(self.n, rows)
    }

    /// Applies a node relabeling: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        if perm.len() != self.n {
            return Err(GraphError::DimensionMismatch {
                expected: self.n,
                found: perm.len(),
            });
        }
        let edges: Vec<_> = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        Self::from_edges(self.n, &edges)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net1;
    use proptest::prelude::*;

    #[test]
    fn net1_laplacian_diagonal() {
        let g = GraphTopology::from_dense(&net1::ADJACENCY).unwrap();
        let l = g.laplacian().to_dense();
        let diag: Vec<f64> = (0..9).map(|i| l[[i, i]]).collect();
        assert_eq!(diag, vec![1.0, 3.0, 3.0, 2.0, 3.0, 4.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn edgeless_laplacian_is_zero() {
        let g = GraphTopology::from_edges(3, &[]).unwrap();
        assert!(g.laplacian().to_dense().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k2_laplacian() {
        let g = GraphTopology::from_edges(2, &[(0, 1)]).unwrap();
        let l = g.laplacian().to_dense();
        assert_eq!(l, ndarray::array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn rejects_self_loop_and_asymmetry() {
        assert_eq!(GraphTopology::from_edges(2, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            GraphTopology::from_dense(&[[0u8, 1], [0, 0]]),
            Err(GraphError::InvalidAdjacency)
        );
    }

    pub(crate) fn arb_graph(max_n: usize) -> impl Strategy<Value = GraphTopology> {
        (1..=max_n).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |pairs| {
                let edges: Vec<_> = pairs.into_iter().filter(|(a, b)| a != b).collect();
                GraphTopology::from_edges(n, &edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn laplacian_rows_sum_to_zero(g in arb_graph(20)) {
            let l = g.laplacian().to_dense();
            for row in l.rows() {
                prop_assert_eq!(row.sum(), 0.0);
            }
            prop_assert_eq!(l.t(), l.view());
        }

        #[test]
        fn dense_round_trip(g in arb_graph(15)) {
            let back = GraphTopology::from_dense(&g.adjacency_dense()).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
