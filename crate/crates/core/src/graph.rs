//! Undirected communication graphs with unit edge weights, their Laplacians,
//! and the algebraic connectivity used by the settling-time bounds.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as the Laplacian null space.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

/// A fixed, connected, undirected graph over agents `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from an edge list, rejecting self-loops, repeated
    /// edges (which would amount to weights other than one) and
    /// disconnected topologies.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 agents, got {n}"
            )));
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) references an agent outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on agent {i}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) listed twice; only unit weights are supported"
                )));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        if !is_connected(n, &edges) {
            return Err(Error::DisconnectedGraph);
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            neighbors,
        })
    }

    /// Cycle `0 - 1 - ... - (n-1) - 0`.
    pub fn ring(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges)
    }

    /// Complete bipartite graph between `0..left` and `left..left + right`.
    pub fn complete_bipartite(left: usize, right: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..left {
            for j in left..left + right {
                edges.push((i, j));
            }
        }
        Self::new(left + right, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Normalized edge list, each pair ordered `(low, high)` and sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of agent `i` in ascending id order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Adjacency weight `a_ij`, either 0 or 1.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.neighbors[i].binary_search(&j).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
        l
    }

    /// Laplacian spectrum in ascending order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut values: Vec<f64> = SymmetricEigen::new(self.laplacian())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        values
    }

    /// Smallest nonzero Laplacian eigenvalue.
    pub fn algebraic_connectivity(&self) -> Result<f64> {
        let spectrum = self.spectrum();
        let second = spectrum[1];
        if second <= ZERO_EIGENVALUE_TOL {
            return Err(Error::DisconnectedGraph);
        }
        Ok(second)
    }
}

/// Whether a breadth-first traversal from agent 0 reaches every agent.
pub fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    if n == 0 {
        return false;
    }
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j) in edges {
        if i < n && j < n {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    reached == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn k2_laplacian_and_connectivity() {
        let g = CommGraph::new(2, &[(0, 1)]).unwrap();
        let l = g.laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_abs_diff_eq!(g.algebraic_connectivity().unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ring_laplacian_is_circulant() {
        let g = CommGraph::ring(6).unwrap();
        let l = g.laplacian();
        for i in 0..6 {
            for j in 0..6 {
                let d = (i as isize - j as isize).rem_euclid(6);
                let expected = match d {
                    0 => 2.0,
                    1 | 5 => -1.0,
                    _ => 0.0,
                };
                assert_eq!(l[(i, j)], expected, "entry ({i}, {j})");
            }
        }
        assert_abs_diff_eq!(g.algebraic_connectivity().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn complete_graph_connectivity_equals_n() {
        let g = CommGraph::complete(6).unwrap();
        assert_abs_diff_eq!(g.algebraic_connectivity().unwrap(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn k33_connectivity_is_three() {
        let g = CommGraph::complete_bipartite(3, 3).unwrap();
        assert_abs_diff_eq!(g.algebraic_connectivity().unwrap(), 3.0, epsilon = 1e-12);
        assert!((0..6).all(|i| g.degree(i) == 3));
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            CommGraph::new(3, &[]),
            Err(Error::DisconnectedGraph)
        ));
        assert!(matches!(
            CommGraph::new(4, &[(0, 1), (2, 3)]),
            Err(Error::DisconnectedGraph)
        ));
        assert!(matches!(
            CommGraph::new(1, &[]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            CommGraph::new(3, &[(0, 0), (0, 1), (1, 2)]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            CommGraph::new(2, &[(0, 1), (1, 0)]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            CommGraph::new(2, &[(0, 2)]),
            Err(Error::InvalidGraph(_))
        ));
    }

    #[test]
    fn connectivity_check() {
        let ring: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        assert!(is_connected(6, &ring));
        assert!(!is_connected(4, &[(0, 1), (2, 3)]));
        assert!(is_connected(1, &[]));
    }

    fn random_connected() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (3usize..9).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            let m = pairs.len();
            (
                Just(n),
                Just(pairs),
                proptest::collection::vec(any::<bool>(), m),
                proptest::collection::vec(0..n, n),
            )
                .prop_map(|(n, pairs, keep, parent)| {
                    // a random spanning tree keeps every sample connected
                    let mut edges: BTreeSet<(usize, usize)> = (1..n)
                        .map(|i| {
                            let p = parent[i] % i;
                            (p, i)
                        })
                        .collect();
                    for (pair, k) in pairs.iter().zip(keep) {
                        if k {
                            edges.insert(*pair);
                        }
                    }
                    (n, edges.into_iter().collect())
                })
        })
    }

    proptest! {
        #[test]
        fn laplacian_is_psd_with_simple_null_space((n, edges) in random_connected()) {
            let g = CommGraph::new(n, &edges).unwrap();
            let l = g.laplacian();
            for i in 0..n {
                let row: f64 = (0..n).map(|j| l[(i, j)]).sum();
                prop_assert!(row.abs() < 1e-12);
                for j in 0..n {
                    prop_assert_eq!(l[(i, j)], l[(j, i)]);
                }
            }
            let spectrum = g.spectrum();
            prop_assert!(spectrum[0].abs() < ZERO_EIGENVALUE_TOL);
            prop_assert!(spectrum[1] > ZERO_EIGENVALUE_TOL);
            let eta = g.algebraic_connectivity().unwrap();
            let complete = edges.len() == n * (n - 1) / 2;
            prop_assert!(eta <= n as f64 + 1e-9);
            if complete {
                prop_assert!((eta - n as f64).abs() < 1e-9);
            } else {
                prop_assert!(eta < n as f64 - 1e-9);
            }
        }

        #[test]
        fn adding_an_edge_never_decreases_connectivity(
            (n, edges) in random_connected(),
            pick in any::<proptest::sample::Index>(),
        ) {
            let g = CommGraph::new(n, &edges).unwrap();
            let missing: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|p| !edges.contains(p))
                .collect();
            prop_assume!(!missing.is_empty());
            let mut more = edges.clone();
            more.push(*pick.get(&missing));
            let h = CommGraph::new(n, &more).unwrap();
            prop_assert!(
                h.algebraic_connectivity().unwrap() >= g.algebraic_connectivity().unwrap() - 1e-9
            );
        }
    }
}
