//! Static undirected communication topologies.
//!
//! Nodes are 0-based inside the library. Edge-list files and everything
//! user-facing use 1-based ids; conversion happens in [`parse_edge_list`]
//! and [`Graph::edges_one_based`].

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{symmetric_eigenvalues, LinalgError, Matrix};

/// Attempts `erdos_renyi` makes before giving up on connectivity.
pub const ER_MAX_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("self-loop at node {0} (1-based)")]
    SelfLoop(usize),
    #[error("edge {0}-{1} (1-based) references a node outside 1..={2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("duplicate edge {0}-{1} (1-based)")]
    DuplicateEdge(usize, usize),
    #[error("edge probability {0} must lie in (0, 1]")]
    BadEdgeProbability(f64),
    #[error(
        "no connected Erdős–Rényi graph (n = {n}, p = {edge_prob}) within {attempts} attempts"
    )]
    ErdosRenyiDisconnected {
        n: usize,
        edge_prob: f64,
        attempts: u64,
    },
    #[error("graph is not connected")]
    Disconnected,
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Eigensolver(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphKind {
    Ring,
    Path,
    Complete,
    ErdosRenyi {
        edge_prob: f64,
    },
    /// 1-based edge pairs.
    Explicit(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    /// Undirected edges `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    /// For node `i`: `(j, rank)` where `rank` indexes the directed edge
    /// `j → i` in [`Graph::directed_edges`].
    incoming: Vec<Vec<(usize, usize)>>,
    directed: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from 0-based undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange(a + 1, b + 1, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a + 1));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0 + 1, e.1 + 1));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();

        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        // Lexicographic (source, target) order.
        let directed: Vec<(usize, usize)> = (0..n)
            .flat_map(|j| neighbors[j].iter().map(move |&i| (j, i)))
            .collect();
        let mut incoming = vec![Vec::new(); n];
        for (rank, &(j, i)) in directed.iter().enumerate() {
            incoming[i].push((j, rank));
        }

        Ok(Self {
            n,
            edges,
            neighbors,
            incoming,
            directed,
        })
    }

    /// Builds a graph from 1-based edges.
    pub fn from_edges_one_based(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut zero = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == 0 || b == 0 {
                return Err(GraphError::NodeOutOfRange(a, b, n));
            }
            zero.push((a - 1, b - 1));
        }
        Self::from_edges(n, &zero)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edges_one_based(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|&(a, b)| (a + 1, b + 1)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Directed links `(j, i)` meaning `j → i`, lexicographically sorted.
    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    /// Incoming links of `i` as `(sender, directed-edge rank)`.
    pub fn incoming(&self, i: usize) -> &[(usize, usize)] {
        &self.incoming[i]
    }

    pub fn laplacian(&self) -> Matrix {
        let mut l = Matrix::zeros(self.n);
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            l[(i, i)] = nbrs.len() as f64;
            for &j in nbrs {
                l[(i, j)] = -1.0;
            }
        }
        l
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Longest shortest path, or `None` if disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut diam = 0;
        for s in 0..self.n {
            for d in self.bfs_distances(s) {
                diam = diam.max(d?);
            }
        }
        Some(diam)
    }

    fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Algebraic connectivity and largest Laplacian eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInfo {
    pub lambda2: f64,
    pub lambda_n: f64,
    /// Full Laplacian spectrum, ascending.
    pub spectrum: Vec<f64>,
}

impl SpectralInfo {
    /// Largest admissible consensus step `2 / (λ₂ + λₙ)`.
    pub fn beta_bound(&self) -> f64 {
        2.0 / (self.lambda2 + self.lambda_n)
    }
}

pub fn spectral_extremes(g: &Graph) -> Result<SpectralInfo, GraphError> {
    let spectrum = symmetric_eigenvalues(&g.laplacian())?;
    // λ₁ is zero analytically; clamp roundoff so callers see λ₂ ≥ 0.
    let lambda2 = spectrum[1].max(0.0);
    let lambda_n = spectrum[spectrum.len() - 1];
    Ok(SpectralInfo {
        lambda2,
        lambda_n,
        spectrum,
    })
}

pub fn make_graph(kind: &GraphKind, n: usize, seed: u64) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    match kind {
        GraphKind::Path => Graph::from_edges(n, &path_edges(n)),
        GraphKind::Ring => {
            let mut edges = path_edges(n);
            if n > 2 {
                edges.push((n - 1, 0));
            }
            Graph::from_edges(n, &edges)
        }
        GraphKind::Complete => {
            let edges: Vec<_> = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .collect();
            Graph::from_edges(n, &edges)
        }
        GraphKind::ErdosRenyi { edge_prob } => erdos_renyi(n, *edge_prob, seed),
        GraphKind::Explicit(edges) => Graph::from_edges_one_based(n, edges),
    }
}

fn path_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n - 1).map(|i| (i, i + 1)).collect()
}

fn erdos_renyi(n: usize, edge_prob: f64, seed: u64) -> Result<Graph, GraphError> {
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(GraphError::BadEdgeProbability(edge_prob));
    }
    for attempt in 0..ER_MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < edge_prob {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(GraphError::ErdosRenyiDisconnected {
        n,
        edge_prob,
        attempts: ER_MAX_ATTEMPTS,
    })
}

/// Parses `i j` pairs (1-based, whitespace separated, `#` comments).
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| GraphError::Parse {
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(format!(
                "expected two node ids, found {} fields",
                fields.len()
            )));
        }
        let mut ids = [0usize; 2];
        for (slot, f) in ids.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| parse_err(format!("`{f}` is not a node id")))?;
            if *slot == 0 {
                return Err(parse_err("node ids are 1-based".into()));
            }
        }
        edges.push((ids[0], ids[1]));
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn laplacian_examples() {
        let k2 = make_graph(&GraphKind::Complete, 2, 0).unwrap();
        assert_eq!(
            k2.laplacian().to_rows(),
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]]
        );
        let p3 = make_graph(&GraphKind::Path, 3, 0).unwrap();
        assert_eq!(
            p3.laplacian().to_rows(),
            vec![
                vec![1.0, -1.0, 0.0],
                vec![-1.0, 2.0, -1.0],
                vec![0.0, -1.0, 1.0]
            ]
        );
        let g = make_graph(&GraphKind::ErdosRenyi { edge_prob: 0.4 }, 15, 3).unwrap();
        let l = g.laplacian();
        assert!(l.is_symmetric());
        for i in 0..15 {
            assert_eq!(l.row(i).iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn spectral_examples() {
        let s = spectral_extremes(&make_graph(&GraphKind::Path, 3, 0).unwrap()).unwrap();
        assert!(approx(s.lambda2, 1.0, 1e-10) && approx(s.lambda_n, 3.0, 1e-10));
        let s = spectral_extremes(&make_graph(&GraphKind::Complete, 2, 0).unwrap()).unwrap();
        assert!(approx(s.lambda2, 2.0, 1e-10) && approx(s.lambda_n, 2.0, 1e-10));
        let s = spectral_extremes(&make_graph(&GraphKind::Ring, 4, 0).unwrap()).unwrap();
        assert!(approx(s.lambda2, 2.0, 1e-10) && approx(s.lambda_n, 4.0, 1e-10));
        assert!(approx(s.beta_bound(), 1.0 / 3.0, 1e-10));
    }

    #[test]
    fn closed_form_spectra() {
        for n in 2..=20 {
            let s = spectral_extremes(&make_graph(&GraphKind::Complete, n, 0).unwrap()).unwrap();
            assert!(approx(s.spectrum[0], 0.0, 1e-8));
            for &e in &s.spectrum[1..] {
                assert!(approx(e, n as f64, 1e-8), "K{n}: {e}");
            }
        }
        for n in 3..=20 {
            let s = spectral_extremes(&make_graph(&GraphKind::Ring, n, 0).unwrap()).unwrap();
            let mut expected: Vec<f64> = (0..n)
                .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect();
            expected.sort_by(f64::total_cmp);
            for (a, b) in s.spectrum.iter().zip(&expected) {
                assert!(approx(*a, *b, 1e-8), "C{n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn connectivity() {
        assert!(make_graph(&GraphKind::Path, 3, 0).unwrap().is_connected());
        let isolated = Graph::from_edges(2, &[]).unwrap();
        assert!(!isolated.is_connected());
        assert_eq!(isolated.diameter(), None);
        let s = spectral_extremes(&isolated).unwrap();
        assert!(s.lambda2 < 1e-9);
    }

    #[test]
    fn generator_examples() {
        assert_eq!(
            make_graph(&GraphKind::Complete, 4, 0).unwrap().edge_count(),
            6
        );
        let ring = make_graph(&GraphKind::Ring, 5, 0).unwrap();
        assert_eq!(ring.edge_count(), 5);
        assert!((0..5).all(|i| ring.degree(i) == 2));
        let a = make_graph(&GraphKind::ErdosRenyi { edge_prob: 0.5 }, 10, 7).unwrap();
        let b = make_graph(&GraphKind::ErdosRenyi { edge_prob: 0.5 }, 10, 7).unwrap();
        assert!(a.is_connected());
        assert_eq!(a, b);
        assert_eq!(
            make_graph(&GraphKind::Path, 6, 0).unwrap().diameter(),
            Some(5)
        );
        assert_eq!(make_graph(&GraphKind::Ring, 2, 0).unwrap().edge_count(), 1);
    }

    #[test]
    fn generator_errors() {
        assert_eq!(
            make_graph(&GraphKind::Ring, 1, 0),
            Err(GraphError::TooFewNodes(1))
        );
        assert!(matches!(
            make_graph(&GraphKind::ErdosRenyi { edge_prob: 0.0 }, 5, 0),
            Err(GraphError::BadEdgeProbability(_))
        ));
        assert!(matches!(
            make_graph(&GraphKind::ErdosRenyi { edge_prob: 1e-9 }, 30, 0),
            Err(GraphError::ErdosRenyiDisconnected { .. })
        ));
        assert_eq!(
            Graph::from_edges_one_based(3, &[(1, 2), (2, 1)]),
            Err(GraphError::DuplicateEdge(1, 2))
        );
        assert_eq!(
            Graph::from_edges_one_based(3, &[(2, 2)]),
            Err(GraphError::SelfLoop(2))
        );
        assert!(matches!(
            Graph::from_edges_one_based(3, &[(1, 4)]),
            Err(GraphError::NodeOutOfRange(..))
        ));
    }

    #[test]
    fn directed_edge_ranks() {
        let g = make_graph(&GraphKind::Path, 3, 0).unwrap();
        assert_eq!(g.directed_edges(), &[(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(g.incoming(1), &[(0, 0), (2, 3)]);
    }

    #[test]
    fn edge_list_parsing() {
        let text = "# ring\n1 2\n2 3  # trailing\n\n3 1\n";
        assert_eq!(parse_edge_list(text).unwrap(), vec![(1, 2), (2, 3), (3, 1)]);
        assert!(matches!(
            parse_edge_list("1 2 3"),
            Err(GraphError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_edge_list("0 1"),
            Err(GraphError::Parse { .. })
        ));
        assert!(matches!(
            parse_edge_list("a b"),
            Err(GraphError::Parse { .. })
        ));
    }

    proptest! {
        #[test]
        fn laplacian_psd_and_spectral_bounds(
            n in 2usize..25,
            prob in 0.15f64..1.0,
            seed in any::<u64>(),
            xs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 25), 100),
        ) {
            let g = make_graph(&GraphKind::ErdosRenyi { edge_prob: prob }, n, seed).unwrap();
            let l = g.laplacian();
            for x in &xs {
                prop_assert!(l.quadratic_form(&x[..n]) >= -1e-9);
            }
            let s = spectral_extremes(&g).unwrap();
            prop_assert!(s.lambda2 > 1e-9);
            prop_assert!(s.lambda2 <= s.lambda_n + 1e-12);
            prop_assert!(s.lambda_n <= 2.0 * g.max_degree() as f64 + 1e-9);
        }

        #[test]
        fn connectivity_matches_spectrum(
            n in 2usize..16,
            edges in prop::collection::btree_set((0usize..16, 0usize..16), 0..30),
        ) {
            let edges: Vec<_> = edges
                .into_iter()
                .filter(|&(a, b)| a < b && b < n)
                .collect();
            let g = Graph::from_edges(n, &edges).unwrap();
            let s = spectral_extremes(&g).unwrap();
            prop_assert_eq!(g.is_connected(), s.lambda2 > 1e-9);
        }
    }
}
