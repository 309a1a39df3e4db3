//! Weighted directed communication graphs.
//!
//! `a_ij > 0` is the weight of the edge from node `j` to node `i`, so row `i`
//! of the adjacency matrix lists what node `i` receives.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative threshold used to count eigenvalues at zero (resp. one).
pub const SIMPLE_EIGENVALUE_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    weights: DMatrix<f64>,
}

impl DiGraph {
    /// Builds a graph from an adjacency matrix, rejecting self-loops and
    /// negative or non-finite weights.
    pub fn from_adjacency(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::InvalidGraph("adjacency matrix must be square".into()));
        }
        if weights.nrows() == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        for ((i, j), w) in weights.iter().enumerate().map(|(k, w)| {
            let n = weights.nrows();
            ((k % n, k / n), *w)
        }) {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "weight a[{}][{}] = {w} is not a nonnegative number",
                    i + 1,
                    j + 1
                )));
            }
            if i == j && w != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", i + 1)));
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from `(src, dst, weight)` triples with 0-based ids.
    /// Duplicate edges are summed.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(src, dst, weight) in edges {
            if src >= n || dst >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} outside 1..={n}",
                    src + 1,
                    dst + 1
                )));
            }
            if src == dst {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", src + 1)));
            }
            w[(dst, src)] += weight;
        }
        Self::from_adjacency(w)
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    pub fn in_degrees(&self) -> Vec<f64> {
        (0..self.node_count()).map(|i| self.in_degree(i)).collect()
    }

    /// Neighbours feeding node `i`, with weights.
    pub fn in_neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.node_count())
            .filter(|&j| self.weights[(i, j)] > 0.0)
            .map(|j| (j, self.weights[(i, j)]))
            .collect()
    }

    /// Directed cycle with `a_{i+1,i} = a_{1,N} = 1`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 2 {
            return Self::from_edges(n.max(1), &[]);
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    /// Directed path `1 → 2 → … → N`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::from_edges(n.max(1), &edges)
    }

    /// Node 1 broadcasting to the other `N − 1` nodes.
    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i, 1.0)).collect();
        Self::from_edges(n.max(1), &edges)
    }

    /// Random directed tree rooted at node 1: every other node gets one parent
    /// among the earlier nodes, with a weight drawn from `[0.5, 1.5)`.
    pub fn random_tree(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<_> = (1..n)
            .map(|i| (rng.random_range(0..i), i, rng.random_range(0.5..1.5)))
            .collect();
        Self::from_edges(n.max(1), &edges)
    }

    /// Random graph that contains a spanning tree: a random tree plus extra
    /// random edges added with probability `extra_edge_prob`.
    pub fn random_spanning(n: usize, extra_edge_prob: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: Vec<_> = (1..n)
            .map(|i| (rng.random_range(0..i), i, rng.random_range(0.5..1.5)))
            .collect();
        for dst in 0..n {
            for src in 0..n {
                if src != dst && rng.random::<f64>() < extra_edge_prob {
                    edges.push((src, dst, rng.random_range(0.5..1.5)));
                }
            }
        }
        // Relabel so the root is not always node 1.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let edges: Vec<_> = edges
            .into_iter()
            .map(|(s, d, w)| (perm[s], perm[d], w))
            .collect();
        Self::from_edges(n.max(1), &edges)
    }

    /// Reads the `src dst weight` edge-list format (1-based ids, `#` comments).
    /// The node count is the largest id mentioned.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut n = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected `src dst weight`, got `{line}`",
                    lineno + 1
                )));
            }
            let id = |s: &str| -> Result<usize> {
                let v: usize = s
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad node id `{s}`", lineno + 1)))?;
                if v == 0 {
                    return Err(Error::Parse(format!("line {}: node ids are 1-based", lineno + 1)));
                }
                Ok(v)
            };
            let src = id(fields[0])?;
            let dst = id(fields[1])?;
            let weight: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad weight `{}`", lineno + 1, fields[2])))?;
            n = n.max(src).max(dst);
            edges.push((src - 1, dst - 1, weight));
        }
        if n == 0 {
            return Err(Error::Parse("edge list contains no edges".into()));
        }
        Self::from_edges(n, &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let n = self.node_count();
        let mut out = format!("# {n} nodes\n");
        for dst in 0..n {
            for src in 0..n {
                let w = self.weights[(dst, src)];
                if w > 0.0 {
                    out.push_str(&format!("{} {} {}\n", src + 1, dst + 1, w));
                }
            }
        }
        out
    }

    /// `ℓ_ii = Σ_k a_ik`, `ℓ_ij = −a_ij`.
    pub fn laplacian(&self) -> Laplacian {
        let n = self.node_count();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.in_degree(i);
        }
        Laplacian { matrix: l }
    }

    /// Row-stochastic weights `d_ij = a_ij / (1 + d̄_in(i))`, `d_ii = 1 − Σ_{j≠i} d_ij`.
    pub fn row_stochastic(&self, din_bar: &[f64]) -> Result<RowStochastic> {
        let n = self.node_count();
        if din_bar.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} in-degree bounds for {n} nodes",
                din_bar.len()
            )));
        }
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            let deg = self.in_degree(i);
            let bound = din_bar[i];
            if !bound.is_finite() || bound < deg {
                return Err(Error::BoundTooSmall {
                    node: i + 1,
                    bound,
                    in_degree: deg,
                });
            }
            let scale = 1.0 + bound;
            let mut off = 0.0;
            for j in 0..n {
                if j != i {
                    d[(i, j)] = self.weights[(i, j)] / scale;
                    off += d[(i, j)];
                }
            }
            d[(i, i)] = 1.0 - off;
        }
        Ok(RowStochastic {
            matrix: d,
            din_bar: din_bar.to_vec(),
        })
    }

    /// Reachability answer: some node reaches every other node.
    pub fn has_spanning_tree(&self) -> bool {
        self.spanning_tree_root().is_some()
    }

    /// A root of a directed spanning tree, if one exists (0-based).
    pub fn spanning_tree_root(&self) -> Option<usize> {
        let n = self.node_count();
        // out-neighbour lists: edge j -> i whenever a_ij > 0
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if self.weights[(i, j)] > 0.0 {
                    out[j].push(i);
                }
            }
        }
        (0..n).find(|&root| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([root]);
            seen[root] = true;
            let mut count = 1;
            while let Some(u) = queue.pop_front() {
                for &v in &out[u] {
                    if !seen[v] {
                        seen[v] = true;
                        count += 1;
                        queue.push_back(v);
                    }
                }
            }
            count == n
        })
    }

    /// Spectral answer to the spanning-tree question: the Laplacian has a
    /// simple zero eigenvalue.
    pub fn has_simple_zero_eigenvalue(&self) -> Result<bool> {
        let l = self.laplacian();
        let eigs = linalg::eigenvalues(&l.matrix)?;
        let tol = SIMPLE_EIGENVALUE_RTOL * linalg::norm2(&l.matrix).max(f64::MIN_POSITIVE);
        Ok(eigs.iter().filter(|z| z.norm() < tol).count() == 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub matrix: DMatrix<f64>,
}

impl Laplacian {
    /// Eigenvalues with the simple zero eigenvalue removed.
    pub fn nonzero_spectrum(&self) -> Result<Vec<Complex64>> {
        remove_simple(&self.matrix, Complex64::new(0.0, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowStochastic {
    pub matrix: DMatrix<f64>,
    pub din_bar: Vec<f64>,
}

impl RowStochastic {
    /// Eigenvalues of `D` with the simple unit eigenvalue removed.
    pub fn non_unit_spectrum(&self) -> Result<Vec<Complex64>> {
        remove_simple(&self.matrix, Complex64::new(1.0, 0.0))
    }

    /// `I − D`, which equals `(I + D_in)⁻¹ L`.
    pub fn coupling(&self) -> DMatrix<f64> {
        let n = self.matrix.nrows();
        DMatrix::identity(n, n) - &self.matrix
    }
}

fn remove_simple(m: &DMatrix<f64>, target: Complex64) -> Result<Vec<Complex64>> {
    let mut eigs = linalg::eigenvalues(m)?;
    let tol = SIMPLE_EIGENVALUE_RTOL * linalg::norm2(m).max(f64::MIN_POSITIVE);
    let hits = eigs.iter().filter(|z| (**z - target).norm() < tol).count();
    if hits != 1 {
        return Err(Error::ZeroNotSimple {
            target: target.re,
            multiplicity: hits,
        });
    }
    let idx = eigs
        .iter()
        .enumerate()
        .min_by(|a, b| (*a.1 - target).norm().total_cmp(&(*b.1 - target).norm()))
        .map(|(i, _)| i)
        .expect("nonempty spectrum");
    eigs.remove(idx);
    Ok(eigs)
}

/// Graph description used in configuration files: a built-in generator or a
/// path to an edge-list file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GraphSpec {
    Cycle(usize),
    Path(usize),
    Star(usize),
    RandomTree { n: usize, seed: u64 },
    EdgeList(String),
}

impl GraphSpec {
    pub fn build(&self) -> Result<DiGraph> {
        match self {
            GraphSpec::Cycle(n) => DiGraph::cycle(*n),
            GraphSpec::Path(n) => DiGraph::path(*n),
            GraphSpec::Star(n) => DiGraph::star(*n),
            GraphSpec::RandomTree { n, seed } => DiGraph::random_tree(*n, *seed),
            GraphSpec::EdgeList(path) => {
                let text = std::fs::read_to_string(path)?;
                DiGraph::parse_edge_list(&text)
            }
        }
    }
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let generator = s
            .strip_suffix(')')
            .and_then(|rest| rest.split_once('('))
            .filter(|(name, _)| {
                matches!(name.trim(), "cycle" | "path" | "star" | "random_tree")
            });
        let Some((name, args)) = generator else {
            return Ok(GraphSpec::EdgeList(s.to_string()));
        };
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let int = |v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| Error::Parse(format!("bad generator argument `{v}` in `{s}`")))
        };
        let spec = match (name.trim(), args.as_slice()) {
            ("cycle", [n]) => GraphSpec::Cycle(int(n)? as usize),
            ("path", [n]) => GraphSpec::Path(int(n)? as usize),
            ("star", [n]) => GraphSpec::Star(int(n)? as usize),
            ("random_tree", [n, seed]) => GraphSpec::RandomTree {
                n: int(n)? as usize,
                seed: int(seed)?,
            },
            _ => return Err(Error::Parse(format!("bad graph generator `{s}`"))),
        };
        if let GraphSpec::Cycle(0) | GraphSpec::Path(0) | GraphSpec::Star(0) = spec {
            return Err(Error::Parse(format!("graph `{s}` has no nodes")));
        }
        Ok(spec)
    }
}

impl TryFrom<String> for GraphSpec {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<GraphSpec> for String {
    fn from(value: GraphSpec) -> Self {
        value.to_string()
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Cycle(n) => write!(f, "cycle({n})"),
            GraphSpec::Path(n) => write!(f, "path({n})"),
            GraphSpec::Star(n) => write!(f, "star({n})"),
            GraphSpec::RandomTree { n, seed } => write!(f, "random_tree({n}, {seed})"),
            GraphSpec::EdgeList(p) => f.write_str(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn single_node_laplacian_is_zero() {
        let g = DiGraph::from_edges(1, &[]).unwrap();
        assert_eq!(g.laplacian().matrix, DMatrix::zeros(1, 1));
        let d = g.row_stochastic(&[0.0]).unwrap();
        assert_eq!(d.matrix, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn cycle_laplacian_pattern() {
        let g = DiGraph::cycle(60).unwrap();
        let l = g.laplacian().matrix;
        for i in 0..60 {
            assert_eq!(l[(i, i)], 1.0);
            let pred = (i + 59) % 60;
            assert_eq!(l[(i, pred)], -1.0);
            assert_eq!(l.row(i).sum(), 0.0);
        }
        assert_eq!(l[(0, 59)], -1.0);
        assert_eq!(l[(1, 0)], -1.0);
    }

    #[test]
    fn three_cycle_eigenvalues() {
        let g = DiGraph::cycle(3).unwrap();
        let mut eigs = linalg::eigenvalues(&g.laplacian().matrix).unwrap();
        eigs.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
        assert!(eigs[0].norm() < 1e-12);
        let half_sqrt3 = 3f64.sqrt() / 2.0;
        assert_close(eigs[1].re, 1.5, 1e-12);
        assert_close(eigs[1].im.abs(), half_sqrt3, 1e-12);
        assert_close(eigs[2].re, 1.5, 1e-12);
        assert_close(eigs[1].im + eigs[2].im, 0.0, 1e-12);
    }

    #[test]
    fn cycle_row_stochastic_halves() {
        let g = DiGraph::cycle(60).unwrap();
        let d = g.row_stochastic(&vec![1.0; 60]).unwrap().matrix;
        for i in 0..60 {
            assert_eq!(d[(i, i)], 0.5);
            assert_eq!(d[(i, (i + 59) % 60)], 0.5);
            assert_close(d.row(i).sum(), 1.0, 1e-15);
        }
    }

    #[test]
    fn chain_row_stochastic() {
        let g = DiGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let d = g.row_stochastic(&[0.0, 1.0]).unwrap().matrix;
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]));
    }

    #[test]
    fn bound_below_in_degree_is_rejected() {
        let g = DiGraph::cycle(4).unwrap();
        let err = g.row_stochastic(&[1.0, 0.5, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::BoundTooSmall { node: 2, .. }));
    }

    #[test]
    fn spanning_tree_examples() {
        assert!(DiGraph::cycle(60).unwrap().has_spanning_tree());
        assert!(!DiGraph::from_edges(2, &[]).unwrap().has_spanning_tree());
        assert!(DiGraph::star(6).unwrap().has_spanning_tree());
        // Two roots feeding a common node: no single root reaches both.
        let g = DiGraph::from_edges(3, &[(0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(!g.has_spanning_tree());
        assert!(!g.has_simple_zero_eigenvalue().unwrap());
    }

    #[test]
    fn nonzero_spectrum_examples() {
        let both = DiGraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let s = both.laplacian().nonzero_spectrum().unwrap();
        assert_eq!(s.len(), 1);
        assert_close(s[0].re, 2.0, 1e-12);

        let path = DiGraph::path(2).unwrap();
        let s = path.laplacian().nonzero_spectrum().unwrap();
        assert_close(s[0].re, 1.0, 1e-14);
        assert_close(s[0].im, 0.0, 1e-14);

        let split = DiGraph::from_edges(2, &[]).unwrap();
        assert!(matches!(
            split.laplacian().nonzero_spectrum(),
            Err(Error::ZeroNotSimple { multiplicity: 2, .. })
        ));
    }

    #[test]
    fn duplicate_edges_are_summed() {
        let g = DiGraph::parse_edge_list("# test\n1 2 0.5\n1 2 0.25\n\n2 3 1\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.weights()[(1, 0)], 0.75);
        assert_eq!(g.weights()[(2, 1)], 1.0);
    }

    #[test]
    fn edge_list_errors() {
        assert!(matches!(DiGraph::parse_edge_list("1 1 1"), Err(Error::InvalidGraph(_))));
        assert!(matches!(DiGraph::parse_edge_list("1 2 -1"), Err(Error::InvalidGraph(_))));
        assert!(matches!(DiGraph::parse_edge_list("0 2 1"), Err(Error::Parse(_))));
        assert!(matches!(DiGraph::parse_edge_list("1 2"), Err(Error::Parse(_))));
        assert!(matches!(DiGraph::parse_edge_list("# empty"), Err(Error::Parse(_))));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = DiGraph::random_spanning(7, 0.2, 3).unwrap();
        let back = DiGraph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn graph_spec_parsing() {
        assert_eq!("cycle(60)".parse::<GraphSpec>().unwrap(), GraphSpec::Cycle(60));
        assert_eq!(
            "random_tree(25, 7)".parse::<GraphSpec>().unwrap(),
            GraphSpec::RandomTree { n: 25, seed: 7 }
        );
        assert_eq!(
            "graphs/g.txt".parse::<GraphSpec>().unwrap(),
            GraphSpec::EdgeList("graphs/g.txt".into())
        );
        assert!("cycle(x)".parse::<GraphSpec>().is_err());
        assert_eq!(GraphSpec::Star(8).build().unwrap().node_count(), 8);
        assert!(GraphSpec::RandomTree { n: 25, seed: 1 }
            .build()
            .unwrap()
            .has_spanning_tree());
    }
}
