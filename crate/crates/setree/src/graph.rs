//! Weighted undirected graphs and the degree/volume/cut primitives that the
//! entropy computations are built on.
//!
//! A [`Graph`] is immutable after construction: adjacency is stored both as
//! sorted neighbor lists (for sparse iteration) and cached weighted degrees.
//! Node attributes and ground-truth labels are optional payloads used by the
//! network and evaluation layers.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::path::Path;

/// A set of graph-node indices. Construction sorts and deduplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSubset {
    members: Vec<usize>,
}

impl NodeSubset {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let mut m: Vec<usize> = members.into_iter().collect();
        m.sort_unstable();
        m.dedup();
        NodeSubset { members: m }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    /// Complement of this subset within a graph of `n` nodes.
    pub fn complement(&self, n: usize) -> NodeSubset {
        NodeSubset::new((0..n).filter(|v| !self.contains(*v)))
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let Some(&max) = self.members.last() {
            if max >= n {
                return Err(Error::Validation(format!(
                    "subset references node {max} but the graph has {n} nodes"
                )));
            }
        }
        Ok(())
    }
}

impl<const N: usize> From<[usize; N]> for NodeSubset {
    fn from(a: [usize; N]) -> Self {
        NodeSubset::new(a)
    }
}

impl From<&[usize]> for NodeSubset {
    fn from(a: &[usize]) -> Self {
        NodeSubset::new(a.iter().copied())
    }
}

/// Weighted sparse undirected graph with optional node attributes and labels.
///
/// Invariants: the adjacency is symmetric, all stored weights are strictly
/// positive and finite, there are no self-loops, and every referenced index
/// is `< node_count()`.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    /// Sorted neighbor lists; every undirected edge appears in both lists.
    adj: Vec<Vec<(usize, f64)>>,
    /// Cached weighted degrees d_v.
    deg: Vec<f64>,
    /// Optional dense N×D attribute matrix (row per node).
    pub attributes: Option<Vec<Vec<f64>>>,
    /// Optional ground-truth labels, one per node.
    pub labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Duplicate edges (in either
    /// orientation) are merged by summing weights. Self-loops and non-positive
    /// or non-finite weights are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph> {
        if n == 0 {
            return Err(Error::Validation("graph must have at least one node".into()));
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) references a node >= {n}"
                )));
            }
            if u == v {
                return Err(Error::Validation(format!("self-loop at node {u} rejected")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) has non-positive or non-finite weight {w}"
                )));
            }
            let key = (u.min(v), u.max(v));
            *merged.entry(key).or_insert(0.0) += w;
        }
        let mut adj = vec![Vec::new(); n];
        let mut deg = vec![0.0; n];
        for (&(u, v), &w) in &merged {
            adj[u].push((v, w));
            adj[v].push((u, w));
            deg[u] += w;
            deg[v] += w;
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(j, _)| j);
        }
        Ok(Graph { n, adj, deg, attributes: None, labels: None })
    }

    /// Builds a graph from a dense symmetric weight matrix: every strictly
    /// positive off-diagonal entry becomes an edge.
    pub fn from_dense(w: &DMatrix<f64>) -> Result<Graph> {
        if w.nrows() != w.ncols() {
            return Err(Error::Dimension(format!(
                "adjacency must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let n = w.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let wij = w[(i, j)];
                if wij > 0.0 {
                    edges.push((i, j, wij));
                }
            }
        }
        Graph::from_edges(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|l| l.len()).sum::<usize>() / 2
    }

    /// Weighted degree of node `v`.
    pub fn degree(&self, v: usize) -> f64 {
        self.deg[v]
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    /// Iterates every undirected edge exactly once as (u, v, w) with u < v.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter_map(move |&(v, w)| (u < v).then_some((u, v, w))))
    }

    /// Vol(G): the sum of all weighted degrees (twice the total edge weight).
    pub fn total_volume(&self) -> f64 {
        self.deg.iter().sum()
    }

    /// Vol(s): sum of weighted degrees over a node subset.
    pub fn volume(&self, s: &NodeSubset) -> Result<f64> {
        s.validate(self.n)?;
        Ok(s.members().iter().map(|&v| self.deg[v]).sum())
    }

    /// Total weight of edges with exactly one endpoint in `s`.
    pub fn cut_weight(&self, s: &NodeSubset) -> Result<f64> {
        s.validate(self.n)?;
        let mut cut = 0.0;
        for &u in s.members() {
            for &(v, w) in &self.adj[u] {
                if !s.contains(v) {
                    cut += w;
                }
            }
        }
        Ok(cut)
    }

    /// Conductance of a proper nonempty subset:
    /// cut(s) / min(Vol(s), Vol(V∖s)).
    pub fn subset_conductance(&self, s: &NodeSubset) -> Result<f64> {
        let vs = self.volume(s)?;
        let vc = self.total_volume() - vs;
        if vs <= 0.0 || vc <= 0.0 {
            return Err(Error::Domain(
                "conductance needs positive volume on both sides of the cut".into(),
            ));
        }
        Ok(self.cut_weight(s)? / vs.min(vc))
    }

    /// One-dimensional structural entropy
    /// H¹(G) = −Σ_v (d_v/Vol) log₂(d_v/Vol), with 0·log 0 = 0.
    pub fn one_dim_entropy(&self) -> Result<f64> {
        let vol = self.total_volume();
        if vol <= 0.0 {
            return Err(Error::Domain("entropy of an edgeless graph is undefined".into()));
        }
        let mut h = 0.0;
        for &d in &self.deg {
            if d > 0.0 {
                let p = d / vol;
                h -= p * p.log2();
            }
        }
        Ok(h)
    }

    /// Dense symmetric adjacency matrix (zero diagonal).
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (u, v, w) in self.edges() {
            a[(u, v)] = w;
            a[(v, u)] = w;
        }
        a
    }

    /// Attaches an attribute matrix, validating the row count.
    pub fn with_attributes(mut self, attrs: Vec<Vec<f64>>) -> Result<Graph> {
        if attrs.len() != self.n {
            return Err(Error::Dimension(format!(
                "attribute rows ({}) != node count ({})",
                attrs.len(),
                self.n
            )));
        }
        if let Some(d) = attrs.first().map(|r| r.len()) {
            if let Some(bad) = attrs.iter().find(|r| r.len() != d) {
                return Err(Error::Dimension(format!(
                    "ragged attribute rows: expected {d} columns, found {}",
                    bad.len()
                )));
            }
        }
        self.attributes = Some(attrs);
        Ok(self)
    }

    /// Attaches ground-truth labels, validating the length.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Graph> {
        if labels.len() != self.n {
            return Err(Error::Dimension(format!(
                "label count ({}) != node count ({})",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }
}

/// Parses the whitespace-separated edge-list format: one `src dst [weight]`
/// per line, 0-based ids, weight defaulting to 1.0, `#` comments.
fn parse_edge_list(text: &str) -> Result<(usize, Vec<(usize, usize, f64)>)> {
    let mut edges = Vec::new();
    let mut max_node = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse_id = |tok: Option<&str>, what: &str| -> Result<usize> {
            tok.ok_or_else(|| Error::Parse { line: idx + 1, msg: format!("missing {what}") })?
                .parse::<usize>()
                .map_err(|e| Error::Parse { line: idx + 1, msg: format!("bad {what}: {e}") })
        };
        let u = parse_id(it.next(), "source id")?;
        let v = parse_id(it.next(), "target id")?;
        let w = match it.next() {
            Some(tok) => tok
                .parse::<f64>()
                .map_err(|e| Error::Parse { line: idx + 1, msg: format!("bad weight: {e}") })?,
            None => 1.0,
        };
        if it.next().is_some() {
            return Err(Error::Parse { line: idx + 1, msg: "trailing tokens after weight".into() });
        }
        max_node = max_node.max(u).max(v);
        edges.push((u, v, w));
    }
    if edges.is_empty() {
        return Err(Error::Parse { line: 0, msg: "edge list contains no edges".into() });
    }
    Ok((max_node + 1, edges))
}

/// Parses the headerless CSV attribute format (N rows × D decimal columns).
fn parse_attributes(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line: idx + 1, msg: format!("bad attribute: {e}") })
            })
            .collect();
        rows.push(row?);
    }
    Ok(rows)
}

/// Parses the label format: one `node label` pair per line.
fn parse_labels(text: &str, n: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; n];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>, what: &str| -> Result<usize> {
            tok.ok_or_else(|| Error::Parse { line: idx + 1, msg: format!("missing {what}") })?
                .parse::<usize>()
                .map_err(|e| Error::Parse { line: idx + 1, msg: format!("bad {what}: {e}") })
        };
        let node = parse(it.next(), "node id")?;
        let label = parse(it.next(), "label")?;
        if node >= n {
            return Err(Error::Dimension(format!(
                "label line {} references node {node} but the graph has {n} nodes",
                idx + 1
            )));
        }
        labels[node] = Some(label);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| Error::Dimension(format!("node {v} has no label"))))
        .collect()
}

/// Loads a graph from an edge-list file, with optional attribute and label
/// files (formats documented on the parsing helpers above).
pub fn load_graph(
    edge_list_path: &Path,
    attr_path: Option<&Path>,
    label_path: Option<&Path>,
) -> Result<Graph> {
    let text = std::fs::read_to_string(edge_list_path)?;
    let (n, edges) = parse_edge_list(&text)?;
    let mut g = Graph::from_edges(n, &edges)?;
    if let Some(p) = attr_path {
        g = g.with_attributes(parse_attributes(&std::fs::read_to_string(p)?)?)?;
    }
    if let Some(p) = label_path {
        let labels = parse_labels(&std::fs::read_to_string(p)?, n)?;
        g = g.with_labels(labels)?;
    }
    Ok(g)
}

/// Keeps the k largest off-diagonal entries of each row (ties broken by the
/// lower column index), then symmetrizes by elementwise max and zeroes the
/// diagonal.
pub fn knn_sparsify(weights: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let n = weights.nrows();
    if weights.ncols() != n {
        return Err(Error::Dimension(format!(
            "weight matrix must be square, got {}x{}",
            n,
            weights.ncols()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::Validation(format!("k must satisfy 1 <= k < N, got k={k}, N={n}")));
    }
    let mut kept = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut row: Vec<(usize, f64)> =
            (0..n).filter(|&j| j != i).map(|j| (j, weights[(i, j)])).collect();
        // Sort by weight descending, then column ascending for stable ties.
        row.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for &(j, w) in row.iter().take(k) {
            kept[(i, j)] = w;
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[(i, j)] = kept[(i, j)].max(kept[(j, i)]);
            }
        }
    }
    Ok(out)
}

/// Convex graph fusion A^γ = (1−γ)·A + γ·Ã, elementwise.
pub fn fuse_adjacency(
    a: &DMatrix<f64>,
    a_virtual: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    if a.shape() != a_virtual.shape() {
        return Err(Error::Dimension(format!(
            "adjacency shapes differ: {:?} vs {:?}",
            a.shape(),
            a_virtual.shape()
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Validation(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(a * (1.0 - gamma) + a_virtual * gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn k3() -> Graph {
        Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    /// Two K4 cliques joined by a single unit bridge (0–4).
    fn two_k4_bridge() -> Graph {
        let mut e = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    e.push((base + i, base + j, 1.0));
                }
            }
        }
        e.push((0, 4, 1.0));
        Graph::from_edges(8, &e).unwrap()
    }

    #[test]
    fn merges_duplicate_edges() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 0, 2.0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_relative_eq!(g.degree(0), 3.0);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(3, &[(0, 1, -1.0)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 0, 1.0)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 5, 1.0)]).is_err());
    }

    #[test]
    fn volume_and_cut_on_k3() {
        let g = k3();
        assert_relative_eq!(g.total_volume(), 6.0);
        assert_relative_eq!(g.volume(&[0].into()).unwrap(), 2.0);
        assert_relative_eq!(g.volume(&NodeSubset::new([])).unwrap(), 0.0);
        assert_relative_eq!(g.cut_weight(&[0].into()).unwrap(), 2.0);
        assert_relative_eq!(g.subset_conductance(&[0].into()).unwrap(), 1.0);
    }

    #[test]
    fn path_cut() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_relative_eq!(g.cut_weight(&[1].into()).unwrap(), 2.0);
    }

    #[test]
    fn bridge_conductance_is_one_thirteenth() {
        let g = two_k4_bridge();
        let phi = g.subset_conductance(&[0, 1, 2, 3].into()).unwrap();
        assert_relative_eq!(phi, 1.0 / 13.0, epsilon = 1e-12);
    }

    #[test]
    fn disconnected_clique_conductance_is_zero() {
        let mut e = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    e.push((base + i, base + j, 1.0));
                }
            }
        }
        let g = Graph::from_edges(8, &e).unwrap();
        assert_relative_eq!(g.subset_conductance(&[0, 1, 2, 3].into()).unwrap(), 0.0);
    }

    #[test]
    fn one_dim_entropy_values() {
        assert_relative_eq!(k3().one_dim_entropy().unwrap(), 3f64.log2(), epsilon = 1e-12);
        let edge = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_relative_eq!(edge.one_dim_entropy().unwrap(), 1.0);
        // Star with 3 leaves: −(3/6)log₂(3/6) − 3·(1/6)log₂(1/6).
        let star = Graph::from_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        assert_relative_eq!(star.one_dim_entropy().unwrap(), 1.7924812503605778, epsilon = 1e-12);
    }

    #[test]
    fn cut_symmetry_and_volume_partition() {
        let g = two_k4_bridge();
        let s: NodeSubset = [0, 2, 5].into();
        let c = s.complement(8);
        assert_relative_eq!(g.cut_weight(&s).unwrap(), g.cut_weight(&c).unwrap());
        assert_relative_eq!(
            g.volume(&s).unwrap() + g.volume(&c).unwrap(),
            g.total_volume(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn knn_keeps_top_entries_per_row() {
        // Row 0 keeps only its largest neighbor before symmetrization.
        let w = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.9, 0.5, 0.9, 0.0, 0.1, 0.5, 0.1, 0.0],
        );
        let out = knn_sparsify(&w, 1).unwrap();
        assert_relative_eq!(out[(0, 1)], 0.9);
        // (0,2) was dropped by row 0 and row 2 kept (2,0)=0.5, so max restores it.
        assert_relative_eq!(out[(0, 2)], 0.5);
        assert_relative_eq!(out[(1, 2)], 0.0);
        for i in 0..3 {
            assert_eq!(out[(i, i)], 0.0);
        }
    }

    #[test]
    fn knn_full_k_is_identity_up_to_diagonal() {
        let w = DMatrix::from_row_slice(
            3,
            3,
            &[7.0, 0.9, 0.5, 0.9, 3.0, 0.1, 0.5, 0.1, 2.0],
        );
        let out = knn_sparsify(&w, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { w[(i, j)] };
                assert_relative_eq!(out[(i, j)], expect);
            }
        }
        assert!(knn_sparsify(&w, 3).is_err());
    }

    #[test]
    fn fusion_endpoints() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]);
        let g1 = fuse_adjacency(&a, &b, 1.0).unwrap();
        assert_relative_eq!(g1[(0, 1)], 3.0);
        let gh = fuse_adjacency(&a, &b, 0.5).unwrap();
        assert_relative_eq!(gh[(0, 1)], 2.0);
        let g0 = fuse_adjacency(&a, &b, 1e-9).unwrap();
        assert_relative_eq!(g0[(0, 1)], 1.0, max_relative = 1e-8);
        assert!(fuse_adjacency(&a, &b, 0.0).is_err());
        assert!(fuse_adjacency(&a, &b, 1.5).is_err());
    }

    #[test]
    fn parse_edge_list_formats() {
        let (n, e) = parse_edge_list("# comment\n0 1 1.0\n1 2\n").unwrap();
        assert_eq!(n, 3);
        assert_eq!(e.len(), 2);
        assert_relative_eq!(e[1].2, 1.0);
        assert!(parse_edge_list("0 x 1.0").is_err());
    }
}
