//! Clustering agreement metrics (NMI, ARI, ACC), partition conductance, and
//! embedding distortion against the tree metric.

use std::collections::HashMap;

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::entropy::PartitionTree;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeSubset};
use crate::lorentz::{LorentzPoint, LorentzSpace};

/// Everything `eval` reports about a predicted clustering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
    /// Number of distinct predicted clusters.
    pub clusters: usize,
    /// Smallest subset conductance over the predicted clusters.
    pub conductance: f64,
    pub runtime_seconds: f64,
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "label lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Validation("labelings must be non-empty".into()));
    }
    Ok(())
}

/// Renames labels to a dense 0..k range (first appearance order).
fn densify(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let next = map.len();
        out.push(*map.entry(l).or_insert(next));
    }
    (out, map.len())
}

/// Contingency counts plus both marginals.
fn counts(pred: &[usize], truth: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<usize>) {
    let (p, kp) = densify(pred);
    let (t, kt) = densify(truth);
    let mut cells = vec![vec![0usize; kt]; kp];
    let mut a = vec![0usize; kp];
    let mut b = vec![0usize; kt];
    for (&i, &j) in p.iter().zip(t.iter()) {
        cells[i][j] += 1;
        a[i] += 1;
        b[j] += 1;
    }
    (cells, a, b)
}

/// Normalized mutual information with the arithmetic-mean normalization:
/// 2·I(pred; truth) / (H(pred) + H(truth)), with 0·log 0 = 0. Two constant
/// labelings agree perfectly by convention.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (cells, a, b) = counts(pred, truth);
    let n = pred.len() as f64;
    let mut mi = 0.0;
    for (i, row) in cells.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / ((a[i] as f64 / n) * (b[j] as f64 / n))).log2();
            }
        }
    }
    let ent = |marginal: &[usize]| -> f64 {
        marginal
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    };
    let denom = ent(&a) + ent(&b);
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * mi / denom).clamp(0.0, 1.0))
}

/// Adjusted Rand index: pair counting with the expected-index correction.
/// Degenerate marginals (nothing to adjust) count as perfect agreement.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (cells, a, b) = counts(pred, truth);
    let c2 = |x: usize| {
        let x = x as f64;
        x * (x - 1.0) * 0.5
    };
    let index: f64 = cells.iter().flatten().map(|&c| c2(c)).sum();
    let sum_a: f64 = a.iter().map(|&x| c2(x)).sum();
    let sum_b: f64 = b.iter().map(|&x| c2(x)).sum();
    let total = c2(pred.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// Clustering accuracy under the best one-to-one label matching, found by
/// optimal assignment on the (zero-padded) contingency matrix; unmatched
/// predicted clusters contribute nothing.
pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (cells, a, b) = counts(pred, truth);
    let dim = a.len().max(b.len());
    let rows: Vec<Vec<i64>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| *cells.get(i).and_then(|r| r.get(j)).unwrap_or(&0) as i64)
                .collect()
        })
        .collect();
    let weights = Matrix::from_rows(rows)
        .map_err(|e| Error::State(format!("contingency matrix: {e}")))?;
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.len() as f64)
}

/// Smallest subset conductance over the partition's clusters. A one-cluster
/// partition cuts nothing and scores 0.
pub fn partition_conductance(g: &Graph, labels: &[usize]) -> Result<f64> {
    if labels.len() != g.node_count() {
        return Err(Error::Dimension(format!(
            "{} labels for {} graph nodes",
            labels.len(),
            g.node_count()
        )));
    }
    let (dense, k) = densify(labels);
    if k <= 1 {
        return Ok(0.0);
    }
    let mut best = f64::INFINITY;
    for c in 0..k {
        let members = NodeSubset::new((0..dense.len()).filter(|&v| dense[v] == c));
        best = best.min(g.subset_conductance(&members)?);
    }
    Ok(best)
}

/// Assembles the full report for a predicted clustering.
pub fn metric_report(
    g: &Graph,
    pred: &[usize],
    truth: &[usize],
    runtime_seconds: f64,
) -> Result<MetricReport> {
    Ok(MetricReport {
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
        acc: acc(pred, truth)?,
        clusters: densify(pred).1,
        conductance: partition_conductance(g, pred)?,
        runtime_seconds,
    })
}

/// Mean relative distortion of the leaf embeddings against the tree metric:
/// (1/n²) Σ_{i≠j} |d_T(i,j) / (s·d_L(i,j)) − 1|, where d_T counts tree hops
/// between the leaves owning i and j and s is the least-squares scale fitted
/// to all pairs.
pub fn distortion_report(g: &Graph, t: &PartitionTree, space: &LorentzSpace) -> Result<f64> {
    let n = g.node_count();
    let mut leaf_of = vec![usize::MAX; n];
    for node in &t.nodes {
        if node.is_leaf() && node.module.len() == 1 {
            let v = node.module[0];
            if v >= n || leaf_of[v] != usize::MAX {
                return Err(Error::Validation(format!(
                    "graph node {v} is not owned by exactly one leaf"
                )));
            }
            leaf_of[v] = node.id;
        }
    }
    if leaf_of.iter().any(|&l| l == usize::MAX) {
        return Err(Error::Validation(
            "tree metric does not reach every graph node".into(),
        ));
    }
    if n < 2 {
        return Ok(0.0);
    }
    let points: Vec<LorentzPoint> = leaf_of
        .iter()
        .map(|&id| {
            t.nodes[id]
                .coords
                .clone()
                .ok_or_else(|| Error::Validation(format!("leaf {id} lacks coordinates")))
        })
        .collect::<Result<_>>()?;
    // Hop distances through the tree, one BFS per leaf.
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); t.nodes.len()];
    for node in &t.nodes {
        if let Some(p) = node.parent {
            adjacency[node.id].push(p);
            adjacency[p].push(node.id);
        }
    }
    let hops_from = |start: usize| -> Vec<usize> {
        let mut dist = vec![usize::MAX; t.nodes.len()];
        dist[start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &w in &adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    };
    let mut d_tree = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        let dist = hops_from(leaf_of[i]);
        for j in 0..n {
            let d = dist[leaf_of[j]];
            if d == usize::MAX {
                return Err(Error::Validation("tree metric is disconnected".into()));
            }
            d_tree[i][j] = d as f64;
        }
    }
    let mut d_emb = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = space.distance(&points[i], &points[j])?;
            if d == 0.0 {
                return Err(Error::Degenerate(format!(
                    "leaves of nodes {i} and {j} share an embedding"
                )));
            }
            d_emb[i][j] = d;
            d_emb[j][i] = d;
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            num += d_tree[i][j] * d_emb[i][j];
            den += d_emb[i][j] * d_emb[i][j];
        }
    }
    if den == 0.0 {
        return Err(Error::Degenerate("all leaf embeddings coincide".into()));
    }
    let scale = num / den;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += (d_tree[i][j] / (scale * d_emb[i][j]) - 1.0).abs();
            }
        }
    }
    Ok(total / (n * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::decode_tree;
    use crate::train::{train, TrainConfig};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cliques(size: usize) -> Graph {
        let mut e = Vec::new();
        for base in [0, size] {
            for i in 0..size {
                for j in (i + 1)..size {
                    e.push((base + i, base + j, 1.0));
                }
            }
        }
        e.push((0, size, 1.0));
        Graph::from_edges(2 * size, &e).unwrap()
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let truth = vec![0, 0, 1, 1, 2, 2, 2];
        assert_relative_eq!(nmi(&truth, &truth).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(ari(&truth, &truth).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(acc(&truth, &truth).unwrap(), 1.0, epsilon = 1e-12);
        // Renaming labels changes nothing.
        let renamed: Vec<usize> = truth.iter().map(|&l| [7, 3, 5][l]).collect();
        assert_relative_eq!(nmi(&renamed, &truth).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(ari(&renamed, &truth).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(acc(&renamed, &truth).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_prediction_carries_no_information() {
        let pred = vec![0, 0, 0, 0];
        let truth = vec![0, 1, 0, 1];
        assert_eq!(nmi(&pred, &truth).unwrap(), 0.0);
        // ACC still gets the majority class right.
        assert_relative_eq!(acc(&pred, &truth).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn independent_labelings_hit_the_hand_counted_values() {
        let pred = vec![0, 0, 1, 1];
        let truth = vec![0, 1, 0, 1];
        // All four contingency cells equal 1: zero mutual information.
        assert_eq!(nmi(&pred, &truth).unwrap(), 0.0);
        // Pair counting: index 0, expected 2·2/6, max 2 → −1/2.
        assert_relative_eq!(ari(&pred, &truth).unwrap(), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_matches_the_exhaustive_matching_oracle() {
        assert_relative_eq!(
            acc(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        // Rectangular case: three predicted clusters against two true ones;
        // the best matching pairs p0→t0 (1 node) and p2→t1 (2 nodes).
        assert_relative_eq!(
            acc(&[0, 1, 2, 2], &[0, 0, 1, 1]).unwrap(),
            0.75,
            epsilon = 1e-12
        );
    }

    #[test]
    fn metrics_are_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..10 {
            let n = rng.gen_range(6..20);
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let perm = [13, 2, 27, 5];
            let renamed: Vec<usize> = pred.iter().map(|&l| perm[l]).collect();
            let base = (
                nmi(&pred, &truth).unwrap(),
                ari(&pred, &truth).unwrap(),
                acc(&pred, &truth).unwrap(),
            );
            let moved = (
                nmi(&renamed, &truth).unwrap(),
                ari(&renamed, &truth).unwrap(),
                acc(&renamed, &truth).unwrap(),
            );
            assert!((base.0 - moved.0).abs() <= 1e-12);
            assert!((base.1 - moved.1).abs() <= 1e-12);
            assert!((base.2 - moved.2).abs() <= 1e-12);
            assert!((0.0..=1.0).contains(&base.0));
            assert!((-0.5..=1.0).contains(&base.1));
            assert!((0.0..=1.0).contains(&base.2));
        }
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(matches!(nmi(&[0, 1], &[0]), Err(Error::Dimension(_))));
        assert!(matches!(ari(&[0, 1], &[0]), Err(Error::Dimension(_))));
        assert!(matches!(acc(&[0, 1], &[0]), Err(Error::Dimension(_))));
        assert!(matches!(nmi(&[], &[]), Err(Error::Validation(_))));
    }

    #[test]
    fn partition_conductance_takes_the_weakest_cluster() {
        let g = two_cliques(4);
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let expected = g
            .subset_conductance(&NodeSubset::new(0..4))
            .unwrap()
            .min(g.subset_conductance(&NodeSubset::new(4..8)).unwrap());
        assert_relative_eq!(
            partition_conductance(&g, &labels).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_eq!(partition_conductance(&g, &vec![3; 8]).unwrap(), 0.0);
    }

    #[test]
    fn report_bundles_all_fields() {
        let g = two_cliques(3);
        let pred = vec![0, 0, 0, 1, 1, 1];
        let truth = vec![1, 1, 1, 0, 0, 0];
        let report = metric_report(&g, &pred, &truth, 1.25).unwrap();
        assert_relative_eq!(report.nmi, 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.ari, 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.acc, 1.0, epsilon = 1e-12);
        assert_eq!(report.clusters, 2);
        assert!(report.conductance > 0.0);
        assert_eq!(report.runtime_seconds, 1.25);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"nmi\":1.0"));
    }

    fn proportional_tree(n: usize, radius: f64) -> PartitionTree {
        // One module per node: all leaf pairs sit 4 hops apart, so placing
        // the leaves equidistantly on a circle fits the tree metric exactly.
        let parts: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
        let mut tree = PartitionTree::two_level(n, &parts).unwrap();
        for id in tree.leaf_ids() {
            let v = tree.nodes[id].module[0] as f64;
            let angle = 2.0 * std::f64::consts::PI * v / n as f64;
            tree.nodes[id].coords = Some(LorentzPoint(DVector::from_vec(vec![
                radius.cosh(),
                radius.sinh() * angle.cos(),
                radius.sinh() * angle.sin(),
            ])));
        }
        tree
    }

    #[test]
    fn exactly_proportional_embeddings_have_zero_distortion() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let tree = proportional_tree(3, 0.8);
        let space = LorentzSpace::standard();
        let v = distortion_report(&g, &tree, &space).unwrap();
        assert!(v.abs() <= 1e-9, "distortion {v}");
    }

    #[test]
    fn random_embeddings_yield_finite_nonnegative_distortion() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let g = two_cliques(3);
        let parts: Vec<Vec<usize>> = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let mut tree = PartitionTree::two_level(6, &parts).unwrap();
        for id in 0..tree.nodes.len() {
            let x = rng.gen_range(-1.0..1.0);
            let y = rng.gen_range(-1.0..1.0);
            let t = (1.0 + x * x + y * y as f64).sqrt();
            tree.nodes[id].coords = Some(LorentzPoint(DVector::from_vec(vec![t, x, y])));
        }
        let space = LorentzSpace::standard();
        let v = distortion_report(&g, &tree, &space).unwrap();
        assert!(v.is_finite() && v >= 0.0);
        // Missing coordinates are a validation error.
        let first_leaf = tree.leaf_ids()[0];
        tree.nodes[first_leaf].coords = None;
        assert!(matches!(
            distortion_report(&g, &tree, &space),
            Err(Error::Validation(_))
        ));
    }

    /// Distinct edge weights so that no two nodes are automorphic: the
    /// attention scores are rank-one before the row softmax, so exactly
    /// symmetric nodes would collapse onto a single embedding.
    fn weighted_two_cliques(size: usize) -> Graph {
        let mut e = Vec::new();
        let mut w = 1.0;
        for base in [0, size] {
            for i in 0..size {
                for j in (i + 1)..size {
                    e.push((base + i, base + j, w));
                    w += 0.125;
                }
            }
        }
        e.push((0, size, w));
        Graph::from_edges(2 * size, &e).unwrap()
    }

    #[test]
    fn trained_two_clique_distortion_is_pinned() {
        let g = weighted_two_cliques(3);
        let mut cfg = TrainConfig::for_graph(6, 2, 2).unwrap();
        cfg.model.widths = vec![2];
        cfg.epochs = 5;
        let result = train(&g, &cfg).unwrap();
        let tree = decode_tree(&result.outputs).unwrap();
        let space = LorentzSpace::standard();
        let v = distortion_report(&g, &tree, &space).unwrap();
        assert_relative_eq!(v, 1.38180600822327415, epsilon = 1e-12);
    }

    #[test]
    fn automorphic_nodes_collapse_and_are_reported() {
        // The unweighted two-clique graph has interchangeable nodes; the
        // network maps them to one point and the distortion report says so.
        let g = two_cliques(3);
        let mut cfg = TrainConfig::for_graph(6, 2, 0).unwrap();
        cfg.model.widths = vec![2];
        cfg.epochs = 2;
        let result = train(&g, &cfg).unwrap();
        let tree = decode_tree(&result.outputs).unwrap();
        let space = LorentzSpace::standard();
        assert!(matches!(
            distortion_report(&g, &tree, &space),
            Err(Error::Degenerate(_))
        ));
    }
}
