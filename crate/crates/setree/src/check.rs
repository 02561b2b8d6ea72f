//! Self-verification suite behind the `check` subcommand: every algebraic
//! identity the library documents, exercised on freshly generated random
//! instances. Each check either passes or reports the first violated
//! assertion; the CLI turns any failure into a nonzero exit code.
//!
//! The random-instance generators live here as public functions so
//! integration tests can draw from the same corpus.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decode::{clusters_natural, decode_tree, prune};
use crate::entropy::{greedy_coding_tree, tree_si, PartitionTree, TreeNode};
use crate::error::{Error, Result};
use crate::graph::{fuse_adjacency, Graph, NodeSubset};
use crate::lorentz::{minkowski_inner, LorentzBoost, LorentzPoint, LorentzSpace};
use crate::metrics::{acc, ari, nmi};
use crate::net::{forward, LsenetParams, ModelConfig};
use crate::soft::{
    additivity_decomposition, level_dsi_edgewise, level_dsi_nodewise, total_dsi, LevelAssignment,
};
use crate::train::{train, virtual_adjacency, TrainConfig};

/// Erdős–Rényi-style weighted graph with no isolated nodes and at least one
/// edge (rejection-sampled, deterministic given the generator state).
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, edge_prob: f64) -> Graph {
    loop {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < edge_prob {
                    edges.push((i, j, rng.gen_range(0.5..2.0)));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        let g = Graph::from_edges(n, &edges).unwrap();
        if (0..n).all(|v| g.degree(v) > 0.0) {
            return g;
        }
    }
}

fn random_partition(
    rng: &mut ChaCha8Rng,
    module: &[usize],
    force_split: bool,
) -> Vec<Vec<usize>> {
    let max_parts = module.len().min(4);
    let min_parts = if force_split && module.len() >= 2 { 2 } else { 1 };
    loop {
        let m = rng.gen_range(min_parts..=max_parts);
        let mut parts = vec![Vec::new(); m];
        for &v in module {
            parts[rng.gen_range(0..m)].push(v);
        }
        parts.retain(|p| !p.is_empty());
        if parts.len() >= min_parts {
            return parts;
        }
    }
}

/// Uniform-ish random hard partitioning tree of exact `height` over `n ≥ 2`
/// graph nodes: the root always splits into at least two proper modules,
/// deeper modules may pass through unsplit, leaves are singletons.
pub fn random_hard_tree(rng: &mut ChaCha8Rng, n: usize, height: usize) -> PartitionTree {
    assert!(n >= 2 && height >= 1);
    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        children: Vec::new(),
        module: (0..n).collect(),
        height: 0,
        coords: None,
    }];
    let mut frontier = vec![0usize];
    for depth in 0..height {
        let mut next = Vec::new();
        for &id in &frontier {
            let module = nodes[id].module.clone();
            let parts: Vec<Vec<usize>> = if depth == height - 1 {
                module.iter().map(|&v| vec![v]).collect()
            } else {
                random_partition(rng, &module, depth == 0)
            };
            for mut part in parts {
                part.sort_unstable();
                let cid = nodes.len();
                nodes.push(TreeNode {
                    id: cid,
                    parent: Some(id),
                    children: Vec::new(),
                    module: part,
                    height: depth + 1,
                    coords: None,
                });
                nodes[id].children.push(cid);
                next.push(cid);
            }
        }
        frontier = next;
    }
    PartitionTree { nodes, root: 0 }
}

/// Smallest outflow ratio cut(T_α)/Vol(T_α) among nonempty proper modules of
/// non-root nodes; 0 when no module qualifies (the bound is then vacuous).
///
/// This is the floor the normalized entropy provably dominates. It equals
/// the usual conductance whenever the module holds at most half the total
/// volume; measuring against min(Vol, Vol of complement) instead would
/// overstate the floor and the bound can then fail on trees with a module
/// above half volume.
pub fn min_module_conductance(g: &Graph, t: &PartitionTree) -> Result<f64> {
    let n = g.node_count();
    let mut best: Option<f64> = None;
    for node in &t.nodes {
        if node.id == t.root || node.module.is_empty() || node.module.len() == n {
            continue;
        }
        let s = NodeSubset::new(node.module.iter().copied());
        let phi = g.cut_weight(&s)? / g.volume(&s)?;
        best = Some(best.map_or(phi, |b: f64| b.min(phi)));
    }
    Ok(best.unwrap_or(0.0))
}

fn violation(msg: String) -> Error {
    Error::Validation(msg)
}

fn check_cut_volume_symmetry() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..10 {
        let n = rng.gen_range(4..=10);
        let g = random_graph(&mut rng, n, 0.5);
        let members: Vec<usize> = (0..n).filter(|_| rng.gen::<bool>()).collect();
        if members.is_empty() || members.len() == n {
            continue;
        }
        let s = NodeSubset::new(members);
        let c = s.complement(n);
        let (cs, cc) = (g.cut_weight(&s)?, g.cut_weight(&c)?);
        if (cs - cc).abs() > 1e-12 * cs.abs().max(1.0) {
            return Err(violation(format!(
                "trial {trial}: cut({s:?}) = {cs} but cut(complement) = {cc}"
            )));
        }
        let (vs, vc, vg) = (g.volume(&s)?, g.volume(&c)?, g.total_volume());
        if (vs + vc - vg).abs() > 1e-12 * vg {
            return Err(violation(format!(
                "trial {trial}: volumes {vs} + {vc} != total {vg}"
            )));
        }
    }
    Ok(())
}

fn equivalence_corpus() -> Vec<(Graph, PartitionTree)> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut corpus = Vec::new();
    for trial in 0..12 {
        let n = 4 + trial % 7;
        let g = random_graph(&mut rng, n, 0.45);
        let tree = random_hard_tree(&mut rng, n, 2 + trial % 2);
        corpus.push((g, tree));
    }
    corpus
}

fn check_hard_soft_equivalence() -> Result<()> {
    for (i, (g, tree)) in equivalence_corpus().iter().enumerate() {
        let stack = LevelAssignment::from_tree(tree, g.node_count())?;
        let soft = total_dsi(g, &stack)?;
        let hard = tree_si(g, tree)?;
        if (soft - hard).abs() > 1e-9 {
            return Err(violation(format!(
                "instance {i}: differentiable objective {soft} vs discrete {hard}"
            )));
        }
    }
    Ok(())
}

fn check_edgewise_nodewise_agreement() -> Result<()> {
    for (i, (g, tree)) in equivalence_corpus().iter().enumerate() {
        let stack = LevelAssignment::from_tree(tree, g.node_count())?;
        for h in 1..=stack.height() {
            let e = level_dsi_edgewise(g, &stack, h)?;
            let v = level_dsi_nodewise(g, &stack, h)?;
            if (e - v).abs() > 1e-9 {
                return Err(violation(format!(
                    "instance {i}, level {h}: edge route {e} vs node route {v}"
                )));
            }
        }
    }
    Ok(())
}

fn check_additivity() -> Result<()> {
    for (i, (g, tree)) in equivalence_corpus().iter().enumerate() {
        let stack = LevelAssignment::from_tree(tree, g.node_count())?;
        let lhs = additivity_decomposition(g, &stack)?;
        let rhs = g.one_dim_entropy()?;
        if (lhs - rhs).abs() > 1e-9 {
            return Err(violation(format!(
                "instance {i}: decomposition sums to {lhs}, flat entropy is {rhs}"
            )));
        }
    }
    Ok(())
}

fn check_conductance_bound() -> Result<()> {
    for (i, (g, tree)) in equivalence_corpus().iter().enumerate() {
        let ratio = tree_si(g, tree)? / g.one_dim_entropy()?;
        let phi = min_module_conductance(g, tree)?;
        if ratio < phi - 1e-9 {
            return Err(violation(format!(
                "instance {i}: normalized entropy {ratio} under conductance floor {phi}"
            )));
        }
    }
    Ok(())
}

fn check_insertion_flexibility() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for trial in 0..5 {
        let n = rng.gen_range(4..=9);
        let g = random_graph(&mut rng, n, 0.5);
        let tree = random_hard_tree(&mut rng, n, 2);
        let base = tree_si(&g, &tree)?;

        let mut with_leaf = tree.clone();
        with_leaf.insert_empty_leaf(tree.root);
        let after = tree_si(&g, &with_leaf)?;
        if (after - base).abs() > 1e-10 {
            return Err(violation(format!(
                "trial {trial}: empty leaf moved the entropy by {}",
                after - base
            )));
        }

        let mut with_dup = tree.clone();
        let alpha = tree.nodes[tree.root].children[0];
        with_dup.insert_duplicate_below(alpha);
        let after = tree_si(&g, &with_dup)?;
        if (after - base).abs() > 1e-10 {
            return Err(violation(format!(
                "trial {trial}: duplicate-module node moved the entropy by {}",
                after - base
            )));
        }
    }
    Ok(())
}

fn check_greedy_height_monotone() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for trial in 0..5 {
        let n = rng.gen_range(6..=12);
        let g = random_graph(&mut rng, n, 0.4);
        let si2 = tree_si(&g, &greedy_coding_tree(&g, 2)?)?;
        let si3 = tree_si(&g, &greedy_coding_tree(&g, 3)?)?;
        if si3 > si2 + 1e-12 {
            return Err(violation(format!(
                "trial {trial}: height-3 entropy {si3} above height-2 entropy {si2}"
            )));
        }
    }
    Ok(())
}

fn check_greedy_on_separable_fixture() -> Result<()> {
    let mut edges = Vec::new();
    for base in [0, 4] {
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push((base + i, base + j, 1.0));
            }
        }
    }
    let g = Graph::from_edges(8, &edges).unwrap();
    let greedy = greedy_coding_tree(&g, 2)?;
    let mut modules = greedy.modules_at_height(1);
    modules.sort();
    if modules != vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]] {
        return Err(violation(format!("greedy split two cliques as {modules:?}")));
    }
    let (_, best) = crate::entropy::brute_force_optimal_tree(&g, 2)?;
    let si = tree_si(&g, &greedy)?;
    if (si - best).abs() > 1e-9 {
        return Err(violation(format!("greedy entropy {si} vs exhaustive optimum {best}")));
    }
    Ok(())
}

fn check_boost_algebra() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let space = LorentzSpace::standard();
    for trial in 0..200 {
        let d = 2 + trial % 3;
        let mut beta: DVector<f64> = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        beta *= rng.gen_range(0.0..0.85) / beta.norm().max(1e-9);
        let boost = LorentzBoost::from_beta(&beta)?;
        if boost.metric_defect() > 1e-9 {
            return Err(violation(format!(
                "trial {trial}: boost matrix defect {}",
                boost.metric_defect()
            )));
        }
        let x = space.lift_spatial(&DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0)));
        let y = space.lift_spatial(&DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0)));
        let before = minkowski_inner(&x.0, &y.0);
        let after = minkowski_inner(&boost.apply(&x)?.0, &boost.apply(&y)?.0);
        if (before - after).abs() > 1e-9 * before.abs().max(1.0) {
            return Err(violation(format!(
                "trial {trial}: inner product drifted {before} -> {after}"
            )));
        }
    }
    for trial in 0..20 {
        let d = 3;
        let mut beta: DVector<f64> = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        beta *= rng.gen_range(0.0..0.8) / beta.norm().max(1e-9);
        let boost = LorentzBoost::from_beta(&beta)?;
        let m = rng.gen_range(2..=5);
        let points: Vec<LorentzPoint> = (0..m)
            .map(|_| space.lift_spatial(&DVector::from_fn(d, |_, _| rng.gen_range(-1.5..1.5))))
            .collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..2.0)).collect();
        let a = boost.apply(&space.weighted_midpoint(&points, &weights)?)?;
        let boosted: Result<Vec<LorentzPoint>> = points.iter().map(|p| boost.apply(p)).collect();
        let b = space.weighted_midpoint(&boosted?, &weights)?;
        let gap = (&a.0 - &b.0).abs().max();
        if gap > 1e-8 {
            return Err(violation(format!(
                "trial {trial}: boost and midpoint disagree by {gap} in coordinates"
            )));
        }
    }
    Ok(())
}

fn check_centroid_local_optimality() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let space = LorentzSpace::standard();
    // Weighted squared Lorentz distance Σ w‖x − c‖²_L, the objective the
    // midpoint minimizes in closed form.
    let objective = |c: &LorentzPoint, points: &[LorentzPoint], w: &[f64]| -> f64 {
        let kappa = space.curvature();
        points
            .iter()
            .zip(w)
            .map(|(p, &wi)| wi * (2.0 / kappa - 2.0 * minkowski_inner(&p.0, &c.0)))
            .sum()
    };
    for trial in 0..10 {
        let d = 3;
        let m = rng.gen_range(3..=6);
        let points: Vec<LorentzPoint> = (0..m)
            .map(|_| space.lift_spatial(&DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))))
            .collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..2.0)).collect();
        let mid = space.weighted_midpoint(&points, &weights)?;
        let at_mid = objective(&mid, &points, &weights);
        for _ in 0..50 {
            let raw = DVector::from_fn(d + 1, |_, _| rng.gen_range(-1.0..1.0));
            let mut u = space.project_tangent(&mid, &raw);
            let norm = u.norm();
            if norm == 0.0 {
                continue;
            }
            u.0 *= 1e-2 / norm;
            let nearby = space.exp_map(&mid, &u)?;
            if objective(&nearby, &points, &weights) < at_mid {
                return Err(violation(format!(
                    "trial {trial}: a radius-0.01 perturbation beats the midpoint"
                )));
            }
        }
    }
    Ok(())
}

fn check_forward_wellformedness() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let g = random_graph(&mut rng, 9, 0.45);
    let cfg = ModelConfig::for_graph(9, 3, 7)?;
    let params = LsenetParams::init(&cfg, 9)?;
    let out = forward(&g, &cfg, &params)?;
    let space = LorentzSpace::new(cfg.kappa)?;
    for (idx, c) in out.c.iter().enumerate() {
        for i in 0..c.rows() {
            let row: f64 = (0..c.cols()).map(|j| c.get(i, j)).sum();
            if (row - 1.0).abs() > 1e-8 {
                return Err(violation(format!(
                    "assignment {idx} row {i} sums to {row}, expected 1"
                )));
            }
        }
    }
    for (idx, z) in out.z.iter().enumerate() {
        for i in 0..z.rows() {
            let p = LorentzPoint(DVector::from_fn(z.cols(), |j, _| z.get(i, j)));
            if !space.on_manifold(&p, 1e-7) {
                return Err(violation(format!(
                    "embedding {idx} row {i} left the hyperboloid"
                )));
            }
        }
    }
    Ok(())
}

fn check_virtual_graph_and_fusion() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let g = random_graph(&mut rng, 8, 0.5);
    let cfg = ModelConfig::for_graph(8, 2, 3)?;
    let params = LsenetParams::init(&cfg, 8)?;
    let out = forward(&g, &cfg, &params)?;
    let z = out.z_level(cfg.height);
    let beta = crate::autodiff::Tensor::zeros(1, cfg.tree_dim);
    let a_virtual = virtual_adjacency(z, &beta, 1.0, 3, cfg.kappa)?;
    for i in 0..8 {
        if a_virtual.get(i, i) != 0.0 {
            return Err(violation(format!("virtual graph has a self-loop at {i}")));
        }
        for j in 0..8 {
            let w = a_virtual.get(i, j);
            if w != a_virtual.get(j, i) {
                return Err(violation(format!("virtual graph asymmetric at ({i},{j})")));
            }
            if i != j && !(0.0..=1.0).contains(&w) {
                return Err(violation(format!("virtual weight {w} outside [0,1]")));
            }
        }
    }
    let a = g.adjacency_matrix();
    let fused = fuse_adjacency(&a, &a, 0.7)?;
    if (&fused - &a).abs().max() > 1e-15 {
        return Err(violation("fusing a graph with itself moved the weights".into()));
    }
    Ok(())
}

fn check_decode_prune_neutrality() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for seed in 0..6 {
        let g = random_graph(&mut rng, 8, 0.5);
        let cfg = ModelConfig::for_graph(8, 2, seed)?;
        let params = LsenetParams::init(&cfg, 8)?;
        let tree = decode_tree(&forward(&g, &cfg, &params)?)?;
        let pruned = prune(&tree);
        let before = tree_si(&g, &tree)?;
        let after = tree_si(&g, &pruned)?;
        if (before - after).abs() > 1e-12 {
            return Err(violation(format!(
                "seed {seed}: pruning moved the entropy {before} -> {after}"
            )));
        }
        // A redundant root (all nodes under one height-1 cluster) gets its
        // chain collapsed, which legitimately reshapes the height-1 level;
        // the clustering is only meant to survive pruning otherwise.
        let clusters = tree.modules_at_height(1).into_iter().filter(|m| !m.is_empty()).count();
        if clusters >= 2 && clusters_natural(&tree, 8)? != clusters_natural(&pruned, 8)? {
            return Err(violation(format!("seed {seed}: pruning changed the natural clustering")));
        }
    }
    Ok(())
}

fn check_training_determinism() -> Result<()> {
    let g = Graph::from_edges(
        6,
        &[
            (0, 1, 1.0),
            (0, 2, 1.0),
            (1, 2, 1.0),
            (3, 4, 1.0),
            (3, 5, 1.0),
            (4, 5, 1.0),
            (2, 3, 1.0),
        ],
    )
    .unwrap();
    let mut cfg = TrainConfig::for_graph(6, 2, 7)?;
    cfg.model.widths = vec![2];
    cfg.epochs = 3;
    let a = train(&g, &cfg)?;
    let b = train(&g, &cfg)?;
    if a.loss_trace.len() != b.loss_trace.len()
        || a.loss_trace
            .iter()
            .zip(&b.loss_trace)
            .any(|(x, y)| x.to_bits() != y.to_bits())
    {
        return Err(violation("two identical runs produced different loss traces".into()));
    }
    for ((name, x), (_, y)) in a.params.named().iter().zip(b.params.named().iter()) {
        if x.data()
            .iter()
            .zip(y.data())
            .any(|(u, v)| u.to_bits() != v.to_bits())
        {
            return Err(violation(format!("parameter {name} differs between identical runs")));
        }
    }
    Ok(())
}

fn check_metric_identities() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let labels: Vec<usize> = (0..24).map(|_| rng.gen_range(0..4)).collect();
    for (name, value) in [
        ("nmi", nmi(&labels, &labels)?),
        ("ari", ari(&labels, &labels)?),
        ("acc", acc(&labels, &labels)?),
    ] {
        if (value - 1.0).abs() > 1e-12 {
            return Err(violation(format!("{name} of identical labelings is {value}")));
        }
    }
    let renamed: Vec<usize> = labels.iter().map(|&l| (l + 2) % 4).collect();
    let truth: Vec<usize> = (0..24).map(|_| rng.gen_range(0..3)).collect();
    for (name, a, b) in [
        ("nmi", nmi(&labels, &truth)?, nmi(&renamed, &truth)?),
        ("ari", ari(&labels, &truth)?, ari(&renamed, &truth)?),
        ("acc", acc(&labels, &truth)?, acc(&renamed, &truth)?),
    ] {
        if (a - b).abs() > 1e-12 {
            return Err(violation(format!("{name} changed under relabeling: {a} vs {b}")));
        }
    }
    Ok(())
}

/// One named entry of the suite.
pub struct Check {
    pub name: &'static str,
    pub run: fn() -> Result<()>,
}

pub fn all_checks() -> Vec<Check> {
    vec![
        Check { name: "cut-volume-symmetry", run: check_cut_volume_symmetry },
        Check { name: "hard-soft-equivalence", run: check_hard_soft_equivalence },
        Check { name: "edgewise-nodewise-agreement", run: check_edgewise_nodewise_agreement },
        Check { name: "entropy-additivity", run: check_additivity },
        Check { name: "conductance-bound", run: check_conductance_bound },
        Check { name: "insertion-flexibility", run: check_insertion_flexibility },
        Check { name: "greedy-height-monotone", run: check_greedy_height_monotone },
        Check { name: "greedy-separable-fixture", run: check_greedy_on_separable_fixture },
        Check { name: "boost-algebra", run: check_boost_algebra },
        Check { name: "centroid-local-optimality", run: check_centroid_local_optimality },
        Check { name: "forward-wellformedness", run: check_forward_wellformedness },
        Check { name: "virtual-graph-fusion", run: check_virtual_graph_and_fusion },
        Check { name: "decode-prune-neutrality", run: check_decode_prune_neutrality },
        Check { name: "training-determinism", run: check_training_determinism },
        Check { name: "metric-identities", run: check_metric_identities },
    ]
}

/// Runs every check, reporting each outcome through `report`; returns the
/// number of failures.
pub fn run_suite(mut report: impl FnMut(&'static str, &Result<()>)) -> usize {
    let mut failures = 0;
    for check in all_checks() {
        let outcome = (check.run)();
        if outcome.is_err() {
            failures += 1;
        }
        report(check.name, &outcome);
    }
    failures
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_graphs_are_simple_and_covered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.gen_range(3..=12);
            let g = random_graph(&mut rng, n, 0.4);
            assert_eq!(g.node_count(), n);
            assert!(g.edge_count() >= 1);
            for v in 0..n {
                assert!(g.degree(v) > 0.0);
            }
        }
    }

    #[test]
    fn generated_trees_validate_and_split_the_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = rng.gen_range(2..=12);
            let h = rng.gen_range(2..=3);
            let tree = random_hard_tree(&mut rng, n, h);
            tree.validate(n).unwrap();
            assert_eq!(tree.height(), h);
            assert!(tree.nodes[tree.root].children.len() >= 2);
        }
    }

    #[test]
    fn whole_suite_is_green() {
        let failures = run_suite(|name, outcome| {
            if let Err(e) = outcome {
                eprintln!("{name}: {e}");
            }
        });
        assert_eq!(failures, 0);
    }

    #[test]
    fn module_conductance_on_two_cliques_is_the_bridge_ratio() {
        let mut edges = Vec::new();
        for base in [0, 3] {
            edges.push((base, base + 1, 1.0));
            edges.push((base, base + 2, 1.0));
            edges.push((base + 1, base + 2, 1.0));
        }
        edges.push((0, 3, 1.0));
        let g = Graph::from_edges(6, &edges).unwrap();
        let tree =
            PartitionTree::two_level(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        // Each triangle: cut 1, volume 7; leaf modules have smaller
        // conductance only if some degree-2 node... cut(v)=deg(v), vol=deg:
        // singletons have conductance 1, so the minimum is the triangle's 1/7.
        let phi = min_module_conductance(&g, &tree).unwrap();
        assert!((phi - 1.0 / 7.0).abs() < 1e-12);
    }
}
