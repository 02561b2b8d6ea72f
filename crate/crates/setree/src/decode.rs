//! Turning learned level assignments back into discrete partitioning trees,
//! pruning value-neutral clutter, and reading clusters off the tree — with or
//! without a target cluster count.

use std::cmp::Ordering;

use nalgebra::DVector;

use crate::autodiff::Tensor;
use crate::entropy::{PartitionTree, TreeNode};
use crate::error::{Error, Result};
use crate::lorentz::{LorentzPoint, LorentzSpace};
use crate::net::LevelOutputs;
use crate::soft::LevelAssignment;

/// One-hot row argmax; ties go to the lowest column index.
fn argmax_rows(c: &Tensor) -> Vec<usize> {
    (0..c.rows())
        .map(|i| {
            let mut best = 0;
            let mut best_val = c.get(i, 0);
            for j in 1..c.cols() {
                let v = c.get(i, j);
                if v > best_val {
                    best_val = v;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Rounds a soft assignment to a hard one: each row becomes the indicator of
/// its largest entry (lowest index on ties). Hard inputs pass through
/// unchanged.
pub fn harden(c: &LevelAssignment) -> Result<LevelAssignment> {
    let levels = c
        .levels
        .iter()
        .map(|level| {
            let choice = argmax_rows(level);
            Tensor::from_fn(level.rows(), level.cols(), |i, j| {
                if choice[i] == j {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect();
    LevelAssignment::new(levels)
}

/// Level-order tree construction from a hard stack. Returns the tree plus,
/// per tree node, its row index inside its level of the stack (graph-node id
/// for leaves, 0 for the root) so callers can attach per-level data.
fn decode_indexed(hard: &LevelAssignment) -> Result<(PartitionTree, Vec<usize>)> {
    let height = hard.height();
    let n = hard.leaf_count();
    let parent_choice: Vec<Vec<usize>> = hard.levels.iter().map(argmax_rows).collect();
    // cluster_of[t][v]: which height-t cluster owns graph node v.
    let mut cluster_of = vec![vec![0usize; n]; height + 1];
    for (v, slot) in cluster_of[height].iter_mut().enumerate() {
        *slot = v;
    }
    for t in (0..height).rev() {
        let pc = &parent_choice[height - t - 1];
        for v in 0..n {
            cluster_of[t][v] = pc[cluster_of[t + 1][v]];
        }
    }
    let width = |t: usize| if t == 0 { 1 } else { hard.levels[height - t].rows() };
    let mut modules: Vec<Vec<Vec<usize>>> =
        (0..=height).map(|t| vec![Vec::new(); width(t)]).collect();
    for t in 0..=height {
        for v in 0..n {
            modules[t][cluster_of[t][v]].push(v);
        }
    }
    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        children: vec![],
        module: (0..n).collect(),
        height: 0,
        coords: None,
    }];
    let mut stack_index = vec![0usize];
    let mut id_map: Vec<Vec<Option<usize>>> =
        (0..=height).map(|t| vec![None; width(t)]).collect();
    id_map[0][0] = Some(0);
    for t in 1..=height {
        for j in 0..width(t) {
            if modules[t][j].is_empty() {
                continue;
            }
            let parent_cluster = cluster_of[t - 1][modules[t][j][0]];
            let pid = id_map[t - 1][parent_cluster].ok_or_else(|| {
                Error::State(format!("missing parent cluster {parent_cluster} at level {t}"))
            })?;
            let id = nodes.len();
            nodes.push(TreeNode {
                id,
                parent: Some(pid),
                children: vec![],
                module: modules[t][j].clone(),
                height: t,
                coords: None,
            });
            nodes[pid].children.push(id);
            id_map[t][j] = Some(id);
            stack_index.push(j);
        }
    }
    Ok((PartitionTree { nodes, root: 0 }, stack_index))
}

/// Hardens an assignment and materializes it as a partitioning tree: the
/// root at height 0, the nonempty clusters of each level below it, and one
/// singleton leaf per graph node at the bottom. Empty clusters simply
/// produce no tree node.
pub fn decode_assignment(c: &LevelAssignment) -> Result<PartitionTree> {
    Ok(decode_indexed(&harden(c)?)?.0)
}

/// Full decoding from forward-pass outputs: the hardened assignment gives
/// the shape, and every tree node carries its level's hyperbolic embedding
/// (leaves get leaf embeddings, the root gets the root embedding).
pub fn decode_tree(outputs: &LevelOutputs) -> Result<PartitionTree> {
    let assignment = outputs.assignment()?;
    let (mut tree, stack_index) = decode_indexed(&harden(&assignment)?)?;
    for node in &mut tree.nodes {
        let z = outputs.z_level(node.height);
        let row = stack_index[node.id];
        node.coords = Some(LorentzPoint(DVector::from_fn(z.cols(), |j, _| z.get(row, j))));
    }
    Ok(tree)
}

/// Removes empty-module subtrees and splices out any internal node whose
/// module equals its single child's module (a root absorbs such a child
/// instead). Both operations leave structural information unchanged; the
/// result has fresh, level-ordered node ids.
pub fn prune(t: &PartitionTree) -> PartitionTree {
    let root = t.root;
    let mut nodes = t.nodes.clone();
    let mut alive: Vec<bool> =
        nodes.iter().map(|node| node.id == root || !node.module.is_empty()).collect();
    for node in nodes.iter_mut() {
        let kept: Vec<usize> = node.children.iter().copied().filter(|&c| alive[c]).collect();
        node.children = kept;
    }
    loop {
        let mut changed = false;
        for id in 0..nodes.len() {
            if !alive[id] || id == root || nodes[id].children.len() != 1 {
                continue;
            }
            let child = nodes[id].children[0];
            if nodes[child].module != nodes[id].module {
                continue;
            }
            let p = match nodes[id].parent {
                Some(p) => p,
                None => continue,
            };
            nodes[child].parent = Some(p);
            if let Some(pos) = nodes[p].children.iter().position(|&c| c == id) {
                nodes[p].children[pos] = child;
            }
            alive[id] = false;
            changed = true;
        }
        if nodes[root].children.len() == 1 {
            let c = nodes[root].children[0];
            if !nodes[c].children.is_empty() && nodes[c].module == nodes[root].module {
                let grand = nodes[c].children.clone();
                for &gc in &grand {
                    nodes[gc].parent = Some(root);
                }
                nodes[root].children = grand;
                alive[c] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Compact ids in breadth-first order from the root.
    let mut order = vec![root];
    let mut i = 0;
    while i < order.len() {
        let id = order[i];
        i += 1;
        for &c in &nodes[id].children {
            if alive[c] {
                order.push(c);
            }
        }
    }
    let mut new_id = vec![usize::MAX; nodes.len()];
    for (ni, &oid) in order.iter().enumerate() {
        new_id[oid] = ni;
    }
    let out: Vec<TreeNode> = order
        .iter()
        .map(|&oid| {
            let old = &nodes[oid];
            TreeNode {
                id: new_id[oid],
                parent: old.parent.map(|p| new_id[p]),
                children: old
                    .children
                    .iter()
                    .filter(|&&c| alive[c])
                    .map(|&c| new_id[c])
                    .collect(),
                module: old.module.clone(),
                height: 0,
                coords: old.coords.clone(),
            }
        })
        .collect();
    let mut pruned = PartitionTree { nodes: out, root: 0 };
    pruned.recompute_heights();
    pruned
}

/// Labels every graph node by which child-of-the-root subtree owns it, in
/// the root's child order; empty children are skipped. The cluster count
/// falls out of the tree — no target K involved.
pub fn clusters_natural(t: &PartitionTree, n: usize) -> Result<Vec<usize>> {
    let root = t
        .nodes
        .get(t.root)
        .ok_or_else(|| Error::Validation("root id out of range".into()))?;
    let mut labels = vec![usize::MAX; n];
    let mut ord = 0;
    for &cid in &root.children {
        let child = t
            .nodes
            .get(cid)
            .ok_or_else(|| Error::Validation(format!("child id {cid} out of range")))?;
        if child.module.is_empty() {
            continue;
        }
        for &v in &child.module {
            if v >= n {
                return Err(Error::Validation(format!("graph node {v} out of range for n={n}")));
            }
            if labels[v] != usize::MAX {
                return Err(Error::Validation(format!(
                    "graph node {v} appears in two height-1 modules"
                )));
            }
            labels[v] = ord;
        }
        ord += 1;
    }
    if labels.iter().any(|&l| l == usize::MAX) {
        return Err(Error::Validation("height-1 modules do not cover every node".into()));
    }
    Ok(labels)
}

struct ClusterEntry {
    module: Vec<usize>,
    point: LorentzPoint,
    dist: f64,
    /// Backing tree node, when the entry has not been produced by a merge.
    node: Option<usize>,
}

fn entry_order(a: &ClusterEntry, b: &ClusterEntry) -> Ordering {
    a.dist.total_cmp(&b.dist).then(a.module[0].cmp(&b.module[0]))
}

fn entry_for(
    t: &PartitionTree,
    id: usize,
    space: &LorentzSpace,
    root_point: &LorentzPoint,
) -> Result<ClusterEntry> {
    let node = &t.nodes[id];
    let point = node
        .coords
        .clone()
        .ok_or_else(|| Error::Validation(format!("tree node {id} lacks coordinates")))?;
    let dist = space.distance(root_point, &point)?;
    Ok(ClusterEntry { module: node.module.clone(), point, dist, node: Some(id) })
}

/// Replaces the two entries farthest from the root with their unweighted
/// two-point midpoint; the merged entry goes to the end of the list.
fn merge_farthest(
    list: &mut Vec<ClusterEntry>,
    space: &LorentzSpace,
    root_point: &LorentzPoint,
) -> Result<()> {
    if list.len() < 2 {
        return Err(Error::State("cannot merge a list of fewer than two clusters".into()));
    }
    let farthest = |l: &[ClusterEntry]| {
        l.iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| entry_order(a, b))
            .map(|(i, _)| i)
            .expect("non-empty list")
    };
    let u = list.remove(farthest(list));
    let v = list.remove(farthest(list));
    let point =
        space.weighted_midpoint(&[u.point.clone(), v.point.clone()], &[1.0, 1.0])?;
    let dist = space.distance(root_point, &point)?;
    let mut module = u.module;
    module.extend_from_slice(&v.module);
    module.sort_unstable();
    list.push(ClusterEntry { module, point, dist, node: None });
    Ok(())
}

/// Extracts exactly `k` clusters from a pruned tree with coordinates. Too
/// many height-1 clusters: repeatedly merge the two farthest from the root.
/// Too few: repeatedly replace the splittable cluster closest to the root by
/// its children (merging within the children on overshoot). Labels follow
/// list order, so when no merge or split runs the result equals
/// [`clusters_natural`].
pub fn clusters_with_k(
    t: &PartitionTree,
    n: usize,
    k: usize,
    space: &LorentzSpace,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Validation("cluster target must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Validation(format!("cluster target {k} exceeds the {n} graph nodes")));
    }
    let root = t
        .nodes
        .get(t.root)
        .ok_or_else(|| Error::Validation("root id out of range".into()))?;
    let root_point = root
        .coords
        .clone()
        .ok_or_else(|| Error::Validation("root lacks coordinates".into()))?;
    let mut list: Vec<ClusterEntry> = Vec::new();
    for &cid in &root.children {
        if t.nodes[cid].module.is_empty() {
            continue;
        }
        list.push(entry_for(t, cid, space, &root_point)?);
    }
    while list.len() > k {
        merge_farthest(&mut list, space, &root_point)?;
    }
    while list.len() < k {
        // The splittable entry closest to the root goes first.
        let mut pick: Option<usize> = None;
        for (i, e) in list.iter().enumerate() {
            let splittable = e.node.is_some_and(|id| !t.nodes[id].children.is_empty());
            if splittable && pick.is_none_or(|p| entry_order(e, &list[p]) == Ordering::Less) {
                pick = Some(i);
            }
        }
        let Some(pos) = pick else {
            return Err(Error::Capacity(format!(
                "cluster target {k} is unreachable: the tree bottoms out at {} clusters",
                list.len()
            )));
        };
        let v = list.remove(pos);
        let vid = v.node.expect("picked entries are backed by tree nodes");
        let mut sub: Vec<ClusterEntry> = Vec::new();
        for &cid in &t.nodes[vid].children {
            if t.nodes[cid].module.is_empty() {
                continue;
            }
            sub.push(entry_for(t, cid, space, &root_point)?);
        }
        if sub.is_empty() {
            // All children empty: keep the cluster but stop trying to split it.
            list.insert(pos, ClusterEntry { node: None, ..v });
            continue;
        }
        while list.len() + sub.len() > k {
            merge_farthest(&mut sub, space, &root_point)?;
        }
        for (offset, e) in sub.into_iter().enumerate() {
            list.insert(pos + offset, e);
        }
    }
    let mut labels = vec![usize::MAX; n];
    for (ord, e) in list.iter().enumerate() {
        for &v in &e.module {
            if v >= n {
                return Err(Error::Validation(format!("graph node {v} out of range for n={n}")));
            }
            if labels[v] != usize::MAX {
                return Err(Error::Validation(format!("graph node {v} owned by two clusters")));
            }
            labels[v] = ord;
        }
    }
    if labels.iter().any(|&l| l == usize::MAX) {
        return Err(Error::Validation("clusters do not cover every node".into()));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{greedy_coding_tree, tree_si};
    use crate::graph::Graph;
    use crate::net::{forward, LsenetParams, ModelConfig};
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

    fn hard_stack(groups: &[&[usize]], n: usize) -> LevelAssignment {
        let m = groups.len();
        let mut owner = vec![usize::MAX; n];
        for (j, g) in groups.iter().enumerate() {
            for &v in *g {
                owner[v] = j;
            }
        }
        LevelAssignment::new(vec![
            Tensor::from_fn(n, m, |i, j| if owner[i] == j { 1.0 } else { 0.0 }),
            Tensor::ones(m, 1),
        ])
        .unwrap()
    }

    fn tree_shape(t: &PartitionTree) -> Vec<(Option<usize>, Vec<usize>, Vec<usize>, usize)> {
        t.nodes
            .iter()
            .map(|n| (n.parent, n.children.clone(), n.module.clone(), n.height))
            .collect()
    }

    fn geodesic_point(t: f64, angle: f64) -> LorentzPoint {
        LorentzPoint(DVector::from_vec(vec![
            t.cosh(),
            t.sinh() * angle.cos(),
            t.sinh() * angle.sin(),
        ]))
    }

    #[test]
    fn hardening_breaks_ties_toward_the_lowest_index() {
        let soft = LevelAssignment::new(vec![
            Tensor::from_vec(3, 2, vec![0.5, 0.5, 0.2, 0.8, 0.6, 0.4]).unwrap(),
            Tensor::ones(2, 1),
        ])
        .unwrap();
        let hard = harden(&soft).unwrap();
        assert!(hard.is_hard());
        assert_eq!(hard.levels[0].data(), &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        // Hard inputs are fixed points.
        let again = harden(&hard).unwrap();
        assert_eq!(again.levels[0], hard.levels[0]);
    }

    #[test]
    fn identity_stack_decodes_to_one_internal_node_per_leaf() {
        let stack = LevelAssignment::new(vec![
            Tensor::identity(4),
            Tensor::ones(4, 1),
        ])
        .unwrap();
        let tree = decode_assignment(&stack).unwrap();
        tree.validate(4).unwrap();
        assert_eq!(tree.nodes.len(), 9);
        let h1: Vec<&TreeNode> = tree.nodes.iter().filter(|n| n.height == 1).collect();
        assert_eq!(h1.len(), 4);
        for node in h1 {
            assert_eq!(node.module.len(), 1);
            assert_eq!(node.children.len(), 1);
        }
        assert_eq!(tree.height(), 2);
    }

    #[test]
    fn two_clique_stack_recovers_the_cliques() {
        let stack = hard_stack(&[&[0, 1, 2, 3], &[4, 5, 6, 7]], 8);
        let tree = decode_assignment(&stack).unwrap();
        tree.validate(8).unwrap();
        assert_eq!(
            tree.modules_at_height(1),
            vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]
        );
        let labels = clusters_natural(&tree, 8).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn decoding_skips_empty_clusters() {
        let mut stack = hard_stack(&[&[0, 1], &[2, 3]], 4);
        stack.insert_empty_parent(2).unwrap();
        assert_eq!(stack.levels[0].cols(), 3);
        let tree = decode_assignment(&stack).unwrap();
        tree.validate(4).unwrap();
        assert_eq!(tree.modules_at_height(1), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(tree.nodes.iter().filter(|n| n.height == 1).count(), 2);
    }

    #[test]
    fn round_trip_reproduces_modules_and_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let n = rng.gen_range(5..10);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.5) {
                        edges.push((i, j, rng.gen_range(0.5..2.0)));
                    }
                }
            }
            for i in 1..n {
                edges.push((0, i, 0.1));
            }
            let g = Graph::from_edges(n, &edges).unwrap();
            let tree = greedy_coding_tree(&g, 3).unwrap();
            let stack = LevelAssignment::from_tree(&tree, n).unwrap();
            let decoded = decode_assignment(&stack).unwrap();
            decoded.validate(n).unwrap();
            for h in 0..=tree.height() {
                assert_eq!(decoded.modules_at_height(h), tree.modules_at_height(h));
            }
            let stack_again = LevelAssignment::from_tree(&decoded, n).unwrap();
            assert_eq!(stack_again.levels, stack.levels);
        }
    }

    #[test]
    fn decoded_trees_carry_coordinates_per_level() {
        let g = two_cliques(4);
        let cfg = ModelConfig {
            height: 2,
            widths: vec![3],
            tree_dim: 2,
            kappa: -1.0,
            hidden: 8,
            slope: 0.2,
            seed: 11,
        };
        let params = LsenetParams::init(&cfg, g.node_count()).unwrap();
        let outputs = forward(&g, &cfg, &params).unwrap();
        let tree = decode_tree(&outputs).unwrap();
        tree.validate(8).unwrap();
        for node in &tree.nodes {
            let coords = node.coords.as_ref().expect("every node gets coordinates");
            assert_eq!(coords.ambient_dim(), 3);
        }
        // Leaves carry the leaf embeddings, the root the root embedding.
        let z_leaf = outputs.z_level(2);
        for node in tree.nodes.iter().filter(|n| n.height == 2) {
            let v = node.module[0];
            let coords = node.coords.as_ref().unwrap();
            for j in 0..3 {
                assert_eq!(coords.0[j], z_leaf.get(v, j));
            }
        }
        let root_coords = tree.nodes[tree.root].coords.as_ref().unwrap();
        assert_eq!(root_coords.0[0], 1.0);
        assert_eq!(root_coords.0[1], 0.0);
    }

    #[test]
    fn prune_removes_empty_leaves_without_changing_information() {
        let g = two_cliques(3);
        let mut tree = greedy_coding_tree(&g, 2).unwrap();
        let before_si = tree_si(&g, &tree).unwrap();
        let before_labels = clusters_natural(&prune(&tree), 6).unwrap();
        let before_shape = tree_shape(&prune(&tree));
        let h1 = tree.nodes.iter().find(|n| n.height == 1).unwrap().id;
        tree.insert_empty_leaf(h1);
        tree.insert_empty_leaf(tree.root);
        let cleaned = prune(&tree);
        cleaned.validate(6).unwrap();
        assert_eq!(tree_shape(&cleaned), before_shape);
        let after_si = tree_si(&g, &cleaned).unwrap();
        assert!((after_si - before_si).abs() < 1e-12);
        assert_eq!(clusters_natural(&cleaned, 6).unwrap(), before_labels);
        // Idempotence.
        assert_eq!(tree_shape(&prune(&cleaned)), tree_shape(&cleaned));
    }

    #[test]
    fn prune_collapses_redundant_chains() {
        let g = two_cliques(3);
        let mut tree = greedy_coding_tree(&g, 2).unwrap();
        let baseline = prune(&tree);
        let base_si = tree_si(&g, &baseline).unwrap();
        let h1 = tree.nodes.iter().find(|n| n.height == 1).unwrap().id;
        tree.insert_duplicate_below(h1);
        tree.insert_duplicate_below(tree.root);
        assert!((tree_si(&g, &tree).unwrap() - base_si).abs() < 1e-12);
        let cleaned = prune(&tree);
        cleaned.validate(6).unwrap();
        assert_eq!(tree_shape(&cleaned), tree_shape(&baseline));
        assert!((tree_si(&g, &cleaned).unwrap() - base_si).abs() < 1e-12);
    }

    #[test]
    fn natural_labels_cover_each_node_once() {
        let single = PartitionTree::two_level(4, &[vec![0, 1, 2, 3]]).unwrap();
        assert_eq!(clusters_natural(&single, 4).unwrap(), vec![0, 0, 0, 0]);
        let flat = PartitionTree::flat(3);
        assert_eq!(clusters_natural(&flat, 3).unwrap(), vec![0, 1, 2]);
    }

    fn fixture_three_clusters() -> PartitionTree {
        let mut tree =
            PartitionTree::two_level(6, &[vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
        let space = LorentzSpace::standard();
        tree.nodes[tree.root].coords = Some(space.origin(2));
        let dists = [0.4, 0.9, 1.3];
        let mut h1: Vec<usize> =
            tree.nodes.iter().filter(|n| n.height == 1).map(|n| n.id).collect();
        h1.sort_by_key(|&id| tree.nodes[id].module[0]);
        for (i, &id) in h1.iter().enumerate() {
            tree.nodes[id].coords = Some(geodesic_point(dists[i], 0.0));
        }
        for id in tree.leaf_ids() {
            let p = tree.nodes[id].parent.unwrap();
            let base = tree.nodes[p].coords.clone().unwrap();
            tree.nodes[id].coords = Some(base);
        }
        tree
    }

    #[test]
    fn matching_k_reproduces_natural_clusters() {
        let tree = fixture_three_clusters();
        let space = LorentzSpace::standard();
        let natural = clusters_natural(&tree, 6).unwrap();
        assert_eq!(clusters_with_k(&tree, 6, 3, &space).unwrap(), natural);
    }

    #[test]
    fn merging_follows_the_farthest_pair_rule() {
        let tree = fixture_three_clusters();
        let space = LorentzSpace::standard();
        // The two farthest height-1 clusters ({2,3} at 0.9 and {4,5} at 1.3)
        // merge; the surviving list order is [{0,1}, merged].
        assert_eq!(
            clusters_with_k(&tree, 6, 2, &space).unwrap(),
            vec![0, 0, 1, 1, 1, 1]
        );
        // k = 1 collapses everything.
        assert_eq!(clusters_with_k(&tree, 6, 1, &space).unwrap(), vec![0; 6]);
    }

    #[test]
    fn splitting_descends_into_the_cluster_closest_to_the_root() {
        let mut tree =
            PartitionTree::two_level(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let space = LorentzSpace::standard();
        tree.nodes[tree.root].coords = Some(space.origin(2));
        let mut h1: Vec<usize> =
            tree.nodes.iter().filter(|n| n.height == 1).map(|n| n.id).collect();
        h1.sort_by_key(|&id| tree.nodes[id].module[0]);
        tree.nodes[h1[0]].coords = Some(geodesic_point(0.5, 0.0));
        tree.nodes[h1[1]].coords = Some(geodesic_point(1.0, 1.0));
        for id in tree.leaf_ids() {
            let v = tree.nodes[id].module[0] as f64;
            tree.nodes[id].coords = Some(geodesic_point(1.5 + 0.1 * v, 0.3 * v));
        }
        // {0,1} sits closer to the root, so it splits first.
        assert_eq!(
            clusters_with_k(&tree, 4, 3, &space).unwrap(),
            vec![0, 1, 2, 2]
        );
    }

    #[test]
    fn overshooting_splits_merge_within_the_children() {
        // Root has a four-leaf cluster near the root and a singleton leaf.
        let mut nodes = vec![TreeNode {
            id: 0,
            parent: None,
            children: vec![1, 2],
            module: vec![0, 1, 2, 3, 4],
            height: 0,
            coords: Some(LorentzSpace::standard().origin(2)),
        }];
        nodes.push(TreeNode {
            id: 1,
            parent: Some(0),
            children: vec![3, 4, 5, 6],
            module: vec![0, 1, 2, 3],
            height: 1,
            coords: Some(geodesic_point(0.3, 0.0)),
        });
        nodes.push(TreeNode {
            id: 2,
            parent: Some(0),
            children: vec![],
            module: vec![4],
            height: 1,
            coords: Some(geodesic_point(0.8, 0.5)),
        });
        for (i, v) in [0usize, 1, 2, 3].iter().enumerate() {
            nodes.push(TreeNode {
                id: 3 + i,
                parent: Some(1),
                children: vec![],
                module: vec![*v],
                height: 2,
                coords: Some(geodesic_point(0.4 + 0.4 * (*v as f64), 0.0)),
            });
        }
        let tree = PartitionTree { nodes, root: 0 };
        tree.validate(5).unwrap();
        let space = LorentzSpace::standard();
        // k = 4 from M = 2: split {0,1,2,3} into four leaves (total 5 > 4),
        // then the two farthest leaves (2 at 1.2 and 3 at 1.6) merge back.
        assert_eq!(
            clusters_with_k(&tree, 5, 4, &space).unwrap(),
            vec![0, 1, 2, 2, 3]
        );
    }

    #[test]
    fn bounds_and_capacity_errors() {
        let tree = fixture_three_clusters();
        let space = LorentzSpace::standard();
        assert!(matches!(
            clusters_with_k(&tree, 6, 0, &space),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            clusters_with_k(&tree, 6, 7, &space),
            Err(Error::Validation(_))
        ));
        // A tree whose clusters cannot split far enough reports how far it got.
        let coarse = PartitionTree {
            nodes: vec![
                TreeNode {
                    id: 0,
                    parent: None,
                    children: vec![1, 2],
                    module: vec![0, 1, 2],
                    height: 0,
                    coords: Some(LorentzSpace::standard().origin(2)),
                },
                TreeNode {
                    id: 1,
                    parent: Some(0),
                    children: vec![],
                    module: vec![0],
                    height: 1,
                    coords: Some(geodesic_point(0.5, 0.0)),
                },
                TreeNode {
                    id: 2,
                    parent: Some(0),
                    children: vec![],
                    module: vec![1, 2],
                    height: 1,
                    coords: Some(geodesic_point(1.0, 0.0)),
                },
            ],
            root: 0,
        };
        match clusters_with_k(&coarse, 3, 3, &space) {
            Err(Error::Capacity(msg)) => assert!(msg.contains('2'), "message: {msg}"),
            other => panic!("expected a capacity error, got {other:?}"),
        }
    }

    #[test]
    fn any_reachable_k_yields_exactly_k_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let space = LorentzSpace::standard();
        for _ in 0..10 {
            let n = rng.gen_range(4..9);
            // Random partition into 2–3 groups.
            let groups = rng.gen_range(2..=3.min(n));
            let mut parts: Vec<Vec<usize>> = vec![Vec::new(); groups];
            for v in 0..n {
                parts[rng.gen_range(0..groups)].push(v);
            }
            parts.retain(|p| !p.is_empty());
            let mut tree = PartitionTree::two_level(n, &parts).unwrap();
            tree.nodes[tree.root].coords = Some(space.origin(2));
            for id in 0..tree.nodes.len() {
                if tree.nodes[id].coords.is_none() {
                    let t = rng.gen_range(0.2..2.0);
                    let a = rng.gen_range(0.0..6.28);
                    tree.nodes[id].coords = Some(geodesic_point(t, a));
                }
            }
            for k in 1..=n {
                match clusters_with_k(&tree, n, k, &space) {
                    Ok(labels) => {
                        assert_eq!(labels.len(), n);
                        let mut seen: Vec<usize> = labels.clone();
                        seen.sort_unstable();
                        seen.dedup();
                        assert_eq!(seen.len(), k, "k={k} labels={labels:?}");
                        assert_eq!(seen, (0..k).collect::<Vec<_>>());
                    }
                    Err(Error::Capacity(_)) => {}
                    Err(e) => panic!("unexpected error for k={k}: {e:?}"),
                }
            }
        }
    }

    #[test]
    fn natural_and_k_clusterings_agree_after_decode_and_prune() {
        let g = two_cliques(4);
        let cfg = ModelConfig {
            height: 2,
            widths: vec![2],
            tree_dim: 2,
            kappa: -1.0,
            hidden: 8,
            slope: 0.2,
            seed: 3,
        };
        let params = LsenetParams::init(&cfg, g.node_count()).unwrap();
        let outputs = forward(&g, &cfg, &params).unwrap();
        let tree = prune(&decode_tree(&outputs).unwrap());
        let n = g.node_count();
        let natural = clusters_natural(&tree, n).unwrap();
        let space = LorentzSpace::standard();
        let m = natural.iter().max().unwrap() + 1;
        assert_eq!(clusters_with_k(&tree, n, m, &space).unwrap(), natural);
    }
}
