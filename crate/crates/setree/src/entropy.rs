//! Hard partitioning trees and the structural information they assign to a
//! weighted graph, together with two constructors: exhaustive enumeration for
//! tiny graphs and the merge/compress/fill greedy heuristic.
//!
//! A partitioning tree recursively splits the node set: the root owns all of
//! V, children of a node partition its module, and leaves own singletons (or
//! nothing, for relaxed trees). Each non-root node α with module volume V_α,
//! boundary weight g_α, and parent volume V_{α⁻} contributes
//! −(g_α / Vol(G)) · log₂(V_α / V_{α⁻}); the tree's structural information is
//! the sum over all non-root nodes. Lower is better: a tree that captures the
//! community structure pays little for its boundaries.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeSubset};
use crate::lorentz::LorentzPoint;
use std::collections::BTreeMap;

/// One node of a partitioning tree.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// The graph nodes this tree node owns (sorted).
    pub module: Vec<usize>,
    /// Distance from the root in edges; root = 0.
    pub height: usize,
    /// Optional embedding attached by the learned pipeline.
    pub coords: Option<LorentzPoint>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A rooted partitioning tree over graph nodes 0..N. Node ids index `nodes`.
#[derive(Debug, Clone)]
pub struct PartitionTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl PartitionTree {
    /// The flat height-1 tree: root over singleton leaves.
    pub fn flat(n: usize) -> PartitionTree {
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push(TreeNode {
            id: 0,
            parent: None,
            children: (1..=n).collect(),
            module: (0..n).collect(),
            height: 0,
            coords: None,
        });
        for v in 0..n {
            nodes.push(TreeNode {
                id: v + 1,
                parent: Some(0),
                children: vec![],
                module: vec![v],
                height: 1,
                coords: None,
            });
        }
        PartitionTree { nodes, root: 0 }
    }

    /// Height-2 tree: root → given modules → singleton leaves. The modules
    /// must partition 0..n.
    pub fn two_level(n: usize, modules: &[Vec<usize>]) -> Result<PartitionTree> {
        let mut nodes = vec![TreeNode {
            id: 0,
            parent: None,
            children: vec![],
            module: (0..n).collect(),
            height: 0,
            coords: None,
        }];
        for m in modules {
            let mid = nodes.len();
            let mut module = m.clone();
            module.sort_unstable();
            nodes[0].children.push(mid);
            nodes.push(TreeNode {
                id: mid,
                parent: Some(0),
                children: vec![],
                module,
                height: 1,
                coords: None,
            });
            for &v in m {
                let lid = nodes.len();
                nodes[mid].children.push(lid);
                nodes.push(TreeNode {
                    id: lid,
                    parent: Some(mid),
                    children: vec![],
                    module: vec![v],
                    height: 2,
                    coords: None,
                });
            }
        }
        let t = PartitionTree { nodes, root: 0 };
        t.validate(n)?;
        Ok(t)
    }

    /// Maximum node height (leaf depth in edges).
    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.height).max().unwrap_or(0)
    }

    pub fn leaf_ids(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect()
    }

    /// Recomputes every `height` field from the parent structure.
    pub fn recompute_heights(&mut self) {
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, h)) = stack.pop() {
            self.nodes[id].height = h;
            for &c in &self.nodes[id].children {
                stack.push((c, h + 1));
            }
        }
    }

    /// Structural checks against a graph with `n` nodes: parent/child
    /// consistency, children partition their parent's module, the root owns
    /// all of V, heights increase by one, leaves own at most one graph node.
    pub fn validate(&self, n: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        let root = self
            .nodes
            .get(self.root)
            .ok_or_else(|| Error::Validation("root id out of range".into()))?;
        if root.parent.is_some() {
            return fail("root must not have a parent".into());
        }
        if root.module != (0..n).collect::<Vec<_>>() {
            return fail("root module must equal the full node set".into());
        }
        for node in &self.nodes {
            if node.id >= self.nodes.len() || self.nodes[node.id].id != node.id {
                return fail(format!("node id {} inconsistent with its index", node.id));
            }
            if node.id != self.root {
                let p = node
                    .parent
                    .ok_or_else(|| Error::Validation(format!("node {} has no parent", node.id)))?;
                if !self.nodes[p].children.contains(&node.id) {
                    return fail(format!("node {} missing from its parent's children", node.id));
                }
                if node.height != self.nodes[p].height + 1 {
                    return fail(format!("node {} height is not parent height + 1", node.id));
                }
            }
            if node.is_leaf() {
                if node.module.len() > 1 {
                    return fail(format!("leaf {} owns more than one graph node", node.id));
                }
            } else {
                let mut union: Vec<usize> = Vec::new();
                for &c in &node.children {
                    if self.nodes[c].parent != Some(node.id) {
                        return fail(format!("child {c} does not point back to {}", node.id));
                    }
                    union.extend_from_slice(&self.nodes[c].module);
                }
                union.sort_unstable();
                let mut deduped = union.clone();
                deduped.dedup();
                if deduped.len() != union.len() {
                    return fail(format!("children modules of node {} overlap", node.id));
                }
                if union != node.module {
                    return fail(format!("children modules of node {} do not cover it", node.id));
                }
            }
        }
        Ok(())
    }

    /// Inserts an empty-module leaf under `parent`; returns the new id.
    /// Structural information is unchanged by this operation.
    pub fn insert_empty_leaf(&mut self, parent: usize) -> usize {
        let id = self.nodes.len();
        let height = self.nodes[parent].height + 1;
        self.nodes[parent].children.push(id);
        self.nodes.push(TreeNode {
            id,
            parent: Some(parent),
            children: vec![],
            module: vec![],
            height,
            coords: None,
        });
        id
    }

    /// Inserts a duplicate-module node between `alpha` and its children:
    /// the new node owns exactly T_α and adopts α's children. Structural
    /// information is unchanged by this operation.
    pub fn insert_duplicate_below(&mut self, alpha: usize) -> usize {
        let id = self.nodes.len();
        let children = std::mem::take(&mut self.nodes[alpha].children);
        for &c in &children {
            self.nodes[c].parent = Some(id);
        }
        let module = self.nodes[alpha].module.clone();
        self.nodes[alpha].children = vec![id];
        self.nodes.push(TreeNode {
            id,
            parent: Some(alpha),
            children,
            module,
            height: 0,
            coords: None,
        });
        self.recompute_heights();
        id
    }

    /// The modules at a given height, sorted by smallest member.
    pub fn modules_at_height(&self, h: usize) -> Vec<Vec<usize>> {
        let mut mods: Vec<Vec<usize>> = self
            .nodes
            .iter()
            .filter(|n| n.height == h && !n.module.is_empty())
            .map(|n| n.module.clone())
            .collect();
        mods.sort_by_key(|m| m[0]);
        mods
    }
}

/// −(g/Vol)·log₂(v/vp) with the 0·log 0 = 0 convention for empty modules.
fn si_term(total_vol: f64, g: f64, v: f64, vp: f64) -> f64 {
    if v <= 0.0 || vp <= 0.0 {
        0.0
    } else {
        -(g / total_vol) * (v / vp).log2()
    }
}

/// Structural information carried by one non-root tree node:
/// −(g_α / Vol(G)) · log₂(V_α / V_{α⁻}).
pub fn node_si(g: &Graph, tree: &PartitionTree, alpha: usize) -> Result<f64> {
    if alpha == tree.root {
        return Err(Error::Validation("the root carries no structural information".into()));
    }
    let node = tree
        .nodes
        .get(alpha)
        .ok_or_else(|| Error::Validation(format!("no tree node {alpha}")))?;
    let parent = node.parent.ok_or_else(|| Error::Validation(format!("node {alpha} has no parent")))?;
    let total = g.total_volume();
    if total <= 0.0 {
        return Err(Error::Domain("structural information needs at least one edge".into()));
    }
    let sub: NodeSubset = node.module.as_slice().into();
    let psub: NodeSubset = tree.nodes[parent].module.as_slice().into();
    Ok(si_term(total, g.cut_weight(&sub)?, g.volume(&sub)?, g.volume(&psub)?))
}

/// Structural information of the whole tree: the sum of `node_si` over all
/// non-root nodes. Validates the tree first.
pub fn tree_si(g: &Graph, tree: &PartitionTree) -> Result<f64> {
    tree.validate(g.node_count())?;
    let mut total = 0.0;
    for node in &tree.nodes {
        if node.id != tree.root {
            total += node_si(g, tree, node.id)?;
        }
    }
    Ok(total)
}

/// Exhaustively enumerates all set partitions of V as the middle level of a
/// height-`h` tree (only h = 2 is supported) and returns the minimizer with
/// its structural information. Ties go to the first partition in restricted-
/// growth-string order.
pub fn brute_force_optimal_tree(g: &Graph, h: usize) -> Result<(PartitionTree, f64)> {
    if h != 2 {
        return Err(Error::Capacity(format!(
            "exhaustive search only enumerates height-2 trees, asked for {h}"
        )));
    }
    let n = g.node_count();
    if n > 10 {
        return Err(Error::Capacity(format!(
            "exhaustive partition enumeration is limited to 10 nodes, got {n}"
        )));
    }
    let total = g.total_volume();
    if total <= 0.0 {
        return Err(Error::Domain("structural information needs at least one edge".into()));
    }
    let deg: Vec<f64> = (0..n).map(|v| g.degree(v)).collect();
    let edges: Vec<(usize, usize, f64)> = g.edges().collect();

    let mut labels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;

    // Restricted growth strings: node i may join blocks 0..=max_so_far+1.
    fn walk(
        i: usize,
        max_label: usize,
        labels: &mut Vec<usize>,
        eval: &mut impl FnMut(&[usize]),
    ) {
        if i == labels.len() {
            eval(labels);
            return;
        }
        for b in 0..=max_label + 1 {
            labels[i] = b;
            walk(i + 1, max_label.max(b), labels, eval);
        }
    }

    {
        let mut eval = |labels: &[usize]| {
            let blocks = labels.iter().max().unwrap() + 1;
            let mut vols = vec![0.0; blocks];
            for v in 0..n {
                vols[labels[v]] += deg[v];
            }
            let mut cuts = vec![0.0; blocks];
            for &(u, v, w) in &edges {
                if labels[u] != labels[v] {
                    cuts[labels[u]] += w;
                    cuts[labels[v]] += w;
                }
            }
            let mut si = 0.0;
            for b in 0..blocks {
                si += si_term(total, cuts[b], vols[b], total);
            }
            for v in 0..n {
                si += si_term(total, deg[v], deg[v], vols[labels[v]]);
            }
            if best.as_ref().map_or(true, |(b, _)| si < *b) {
                best = Some((si, labels.to_vec()));
            }
        };
        // Node 0 is always in block 0; recurse over the rest.
        walk(1, 0, &mut labels, &mut eval);
        if n == 1 {
            eval(&labels);
        }
    }

    let (si, labels) = best.expect("at least one partition exists");
    let blocks = labels.iter().max().unwrap() + 1;
    let mut modules = vec![Vec::new(); blocks];
    for v in 0..n {
        modules[labels[v]].push(v);
    }
    Ok((PartitionTree::two_level(n, &modules)?, si))
}

/// Working node for the greedy constructor: volume/cut are maintained
/// incrementally instead of recomputed from modules.
#[derive(Debug, Clone)]
struct ArenaNode {
    parent: usize,
    children: Vec<usize>,
    module: Vec<usize>,
    vol: f64,
    cut: f64,
    alive: bool,
}

/// Greedy coding tree of height exactly `k` in three stages:
///
/// 1. MERGE: starting from the flat tree, repeatedly pick the pair of root
///    children whose merger under a fresh node reduces structural information
///    the most (ties: lowest id pair; if no merger helps, the least harmful
///    one still runs) until the root has two children.
/// 2. COMPRESS: while the tree is taller than `k`, remove the internal node
///    whose removal (children reattach to its parent) increases structural
///    information the least (ties: lowest id).
/// 3. FILL: pad every leaf with duplicate-module nodes so all leaves sit at
///    height exactly `k` and no edge crosses more than one level.
pub fn greedy_coding_tree(g: &Graph, k: usize) -> Result<PartitionTree> {
    if k < 2 {
        return Err(Error::Validation(format!("target height must be at least 2, got {k}")));
    }
    let n = g.node_count();
    if n < 2 {
        return Err(Error::Validation("greedy construction needs at least 2 nodes".into()));
    }
    let total = g.total_volume();
    if total <= 0.0 {
        return Err(Error::Domain("structural information needs at least one edge".into()));
    }

    // Arena: 0..n singleton leaves, n = root, merges append fresh ids.
    let mut arena: Vec<ArenaNode> = (0..n)
        .map(|v| ArenaNode {
            parent: n,
            children: vec![],
            module: vec![v],
            vol: g.degree(v),
            cut: g.degree(v),
            alive: true,
        })
        .collect();
    arena.push(ArenaNode {
        parent: usize::MAX,
        children: (0..n).collect(),
        module: (0..n).collect(),
        vol: total,
        cut: 0.0,
        alive: true,
    });
    let root = n;

    // Pairwise link weights between current root children.
    let mut links: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (u, v, w) in g.edges() {
        links.insert((u.min(v), u.max(v)), w);
    }
    let link = |links: &BTreeMap<(usize, usize), f64>, a: usize, b: usize| -> f64 {
        *links.get(&(a.min(b), a.max(b))).unwrap_or(&0.0)
    };

    // ----- MERGE -----
    while arena[root].children.len() > 2 {
        let kids = arena[root].children.clone(); // kept sorted ascending
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &u) in kids.iter().enumerate() {
            for &v in &kids[ai + 1..] {
                let (vu, gu) = (arena[u].vol, arena[u].cut);
                let (vv, gv) = (arena[v].vol, arena[v].cut);
                let vm = vu + vv;
                let gm = gu + gv - 2.0 * link(&links, u, v);
                let old = si_term(total, gu, vu, total) + si_term(total, gv, vv, total);
                let new = si_term(total, gm, vm, total)
                    + si_term(total, gu, vu, vm)
                    + si_term(total, gv, vv, vm);
                let delta = new - old;
                if best.as_ref().map_or(true, |(b, _, _)| delta < *b) {
                    best = Some((delta, u, v));
                }
            }
        }
        let (_, u, v) = best.expect("root has more than two children");
        let m = arena.len();
        let mut module: Vec<usize> = arena[u].module.iter().chain(&arena[v].module).copied().collect();
        module.sort_unstable();
        arena.push(ArenaNode {
            parent: root,
            children: vec![u, v],
            module,
            vol: arena[u].vol + arena[v].vol,
            cut: arena[u].cut + arena[v].cut - 2.0 * link(&links, u, v),
            alive: true,
        });
        arena[u].parent = m;
        arena[v].parent = m;
        let kids: Vec<usize> =
            arena[root].children.iter().copied().filter(|&c| c != u && c != v).collect();
        for &x in &kids {
            let sum = link(&links, u, x) + link(&links, v, x);
            if sum != 0.0 {
                links.insert((x.min(m), x.max(m)), sum);
            }
            links.remove(&(x.min(u), x.max(u)));
            links.remove(&(x.min(v), x.max(v)));
        }
        links.remove(&(u.min(v), u.max(v)));
        let mut new_kids = kids;
        new_kids.push(m); // m exceeds every existing id, so order is kept
        arena[root].children = new_kids;
    }

    // ----- COMPRESS -----
    let depth_of = |arena: &Vec<ArenaNode>, mut id: usize| -> usize {
        let mut d = 0;
        while arena[id].parent != usize::MAX {
            id = arena[id].parent;
            d += 1;
        }
        d
    };
    let tree_height = |arena: &Vec<ArenaNode>| -> usize {
        arena
            .iter()
            .enumerate()
            .filter(|(_, nd)| nd.alive && nd.children.is_empty())
            .map(|(id, _)| depth_of(arena, id))
            .max()
            .unwrap_or(0)
    };
    while tree_height(&arena) > k {
        let mut best: Option<(f64, usize)> = None;
        for id in 0..arena.len() {
            let nd = &arena[id];
            if !nd.alive || id == root || nd.children.is_empty() {
                continue;
            }
            let p = nd.parent;
            let (vb, gb, vp) = (nd.vol, nd.cut, arena[p].vol);
            // Children lose the intermediate level; the node's own term goes.
            let child_shift: f64 = nd
                .children
                .iter()
                .map(|&c| {
                    if vb > 0.0 && vp > 0.0 {
                        -(arena[c].cut / total) * (vb / vp).log2()
                    } else {
                        0.0
                    }
                })
                .sum();
            let delta = child_shift - si_term(total, gb, vb, vp);
            if best.as_ref().map_or(true, |(b, _)| delta < *b) {
                best = Some((delta, id));
            }
        }
        let (_, beta) = best.expect("a tree taller than k has removable internal nodes");
        let p = arena[beta].parent;
        let children = std::mem::take(&mut arena[beta].children);
        for &c in &children {
            arena[c].parent = p;
        }
        let pos = arena[p].children.iter().position(|&c| c == beta).expect("child link");
        arena[p].children.remove(pos);
        // Keep replacement children where the removed node sat, in id order.
        let mut sorted = children;
        sorted.sort_unstable();
        for (off, c) in sorted.into_iter().enumerate() {
            arena[p].children.insert(pos + off, c);
        }
        arena[beta].alive = false;
    }

    // ----- FILL -----
    let leaf_ids: Vec<usize> = (0..arena.len())
        .filter(|&id| arena[id].alive && arena[id].children.is_empty())
        .collect();
    for leaf in leaf_ids {
        let need = k.saturating_sub(depth_of(&arena, leaf));
        for _ in 0..need {
            // Insert a duplicate-module node directly above the leaf; the
            // chain built this way leaves structural information unchanged.
            let p = arena[leaf].parent;
            let d = arena.len();
            arena.push(ArenaNode {
                parent: p,
                children: vec![leaf],
                module: arena[leaf].module.clone(),
                vol: arena[leaf].vol,
                cut: arena[leaf].cut,
                alive: true,
            });
            let pos = arena[p].children.iter().position(|&c| c == leaf).expect("child link");
            arena[p].children[pos] = d;
            arena[leaf].parent = d;
        }
    }

    // Compact into a PartitionTree: breadth-first ids from the root.
    let mut order = vec![root];
    let mut q = std::collections::VecDeque::from([root]);
    while let Some(id) = q.pop_front() {
        for &c in &arena[id].children {
            order.push(c);
            q.push_back(c);
        }
    }
    let mut remap = vec![usize::MAX; arena.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let mut nodes: Vec<TreeNode> = order
        .iter()
        .map(|&old| TreeNode {
            id: remap[old],
            parent: (arena[old].parent != usize::MAX).then(|| remap[arena[old].parent]),
            children: arena[old].children.iter().map(|&c| remap[c]).collect(),
            module: arena[old].module.clone(),
            height: 0,
            coords: None,
        })
        .collect();
    nodes.sort_by_key(|n| n.id);
    let mut tree = PartitionTree { nodes, root: 0 };
    tree.recompute_heights();
    tree.validate(n)?;
    debug_assert_eq!(tree.height(), k);
    Ok(tree)
}
