//! Differentiable structural information over soft, level-wise assignments.
//!
//! A hard partitioning tree of uniform leaf depth H is equivalent to a stack
//! of binary row-stochastic matrices C^h (level h clusters → level h−1
//! clusters); relaxing the entries to [0,1] makes structural information a
//! smooth function of the stack. Two independent evaluation routes are kept
//! deliberately separate so they can check each other:
//!
//! - **edgewise**: per level, cluster volumes minus the soft within-cluster
//!   edge mass, via cumulative products S^h (quadratic at the leaf level);
//! - **nodewise**: recursively coarsened weight matrices
//!   W^{h−1} = (C^h)ᵀ W^h C^h starting from the sparse adjacency, touching
//!   O(|E| + Σ_h N_h²) entries and never densifying the leaf level.
//!
//! Both reproduce the discrete tree value exactly on binary stacks.

use std::rc::Rc;

use crate::autodiff::{SparseMatrix, Tape, Tensor, Var};
use crate::entropy::PartitionTree;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Floor applied to volumes inside logarithms; keeps 0·log(0/x) at exactly 0
/// without disturbing healthy values.
const VOLUME_FLOOR: f64 = 1e-15;

/// A stack of per-level soft assignment matrices: `levels[0]` is C^H
/// (N × N_{H−1}, leaves to their parents) down to `levels[H−1]` = C^1
/// (N_1 × 1, top clusters to the root).
///
/// Invariants (checked by [`LevelAssignment::new`]): consecutive shapes
/// chain, the last level has one column, entries lie in [0,1], and every row
/// sums to 1 within 1e−9.
#[derive(Debug, Clone)]
pub struct LevelAssignment {
    pub levels: Vec<Tensor>,
}

impl LevelAssignment {
    pub fn new(levels: Vec<Tensor>) -> Result<LevelAssignment> {
        if levels.is_empty() {
            return Err(Error::Validation("assignment needs at least one level".into()));
        }
        for w in levels.windows(2) {
            if w[0].cols() != w[1].rows() {
                return Err(Error::Dimension(format!(
                    "level widths do not chain: {:?} feeds {:?}",
                    w[0].shape(),
                    w[1].shape()
                )));
            }
        }
        if levels.last().unwrap().cols() != 1 {
            return Err(Error::Validation("the top level must map to a single root".into()));
        }
        for (i, c) in levels.iter().enumerate() {
            for r in 0..c.rows() {
                let mut sum = 0.0;
                for j in 0..c.cols() {
                    let x = c.get(r, j);
                    if !(-1e-9..=1.0 + 1e-9).contains(&x) {
                        return Err(Error::Validation(format!(
                            "assignment entry ({r}, {j}) of level {i} outside [0,1]: {x}"
                        )));
                    }
                    sum += x;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation(format!(
                        "row {r} of level {i} sums to {sum}, not 1"
                    )));
                }
            }
        }
        Ok(LevelAssignment { levels })
    }

    /// Number of levels H; leaves live at level H, the root at level 0.
    pub fn height(&self) -> usize {
        self.levels.len()
    }

    /// Leaf count N.
    pub fn leaf_count(&self) -> usize {
        self.levels[0].rows()
    }

    /// C^h for h in 1..=H.
    pub fn level(&self, h: usize) -> &Tensor {
        &self.levels[self.height() - h]
    }

    /// Whether every entry is exactly 0 or 1.
    pub fn is_hard(&self) -> bool {
        self.levels.iter().all(|c| c.data().iter().all(|&x| x == 0.0 || x == 1.0))
    }

    /// Encodes a hard tree with uniform leaf depth as binary matrices.
    /// Leaf rows are ordered by the graph node they own; interior clusters
    /// are ordered by tree-node id.
    pub fn from_tree(tree: &PartitionTree, n: usize) -> Result<LevelAssignment> {
        tree.validate(n)?;
        let height = tree.height();
        if height == 0 {
            return Err(Error::Validation("tree has no levels".into()));
        }
        // Cluster ids per level, ordered deterministically.
        let mut per_level: Vec<Vec<usize>> = vec![Vec::new(); height + 1];
        for node in &tree.nodes {
            per_level[node.height].push(node.id);
        }
        for ids in per_level.iter_mut() {
            ids.sort_unstable();
        }
        // Leaf level: exactly the graph nodes, indexed by what they own.
        let mut leaf_of_node = vec![usize::MAX; n];
        for &id in &per_level[height] {
            let node = &tree.nodes[id];
            if node.module.len() != 1 {
                return Err(Error::Validation(
                    "conversion needs singleton leaves at uniform depth".into(),
                ));
            }
            leaf_of_node[node.module[0]] = id;
        }
        if leaf_of_node.contains(&usize::MAX) {
            return Err(Error::Validation(
                "every graph node must be owned by a depth-H leaf".into(),
            ));
        }
        let mut levels = Vec::with_capacity(height);
        for h in (1..=height).rev() {
            let rows: Vec<usize> = if h == height {
                leaf_of_node.clone()
            } else {
                per_level[h].clone()
            };
            let cols = &per_level[h - 1];
            let col_of = |id: usize| cols.binary_search(&id).expect("parent at level h-1");
            let mut c = Tensor::zeros(rows.len(), cols.len());
            for (r, &id) in rows.iter().enumerate() {
                let p = tree.nodes[id].parent.ok_or_else(|| {
                    Error::Validation(format!("node {id} at level {h} lacks a parent"))
                })?;
                c.set(r, col_of(p), 1.0);
            }
            levels.push(c);
        }
        LevelAssignment::new(levels)
    }

    /// Appends an empty cluster at level `h−1` (a zero column on C^h plus a
    /// one-hot filler row on C^{h−1}). Structural information is unchanged.
    pub fn insert_empty_parent(&mut self, h: usize) -> Result<()> {
        let height = self.height();
        if !(2..=height).contains(&h) {
            return Err(Error::Validation(format!(
                "empty parents can be appended at levels 2..=H, got {h}"
            )));
        }
        let upper = self.height() - h; // index of C^h
        let c = &self.levels[upper];
        self.levels[upper] =
            Tensor::from_fn(c.rows(), c.cols() + 1, |i, j| if j < c.cols() { c.get(i, j) } else { 0.0 });
        let lower = upper + 1; // C^{h−1} gains a row for the empty cluster
        let d = &self.levels[lower];
        self.levels[lower] = Tensor::from_fn(d.rows() + 1, d.cols(), |i, j| {
            if i < d.rows() {
                d.get(i, j)
            } else if j == 0 {
                1.0
            } else {
                0.0
            }
        });
        Ok(())
    }

    /// Duplicates level `h` by inserting an identity assignment directly
    /// below it. Structural information is unchanged.
    pub fn duplicate_level(&mut self, h: usize) -> Result<()> {
        let height = self.height();
        if !(1..=height).contains(&h) {
            return Err(Error::Validation(format!("no level {h} to duplicate")));
        }
        let idx = height - h; // C^h sits here; identity goes just above it
        let width = self.levels[idx].rows();
        self.levels.insert(idx, Tensor::identity(width));
        Ok(())
    }
}

/// The adjacency a differentiable evaluation runs against: either the
/// constant sparse graph (products stay O(|E|)) or a dense tape variable
/// (the fused graph during training, so gradients flow into it).
#[derive(Clone, Copy)]
pub enum Adjacency<'a, 't> {
    Const(&'a Rc<SparseMatrix>),
    Var(Var<'t>),
}

impl<'a, 't> Adjacency<'a, 't> {
    pub fn n(&self) -> usize {
        match self {
            Adjacency::Const(s) => s.shape().0,
            Adjacency::Var(v) => v.shape().0,
        }
    }

    /// A · x.
    pub(crate) fn matmul_right(&self, x: Var<'t>) -> Result<Var<'t>> {
        match self {
            Adjacency::Const(s) => x.sparse_matmul_left(Rc::clone(s)),
            Adjacency::Var(a) => a.matmul(x),
        }
    }

    /// Weighted degrees as an N×1 variable.
    pub(crate) fn degrees(&self, tape: &'t Tape) -> Result<Var<'t>> {
        match self {
            Adjacency::Const(s) => Ok(tape.constant(s.row_sums())),
            Adjacency::Var(a) => a.sum_rows(),
        }
    }

    /// Diagonal as an N×1 variable (zero for loop-free graphs).
    pub(crate) fn diagonal(&self, tape: &'t Tape) -> Result<Var<'t>> {
        match self {
            Adjacency::Const(s) => Ok(tape.constant(s.diagonal())),
            Adjacency::Var(a) => a.diag(),
        }
    }

    /// Total volume (sum of all entries) as a 1×1 variable.
    pub(crate) fn volume(&self, tape: &'t Tape) -> Result<Var<'t>> {
        match self {
            Adjacency::Const(s) => Ok(tape.constant(Tensor::scalar(s.total()))),
            Adjacency::Var(a) => Ok(a.sum_all()),
        }
    }

    /// Dense value snapshot (for attention masks and supports).
    pub(crate) fn dense_value(&self) -> Tensor {
        match self {
            Adjacency::Const(s) => s.to_dense(),
            Adjacency::Var(a) => a.value(),
        }
    }

    /// The adjacency as a dense tape variable.
    pub(crate) fn dense_var(&self, tape: &'t Tape) -> Var<'t> {
        match self {
            Adjacency::Const(s) => tape.constant(s.to_dense()),
            Adjacency::Var(a) => *a,
        }
    }
}

/// Cumulative products S^h = C^{H+1}·…·C^{h+1} with the volumes they induce.
/// Indexing is by level: `s_level(H)` is the identity, `s_level(0)` maps
/// leaves to the root.
pub struct AssignmentStack<'t> {
    /// c[i] = C^{H−i} for i in 0..H.
    c: Vec<Var<'t>>,
    /// s[i] = S^{H−i} for i in 0..=H; s[0] = I.
    s: Vec<Var<'t>>,
    /// v[i] = V^{H−i} = (S^{H−i})ᵀ·d for i in 0..=H; v[0] = d.
    v: Vec<Var<'t>>,
    /// pv[i] = C^{H−i}·V^{H−i−1}: the soft parent volume seen by each
    /// level-(H−i) cluster.
    pv: Vec<Var<'t>>,
    height: usize,
}

impl<'t> AssignmentStack<'t> {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn s_level(&self, h: usize) -> Var<'t> {
        self.s[self.height - h]
    }

    pub fn v_level(&self, h: usize) -> Var<'t> {
        self.v[self.height - h]
    }

    /// Parent volumes for level h clusters, h in 1..=H.
    pub fn parent_volume(&self, h: usize) -> Var<'t> {
        self.pv[self.height - h]
    }

    pub fn c_level(&self, h: usize) -> Var<'t> {
        self.c[self.height - h]
    }
}

/// Builds the cumulative stack on the tape. `c_vars` holds C^H … C^1 (the
/// same order as [`LevelAssignment::levels`]).
pub fn cumulative_assignment<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    c_vars: &[Var<'t>],
) -> Result<AssignmentStack<'t>> {
    if c_vars.is_empty() {
        return Err(Error::Validation("assignment needs at least one level".into()));
    }
    let n = adj.n();
    if c_vars[0].shape().0 != n {
        return Err(Error::Dimension(format!(
            "leaf level has {} rows but the graph has {n} nodes",
            c_vars[0].shape().0
        )));
    }
    for w in c_vars.windows(2) {
        if w[0].shape().1 != w[1].shape().0 {
            return Err(Error::Dimension(format!(
                "level widths do not chain: {:?} feeds {:?}",
                w[0].shape(),
                w[1].shape()
            )));
        }
    }
    let d = adj.degrees(tape)?;
    let mut s = vec![tape.constant(Tensor::identity(n))];
    for (i, &c) in c_vars.iter().enumerate() {
        let next = s[i].matmul(c)?;
        s.push(next);
    }
    let mut v = Vec::with_capacity(s.len());
    for &si in &s {
        v.push(si.transpose().matmul(d)?);
    }
    let mut pv = Vec::with_capacity(c_vars.len());
    for (i, &c) in c_vars.iter().enumerate() {
        pv.push(c.matmul(v[i + 1])?);
    }
    Ok(AssignmentStack { c: c_vars.to_vec(), s, v, pv, height: c_vars.len() })
}

fn check_level(h: usize, height: usize) -> Result<()> {
    if h == 0 || h > height {
        return Err(Error::Validation(format!(
            "level must lie in 1..={height}, got {h}"
        )));
    }
    Ok(())
}

/// −Σ_k (V^h_k − e^h_k)·log₂(V^h_k / V^{h−1}_{k⁻}) / Vol, where e^h_k is the
/// soft within-cluster edge mass Σ_{i,j} S^h_{ik} S^h_{jk} A_{ij} (each
/// undirected edge counted in both orientations).
pub fn level_dsi_edgewise_var<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    stack: &AssignmentStack<'t>,
    h: usize,
) -> Result<Var<'t>> {
    check_level(h, stack.height())?;
    let s = stack.s_level(h);
    let a_s = adj.matmul_right(s)?;
    let e = s.mul(a_s)?.sum_cols()?.transpose();
    let v = stack.v_level(h);
    let pv = stack.parent_volume(h);
    let diff = v.sub(e)?;
    let ratio = v.max_scalar(VOLUME_FLOOR).div(pv.max_scalar(VOLUME_FLOOR))?;
    let total = diff.mul(ratio.log2())?.sum_all();
    let vol = adj.volume(tape)?;
    Ok(total.div(vol)?.neg())
}

/// −Σ_k (d^h_k − W^h_{kk})·log₂(d^h_k / (C^h d^{h−1})_k) / Vol from the
/// recursively coarsened weights W^{h−1} = (C^h)ᵀ W^h C^h, W^H = A. The leaf
/// level works off the sparse adjacency directly (degrees and a zero
/// diagonal), so nothing N×N is ever materialized on this route.
pub fn level_dsi_nodewise_var<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    c_vars: &[Var<'t>],
    h: usize,
) -> Result<Var<'t>> {
    let height = c_vars.len();
    check_level(h, height)?;
    let (d_levels, diag_levels) = coarsened_chain(tape, adj, c_vars)?;
    nodewise_term(tape, adj, c_vars, &d_levels, &diag_levels, h)
}

/// Per-level degree vectors and diagonals of the coarsened weight chain,
/// indexed like the other stacks: entry i belongs to level H−i.
fn coarsened_chain<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    c_vars: &[Var<'t>],
) -> Result<(Vec<Var<'t>>, Vec<Var<'t>>)> {
    let mut d_levels = vec![adj.degrees(tape)?];
    let mut diag_levels = vec![adj.diagonal(tape)?];
    // First coarsening: W^{H−1} = (C^H)ᵀ·(A·C^H) keeps A in sparse form.
    let mut w = {
        let c = c_vars[0];
        let ac = adj.matmul_right(c)?;
        c.transpose().matmul(ac)?
    };
    d_levels.push(w.sum_rows()?);
    diag_levels.push(w.diag()?);
    for &c in &c_vars[1..] {
        w = c.transpose().matmul(w.matmul(c)?)?;
        d_levels.push(w.sum_rows()?);
        diag_levels.push(w.diag()?);
    }
    Ok((d_levels, diag_levels))
}

fn nodewise_term<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    c_vars: &[Var<'t>],
    d_levels: &[Var<'t>],
    diag_levels: &[Var<'t>],
    h: usize,
) -> Result<Var<'t>> {
    let height = c_vars.len();
    let i = height - h;
    let c = c_vars[i];
    let d = d_levels[i];
    let diag = diag_levels[i];
    let parent = c.matmul(d_levels[i + 1])?;
    let diff = d.sub(diag)?;
    let ratio = d.max_scalar(VOLUME_FLOOR).div(parent.max_scalar(VOLUME_FLOOR))?;
    let total = diff.mul(ratio.log2())?.sum_all();
    let vol = adj.volume(tape)?;
    Ok(total.div(vol)?.neg())
}

/// Differentiable total structural information: Σ_{h=1}^{H} of the nodewise
/// level values. This is the training objective.
pub fn total_dsi_var<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    c_vars: &[Var<'t>],
) -> Result<Var<'t>> {
    if c_vars.is_empty() {
        return Err(Error::Validation("assignment needs at least one level".into()));
    }
    let (d_levels, diag_levels) = coarsened_chain(tape, adj, c_vars)?;
    let mut acc: Option<Var<'t>> = None;
    for h in 1..=c_vars.len() {
        let term = nodewise_term(tape, adj, c_vars, &d_levels, &diag_levels, h)?;
        acc = Some(match acc {
            Some(a) => a.add(term)?,
            None => term,
        });
    }
    Ok(acc.expect("at least one level"))
}

fn with_constant_stack<T>(
    g: &Graph,
    c: &LevelAssignment,
    f: impl for<'t> FnOnce(&'t Tape, &Adjacency<'_, 't>, &[Var<'t>]) -> Result<T>,
) -> Result<T> {
    if c.leaf_count() != g.node_count() {
        return Err(Error::Dimension(format!(
            "assignment has {} leaves but the graph has {} nodes",
            c.leaf_count(),
            g.node_count()
        )));
    }
    let tape = Tape::new();
    let sparse = Rc::new(SparseMatrix::from_graph(g));
    let adj = Adjacency::Const(&sparse);
    let c_vars: Vec<Var<'_>> = c.levels.iter().map(|t| tape.constant(t.clone())).collect();
    f(&tape, &adj, &c_vars)
}

/// Plain-value edgewise level term.
pub fn level_dsi_edgewise(g: &Graph, c: &LevelAssignment, h: usize) -> Result<f64> {
    with_constant_stack(g, c, |tape, adj, c_vars| {
        let stack = cumulative_assignment(tape, adj, c_vars)?;
        Ok(level_dsi_edgewise_var(tape, adj, &stack, h)?.item())
    })
}

/// Plain-value nodewise level term.
pub fn level_dsi_nodewise(g: &Graph, c: &LevelAssignment, h: usize) -> Result<f64> {
    with_constant_stack(g, c, |tape, adj, c_vars| {
        Ok(level_dsi_nodewise_var(tape, adj, c_vars, h)?.item())
    })
}

/// Plain-value total structural information of a (possibly soft) assignment.
pub fn total_dsi(g: &Graph, c: &LevelAssignment) -> Result<f64> {
    with_constant_stack(g, c, |tape, adj, c_vars| Ok(total_dsi_var(tape, adj, c_vars)?.item()))
}

/// Level-by-level entropy decomposition of a hard assignment:
/// Σ_h Σ_j (V^{h−1}_j / Vol) · Ent([C^h_{kj}·V^h_k / V^{h−1}_j]_k).
/// Always equals the graph's one-dimensional entropy.
pub fn additivity_decomposition(g: &Graph, c: &LevelAssignment) -> Result<f64> {
    if !c.is_hard() {
        return Err(Error::Validation(
            "the additivity decomposition is defined for hard assignments".into(),
        ));
    }
    if c.leaf_count() != g.node_count() {
        return Err(Error::Dimension("assignment/graph size mismatch".into()));
    }
    let n = g.node_count();
    // Volumes per level from plain products.
    let d = Tensor::from_fn(n, 1, |i, _| g.degree(i));
    let mut volumes = vec![d.clone()]; // index i ↔ level H−i
    let mut s = Tensor::identity(n);
    for cm in &c.levels {
        s = s.matmul(cm);
        volumes.push(s.transpose().matmul(&d));
    }
    let vol = g.total_volume();
    if vol <= 0.0 {
        return Err(Error::Domain("entropy of an edgeless graph is undefined".into()));
    }
    let mut total = 0.0;
    for (i, cm) in c.levels.iter().enumerate() {
        let v_child = &volumes[i];
        let v_parent = &volumes[i + 1];
        for j in 0..cm.cols() {
            let vp = v_parent.get(j, 0);
            if vp <= 0.0 {
                continue;
            }
            let mut ent = 0.0;
            for k in 0..cm.rows() {
                let p = cm.get(k, j) * v_child.get(k, 0) / vp;
                if p > 0.0 {
                    ent -= p * p.clamp(1e-12, 1.0).log2();
                }
            }
            total += vp / vol * ent;
        }
    }
    Ok(total)
}
