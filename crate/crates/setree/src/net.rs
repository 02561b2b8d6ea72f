//! The neural partitioning-tree builder.
//!
//! Embeds graph nodes on the hyperboloid with a hyperbolic linear layer and
//! one attention-weighted convolution, then emits one soft assignment matrix
//! per tree level from a Lorentz assigner (masked attention times a row
//! softmax). Parents are the weighted Minkowski midpoints of their soft
//! children, coarsened adjacencies follow as CᵀAC, and the root is pinned to
//! the origin. All layers are built from tape operations so a structural-
//! information loss can differentiate straight through the stack.

use std::rc::Rc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{SparseMatrix, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::lorentz::{LorentzPoint, LorentzSpace};
use crate::soft::{Adjacency, LevelAssignment};

/// Architecture and geometry settings for one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Tree height H ≥ 2 (leaves sit at depth H).
    pub height: usize,
    /// Cluster counts per intermediate level, ordered [N_{H−1}, …, N_1].
    pub widths: Vec<usize>,
    /// Spatial dimension of the tree embeddings (points carry one extra
    /// time coordinate).
    pub tree_dim: usize,
    /// Curvature of the hyperboloid, strictly negative.
    pub kappa: f64,
    /// Hidden width of the gated network inside each hyperbolic linear layer.
    pub hidden: usize,
    /// Negative-side slope shared by every leaky-relu in the model.
    pub slope: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults for a graph with `n` nodes: ten top clusters at height 2, a
    /// geometric width schedule N_h = max(2, round(n^{h/H})) capped at 512
    /// for taller trees.
    pub fn for_graph(n: usize, height: usize, seed: u64) -> Result<ModelConfig> {
        let widths = if height == 2 {
            vec![10]
        } else {
            (1..height)
                .rev()
                .map(|h| {
                    let w = (n as f64).powf(h as f64 / height as f64).round() as usize;
                    w.clamp(2, 512)
                })
                .collect()
        };
        let cfg = ModelConfig {
            height,
            widths,
            tree_dim: 2,
            kappa: -1.0,
            hidden: 16,
            slope: 0.2,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 2 {
            return Err(Error::Validation(format!(
                "tree height must be at least 2, got {}",
                self.height
            )));
        }
        if self.widths.len() != self.height - 1 {
            return Err(Error::Validation(format!(
                "height {} needs {} level widths, got {}",
                self.height,
                self.height - 1,
                self.widths.len()
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Validation("level widths must be strictly positive".into()));
        }
        if *self.widths.last().unwrap() < 2 {
            return Err(Error::Validation(
                "the level below the root needs at least two clusters".into(),
            ));
        }
        if self.tree_dim == 0 || self.hidden == 0 {
            return Err(Error::Validation("embedding and hidden widths must be positive".into()));
        }
        if !(self.kappa < 0.0) || !self.kappa.is_finite() {
            return Err(Error::Validation(format!(
                "curvature must be negative and finite, got {}",
                self.kappa
            )));
        }
        if !(self.slope > 0.0) || !self.slope.is_finite() {
            return Err(Error::Validation("leaky-relu slope must be positive".into()));
        }
        Ok(())
    }

    /// Ambient embedding width d_T + 1.
    pub fn ambient_dim(&self) -> usize {
        self.tree_dim + 1
    }
}

/// Parameters of one hyperbolic linear layer y = [√(‖s‖²−1/κ); s] with
/// s = leaky_relu(Wh·(W·x) + bh) ⊙ σ(vᵀ(W·x) + bv).
#[derive(Debug, Clone)]
pub struct LLinearParams {
    pub w: Tensor,
    pub hw: Tensor,
    pub hb: Tensor,
    pub v: Tensor,
    pub vb: Tensor,
}

/// One-hidden-layer perceptron emitting assignment logits for a level.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// All learnable tensors: the feature lift, shared query/key heads, the
/// attention vector, and one assigner perceptron per level h = H..2.
#[derive(Debug, Clone)]
pub struct LsenetParams {
    pub lift: LLinearParams,
    pub query: LLinearParams,
    pub key: LLinearParams,
    pub att: Tensor,
    pub assign: Vec<MlpParams>,
}

fn uniform_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let b = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-b..b))
}

fn init_llinear(rng: &mut ChaCha8Rng, din: usize, hidden: usize, dout: usize) -> LLinearParams {
    LLinearParams {
        w: uniform_tensor(rng, hidden, din, din),
        hw: uniform_tensor(rng, dout, hidden, hidden),
        hb: uniform_tensor(rng, 1, dout, hidden),
        v: uniform_tensor(rng, hidden, 1, hidden),
        vb: uniform_tensor(rng, 1, 1, hidden),
    }
}

fn init_mlp(rng: &mut ChaCha8Rng, din: usize, hidden: usize, dout: usize) -> MlpParams {
    MlpParams {
        w1: uniform_tensor(rng, hidden, din, din),
        b1: uniform_tensor(rng, 1, hidden, din),
        w2: uniform_tensor(rng, dout, hidden, hidden),
        b2: uniform_tensor(rng, 1, dout, hidden),
    }
}

impl LsenetParams {
    /// Seeded uniform(−1/√fan_in, 1/√fan_in) initialization. `feature_dim`
    /// is the raw attribute width (the lift consumes one extra lifted time
    /// coordinate).
    pub fn init(cfg: &ModelConfig, feature_dim: usize) -> Result<LsenetParams> {
        cfg.validate()?;
        if feature_dim == 0 {
            return Err(Error::Validation("feature dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.ambient_dim();
        let lift = init_llinear(&mut rng, feature_dim + 1, cfg.hidden, cfg.tree_dim);
        let query = init_llinear(&mut rng, d, cfg.hidden, cfg.tree_dim);
        let key = init_llinear(&mut rng, d, cfg.hidden, cfg.tree_dim);
        let att = uniform_tensor(&mut rng, 1, 2 * d, 2 * d);
        let mut assign = Vec::with_capacity(cfg.widths.len());
        for &w in &cfg.widths {
            assign.push(init_mlp(&mut rng, d, cfg.hidden, w));
        }
        Ok(LsenetParams { lift, query, key, att, assign })
    }

    /// Canonical (name, tensor) order shared by the optimizer, gradient
    /// collection, and checkpoints.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, p) in [("lift", &self.lift), ("query", &self.query), ("key", &self.key)] {
            out.push((format!("{prefix}.w"), &p.w));
            out.push((format!("{prefix}.hw"), &p.hw));
            out.push((format!("{prefix}.hb"), &p.hb));
            out.push((format!("{prefix}.v"), &p.v));
            out.push((format!("{prefix}.vb"), &p.vb));
        }
        out.push(("att.w".to_string(), &self.att));
        for (i, m) in self.assign.iter().enumerate() {
            out.push((format!("assign{i}.w1"), &m.w1));
            out.push((format!("assign{i}.b1"), &m.b1));
            out.push((format!("assign{i}.w2"), &m.w2));
            out.push((format!("assign{i}.b2"), &m.b2));
        }
        out
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (prefix, p) in
            [("lift", &mut self.lift), ("query", &mut self.query), ("key", &mut self.key)]
        {
            out.push((format!("{prefix}.w"), &mut p.w));
            out.push((format!("{prefix}.hw"), &mut p.hw));
            out.push((format!("{prefix}.hb"), &mut p.hb));
            out.push((format!("{prefix}.v"), &mut p.v));
            out.push((format!("{prefix}.vb"), &mut p.vb));
        }
        out.push(("att.w".to_string(), &mut self.att));
        for (i, m) in self.assign.iter_mut().enumerate() {
            out.push((format!("assign{i}.w1"), &mut m.w1));
            out.push((format!("assign{i}.b1"), &mut m.b1));
            out.push((format!("assign{i}.w2"), &mut m.w2));
            out.push((format!("assign{i}.b2"), &mut m.b2));
        }
        out
    }

    /// Overwrites the canonically ordered tensors (shapes must match).
    pub fn assign_from(&mut self, values: &[Tensor]) -> Result<()> {
        let mut fields = self.named_mut();
        if fields.len() != values.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameter tensors, got {}",
                fields.len(),
                values.len()
            )));
        }
        for ((name, field), value) in fields.iter_mut().zip(values) {
            if field.shape() != value.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {name} has shape {:?}, replacement {:?}",
                    field.shape(),
                    value.shape()
                )));
            }
            **field = value.clone();
        }
        Ok(())
    }

    /// Replaces a single named tensor, used when restoring checkpoints.
    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<()> {
        for (n, field) in self.named_mut() {
            if n == name {
                if field.shape() != value.shape() {
                    return Err(Error::Dimension(format!(
                        "parameter {name} has shape {:?}, replacement {:?}",
                        field.shape(),
                        value.shape()
                    )));
                }
                *field = value;
                return Ok(());
            }
        }
        Err(Error::Validation(format!("unknown parameter {name}")))
    }

    /// Registers every tensor on a tape as a trainable leaf.
    pub fn vars<'t>(&self, tape: &'t Tape) -> ParamVars<'t> {
        let ll = |p: &LLinearParams| LLinearVars {
            w: tape.param(p.w.clone()),
            hw: tape.param(p.hw.clone()),
            hb: tape.param(p.hb.clone()),
            v: tape.param(p.v.clone()),
            vb: tape.param(p.vb.clone()),
        };
        ParamVars {
            lift: ll(&self.lift),
            query: ll(&self.query),
            key: ll(&self.key),
            att: tape.param(self.att.clone()),
            assign: self
                .assign
                .iter()
                .map(|m| MlpVars {
                    w1: tape.param(m.w1.clone()),
                    b1: tape.param(m.b1.clone()),
                    w2: tape.param(m.w2.clone()),
                    b2: tape.param(m.b2.clone()),
                })
                .collect(),
        }
    }
}

/// Tape handles for one [`LLinearParams`] set.
#[derive(Clone, Copy)]
pub struct LLinearVars<'t> {
    pub w: Var<'t>,
    pub hw: Var<'t>,
    pub hb: Var<'t>,
    pub v: Var<'t>,
    pub vb: Var<'t>,
}

/// Tape handles for one assigner perceptron.
#[derive(Clone, Copy)]
pub struct MlpVars<'t> {
    pub w1: Var<'t>,
    pub b1: Var<'t>,
    pub w2: Var<'t>,
    pub b2: Var<'t>,
}

/// Tape handles for the whole parameter set, in the canonical order.
pub struct ParamVars<'t> {
    pub lift: LLinearVars<'t>,
    pub query: LLinearVars<'t>,
    pub key: LLinearVars<'t>,
    pub att: Var<'t>,
    pub assign: Vec<MlpVars<'t>>,
}

impl<'t> ParamVars<'t> {
    /// Vars in the same order as [`LsenetParams::named`].
    pub fn ordered(&self) -> Vec<Var<'t>> {
        let mut out = Vec::new();
        for p in [&self.lift, &self.query, &self.key] {
            out.extend([p.w, p.hw, p.hb, p.v, p.vb]);
        }
        out.push(self.att);
        for m in &self.assign {
            out.extend([m.w1, m.b1, m.w2, m.b2]);
        }
        out
    }
}

/// Everything the forward pass produces, plain values: embeddings Z^h,
/// assignments C^h and coarsened adjacencies A^h. Entry i of each list
/// belongs to level H−i (leaves first, root last).
#[derive(Debug, Clone)]
pub struct LevelOutputs {
    pub z: Vec<Tensor>,
    pub c: Vec<Tensor>,
    pub a: Vec<Tensor>,
}

impl LevelOutputs {
    pub fn height(&self) -> usize {
        self.c.len()
    }

    /// Z^h for h in 0..=H.
    pub fn z_level(&self, h: usize) -> &Tensor {
        &self.z[self.height() - h]
    }

    /// C^h for h in 1..=H.
    pub fn c_level(&self, h: usize) -> &Tensor {
        &self.c[self.height() - h]
    }

    /// A^h for h in 0..=H.
    pub fn a_level(&self, h: usize) -> &Tensor {
        &self.a[self.height() - h]
    }

    /// The assignment stack as a validated soft partition.
    pub fn assignment(&self) -> Result<LevelAssignment> {
        LevelAssignment::new(self.c.clone())
    }
}

/// Node features on the hyperboloid: attribute rows (or one-hot identity
/// rows when the graph carries none) lifted by solving for the time
/// coordinate.
pub fn lifted_features(g: &Graph, kappa: f64) -> Tensor {
    let n = g.node_count();
    let rows: Vec<Vec<f64>> = match &g.attributes {
        Some(attrs) => attrs.clone(),
        None => (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
    };
    let f = rows.first().map(|r| r.len()).unwrap_or(0);
    Tensor::from_fn(n, f + 1, |i, j| {
        if j == 0 {
            let norm2: f64 = rows[i].iter().map(|x| x * x).sum();
            (norm2 - 1.0 / kappa).sqrt()
        } else {
            rows[i][j - 1]
        }
    })
}

/// Hyperbolic linear layer on the tape; output rows satisfy ⟨y,y⟩ = 1/κ by
/// construction.
pub(crate) fn llinear_var<'t>(
    x: Var<'t>,
    p: &LLinearVars<'t>,
    kappa: f64,
    slope: f64,
) -> Result<Var<'t>> {
    let n = x.shape().0;
    let dout = p.hw.shape().0;
    let u = x.matmul(p.w.transpose())?;
    let pre = u.matmul(p.hw.transpose())?.add(p.hb.broadcast_row(n)?)?;
    let gate = u.matmul(p.v)?.add(p.vb.broadcast_row(n)?)?.sigmoid();
    let s = pre.leaky_relu(slope).mul(gate.broadcast_col(dout)?)?;
    let time = s.square().sum_rows()?.add_scalar(-1.0 / kappa).sqrt();
    time.concat_cols(s)
}

/// Plain-value hyperbolic linear layer.
pub fn llinear(x: &Tensor, p: &LLinearParams, kappa: f64, slope: f64) -> Result<Tensor> {
    let tape = Tape::new();
    let vars = LLinearVars {
        w: tape.constant(p.w.clone()),
        hw: tape.constant(p.hw.clone()),
        hb: tape.constant(p.hb.clone()),
        v: tape.constant(p.v.clone()),
        vb: tape.constant(p.vb.clone()),
    };
    Ok(llinear_var(tape.constant(x.clone()), &vars, kappa, slope)?.value())
}

/// Support mask for attention: positive adjacency entries plus self-loops,
/// so every row has at least one admissible slot.
fn attention_mask(dense: &Tensor) -> Tensor {
    let (n, m) = dense.shape();
    debug_assert_eq!(n, m);
    Tensor::from_fn(n, m, |i, j| if i == j || dense.get(i, j) > 0.0 { 1.0 } else { 0.0 })
}

/// Masked attention: a_ij = leaky_relu(w·[q_i ‖ k_j]) row-softmaxed over the
/// mask support. The concatenated form is evaluated as the rank-1 split
/// w_q·q_i + w_k·k_j, which is the same linear map without materializing
/// N² concatenations.
pub(crate) fn latt_var<'t>(
    q: Var<'t>,
    k: Var<'t>,
    att: Var<'t>,
    mask: Rc<Tensor>,
    slope: f64,
) -> Result<Var<'t>> {
    let (n, d) = q.shape();
    let (m, dk) = k.shape();
    if dk != d {
        return Err(Error::Dimension(format!(
            "query width {d} does not match key width {dk}"
        )));
    }
    if att.shape() != (1, 2 * d) {
        return Err(Error::Dimension(format!(
            "attention vector must be 1x{}, got {:?}",
            2 * d,
            att.shape()
        )));
    }
    let wq = att.slice_cols(0, d)?;
    let wk = att.slice_cols(d, d)?;
    let qs = q.matmul(wq.transpose())?;
    let ks = k.matmul(wk.transpose())?;
    let scores = qs.broadcast_col(m)?.add(ks.transpose().broadcast_row(n)?)?.leaky_relu(slope);
    scores.softmax_rows(Some(mask))
}

/// Plain-value masked attention over an adjacency support (self-loops are
/// added to the mask).
pub fn latt(q: &Tensor, k: &Tensor, att: &Tensor, adjacency: &Tensor, slope: f64) -> Result<Tensor> {
    let tape = Tape::new();
    let out = latt_var(
        tape.constant(q.clone()),
        tape.constant(k.clone()),
        tape.constant(att.clone()),
        Rc::new(attention_mask(adjacency)),
        slope,
    )?;
    Ok(out.value())
}

/// Rescales each row of a timelike batch onto the hyperboloid:
/// z ↦ z / (√−κ·√(−⟨z,z⟩)). Rows must be strictly timelike.
fn normalize_rows_var<'t>(z: Var<'t>, kappa: f64) -> Result<Var<'t>> {
    let value = z.value();
    let (rows, cols) = value.shape();
    for i in 0..rows {
        let mut inner = 0.0;
        for j in 0..cols {
            let x = value.get(i, j);
            inner += if j == 0 { -x * x } else { x * x };
        }
        if !(inner < 0.0) {
            return Err(Error::Degenerate(format!(
                "aggregated row {i} is not timelike (⟨z,z⟩ = {inner})"
            )));
        }
    }
    let sq = z.square();
    let inner = sq.sum_rows()?.sub(sq.slice_cols(0, 1)?.mul_scalar(2.0))?;
    let denom = inner.neg().sqrt().mul_scalar((-kappa).sqrt());
    z.div(denom.broadcast_col(cols)?)
}

/// Weighted Minkowski midpoints, one output row per row of `omega`. Each
/// weight row must be nonnegative with positive sum; outputs match the
/// pointwise centroid of the geometry module.
pub(crate) fn lagg_var<'t>(omega: Var<'t>, x: Var<'t>, kappa: f64) -> Result<Var<'t>> {
    let w = omega.value();
    for i in 0..w.rows() {
        let mut sum = 0.0;
        for j in 0..w.cols() {
            let e = w.get(i, j);
            if e < 0.0 || !e.is_finite() {
                return Err(Error::Validation(format!(
                    "aggregation weight ({i}, {j}) = {e} is not a nonnegative finite number"
                )));
            }
            sum += e;
        }
        if sum <= 0.0 {
            return Err(Error::Validation(format!("aggregation row {i} has zero total weight")));
        }
    }
    normalize_rows_var(omega.matmul(x)?, kappa)
}

/// Plain-value Lorentz aggregation.
pub fn lagg(omega: &Tensor, x: &Tensor, kappa: f64) -> Result<Tensor> {
    let tape = Tape::new();
    Ok(lagg_var(tape.constant(omega.clone()), tape.constant(x.clone()), kappa)?.value())
}

/// One Lorentz convolution: attention weights elementwise-scaled by the
/// adjacency (with unit self-loops, so isolated nodes keep themselves) drive
/// a midpoint aggregation of the lifted values.
pub(crate) fn lconv_var<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    x_lifted: Var<'t>,
    p: &ParamVars<'t>,
    cfg: &ModelConfig,
) -> Result<Var<'t>> {
    let value = llinear_var(x_lifted, &p.lift, cfg.kappa, cfg.slope)?;
    let q = llinear_var(value, &p.query, cfg.kappa, cfg.slope)?;
    let k = llinear_var(value, &p.key, cfg.kappa, cfg.slope)?;
    let dense = adj.dense_value();
    let omega = latt_var(q, k, p.att, Rc::new(attention_mask(&dense)), cfg.slope)?;
    let n = adj.n();
    let with_loops = adj.dense_var(tape).add(tape.constant(Tensor::identity(n)))?;
    lagg_var(omega.mul(with_loops)?, value, cfg.kappa)
}

/// Plain-value Lorentz convolution producing the leaf embeddings.
pub fn lconv(g: &Graph, x_lifted: &Tensor, p: &LsenetParams, cfg: &ModelConfig) -> Result<Tensor> {
    let tape = Tape::new();
    let sparse = Rc::new(SparseMatrix::from_graph(g));
    let adj = Adjacency::Const(&sparse);
    let pv = p.vars(&tape);
    Ok(lconv_var(&tape, &adj, tape.constant(x_lifted.clone()), &pv, cfg)?.value())
}

/// The Lorentz assigner for one level: masked attention over the level's
/// adjacency support times a row-softmaxed perceptron of the embeddings.
/// Both factors are row-stochastic, so the product is too.
pub(crate) fn assigner_var<'t>(
    z: Var<'t>,
    level_adjacency: &Tensor,
    p: &ParamVars<'t>,
    mlp: &MlpVars<'t>,
    cfg: &ModelConfig,
) -> Result<Var<'t>> {
    let q = llinear_var(z, &p.query, cfg.kappa, cfg.slope)?;
    let k = llinear_var(z, &p.key, cfg.kappa, cfg.slope)?;
    let omega = latt_var(q, k, p.att, Rc::new(attention_mask(level_adjacency)), cfg.slope)?;
    let n = z.shape().0;
    let hiddenout = z
        .matmul(mlp.w1.transpose())?
        .add(mlp.b1.broadcast_row(n)?)?
        .leaky_relu(cfg.slope);
    let logits = hiddenout.matmul(mlp.w2.transpose())?.add(mlp.b2.broadcast_row(n)?)?;
    omega.matmul(logits.softmax_rows(None)?)
}

/// Parent embeddings and coarsened adjacency on the tape: parent j is the
/// midpoint of the level's points weighted by column j of C, and the parent
/// adjacency is CᵀAC.
pub(crate) fn parent_level_var<'t>(
    z: Var<'t>,
    c: Var<'t>,
    a: Var<'t>,
    kappa: f64,
) -> Result<(Var<'t>, Var<'t>)> {
    let z_parent = lagg_var(c.transpose(), z, kappa)?;
    let a_parent = c.transpose().matmul(a.matmul(c)?)?;
    Ok((z_parent, a_parent))
}

/// Plain-value parent construction. A dead parent (all-zero column of `c`)
/// is placed at the origin and flagged empty instead of failing.
pub fn parent_level(
    z: &Tensor,
    c: &Tensor,
    a: &Tensor,
    kappa: f64,
) -> Result<(Tensor, Tensor, Vec<bool>)> {
    let space = LorentzSpace::new(kappa)?;
    let (n, d1) = z.shape();
    if c.rows() != n {
        return Err(Error::Dimension(format!(
            "assignment has {} rows for {} embeddings",
            c.rows(),
            n
        )));
    }
    if a.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "adjacency {:?} does not match {n} embeddings",
            a.shape()
        )));
    }
    let points: Vec<LorentzPoint> = (0..n)
        .map(|i| LorentzPoint(DVector::from_fn(d1, |j, _| z.get(i, j))))
        .collect();
    let np = c.cols();
    let mut z_parent = Tensor::zeros(np, d1);
    let mut empty = vec![false; np];
    for j in 0..np {
        let weights: Vec<f64> = (0..n).map(|i| c.get(i, j)).collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            empty[j] = true;
            let origin = space.origin(d1 - 1);
            for col in 0..d1 {
                z_parent.set(j, col, origin.0[col]);
            }
        } else {
            let mid = space.weighted_midpoint(&points, &weights)?;
            for col in 0..d1 {
                z_parent.set(j, col, mid.0[col]);
            }
        }
    }
    let a_parent = c.transpose().matmul(&a.matmul(c));
    Ok((z_parent, a_parent, empty))
}

/// The assignment stack and per-level state on a live tape, for training.
pub struct NetStack<'t> {
    /// z[i] ↔ Z^{H−i}; the last entry is the root at the origin.
    pub z: Vec<Var<'t>>,
    /// c[i] ↔ C^{H−i}; the last entry is the fixed all-ones map to the root.
    pub c: Vec<Var<'t>>,
    /// a[i] ↔ A^{H−i} down to the 1×1 total volume.
    pub a: Vec<Var<'t>>,
}

/// Full differentiable forward pass over an arbitrary adjacency.
pub fn forward_on_tape<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    x_lifted: Var<'t>,
    p: &ParamVars<'t>,
    cfg: &ModelConfig,
) -> Result<NetStack<'t>> {
    cfg.validate()?;
    if p.assign.len() != cfg.widths.len() {
        return Err(Error::Dimension(format!(
            "{} assigner levels for {} configured widths",
            p.assign.len(),
            cfg.widths.len()
        )));
    }
    let mut z = vec![lconv_var(tape, adj, x_lifted, p, cfg)?];
    let mut a = vec![adj.dense_var(tape)];
    let mut c = Vec::with_capacity(cfg.height);
    for mlp in &p.assign {
        let z_cur = *z.last().unwrap();
        let a_cur = *a.last().unwrap();
        let c_h = assigner_var(z_cur, &a_cur.value(), p, mlp, cfg)?;
        let (z_next, a_next) = parent_level_var(z_cur, c_h, a_cur, cfg.kappa)?;
        c.push(c_h);
        z.push(z_next);
        a.push(a_next);
    }
    // Top of the tree is fixed: every cluster joins the single root at the
    // origin.
    let n1 = z.last().unwrap().shape().0;
    let c1 = tape.constant(Tensor::ones(n1, 1));
    let a1 = *a.last().unwrap();
    let a0 = c1.transpose().matmul(a1.matmul(c1)?)?;
    let origin = LorentzSpace::new(cfg.kappa)?.origin(cfg.tree_dim);
    let z0 = tape.constant(Tensor::from_fn(1, cfg.ambient_dim(), |_, j| origin.0[j]));
    c.push(c1);
    z.push(z0);
    a.push(a0);
    Ok(NetStack { z, c, a })
}

/// Plain forward pass on a graph: synthesizes lifted features, runs the
/// stack, and returns values.
pub fn forward(g: &Graph, cfg: &ModelConfig, p: &LsenetParams) -> Result<LevelOutputs> {
    let tape = Tape::new();
    let sparse = Rc::new(SparseMatrix::from_graph(g));
    let adj = Adjacency::Const(&sparse);
    let x = tape.constant(lifted_features(g, cfg.kappa));
    let pv = p.vars(&tape);
    let stack = forward_on_tape(&tape, &adj, x, &pv, cfg)?;
    Ok(LevelOutputs {
        z: stack.z.iter().map(|v| v.value()).collect(),
        c: stack.c.iter().map(|v| v.value()).collect(),
        a: stack.a.iter().map(|v| v.value()).collect(),
    })
}
