//! Training: a learnable Lorentz boost over the leaf embeddings induces a
//! virtual similarity graph, which is fused into the observed adjacency; the
//! structural-information objective is minimized end to end through the
//! network, the fusion, and the boost.

use std::rc::Rc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, SparseMatrix, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{knn_sparsify, Graph};
use crate::net::{
    forward_on_tape, lconv_var, lifted_features, LevelOutputs, LsenetParams, ModelConfig,
    NetStack, ParamVars,
};
use crate::soft::{total_dsi_var, Adjacency};

/// Fraction below which a fusion weight is treated as the "plain network"
/// ablation endpoint: small enough that the virtual graph cannot move any
/// volume term past double rounding, yet still a valid convex combination.
pub const GAMMA_FLOOR: f64 = 1e-9;

/// Optional deviations from the main training recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ablation {
    /// Freeze the boost at the identity instead of learning it.
    pub identity_boost: bool,
    /// Add the explicit tree-contrastive term.
    pub tcl: bool,
    /// Coefficient of the contrastive term.
    pub tcl_lambda: f64,
    /// Edge-drop probability used to build the contrastive second view.
    pub edge_drop: f64,
}

impl Default for Ablation {
    fn default() -> Ablation {
        Ablation { identity_boost: false, tcl: false, tcl_lambda: 0.01, edge_drop: 0.2 }
    }
}

/// Everything one training session needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Convex fusion weight of the virtual graph, in (0, 1].
    pub gamma: f64,
    /// Neighbors kept per node when sparsifying the virtual graph.
    pub knn: usize,
    /// Temperature of the similarity kernel exp(−d/t).
    pub temperature: f64,
    pub lr: f64,
    pub epochs: usize,
    #[serde(default = "Ablation::default")]
    pub ablation: Ablation,
}

impl TrainConfig {
    pub fn for_graph(n: usize, height: usize, seed: u64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            model: ModelConfig::for_graph(n, height, seed)?,
            gamma: 0.01,
            knn: 8.min(n.saturating_sub(1).max(1)),
            temperature: 1.0,
            lr: 0.003,
            epochs: 200,
            ablation: Ablation::default(),
        })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.model.validate()?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Validation(format!(
                "fusion weight must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.knn == 0 || self.knn >= n {
            return Err(Error::Validation(format!(
                "knn must satisfy 1 <= k < N, got k={}, N={n}",
                self.knn
            )));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Validation(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Validation(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.ablation.tcl {
            let p = self.ablation.edge_drop;
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Validation(format!(
                    "edge-drop probability must lie in [0, 1), got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Forward outputs on the final fused graph.
    pub outputs: LevelOutputs,
    /// Objective value per epoch.
    pub loss_trace: Vec<f64>,
    /// Final virtual adjacency.
    pub virtual_adjacency: Tensor,
    /// Final fused adjacency.
    pub fused_adjacency: Tensor,
    pub params: LsenetParams,
    /// Learned boost parameter (spatial velocity, 1 × d_T).
    pub beta: Tensor,
    pub elapsed_seconds: f64,
}

/// Applies the Lorentz boost with velocity `beta` (1 × d) to every row of a
/// batch of ambient points, as tape operations. The usual (w−1)/‖β‖² factor
/// is evaluated as w²/(w+1), which is smooth at β = 0.
pub(crate) fn boost_rows_var<'t>(
    tape: &'t Tape,
    beta: Var<'t>,
    z: Var<'t>,
) -> Result<Var<'t>> {
    let (br, d) = beta.shape();
    let (n, d1) = z.shape();
    if br != 1 || d1 != d + 1 {
        return Err(Error::Dimension(format!(
            "boost velocity {br}x{d} does not fit points of width {d1}"
        )));
    }
    let b2_now: f64 = beta.value().data().iter().map(|x| x * x).sum();
    if !(b2_now < 1.0) || !b2_now.is_finite() {
        return Err(Error::Domain(format!(
            "boost velocity must satisfy ‖β‖ < 1, got ‖β‖² = {b2_now}"
        )));
    }
    let one = tape.constant(Tensor::scalar(1.0));
    let b2 = beta.square().sum_all();
    let w = one.div(one.sub(b2)?.sqrt())?;
    let alpha = w.square().div(w.add(one)?)?;
    let z0 = z.slice_cols(0, 1)?;
    let zs = z.slice_cols(1, d)?;
    let p = zs.matmul(beta.transpose())?;
    let wb = w.broadcast_row(n)?;
    let time = z0.sub(p)?.mul(wb)?;
    let spatial = zs.add(p.mul(alpha.broadcast_row(n)?)?.matmul(beta)?)?.sub(z0.mul(wb)?.matmul(beta)?)?;
    time.concat_cols(spatial)
}

/// All-pairs hyperbolic distances between two batches of ambient rows:
/// d_ij = arccosh(κ⟨x_i, y_j⟩) / √−κ, with the stable arccosh branch.
pub(crate) fn pairwise_distance_var<'t>(x: Var<'t>, y: Var<'t>, kappa: f64) -> Result<Var<'t>> {
    let d1 = x.shape().1;
    if y.shape().1 != d1 {
        return Err(Error::Dimension(format!(
            "ambient widths differ: {d1} vs {}",
            y.shape().1
        )));
    }
    let x0 = x.slice_cols(0, 1)?;
    let xs = x.slice_cols(1, d1 - 1)?;
    let y0 = y.slice_cols(0, 1)?;
    let ys = y.slice_cols(1, d1 - 1)?;
    let inner = xs.matmul(ys.transpose())?.sub(x0.matmul(y0.transpose())?)?;
    Ok(inner.mul_scalar(kappa).arccosh_stable().mul_scalar(1.0 / (-kappa).sqrt()))
}

/// Boosted-similarity virtual adjacency on the tape. The kNN support is
/// selected from the current values (largest kernel weight first, column
/// index breaking ties), then frozen: gradients flow only through the kept
/// weights. Pass `support` to reuse a previously frozen pattern.
pub(crate) fn virtual_adjacency_var<'t>(
    tape: &'t Tape,
    z: Var<'t>,
    beta: Var<'t>,
    temperature: f64,
    k: usize,
    kappa: f64,
    support: Option<&Tensor>,
) -> Result<(Var<'t>, Tensor)> {
    let n = z.shape().0;
    if k == 0 || k >= n {
        return Err(Error::Validation(format!(
            "knn must satisfy 1 <= k < N, got k={k}, N={n}"
        )));
    }
    let boosted = boost_rows_var(tape, beta, z)?;
    let dist = pairwise_distance_var(boosted, boosted, kappa)?;
    let kernel = dist.mul_scalar(-1.0 / temperature).exp();
    let mask = match support {
        Some(m) => {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "support mask {:?} does not fit {n} nodes",
                    m.shape()
                )));
            }
            m.clone()
        }
        None => {
            let kv = kernel.value();
            let dense = DMatrix::from_fn(n, n, |i, j| kv.get(i, j));
            let kept = knn_sparsify(&dense, k)?;
            Tensor::from_fn(n, n, |i, j| if kept[(i, j)] > 0.0 { 1.0 } else { 0.0 })
        }
    };
    let a = kernel.mul(tape.constant(mask.clone()))?;
    Ok((a, mask))
}

/// Plain-value virtual adjacency (fresh support selection).
pub fn virtual_adjacency(
    z: &Tensor,
    beta: &Tensor,
    temperature: f64,
    k: usize,
    kappa: f64,
) -> Result<Tensor> {
    let tape = Tape::new();
    let (a, _) = virtual_adjacency_var(
        &tape,
        tape.constant(z.clone()),
        tape.constant(beta.clone()),
        temperature,
        k,
        kappa,
        None,
    )?;
    Ok(a.value())
}

/// Convex fusion (1−γ)A + γÃ on the tape.
pub(crate) fn fuse_var<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    a_virtual: Var<'t>,
    gamma: f64,
) -> Result<Var<'t>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Validation(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let n = adj.n();
    if a_virtual.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "virtual adjacency {:?} does not match {n} nodes",
            a_virtual.shape()
        )));
    }
    adj.dense_var(tape).mul_scalar(1.0 - gamma).add(a_virtual.mul_scalar(gamma))
}

/// The differentiable objective of one epoch: initial leaf embeddings on the
/// observed graph, virtual-graph construction, fusion, a full forward pass
/// over the fused graph, and its total structural information. Returns the
/// loss, the level stack on the same tape, and the (frozen) kNN support.
pub fn training_loss_var<'t>(
    tape: &'t Tape,
    adj: &Adjacency<'_, 't>,
    x: Var<'t>,
    pv: &ParamVars<'t>,
    beta: Var<'t>,
    cfg: &TrainConfig,
    support: Option<&Tensor>,
) -> Result<(Var<'t>, NetStack<'t>, Tensor)> {
    let z_init = lconv_var(tape, adj, x, pv, &cfg.model)?;
    let (a_tilde, mask) = virtual_adjacency_var(
        tape,
        z_init,
        beta,
        cfg.temperature,
        cfg.knn,
        cfg.model.kappa,
        support,
    )?;
    let fused = fuse_var(tape, adj, a_tilde, cfg.gamma)?;
    let fused_adj = Adjacency::Var(fused);
    let stack = forward_on_tape(tape, &fused_adj, x, pv, &cfg.model)?;
    let loss = total_dsi_var(tape, &fused_adj, &stack.c)?;
    Ok((loss, stack, mask))
}

/// Plain-value objective: total structural information of an assignment
/// stack over a fused adjacency.
pub fn augmented_objective(levels: &crate::soft::LevelAssignment, fused: &Tensor) -> Result<f64> {
    let n = fused.rows();
    if fused.cols() != n {
        return Err(Error::Dimension(format!("fused adjacency {:?} is not square", fused.shape())));
    }
    if levels.leaf_count() != n {
        return Err(Error::Dimension(format!(
            "assignment has {} leaves for {n} nodes",
            levels.leaf_count()
        )));
    }
    let tape = Tape::new();
    let adj = Adjacency::Var(tape.constant(fused.clone()));
    let c_vars: Vec<Var<'_>> = levels.levels.iter().map(|t| tape.constant(t.clone())).collect();
    Ok(total_dsi_var(&tape, &adj, &c_vars)?.item())
}

/// Tree-contrastive loss between two embedding views sharing a leaf
/// assignment: mean over i of exp(d(Lz_i, Lz'_i)) normalized by the
/// co-assignment-weighted row sum Σ_j (SSᵀ)_ij exp(d(Lz_i, Lz'_j)).
pub(crate) fn tcl_loss_var<'t>(
    tape: &'t Tape,
    z: Var<'t>,
    z_prime: Var<'t>,
    s: Var<'t>,
    beta: Var<'t>,
    kappa: f64,
) -> Result<Var<'t>> {
    let (n, d1) = z.shape();
    if z_prime.shape() != (n, d1) {
        return Err(Error::Dimension(format!(
            "view shapes differ: {:?} vs {:?}",
            z.shape(),
            z_prime.shape()
        )));
    }
    if s.shape().0 != n {
        return Err(Error::Dimension(format!(
            "assignment has {} rows for {n} embeddings",
            s.shape().0
        )));
    }
    let bz = boost_rows_var(tape, beta, z)?;
    let bzp = boost_rows_var(tape, beta, z_prime)?;
    let e = pairwise_distance_var(bz, bzp, kappa)?.exp();
    let w = s.matmul(s.transpose())?;
    let denom = w.mul(e)?.sum_rows()?;
    let numer = e.diag()?;
    Ok(numer.div(denom)?.mean_all())
}

/// Plain-value tree-contrastive loss.
pub fn tcl_loss(z: &Tensor, z_prime: &Tensor, s: &Tensor, beta: &Tensor, kappa: f64) -> Result<f64> {
    let tape = Tape::new();
    Ok(tcl_loss_var(
        &tape,
        tape.constant(z.clone()),
        tape.constant(z_prime.clone()),
        tape.constant(s.clone()),
        tape.constant(beta.clone()),
        kappa,
    )?
    .item())
}

/// Drops each edge independently with probability `p`; node set unchanged.
fn drop_edges(g: &Graph, p: f64, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let kept: Vec<(usize, usize, f64)> =
        g.edges().filter(|_| !rng.gen_bool(p)).collect();
    Graph::from_edges(g.node_count(), &kept)
}

fn value_pass(
    g: &Graph,
    x: &Tensor,
    params: &LsenetParams,
    beta: &Tensor,
    cfg: &TrainConfig,
) -> Result<(LevelOutputs, Tensor, Tensor)> {
    let tape = Tape::new();
    let sparse = Rc::new(SparseMatrix::from_graph(g));
    let adj = Adjacency::Const(&sparse);
    let pv = params.vars(&tape);
    let xv = tape.constant(x.clone());
    let bv = tape.constant(beta.clone());
    let z_init = lconv_var(&tape, &adj, xv, &pv, &cfg.model)?;
    let (a_tilde, _) = virtual_adjacency_var(
        &tape,
        z_init,
        bv,
        cfg.temperature,
        cfg.knn,
        cfg.model.kappa,
        None,
    )?;
    let fused = fuse_var(&tape, &adj, a_tilde, cfg.gamma)?;
    let stack = forward_on_tape(&tape, &Adjacency::Var(fused), xv, &pv, &cfg.model)?;
    let outputs = LevelOutputs {
        z: stack.z.iter().map(|v| v.value()).collect(),
        c: stack.c.iter().map(|v| v.value()).collect(),
        a: stack.a.iter().map(|v| v.value()).collect(),
    };
    Ok((outputs, a_tilde.value(), fused.value()))
}

/// Recomputes the end-of-training forward pass from saved parameters: lift
/// features, embed on the raw graph, build the virtual adjacency, fuse, and
/// run the full assignment stack on the fused graph. This is exactly the
/// pass [`train`] finishes with, so restoring a checkpoint and calling
/// `infer` reproduces the run's level outputs (and hence its decoded tree)
/// bit for bit.
pub fn infer(
    g: &Graph,
    cfg: &TrainConfig,
    params: &LsenetParams,
    beta: &Tensor,
) -> Result<LevelOutputs> {
    cfg.validate(g.node_count())?;
    let x = lifted_features(g, cfg.model.kappa);
    let (outputs, _, _) = value_pass(g, &x, params, beta, cfg)?;
    Ok(outputs)
}

/// Runs the full training loop and returns the final state. Deterministic
/// for a fixed config; aborts with a training error if the loss or any
/// parameter becomes non-finite.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainResult> {
    let n = g.node_count();
    cfg.validate(n)?;
    let start = Instant::now();
    let x = lifted_features(g, cfg.model.kappa);
    let mut params = LsenetParams::init(&cfg.model, x.cols() - 1)?;
    let mut beta = Tensor::zeros(1, cfg.model.tree_dim);
    let sparse = Rc::new(SparseMatrix::from_graph(g));
    let mut adam = Adam::new(cfg.lr);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.model.seed ^ 0x9e37_79b9_7f4a_7c15);
    for epoch in 0..cfg.epochs {
        let tape = Tape::new();
        let adj = Adjacency::Const(&sparse);
        let pv = params.vars(&tape);
        let beta_var = if cfg.ablation.identity_boost {
            tape.constant(beta.clone())
        } else {
            tape.param(beta.clone())
        };
        let xv = tape.constant(x.clone());
        let (mut loss, stack, _) =
            training_loss_var(&tape, &adj, xv, &pv, beta_var, cfg, None)?;
        if cfg.ablation.tcl {
            let dropped = drop_edges(g, cfg.ablation.edge_drop, &mut drop_rng)?;
            let sparse_dropped = Rc::new(SparseMatrix::from_graph(&dropped));
            let adj_dropped = Adjacency::Const(&sparse_dropped);
            let z_prime = lconv_var(&tape, &adj_dropped, xv, &pv, &cfg.model)?;
            let tcl =
                tcl_loss_var(&tape, stack.z[0], z_prime, stack.c[0], beta_var, cfg.model.kappa)?;
            loss = loss.add(tcl.mul_scalar(cfg.ablation.tcl_lambda))?;
        }
        let loss_val = loss.item();
        if !loss_val.is_finite() {
            return Err(Error::Training(format!(
                "objective became non-finite at epoch {epoch}"
            )));
        }
        trace.push(loss_val);
        let grads = tape.backward(loss)?;
        let named = params.named();
        let mut names: Vec<String> = named.iter().map(|(name, _)| name.clone()).collect();
        let mut values: Vec<Tensor> = named.iter().map(|(_, t)| (*t).clone()).collect();
        let vars = pv.ordered();
        let mut gtensors: Vec<Tensor> = vars
            .iter()
            .zip(values.iter())
            .map(|(v, t)| {
                grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
            })
            .collect();
        if !cfg.ablation.identity_boost {
            names.push("boost.beta".to_string());
            values.push(beta.clone());
            gtensors.push(
                grads
                    .get(beta_var)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(1, cfg.model.tree_dim)),
            );
        }
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        adam.step(&name_refs, &mut values, &gtensors)?;
        let nparams = named.len();
        params.assign_from(&values[..nparams])?;
        if !cfg.ablation.identity_boost {
            beta = values[nparams].clone();
        }
        for (name, t) in params.named() {
            if t.has_non_finite() {
                return Err(Error::Training(format!(
                    "parameter {name} became non-finite at epoch {epoch}"
                )));
            }
        }
    }
    let (outputs, a_tilde, fused) = value_pass(g, &x, &params, &beta, cfg)?;
    Ok(TrainResult {
        outputs,
        loss_trace: trace,
        virtual_adjacency: a_tilde,
        fused_adjacency: fused,
        params,
        beta,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorentz::{LorentzBoost, LorentzPoint, LorentzSpace};
    use crate::soft::{total_dsi, LevelAssignment};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn random_manifold(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
        let spatial = Tensor::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
        Tensor::from_fn(n, d + 1, |i, j| {
            if j == 0 {
                let n2: f64 = (0..d).map(|c| spatial.get(i, c).powi(2)).sum();
                (n2 + 1.0).sqrt()
            } else {
                spatial.get(i, j - 1)
            }
        })
    }

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
    fn tape_boost_matches_the_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let z = random_manifold(&mut rng, 5, 3);
        let beta = Tensor::from_vec(1, 3, vec![0.3, -0.2, 0.4]).unwrap();
        let tape = Tape::new();
        let out = boost_rows_var(&tape, tape.constant(beta.clone()), tape.constant(z.clone()))
            .unwrap()
            .value();
        let boost =
            LorentzBoost::from_beta(&DVector::from_vec(vec![0.3, -0.2, 0.4])).unwrap();
        for i in 0..5 {
            let p = LorentzPoint(DVector::from_fn(4, |j, _| z.get(i, j)));
            let expect = boost.apply(&p).unwrap();
            for j in 0..4 {
                assert!((out.get(i, j) - expect.0[j]).abs() <= 1e-12);
            }
        }
        // Zero velocity is the identity map.
        let idv = boost_rows_var(
            &tape,
            tape.constant(Tensor::zeros(1, 3)),
            tape.constant(z.clone()),
        )
        .unwrap()
        .value();
        assert_eq!(idv, z);
        // Superluminal velocities are rejected.
        let fast = Tensor::from_vec(1, 3, vec![0.9, 0.5, 0.5]).unwrap();
        assert!(matches!(
            boost_rows_var(&tape, tape.constant(fast), tape.constant(z)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pairwise_distances_match_the_geometry_module() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let z = random_manifold(&mut rng, 6, 2);
        let tape = Tape::new();
        let d = pairwise_distance_var(tape.constant(z.clone()), tape.constant(z.clone()), -1.0)
            .unwrap()
            .value();
        let space = LorentzSpace::standard();
        for i in 0..6 {
            for j in 0..6 {
                let a = LorentzPoint(DVector::from_fn(3, |k, _| z.get(i, k)));
                let b = LorentzPoint(DVector::from_fn(3, |k, _| z.get(j, k)));
                let expect = space.distance(&a, &b).unwrap();
                assert!((d.get(i, j) - expect).abs() <= 1e-9, "({i},{j})");
            }
        }
    }

    #[test]
    fn virtual_graph_basics() {
        // Identical embeddings: every kept weight is exactly exp(0) = 1.
        let z = Tensor::from_fn(4, 3, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let beta = Tensor::zeros(1, 2);
        let a = virtual_adjacency(&z, &beta, 1.0, 2, -1.0).unwrap();
        for i in 0..4 {
            assert_eq!(a.get(i, i), 0.0);
            let kept: Vec<f64> =
                (0..4).filter(|&j| j != i).map(|j| a.get(i, j)).filter(|&w| w > 0.0).collect();
            assert!(!kept.is_empty());
            for w in kept {
                assert_eq!(w, 1.0);
            }
        }
        // k out of range is rejected.
        assert!(virtual_adjacency(&z, &beta, 1.0, 4, -1.0).is_err());
        assert!(virtual_adjacency(&z, &beta, 1.0, 0, -1.0).is_err());
    }

    #[test]
    fn zero_boost_reproduces_raw_distances_and_geodesic_neighbors_link_up() {
        // Five points along one geodesic through the origin.
        let ts = [0.0f64, 0.5, 1.0, 1.5, 2.0];
        let z = Tensor::from_fn(5, 3, |i, j| match j {
            0 => ts[i].cosh(),
            1 => ts[i].sinh(),
            _ => 0.0,
        });
        let beta = Tensor::zeros(1, 2);
        let a = virtual_adjacency(&z, &beta, 1.0, 1, -1.0).unwrap();
        // Brute-force nearest neighbor under the geometry module.
        let space = LorentzSpace::standard();
        let points: Vec<LorentzPoint> =
            (0..5).map(|i| LorentzPoint(DVector::from_fn(3, |k, _| z.get(i, k)))).collect();
        for i in 0..5 {
            let (mut best, mut best_d) = (usize::MAX, f64::INFINITY);
            for j in 0..5 {
                if j != i {
                    let dij = space.distance(&points[i], &points[j]).unwrap();
                    if dij < best_d {
                        best_d = dij;
                        best = j;
                    }
                }
            }
            assert!(a.get(i, best) > 0.0, "node {i} should keep its nearest neighbor {best}");
            assert_relative_eq!(a.get(i, best), (-best_d).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn fusion_keeps_the_graph_fixed_when_views_agree() {
        let g = two_cliques(3);
        let sparse = Rc::new(SparseMatrix::from_graph(&g));
        let tape = Tape::new();
        let adj = Adjacency::Const(&sparse);
        let dense = sparse.to_dense();
        let fused = fuse_var(&tape, &adj, tape.constant(dense.clone()), 0.25).unwrap().value();
        for i in 0..6 {
            for j in 0..6 {
                assert_relative_eq!(fused.get(i, j), dense.get(i, j), epsilon = 1e-15);
                assert_eq!(fused.get(i, j), fused.get(j, i));
            }
        }
        assert!(fuse_var(&tape, &adj, tape.constant(dense), 0.0).is_err());
    }

    #[test]
    fn objective_prefers_the_planted_partition() {
        let g = two_cliques(4);
        let fused = SparseMatrix::from_graph(&g).to_dense();
        let ideal = LevelAssignment::new(vec![
            Tensor::from_fn(8, 2, |i, j| if (i < 4) == (j == 0) { 1.0 } else { 0.0 }),
            Tensor::ones(2, 1),
        ])
        .unwrap();
        let scrambled = LevelAssignment::new(vec![
            Tensor::from_fn(8, 2, |i, j| if (i % 2 == 0) == (j == 0) { 1.0 } else { 0.0 }),
            Tensor::ones(2, 1),
        ])
        .unwrap();
        let good = augmented_objective(&ideal, &fused).unwrap();
        let bad = augmented_objective(&scrambled, &fused).unwrap();
        assert!(good < bad, "planted {good} should beat scrambled {bad}");
        // The fused objective is the assignment's structural information.
        assert_relative_eq!(good, total_dsi(&g, &ideal).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn near_zero_fusion_weight_recovers_the_plain_objective() {
        let g = two_cliques(3);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let z = random_manifold(&mut rng, 6, 2);
        let beta = Tensor::zeros(1, 2);
        let a_tilde = virtual_adjacency(&z, &beta, 1.0, 2, -1.0).unwrap();
        let dense = SparseMatrix::from_graph(&g).to_dense();
        let fused = Tensor::from_fn(6, 6, |i, j| {
            (1.0 - GAMMA_FLOOR) * dense.get(i, j) + GAMMA_FLOOR * a_tilde.get(i, j)
        });
        let c = LevelAssignment::new(vec![
            Tensor::from_fn(6, 2, |i, j| if (i < 3) == (j == 0) { 1.0 } else { 0.0 }),
            Tensor::ones(2, 1),
        ])
        .unwrap();
        let aug = augmented_objective(&c, &fused).unwrap();
        let plain = total_dsi(&g, &c).unwrap();
        assert!(
            (aug - plain).abs() <= 1e-6 * plain.abs(),
            "floor objective {aug} vs plain {plain}"
        );
    }

    #[test]
    fn contrastive_loss_behaviors() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let n = 7;
        let z = random_manifold(&mut rng, n, 2);
        let beta = Tensor::from_vec(1, 2, vec![0.1, -0.05]).unwrap();
        // Identical views with an all-ones co-assignment: every numerator is
        // exp(0) and every denominator counts all pairs.
        let s_flat = Tensor::ones(n, 1);
        let same = tcl_loss(&z, &z, &s_flat, &Tensor::zeros(1, 2), -1.0).unwrap();
        assert!(same.is_finite() && same > 0.0 && same <= 1.0);
        // Two identical points: each term is exactly 1/2.
        let pair = Tensor::from_fn(2, 3, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let v = tcl_loss(&pair, &pair, &Tensor::ones(2, 1), &Tensor::zeros(1, 2), -1.0).unwrap();
        assert_relative_eq!(v, 0.5, epsilon = 1e-12);
        // Isometry invariance: pre-boosting both views by a shared boost
        // leaves the loss unchanged.
        let z_prime = random_manifold(&mut rng, n, 2);
        let s = Tensor::from_fn(n, 2, |i, j| if (i % 2 == 0) == (j == 0) { 1.0 } else { 0.0 });
        let shared = LorentzBoost::from_beta(&DVector::from_vec(vec![-0.25, 0.15])).unwrap();
        let apply_rows = |t: &Tensor| -> Tensor {
            Tensor::from_fn(t.rows(), t.cols(), |i, j| {
                let p = LorentzPoint(DVector::from_fn(t.cols(), |k, _| t.get(i, k)));
                shared.apply(&p).unwrap().0[j]
            })
        };
        let base = tcl_loss(&z, &z_prime, &s, &beta, -1.0).unwrap();
        let moved = tcl_loss(&apply_rows(&z), &apply_rows(&z_prime), &s, &beta, -1.0).unwrap();
        assert!((base - moved).abs() <= 1e-8, "{base} vs {moved}");
        // Size mismatch is rejected.
        let short = random_manifold(&mut rng, n - 1, 2);
        assert!(tcl_loss(&z, &short, &s, &beta, -1.0).is_err());
        // The pair term is quadratic: the tape holds an n×n node.
        let tape = Tape::new();
        let _ = tcl_loss_var(
            &tape,
            tape.constant(z.clone()),
            tape.constant(z),
            tape.constant(s),
            tape.constant(beta),
            -1.0,
        )
        .unwrap();
        assert!(tape.node_shapes().iter().any(|&shape| shape == (n, n)));
    }

    #[test]
    fn training_reduces_the_objective_on_two_cliques() {
        let g = two_cliques(8);
        let mut cfg = TrainConfig::for_graph(16, 2, 0).unwrap();
        cfg.model.widths = vec![4];
        cfg.epochs = 40;
        let result = train(&g, &cfg).unwrap();
        assert_eq!(result.loss_trace.len(), 40);
        let first = result.loss_trace[0];
        let last = *result.loss_trace.last().unwrap();
        assert!(
            last < first,
            "objective should fall over training: first {first}, last {last}"
        );
        assert!(result.loss_trace.iter().all(|l| l.is_finite()));
        // Fused adjacency stays symmetric with positive off-support mass only
        // where either view has it.
        let f = &result.fused_adjacency;
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(f.get(i, j), f.get(j, i));
            }
        }
        assert!(result.elapsed_seconds >= 0.0);
    }

    #[test]
    fn training_is_deterministic_and_epochless_runs_pass_through() {
        let g = two_cliques(4);
        let mut cfg = TrainConfig::for_graph(8, 2, 3).unwrap();
        cfg.model.widths = vec![3];
        cfg.epochs = 5;
        let r1 = train(&g, &cfg).unwrap();
        let r2 = train(&g, &cfg).unwrap();
        assert_eq!(r1.loss_trace, r2.loss_trace);
        assert_eq!(r1.outputs.c, r2.outputs.c);
        assert_eq!(r1.beta, r2.beta);
        cfg.epochs = 0;
        let r0 = train(&g, &cfg).unwrap();
        assert!(r0.loss_trace.is_empty());
        assert_eq!(r0.outputs.c[0].shape(), (8, 3));
        assert_eq!(r0.beta, Tensor::zeros(1, 2));
    }

    #[test]
    fn ablations_run_and_respect_their_contracts() {
        let g = two_cliques(4);
        let mut cfg = TrainConfig::for_graph(8, 2, 5).unwrap();
        cfg.model.widths = vec![3];
        cfg.epochs = 4;
        cfg.ablation.identity_boost = true;
        let frozen = train(&g, &cfg).unwrap();
        assert_eq!(frozen.beta, Tensor::zeros(1, 2));
        cfg.ablation.identity_boost = false;
        cfg.ablation.tcl = true;
        let with_tcl = train(&g, &cfg).unwrap();
        assert_eq!(with_tcl.loss_trace.len(), 4);
        assert!(with_tcl.loss_trace.iter().all(|l| l.is_finite()));
        // The near-floor fusion ablation runs too.
        cfg.ablation.tcl = false;
        cfg.gamma = GAMMA_FLOOR;
        let floored = train(&g, &cfg).unwrap();
        assert!(floored.loss_trace.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn boost_gradient_flows_and_stays_finite() {
        // The objective is invariant under a shared isometry of the
        // embeddings, so the boost gradient is roundoff-scale; it must still
        // exist, be finite, and Adam must accept it.
        let g = two_cliques(3);
        let cfg = {
            let mut c = TrainConfig::for_graph(6, 2, 9).unwrap();
            c.model.widths = vec![2];
            c.epochs = 2;
            c
        };
        let result = train(&g, &cfg).unwrap();
        assert!(result.beta.data().iter().all(|b| b.is_finite()));
        let norm: f64 = result.beta.data().iter().map(|b| b * b).sum::<f64>();
        assert!(norm < 1.0);
    }
}
