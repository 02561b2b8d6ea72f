//! A small reverse-mode automatic-differentiation engine over dense f64
//! matrices, built for the objectives in this crate.
//!
//! Design notes:
//! - Eager tape: every operation computes its value immediately and records a
//!   node; `Tape::backward` walks the recorded graph once in reverse.
//! - No implicit broadcasting. Scalars enter via `*_scalar` ops; row/column
//!   broadcasts are spelled out as matrix products with constant ones, which
//!   keeps every gradient rule a one-liner.
//! - Constant sparse matrices (graph adjacencies) participate through a
//!   dedicated product op so leaf-level computations never densify the graph.
//! - Determinism: plain sequential loops everywhere; identical inputs and
//!   seeds give bitwise-identical results.

use crate::error::{Error, Result};
use crate::graph::Graph;
use std::cell::{Cell, RefCell};
use std::rc::Rc;

/// Dense row-major f64 matrix. The only tensor type the tape knows about.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn ones(rows: usize, cols: usize) -> Tensor {
        Tensor { rows, cols, data: vec![1.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor { rows: 1, cols: 1, data: vec![x] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} tensor needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Tensor {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor { rows, cols, data }
    }

    pub fn from_dmatrix(m: &nalgebra::DMatrix<f64>) -> Tensor {
        Tensor::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] = x;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single entry of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        assert!(self.rows == 1 && self.cols == 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape(), other.shape());
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Tensor::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|x| !x.is_finite())
    }
}

/// Constant sparse matrix stored as coordinate triples; used for graph
/// adjacencies so products with the tape stay O(edges).
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<SparseMatrix> {
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Dimension(format!(
                    "sparse entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
        }
        Ok(SparseMatrix { rows, cols, entries })
    }

    /// Symmetric adjacency of a graph (both orientations of every edge).
    pub fn from_graph(g: &Graph) -> SparseMatrix {
        let n = g.node_count();
        let mut entries = Vec::with_capacity(2 * g.edge_count());
        for u in 0..n {
            for &(v, w) in g.neighbors(u) {
                entries.push((u, v, w));
            }
        }
        SparseMatrix { rows: n, cols: n, entries }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row sums as an N×1 tensor (weighted degrees for an adjacency).
    pub fn row_sums(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, 1);
        for &(r, _, w) in &self.entries {
            let x = out.get(r, 0) + w;
            out.set(r, 0, x);
        }
        out
    }

    /// Diagonal as an N×1 tensor (all zeros for a loop-free adjacency).
    pub fn diagonal(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows.min(self.cols), 1);
        for &(r, c, w) in &self.entries {
            if r == c {
                let x = out.get(r, 0) + w;
                out.set(r, 0, x);
            }
        }
        out
    }

    /// Sum of all entries (total volume for an adjacency).
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// Dense copy (duplicate coordinates accumulate).
    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for &(r, c, w) in &self.entries {
            let x = out.get(r, c) + w;
            out.set(r, c, x);
        }
        out
    }

    /// self · dense.
    pub fn matmul_dense(&self, b: &Tensor) -> Tensor {
        debug_assert_eq!(self.cols, b.rows());
        let mut out = Tensor::zeros(self.rows, b.cols());
        for &(r, c, w) in &self.entries {
            for j in 0..b.cols() {
                let x = out.get(r, j) + w * b.get(c, j);
                out.set(r, j, x);
            }
        }
        out
    }

    /// selfᵀ · dense (used by the backward pass).
    pub fn transpose_matmul_dense(&self, b: &Tensor) -> Tensor {
        debug_assert_eq!(self.rows, b.rows());
        let mut out = Tensor::zeros(self.cols, b.cols());
        for &(r, c, w) in &self.entries {
            for j in 0..b.cols() {
                let x = out.get(c, j) + w * b.get(r, j);
                out.set(c, j, x);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Matmul(usize, usize),
    SparseMatmul(Rc<SparseMatrix>, usize),
    Transpose(usize),
    ConcatCols(usize, usize),
    ConcatRows(usize, usize),
    SliceCols(usize, usize, usize),
    SumAll(usize),
    Exp(usize),
    Log2(usize),
    Sqrt(usize),
    Square(usize),
    ArccoshStable(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    MaxScalar(usize, f64),
    MinScalar(usize, f64),
    AddScalar(usize),
    MulScalar(usize, f64),
    SoftmaxRows(usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Records a computation for one forward/backward cycle. Create a fresh tape
/// per training step; `backward` may run once per tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a tape node. Copyable; tied to its tape's lifetime.
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

/// Gradients of one scalar output with respect to every tape node that
/// required them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, if it was reachable from the differentiated scalar
    /// and required a gradient.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.idx).and_then(|g| g.as_ref())
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Shapes of every recorded tensor; lets tests assert that a computation
    /// never materialized anything quadratic in the graph size.
    pub fn node_shapes(&self) -> Vec<(usize, usize)> {
        self.nodes.borrow().iter().map(|n| n.value.shape()).collect()
    }

    fn push(&self, op: Op, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value, requires_grad });
        Var { tape: self, idx: nodes.len() - 1 }
    }

    /// Constant leaf: participates in values but receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value, false)
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value, true)
    }

    /// Reverse-mode sweep from a 1×1 `root`. Consumes the tape: a second call
    /// is a state error.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(root.tape, self) {
            return Err(Error::State("backward called with a variable from another tape".into()));
        }
        if self.consumed.replace(true) {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        let nodes = self.nodes.borrow();
        if nodes[root.idx].value.shape() != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward root must be 1x1, got {:?}",
                nodes[root.idx].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.idx] = Some(Tensor::scalar(1.0));

        // Nodes only reference lower indices, so one reverse pass suffices.
        for i in (0..=root.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let send = |idx: usize, delta: Tensor, grads: &mut Vec<Option<Tensor>>| {
                if !nodes[idx].requires_grad {
                    return;
                }
                match &mut grads[idx] {
                    Some(acc) => acc.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g); // re-store: leaves keep their gradient
                }
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g.map(|x| -x), &mut grads);
                }
                Op::Mul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    send(*a, g.zip(bv, |gx, b| gx * b), &mut grads);
                    send(*b, g.zip(av, |gx, a| gx * a), &mut grads);
                }
                Op::Div(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    send(*a, g.zip(bv, |gx, b| gx / b), &mut grads);
                    let mut gb = g.zip(av, |gx, a| gx * a);
                    gb = gb.zip(bv, |x, b| -x / (b * b));
                    send(*b, gb, &mut grads);
                }
                Op::Matmul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    send(*a, g.matmul(&bv.transpose()), &mut grads);
                    send(*b, av.transpose().matmul(&g), &mut grads);
                }
                Op::SparseMatmul(s, b) => {
                    send(*b, s.transpose_matmul_dense(&g), &mut grads);
                }
                Op::Transpose(a) => send(*a, g.transpose(), &mut grads),
                Op::ConcatCols(a, b) => {
                    let ac = nodes[*a].value.cols();
                    let (r, c) = g.shape();
                    send(*a, Tensor::from_fn(r, ac, |i, j| g.get(i, j)), &mut grads);
                    send(*b, Tensor::from_fn(r, c - ac, |i, j| g.get(i, j + ac)), &mut grads);
                }
                Op::ConcatRows(a, b) => {
                    let ar = nodes[*a].value.rows();
                    let (r, c) = g.shape();
                    send(*a, Tensor::from_fn(ar, c, |i, j| g.get(i, j)), &mut grads);
                    send(*b, Tensor::from_fn(r - ar, c, |i, j| g.get(i + ar, j)), &mut grads);
                }
                Op::SliceCols(a, start, _len) => {
                    let (r, c) = nodes[*a].value.shape();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            ga.set(i, start + j, g.get(i, j));
                        }
                    }
                    send(*a, ga, &mut grads);
                }
                Op::SumAll(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    let gv = g.item();
                    send(*a, Tensor::from_fn(r, c, |_, _| gv), &mut grads);
                }
                Op::Exp(a) => send(*a, g.zip(&node.value, |gx, y| gx * y), &mut grads),
                Op::Log2(a) => {
                    let av = &nodes[*a].value;
                    send(*a, g.zip(av, |gx, x| gx / (x * std::f64::consts::LN_2)), &mut grads);
                }
                Op::Sqrt(a) => send(*a, g.zip(&node.value, |gx, y| gx / (2.0 * y)), &mut grads),
                Op::Square(a) => {
                    let av = &nodes[*a].value;
                    send(*a, g.zip(av, |gx, x| gx * 2.0 * x), &mut grads);
                }
                Op::ArccoshStable(a) => {
                    let av = &nodes[*a].value;
                    send(*a, g.zip(av, |gx, x| gx * arccosh_stable_grad(x)), &mut grads);
                }
                Op::LeakyRelu(a, slope) => {
                    let av = &nodes[*a].value;
                    let s = *slope;
                    send(*a, g.zip(av, |gx, x| if x > 0.0 { gx } else { gx * s }), &mut grads);
                }
                Op::Sigmoid(a) => {
                    send(*a, g.zip(&node.value, |gx, y| gx * y * (1.0 - y)), &mut grads);
                }
                Op::MaxScalar(a, c) => {
                    let av = &nodes[*a].value;
                    let c = *c;
                    send(*a, g.zip(av, |gx, x| if x > c { gx } else { 0.0 }), &mut grads);
                }
                Op::MinScalar(a, c) => {
                    let av = &nodes[*a].value;
                    let c = *c;
                    send(*a, g.zip(av, |gx, x| if x < c { gx } else { 0.0 }), &mut grads);
                }
                Op::AddScalar(a) => send(*a, g, &mut grads),
                Op::MulScalar(a, c) => {
                    let c = *c;
                    send(*a, g.map(|x| x * c), &mut grads);
                }
                Op::SoftmaxRows(a) => {
                    // dx = y ⊙ (g − rowsum(g ⊙ y)); masked entries have y = 0.
                    let y = &node.value;
                    let (r, c) = y.shape();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        let mut dot = 0.0;
                        for j in 0..c {
                            dot += g.get(i, j) * y.get(i, j);
                        }
                        for j in 0..c {
                            ga.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    send(*a, ga, &mut grads);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn arccosh_stable_grad(x: f64) -> f64 {
    if x <= 1.0 {
        0.0
    } else if x < 1.0 + 1e-7 {
        1.0 / (2.0 * (x - 1.0)).sqrt()
    } else {
        1.0 / (x * x - 1.0).sqrt()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.idx].value.clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.idx].value.shape()
    }

    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.idx].value.item()
    }

    fn binary(
        self,
        other: Var<'t>,
        same_shape: bool,
        f: impl FnOnce(&Tensor, &Tensor) -> Tensor,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var<'t>> {
        if !std::ptr::eq(self.tape, other.tape) {
            return Err(Error::State("operands come from different tapes".into()));
        }
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.idx].value;
            let b = &nodes[other.idx].value;
            if same_shape && a.shape() != b.shape() {
                return Err(Error::Dimension(format!(
                    "elementwise op on {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            (f(a, b), nodes[self.idx].requires_grad || nodes[other.idx].requires_grad)
        };
        Ok(self.tape.push(op(self.idx, other.idx), value, rg))
    }

    fn unary(self, f: impl FnOnce(&Tensor) -> Tensor, op: impl FnOnce(usize) -> Op) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            (f(&nodes[self.idx].value), nodes[self.idx].requires_grad)
        };
        self.tape.push(op(self.idx), value, rg)
    }

    pub fn add(self, o: Var<'t>) -> Result<Var<'t>> {
        self.binary(o, true, |a, b| a.zip(b, |x, y| x + y), Op::Add)
    }

    pub fn sub(self, o: Var<'t>) -> Result<Var<'t>> {
        self.binary(o, true, |a, b| a.zip(b, |x, y| x - y), Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(self, o: Var<'t>) -> Result<Var<'t>> {
        self.binary(o, true, |a, b| a.zip(b, |x, y| x * y), Op::Mul)
    }

    /// Elementwise quotient.
    pub fn div(self, o: Var<'t>) -> Result<Var<'t>> {
        self.binary(o, true, |a, b| a.zip(b, |x, y| x / y), Op::Div)
    }

    pub fn matmul(self, o: Var<'t>) -> Result<Var<'t>> {
        {
            let nodes = self.tape.nodes.borrow();
            let (ar, ac) = nodes[self.idx].value.shape();
            let (br, bc) = nodes[o.idx].value.shape();
            if ac != br {
                return Err(Error::Dimension(format!("matmul {ar}x{ac} by {br}x{bc}")));
            }
        }
        self.binary(o, false, |a, b| a.matmul(b), Op::Matmul)
    }

    pub fn concat_cols(self, o: Var<'t>) -> Result<Var<'t>> {
        {
            let nodes = self.tape.nodes.borrow();
            if nodes[self.idx].value.rows() != nodes[o.idx].value.rows() {
                return Err(Error::Dimension("concat_cols row mismatch".into()));
            }
        }
        self.binary(
            o,
            false,
            |a, b| {
                Tensor::from_fn(a.rows(), a.cols() + b.cols(), |i, j| {
                    if j < a.cols() { a.get(i, j) } else { b.get(i, j - a.cols()) }
                })
            },
            Op::ConcatCols,
        )
    }

    pub fn concat_rows(self, o: Var<'t>) -> Result<Var<'t>> {
        {
            let nodes = self.tape.nodes.borrow();
            if nodes[self.idx].value.cols() != nodes[o.idx].value.cols() {
                return Err(Error::Dimension("concat_rows column mismatch".into()));
            }
        }
        self.binary(
            o,
            false,
            |a, b| {
                Tensor::from_fn(a.rows() + b.rows(), a.cols(), |i, j| {
                    if i < a.rows() { a.get(i, j) } else { b.get(i - a.rows(), j) }
                })
            },
            Op::ConcatRows,
        )
    }

    /// Columns `[start, start+len)` as a new tensor.
    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        {
            let nodes = self.tape.nodes.borrow();
            let c = nodes[self.idx].value.cols();
            if start + len > c {
                return Err(Error::Dimension(format!(
                    "slice_cols [{start}, {}) out of {c} columns",
                    start + len
                )));
            }
        }
        Ok(self.unary(
            |a| Tensor::from_fn(a.rows(), len, |i, j| a.get(i, start + j)),
            |a| Op::SliceCols(a, start, len),
        ))
    }

    /// Left-multiplication by a constant sparse matrix: sparse · self.
    pub fn sparse_matmul_left(self, s: Rc<SparseMatrix>) -> Result<Var<'t>> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let b = &nodes[self.idx].value;
            if s.shape().1 != b.rows() {
                return Err(Error::Dimension(format!(
                    "sparse {}x{} by dense {}x{}",
                    s.shape().0,
                    s.shape().1,
                    b.rows(),
                    b.cols()
                )));
            }
            (s.matmul_dense(b), nodes[self.idx].requires_grad)
        };
        Ok(self.tape.push(Op::SparseMatmul(s, self.idx), value, rg))
    }

    pub fn transpose(self) -> Var<'t> {
        self.unary(|a| a.transpose(), Op::Transpose)
    }

    pub fn sum_all(self) -> Var<'t> {
        self.unary(|a| Tensor::scalar(a.data().iter().sum()), Op::SumAll)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(|a| a.map(f64::exp), Op::Exp)
    }

    pub fn log2(self) -> Var<'t> {
        self.unary(|a| a.map(f64::log2), Op::Log2)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(|a| a.map(f64::sqrt), Op::Sqrt)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|a| a.map(|x| x * x), Op::Square)
    }

    /// Elementwise stable arccosh (0 at arguments ≤ 1, series branch just
    /// above 1); the piecewise derivative matches each branch.
    pub fn arccosh_stable(self) -> Var<'t> {
        self.unary(|a| a.map(crate::lorentz::arccosh_stable), Op::ArccoshStable)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(|a| a.map(|x| if x > 0.0 { x } else { slope * x }), |a| Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(|a| a.map(|x| 1.0 / (1.0 + (-x).exp())), Op::Sigmoid)
    }

    /// Elementwise max(x, c); gradient is zero in the clamped region.
    pub fn max_scalar(self, c: f64) -> Var<'t> {
        self.unary(|a| a.map(|x| x.max(c)), |a| Op::MaxScalar(a, c))
    }

    /// Elementwise min(x, c); gradient is zero in the clamped region.
    pub fn min_scalar(self, c: f64) -> Var<'t> {
        self.unary(|a| a.map(|x| x.min(c)), |a| Op::MinScalar(a, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(|a| a.map(|x| x + c), |a| Op::AddScalar(a))
    }

    pub fn mul_scalar(self, c: f64) -> Var<'t> {
        self.unary(|a| a.map(|x| x * c), |a| Op::MulScalar(a, c))
    }

    pub fn neg(self) -> Var<'t> {
        self.mul_scalar(-1.0)
    }

    /// Row-wise softmax; with a mask, probability mass is confined to entries
    /// where mask > 0 (masked entries become exactly 0). Every row must have
    /// at least one admissible entry.
    pub fn softmax_rows(self, mask: Option<Rc<Tensor>>) -> Result<Var<'t>> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.idx].value;
            if let Some(m) = &mask {
                if m.shape() != a.shape() {
                    return Err(Error::Dimension("softmax mask shape mismatch".into()));
                }
            }
            let (r, c) = a.shape();
            let mut out = Tensor::zeros(r, c);
            for i in 0..r {
                let admissible =
                    |j: usize| mask.as_ref().map_or(true, |m| m.get(i, j) > 0.0);
                let mut max = f64::NEG_INFINITY;
                for j in 0..c {
                    if admissible(j) {
                        max = max.max(a.get(i, j));
                    }
                }
                if max == f64::NEG_INFINITY {
                    return Err(Error::Degenerate(format!(
                        "softmax row {i} has no admissible entries"
                    )));
                }
                let mut sum = 0.0;
                for j in 0..c {
                    if admissible(j) {
                        let e = (a.get(i, j) - max).exp();
                        out.set(i, j, e);
                        sum += e;
                    }
                }
                for j in 0..c {
                    out.set(i, j, out.get(i, j) / sum);
                }
            }
            (out, nodes[self.idx].requires_grad)
        };
        Ok(self.tape.push(Op::SoftmaxRows(self.idx), value, rg))
    }

    // ----- composite helpers (no new gradient rules) -----

    fn const_ones(self, r: usize, c: usize) -> Var<'t> {
        self.tape.constant(Tensor::ones(r, c))
    }

    /// Row sums as a column vector: A·1.
    pub fn sum_rows(self) -> Result<Var<'t>> {
        let (_, c) = self.shape();
        let ones = self.const_ones(c, 1);
        self.matmul(ones)
    }

    /// Column sums as a row vector: 1ᵀ·A.
    pub fn sum_cols(self) -> Result<Var<'t>> {
        let (r, _) = self.shape();
        let ones = self.const_ones(1, r);
        ones.matmul(self)
    }

    /// Mean of all entries as 1×1.
    pub fn mean_all(self) -> Var<'t> {
        let (r, c) = self.shape();
        self.sum_all().mul_scalar(1.0 / (r * c) as f64)
    }

    /// Tiles a column vector (N×1) across `m` columns.
    pub fn broadcast_col(self, m: usize) -> Result<Var<'t>> {
        let ones = self.const_ones(1, m);
        self.matmul(ones)
    }

    /// Tiles a row vector (1×M) across `n` rows.
    pub fn broadcast_row(self, n: usize) -> Result<Var<'t>> {
        let ones = self.const_ones(n, 1);
        ones.matmul(self)
    }

    /// Diagonal of a square matrix as a column vector (mask + row sums).
    pub fn diag(self) -> Result<Var<'t>> {
        let (r, c) = self.shape();
        if r != c {
            return Err(Error::Dimension(format!("diag of non-square {r}x{c}")));
        }
        let eye = self.tape.constant(Tensor::identity(r));
        self.mul(eye)?.sum_rows()
    }
}

/// Adam optimizer with bias correction. Slot state is index-aligned with the
/// parameter list, which must keep a stable order across steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: usize,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update over index-aligned (name, value, gradient) triples.
    /// Non-finite gradients abort with a training error naming the tensor.
    pub fn step(&mut self, names: &[&str], values: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if values.len() != grads.len() || values.len() != names.len() {
            return Err(Error::Dimension("optimizer step with misaligned lists".into()));
        }
        if self.m.is_empty() {
            self.m = values.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != values.len() {
            return Err(Error::State("optimizer was initialized with a different parameter list".into()));
        }
        for ((name, value), grad) in names.iter().zip(values.iter()).zip(grads.iter()) {
            if value.shape() != grad.shape() {
                return Err(Error::Dimension(format!("gradient shape mismatch for {name}")));
            }
            if grad.has_non_finite() {
                return Err(Error::Training(format!("non-finite gradient for parameter {name}")));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for k in 0..values.len() {
            let g = &grads[k];
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for i in 0..g.len() {
                let gi = g.data()[i];
                m.data_mut()[i] = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                v.data_mut()[i] = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m.data()[i] / bc1;
                let vhat = v.data()[i] / bc2;
                values[k].data_mut()[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut impl Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
        Tensor::from_fn(r, c, |_, _| rng.gen_range(lo..hi))
    }

    // Central-difference gradient harness: rebuilds the forward pass on a
    // fresh tape per evaluation and compares analytic vs numeric per entry.
    macro_rules! gradcheck {
        ($inputs:expr, |$tape:ident, $vars:ident| $body:expr) => {{
            let inputs: Vec<Tensor> = $inputs;
            let eval = |vals: &[Tensor]| -> (f64, Vec<Option<Tensor>>) {
                let $tape = Tape::new();
                let $vars: Vec<Var<'_>> =
                    vals.iter().map(|t| $tape.param(t.clone())).collect();
                let out: Var<'_> = $body;
                let loss = out.item();
                let grads = $tape.backward(out).unwrap();
                let gs = $vars.iter().map(|v| grads.get(*v).cloned()).collect();
                (loss, gs)
            };
            let (_, analytic) = eval(&inputs);
            let eps = 1e-6;
            for (k, t) in inputs.iter().enumerate() {
                let ga = analytic[k].as_ref().expect("missing gradient");
                for i in 0..t.len() {
                    let mut plus = inputs.clone();
                    plus[k].data_mut()[i] += eps;
                    let mut minus = inputs.clone();
                    minus[k].data_mut()[i] -= eps;
                    let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * eps);
                    let a = ga.data()[i];
                    let tol = 1e-5 * a.abs().max(fd.abs()).max(1.0);
                    assert!(
                        (a - fd).abs() <= tol,
                        "grad mismatch input {k} entry {i}: analytic {a}, fd {fd}"
                    );
                }
            }
        }};
    }

    #[test]
    fn matmul_values() {
        let t = Tape::new();
        let a = t.constant(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = t.constant(Tensor::from_vec(2, 1, vec![5.0, 6.0]).unwrap());
        let c = a.matmul(b).unwrap();
        assert_eq!(c.value().data(), &[17.0, 39.0]);
        assert!(a.matmul(a).is_ok());
        let bad = t.constant(Tensor::zeros(3, 3));
        assert!(a.matmul(bad).is_err());
    }

    #[test]
    fn linear_regression_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_tensor(&mut rng, 4, 3, -1.0, 1.0);
        let b = rand_tensor(&mut rng, 4, 1, -1.0, 1.0);
        let x = rand_tensor(&mut rng, 3, 1, -1.0, 1.0);
        gradcheck!(vec![x.clone()], |tape, vars| {
            let ac = tape.constant(a.clone());
            let bc = tape.constant(b.clone());
            ac.matmul(vars[0]).unwrap().sub(bc).unwrap().square().sum_all()
        });
    }

    #[test]
    fn elementwise_op_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_tensor(&mut rng, 3, 4, 0.3, 2.0);
        let b = rand_tensor(&mut rng, 3, 4, 0.3, 2.0);
        gradcheck!(vec![a.clone(), b.clone()], |_tape, vars| {
            let prod = vars[0].mul(vars[1]).unwrap();
            let quot = vars[0].div(vars[1]).unwrap();
            prod.add(quot).unwrap().sub(vars[1]).unwrap().sum_all()
        });
        gradcheck!(vec![a.clone()], |_tape, vars| {
            vars[0].sqrt().exp().log2().sum_all()
        });
        gradcheck!(vec![a], |_tape, vars| {
            vars[0].sigmoid().square().mean_all()
        });
    }

    #[test]
    fn activation_and_clamp_gradients() {
        let x = Tensor::from_vec(2, 3, vec![-1.5, -0.2, 0.3, 1.0, 2.0, -3.0]).unwrap();
        gradcheck!(vec![x.clone()], |_tape, vars| {
            vars[0].leaky_relu(0.01).sum_all()
        });
        gradcheck!(vec![x.clone()], |_tape, vars| {
            vars[0].max_scalar(0.25).sum_all()
        });
        gradcheck!(vec![x], |_tape, vars| {
            vars[0].min_scalar(0.25).square().sum_all()
        });
    }

    #[test]
    fn arccosh_branches() {
        // Value checks across the three branches.
        let t = Tape::new();
        let x = t.constant(
            Tensor::from_vec(1, 4, vec![0.5, 1.0, 1.0 + 1e-9, 2.0]).unwrap(),
        );
        let y = x.arccosh_stable().value();
        assert_eq!(y.get(0, 0), 0.0);
        assert_eq!(y.get(0, 1), 0.0);
        assert_relative_eq!(y.get(0, 2), (2e-9f64).sqrt(), max_relative = 1e-6);
        assert_relative_eq!(y.get(0, 3), 2f64.acosh(), epsilon = 1e-15);
        // Gradient check safely inside the smooth region.
        let x = Tensor::from_vec(1, 3, vec![1.3, 2.0, 5.0]).unwrap();
        gradcheck!(vec![x], |_tape, vars| {
            vars[0].arccosh_stable().sum_all()
        });
    }

    #[test]
    fn softmax_rows_and_mask() {
        let t = Tape::new();
        let x = t.constant(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap());
        let y = x.softmax_rows(None).unwrap().value();
        for i in 0..2 {
            let s: f64 = (0..3).map(|j| y.get(i, j)).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(y.get(1, 0), 1.0 / 3.0, epsilon = 1e-12);

        let mask = Rc::new(Tensor::from_vec(2, 3, vec![1.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap());
        let ym = x.softmax_rows(Some(mask.clone())).unwrap().value();
        assert_eq!(ym.get(0, 1), 0.0);
        assert_relative_eq!(ym.get(0, 0) + ym.get(0, 2), 1.0, epsilon = 1e-12);

        let x = Tensor::from_vec(2, 3, vec![0.5, -0.3, 0.9, 0.1, 0.0, -2.0]).unwrap();
        gradcheck!(vec![x.clone()], |_tape, vars| {
            vars[0].softmax_rows(None).unwrap().square().sum_all()
        });
        gradcheck!(vec![x], |tape, vars| {
            let mask =
                Rc::new(Tensor::from_vec(2, 3, vec![1.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap());
            let w = vars[0].softmax_rows(Some(mask)).unwrap();
            let lin = tape.constant(Tensor::from_vec(3, 1, vec![0.3, -0.7, 1.1]).unwrap());
            w.matmul(lin).unwrap().square().sum_all()
        });
        let zero_mask = Rc::new(Tensor::zeros(2, 3));
        let t2 = Tape::new();
        let v = t2.constant(Tensor::zeros(2, 3));
        assert!(v.softmax_rows(Some(zero_mask)).is_err());
    }

    #[test]
    fn concat_slice_transpose_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_tensor(&mut rng, 2, 2, -1.0, 1.0);
        let b = rand_tensor(&mut rng, 2, 3, -1.0, 1.0);
        gradcheck!(vec![a.clone(), b.clone()], |_tape, vars| {
            let cat = vars[0].concat_cols(vars[1]).unwrap();
            let left = cat.slice_cols(1, 2).unwrap();
            left.transpose().square().sum_all()
        });
        let c = rand_tensor(&mut rng, 1, 2, -1.0, 1.0);
        let d = rand_tensor(&mut rng, 3, 2, -1.0, 1.0);
        gradcheck!(vec![c, d], |_tape, vars| {
            vars[0].concat_rows(vars[1]).unwrap().square().sum_all()
        });
    }

    #[test]
    fn broadcast_and_diag_helpers() {
        let t = Tape::new();
        let col = t.constant(Tensor::from_vec(2, 1, vec![3.0, 4.0]).unwrap());
        let wide = col.broadcast_col(3).unwrap().value();
        assert_eq!(wide.shape(), (2, 3));
        assert_eq!(wide.get(1, 2), 4.0);
        let m = t.constant(Tensor::from_vec(2, 2, vec![1.0, 9.0, 9.0, 5.0]).unwrap());
        let d = m.diag().unwrap().value();
        assert_eq!(d.data(), &[1.0, 5.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&mut rng, 3, 3, -1.0, 1.0);
        gradcheck!(vec![x], |_tape, vars| {
            vars[0].diag().unwrap().square().sum_all()
        });
    }

    #[test]
    fn sparse_matches_dense() {
        let g = Graph::from_edges(4, &[(0, 1, 2.0), (1, 2, 1.0), (2, 3, 0.5), (0, 3, 1.5)])
            .unwrap();
        let s = Rc::new(SparseMatrix::from_graph(&g));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, 4, 2, -1.0, 1.0);

        let tape = Tape::new();
        let xv = tape.param(x.clone());
        let dense_a = tape.constant(Tensor::from_dmatrix(&g.adjacency_matrix()));
        let sparse_out = xv.sparse_matmul_left(s.clone()).unwrap();
        let dense_out = dense_a.matmul(xv).unwrap();
        let diff = sparse_out.sub(dense_out).unwrap().square().sum_all();
        assert!(diff.item() < 1e-24);

        // Gradient through the sparse product agrees with finite differences.
        gradcheck!(vec![x], |tape, vars| {
            let w = tape.constant(Tensor::from_vec(2, 1, vec![0.7, -0.4]).unwrap());
            vars[0].sparse_matmul_left(s.clone()).unwrap().matmul(w).unwrap().square().sum_all()
        });
    }

    #[test]
    fn backward_runs_once() {
        let t = Tape::new();
        let x = t.param(Tensor::scalar(2.0));
        let y = x.square().sum_all();
        let g = t.backward(y).unwrap();
        assert_relative_eq!(g.get(x).unwrap().item(), 4.0);
        assert!(matches!(t.backward(y), Err(Error::State(_))));
    }

    #[test]
    fn backward_requires_scalar_root() {
        let t = Tape::new();
        let x = t.param(Tensor::zeros(2, 2));
        let y = x.square();
        assert!(matches!(t.backward(y), Err(Error::Dimension(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let t = Tape::new();
        let c = t.constant(Tensor::scalar(3.0));
        let x = t.param(Tensor::scalar(2.0));
        let y = c.mul(x).unwrap().sum_all();
        let g = t.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_relative_eq!(g.get(x).unwrap().item(), 3.0);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut adam = Adam::new(0.1);
        let mut values = vec![Tensor::from_vec(1, 2, vec![1.0, -1.0]).unwrap()];
        let grads = vec![Tensor::from_vec(1, 2, vec![0.5, -0.25]).unwrap()];
        adam.step(&["w"], &mut values, &grads).unwrap();
        // With bias correction, the first step is lr·g/(|g|+ε') ≈ ±lr.
        assert_relative_eq!(values[0].get(0, 0), 1.0 - 0.1, epsilon = 1e-6);
        assert_relative_eq!(values[0].get(0, 1), -1.0 + 0.1, epsilon = 1e-6);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut adam = Adam::new(0.1);
        let mut values = vec![Tensor::scalar(1.0)];
        let grads = vec![Tensor::scalar(f64::NAN)];
        let err = adam.step(&["w"], &mut values, &grads).unwrap_err();
        assert!(matches!(err, Error::Training(msg) if msg.contains("w")));
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut adam = Adam::new(0.003);
            let mut values = vec![Tensor::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap()];
            for step in 0..25 {
                let g = values[0].map(|x| (x * (step as f64 + 1.0)).sin());
                adam.step(&["w"], &mut values, &[g]).unwrap();
            }
            values[0].clone()
        };
        assert_eq!(run(), run());
    }
}
