//! Reverse-mode differentiation over a static graph of layer-level nodes.
//!
//! Nodes are appended in topological order (a node may only reference nodes
//! created before it), so the graph is acyclic by construction and forward
//! evaluation is a single pass over the node list.
//!
//! Values are 2-D tensors. Per-sample nodes ("batched") carry one row per
//! sample; parameters and losses are unbatched. Loss nodes average over the
//! batch, so parameter gradients are batch means.
//!
//! Hard morphological nodes (dilation, erosion, max/min pooling) cache the
//! index of the term that won each reduction during the forward pass and
//! route the whole cotangent to that term in the backward pass. Ties go to
//! the lowest index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "tensor data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "tensor row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    fn resize(&mut self, rows: usize, cols: usize) {
        self.rows = rows;
        self.cols = cols;
        self.data.resize(rows * cols, 0.0);
    }

    fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise map onto nonnegative values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveTransform {
    /// `w = e^z`, strictly positive.
    Exp,
    /// `w = z²`, nonnegative and flat at `z = 0`.
    Square,
}

impl PositiveTransform {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            PositiveTransform::Exp => z.exp(),
            PositiveTransform::Square => z * z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            PositiveTransform::Exp => z.exp(),
            PositiveTransform::Square => 2.0 * z,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Input,
    Parameter,
    /// `y = x Wᵀ + b`, `W` is `out × in`, `b` is `1 × out`.
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    /// Per unit `u`: `max(W[u,0], max_i W[u,i+1] + x_i)`.
    Dilation {
        input: NodeId,
        weight: NodeId,
    },
    /// Per unit `u`: `min(W[u,0], min_i W[u,i+1] + x_i)`.
    Erosion {
        input: NodeId,
        weight: NodeId,
    },
    SoftDilation {
        input: NodeId,
        weight: NodeId,
        beta: f64,
    },
    SoftErosion {
        input: NodeId,
        weight: NodeId,
        beta: f64,
    },
    Relu {
        input: NodeId,
    },
    /// Reduces consecutive groups of `group` columns; soft when `beta` is set.
    MaxPool {
        input: NodeId,
        group: usize,
        beta: Option<f64>,
    },
    MinPool {
        input: NodeId,
        group: usize,
        beta: Option<f64>,
    },
    Transform {
        input: NodeId,
        kind: PositiveTransform,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    /// Replaces the columns whose `keep` flag is false by `fill`, chosen
    /// as the identity of the consuming reduction (0 for sums, −∞ for max,
    /// +∞ for min) so dropped units have no effect downstream.
    Mask {
        input: NodeId,
        keep: Vec<bool>,
        fill: f64,
    },
    /// Mean cross-entropy of `softmax(logits)` against class indices stored
    /// in the single column of `target`.
    SoftmaxCrossEntropy {
        logits: NodeId,
        target: NodeId,
    },
    /// Mean over all entries of `(pred - target)²`.
    MeanSquaredError {
        pred: NodeId,
        target: NodeId,
    },
    Scale {
        input: NodeId,
        factor: f64,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
}

impl Op {
    fn predecessors(&self) -> Vec<NodeId> {
        match *self {
            Op::Input | Op::Parameter => vec![],
            Op::Linear { input, weight, bias } => vec![input, weight, bias],
            Op::Dilation { input, weight }
            | Op::Erosion { input, weight }
            | Op::SoftDilation { input, weight, .. }
            | Op::SoftErosion { input, weight, .. } => vec![input, weight],
            Op::Relu { input }
            | Op::MaxPool { input, .. }
            | Op::MinPool { input, .. }
            | Op::Transform { input, .. }
            | Op::Mask { input, .. }
            | Op::Scale { input, .. } => vec![input],
            Op::Concat { a, b } | Op::Add { a, b } => vec![a, b],
            Op::SoftmaxCrossEntropy { logits, target } => vec![logits, target],
            Op::MeanSquaredError { pred, target } => vec![pred, target],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    /// Per-sample node (rows = batch size) or fixed-shape node.
    batched: bool,
    /// Column count, and row count for unbatched nodes.
    cols: usize,
    rows: usize,
    requires_grad: bool,
    value: Tensor,
    grad: Tensor,
    /// Winning term per (sample, unit) for hard reductions.
    selected: Vec<usize>,
    bound: bool,
}

/// A static computation graph with value and gradient buffers.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    batch: Option<usize>,
    /// Highest node index whose value is current.
    evaluated: Option<usize>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::Graph(format!("unknown node {}", id.0)))
    }

    fn push(&mut self, op: Op, batched: bool, rows: usize, cols: usize) -> NodeId {
        let requires_grad = match op {
            Op::Input => false,
            Op::Parameter => true,
            _ => op.predecessors().iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            batched,
            cols,
            rows,
            requires_grad,
            value: Tensor::default(),
            grad: Tensor::default(),
            selected: Vec::new(),
            bound: false,
        });
        self.evaluated = None;
        NodeId(self.nodes.len() - 1)
    }

    fn expect_batched(&self, id: NodeId, what: &str) -> Result<usize> {
        let n = self.node(id)?;
        if !n.batched {
            return Err(Error::Graph(format!("{what} must be a per-sample node")));
        }
        Ok(n.cols)
    }

    fn expect_fixed(&self, id: NodeId, what: &str) -> Result<(usize, usize)> {
        let n = self.node(id)?;
        if n.batched {
            return Err(Error::Graph(format!("{what} must be a fixed-shape node")));
        }
        Ok((n.rows, n.cols))
    }

    /// A per-sample input of the given width.
    pub fn input(&mut self, width: usize) -> NodeId {
        self.push(Op::Input, true, 0, width)
    }

    pub fn parameter(&mut self, init: Tensor) -> NodeId {
        let (r, c) = init.shape();
        let id = self.push(Op::Parameter, false, r, c);
        self.nodes[id.0].value = init;
        self.nodes[id.0].bound = true;
        id
    }

    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let n_in = self.expect_batched(input, "linear input")?;
        let (out, w_in) = self.expect_fixed(weight, "linear weight")?;
        let (br, bc) = self.expect_fixed(bias, "linear bias")?;
        if w_in != n_in {
            return Err(Error::DimensionMismatch {
                context: "linear weight columns",
                expected: n_in,
                found: w_in,
            });
        }
        if br != 1 || bc != out {
            return Err(Error::DimensionMismatch {
                context: "linear bias",
                expected: out,
                found: br * bc,
            });
        }
        Ok(self.push(Op::Linear { input, weight, bias }, true, 0, out))
    }

    fn morph_shape(&self, input: NodeId, weight: NodeId) -> Result<usize> {
        let n_in = self.expect_batched(input, "morphological input")?;
        let (units, w_cols) = self.expect_fixed(weight, "morphological weight")?;
        if w_cols != n_in + 1 {
            return Err(Error::DimensionMismatch {
                context: "morphological weight columns (input dim + 1)",
                expected: n_in + 1,
                found: w_cols,
            });
        }
        Ok(units)
    }

    fn check_beta(beta: f64) -> Result<()> {
        if beta > 0.0 && beta.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("hardness beta must be positive, got {beta}")))
        }
    }

    pub fn dilation(&mut self, input: NodeId, weight: NodeId) -> Result<NodeId> {
        let u = self.morph_shape(input, weight)?;
        Ok(self.push(Op::Dilation { input, weight }, true, 0, u))
    }

    pub fn erosion(&mut self, input: NodeId, weight: NodeId) -> Result<NodeId> {
        let u = self.morph_shape(input, weight)?;
        Ok(self.push(Op::Erosion { input, weight }, true, 0, u))
    }

    pub fn soft_dilation(&mut self, input: NodeId, weight: NodeId, beta: f64) -> Result<NodeId> {
        Self::check_beta(beta)?;
        let u = self.morph_shape(input, weight)?;
        Ok(self.push(Op::SoftDilation { input, weight, beta }, true, 0, u))
    }

    pub fn soft_erosion(&mut self, input: NodeId, weight: NodeId, beta: f64) -> Result<NodeId> {
        Self::check_beta(beta)?;
        let u = self.morph_shape(input, weight)?;
        Ok(self.push(Op::SoftErosion { input, weight, beta }, true, 0, u))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let w = self.expect_batched(input, "relu input")?;
        Ok(self.push(Op::Relu { input }, true, 0, w))
    }

    fn pool_shape(&self, input: NodeId, group: usize, beta: Option<f64>) -> Result<usize> {
        let w = self.expect_batched(input, "pool input")?;
        if group == 0 || w % group != 0 {
            return Err(Error::invalid(format!("pool group {group} does not divide width {w}")));
        }
        if let Some(b) = beta {
            Self::check_beta(b)?;
        }
        Ok(w / group)
    }

    pub fn max_pool(&mut self, input: NodeId, group: usize, beta: Option<f64>) -> Result<NodeId> {
        let w = self.pool_shape(input, group, beta)?;
        Ok(self.push(Op::MaxPool { input, group, beta }, true, 0, w))
    }

    pub fn min_pool(&mut self, input: NodeId, group: usize, beta: Option<f64>) -> Result<NodeId> {
        let w = self.pool_shape(input, group, beta)?;
        Ok(self.push(Op::MinPool { input, group, beta }, true, 0, w))
    }

    pub fn transform(&mut self, input: NodeId, kind: PositiveTransform) -> Result<NodeId> {
        let n = self.node(input)?;
        let (batched, rows, cols) = (n.batched, n.rows, n.cols);
        Ok(self.push(Op::Transform { input, kind }, batched, rows, cols))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let wa = self.expect_batched(a, "concat operand")?;
        let wb = self.expect_batched(b, "concat operand")?;
        Ok(self.push(Op::Concat { a, b }, true, 0, wa + wb))
    }

    pub fn mask(&mut self, input: NodeId, keep: Vec<bool>, fill: f64) -> Result<NodeId> {
        let w = self.expect_batched(input, "mask input")?;
        if keep.len() != w {
            return Err(Error::DimensionMismatch {
                context: "mask length",
                expected: w,
                found: keep.len(),
            });
        }
        Ok(self.push(Op::Mask { input, keep, fill }, true, 0, w))
    }

    /// Replaces the keep flags of an existing mask node.
    pub fn set_mask(&mut self, id: NodeId, keep: Vec<bool>) -> Result<()> {
        let node = self
            .nodes
            .get_mut(id.0)
            .ok_or_else(|| Error::Graph(format!("unknown node {}", id.0)))?;
        match &mut node.op {
            Op::Mask { keep: k, .. } => {
                if k.len() != keep.len() {
                    return Err(Error::DimensionMismatch {
                        context: "mask length",
                        expected: k.len(),
                        found: keep.len(),
                    });
                }
                *k = keep;
            }
            _ => return Err(Error::Graph(format!("node {} is not a mask", id.0))),
        }
        self.evaluated = None;
        Ok(())
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: NodeId) -> Result<NodeId> {
        self.expect_batched(logits, "logits")?;
        let tw = self.expect_batched(target, "class target")?;
        if tw != 1 {
            return Err(Error::DimensionMismatch {
                context: "class target width",
                expected: 1,
                found: tw,
            });
        }
        Ok(self.push(Op::SoftmaxCrossEntropy { logits, target }, false, 1, 1))
    }

    pub fn mean_squared_error(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let pw = self.expect_batched(pred, "prediction")?;
        let tw = self.expect_batched(target, "regression target")?;
        if pw != tw {
            return Err(Error::DimensionMismatch {
                context: "regression target width",
                expected: pw,
                found: tw,
            });
        }
        Ok(self.push(Op::MeanSquaredError { pred, target }, false, 1, 1))
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> Result<NodeId> {
        let n = self.node(input)?;
        let (batched, rows, cols) = (n.batched, n.rows, n.cols);
        Ok(self.push(Op::Scale { input, factor }, batched, rows, cols))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let na = self.node(a)?;
        let nb = self.node(b)?;
        if na.batched != nb.batched || na.cols != nb.cols || (!na.batched && na.rows != nb.rows) {
            return Err(Error::Graph("add operands differ in shape".into()));
        }
        let (batched, rows, cols) = (na.batched, na.rows, na.cols);
        Ok(self.push(Op::Add { a, b }, batched, rows, cols))
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Per-sample width (or column count for fixed nodes).
    pub fn width(&self, id: NodeId) -> usize {
        self.nodes[id.0].cols
    }

    pub fn parameters(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].op, Op::Parameter))
            .map(NodeId)
            .collect()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    /// Winning term per (sample, unit) cached by the last forward pass of a
    /// hard node, row-major. Empty for other node kinds.
    pub fn selected(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].selected
    }

    pub fn param(&self, id: NodeId) -> Result<&Tensor> {
        let n = self.node(id)?;
        match n.op {
            Op::Parameter => Ok(&n.value),
            _ => Err(Error::Graph(format!("node {} is not a parameter", id.0))),
        }
    }

    /// Mutable access to a parameter's value; invalidates cached values.
    pub fn param_mut(&mut self, id: NodeId) -> Result<&mut Tensor> {
        self.node(id)?;
        if !matches!(self.nodes[id.0].op, Op::Parameter) {
            return Err(Error::Graph(format!("node {} is not a parameter", id.0)));
        }
        self.evaluated = None;
        Ok(&mut self.nodes[id.0].value)
    }

    /// Parameter value and gradient together, for optimizer updates.
    pub fn param_and_grad_mut(&mut self, id: NodeId) -> Result<(&mut Tensor, &Tensor)> {
        self.node(id)?;
        if !matches!(self.nodes[id.0].op, Op::Parameter) {
            return Err(Error::Graph(format!("node {} is not a parameter", id.0)));
        }
        self.evaluated = None;
        let n = &mut self.nodes[id.0];
        Ok((&mut n.value, &n.grad))
    }

    /// Gradient buffer of a parameter, for rescaling before an update.
    pub fn grad_mut(&mut self, id: NodeId) -> Result<&mut Tensor> {
        self.node(id)?;
        if !matches!(self.nodes[id.0].op, Op::Parameter) {
            return Err(Error::Graph(format!("node {} is not a parameter", id.0)));
        }
        Ok(&mut self.nodes[id.0].grad)
    }

    /// Binds a batch to an input node. All inputs must share a batch size.
    pub fn bind(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let n = self.node(id)?;
        if !matches!(n.op, Op::Input) {
            return Err(Error::Graph(format!("node {} is not an input", id.0)));
        }
        if value.cols() != n.cols {
            return Err(Error::DimensionMismatch {
                context: "bound input width",
                expected: n.cols,
                found: value.cols(),
            });
        }
        if value.rows() == 0 {
            return Err(Error::EmptyInput("input batch"));
        }
        let others = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, m)| *i != id.0 && matches!(m.op, Op::Input) && m.bound)
            .map(|(_, m)| m.value.rows())
            .collect::<Vec<_>>();
        if others.iter().any(|&r| r != value.rows()) {
            // A fresh batch size: drop stale bindings of other inputs.
            for (i, m) in self.nodes.iter_mut().enumerate() {
                if i != id.0 && matches!(m.op, Op::Input) {
                    m.bound = false;
                }
            }
        }
        self.batch = Some(value.rows());
        let n = &mut self.nodes[id.0];
        n.value = value;
        n.bound = true;
        self.evaluated = None;
        Ok(())
    }

    pub fn batch_size(&self) -> Option<usize> {
        self.batch
    }

    /// Evaluates every node.
    pub fn forward(&mut self) -> Result<()> {
        match self.nodes.len() {
            0 => Ok(()),
            n => self.forward_to(NodeId(n - 1)),
        }
    }

    /// Evaluates nodes `0..=target`; later nodes (and their inputs) are not
    /// required to be bound.
    pub fn forward_to(&mut self, target: NodeId) -> Result<()> {
        self.node(target)?;
        let batch = self.batch.ok_or(Error::Graph("no input bound".into()))?;
        for i in 0..=target.0 {
            if matches!(self.nodes[i].op, Op::Input) && !self.nodes[i].bound {
                return Err(Error::Graph(format!("input node {i} is not bound")));
            }
        }
        for i in 0..=target.0 {
            self.eval_node(i, batch);
        }
        self.evaluated = Some(target.0);
        Ok(())
    }

    fn eval_node(&mut self, i: usize, batch: usize) {
        let (before, rest) = self.nodes.split_at_mut(i);
        let node = &mut rest[0];
        let val = |id: NodeId| -> &Tensor { &before[id.0].value };
        let rows = if node.batched { batch } else { node.rows };
        let cols = node.cols;
        match &node.op {
            Op::Input | Op::Parameter => return,
            _ => {}
        }
        let mut out = std::mem::take(&mut node.value);
        out.resize(rows, cols);
        match &node.op {
            Op::Input | Op::Parameter => unreachable!(),
            Op::Linear { input, weight, bias } => {
                let (x, w, b) = (val(*input), val(*weight), val(*bias));
                for s in 0..batch {
                    let xr = x.row(s);
                    let yr = out.row_mut(s);
                    for (o, y) in yr.iter_mut().enumerate() {
                        *y = dot(xr, w.row(o)) + b.data[o];
                    }
                }
            }
            Op::Dilation { input, weight } | Op::Erosion { input, weight } => {
                let max = matches!(node.op, Op::Dilation { .. });
                let (x, w) = (val(*input), val(*weight));
                node.selected.resize(batch * cols, 0);
                for s in 0..batch {
                    let xr = x.row(s);
                    for u in 0..cols {
                        let wr = w.row(u);
                        let (v, k) = if max { hard_dilate(wr, xr) } else { hard_erode(wr, xr) };
                        out.data[s * cols + u] = v;
                        node.selected[s * cols + u] = k;
                    }
                }
            }
            Op::SoftDilation { input, weight, beta } | Op::SoftErosion { input, weight, beta } => {
                let sign = if matches!(node.op, Op::SoftDilation { .. }) {
                    1.0
                } else {
                    -1.0
                };
                let (x, w, beta) = (val(*input), val(*weight), *beta);
                for s in 0..batch {
                    let xr = x.row(s);
                    for u in 0..cols {
                        let wr = w.row(u);
                        out.data[s * cols + u] = soft_morph(wr, xr, beta, sign);
                    }
                }
            }
            Op::Relu { input } => {
                for (o, &v) in out.data.iter_mut().zip(&val(*input).data) {
                    *o = v.max(0.0);
                }
            }
            Op::MaxPool { input, group, beta } | Op::MinPool { input, group, beta } => {
                let sign = if matches!(node.op, Op::MaxPool { .. }) {
                    1.0
                } else {
                    -1.0
                };
                let x = val(*input);
                let g = *group;
                if beta.is_none() {
                    node.selected.resize(batch * cols, 0);
                }
                for s in 0..batch {
                    let xr = x.row(s);
                    for k in 0..cols {
                        let seg = &xr[k * g..(k + 1) * g];
                        match beta {
                            Some(b) => {
                                let v = crate::tropical::soft_max_unchecked(seg.iter().map(|v| sign * v), *b);
                                out.data[s * cols + k] = sign * v;
                            }
                            None => {
                                let mut best = 0;
                                for j in 1..g {
                                    if sign * seg[j] > sign * seg[best] {
                                        best = j;
                                    }
                                }
                                out.data[s * cols + k] = seg[best];
                                node.selected[s * cols + k] = best;
                            }
                        }
                    }
                }
            }
            Op::Transform { input, kind } => {
                for (o, &z) in out.data.iter_mut().zip(&val(*input).data) {
                    *o = kind.apply(z);
                }
            }
            Op::Concat { a, b } => {
                let (ta, tb) = (val(*a), val(*b));
                for s in 0..batch {
                    let r = out.row_mut(s);
                    r[..ta.cols].copy_from_slice(ta.row(s));
                    r[ta.cols..].copy_from_slice(tb.row(s));
                }
            }
            Op::Mask { input, keep, fill } => {
                let x = val(*input);
                for s in 0..batch {
                    for ((o, &v), &k) in out.row_mut(s).iter_mut().zip(x.row(s)).zip(keep) {
                        *o = if k { v } else { *fill };
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, target } => {
                let (z, t) = (val(*logits), val(*target));
                let mut total = 0.0;
                for s in 0..batch {
                    let zr = z.row(s);
                    let class = t.data[s] as usize;
                    let lse = crate::tropical::soft_max_unchecked(zr.iter().copied(), 1.0);
                    total += lse - zr.get(class).copied().unwrap_or(f64::NAN);
                }
                out.data[0] = total / batch as f64;
            }
            Op::MeanSquaredError { pred, target } => {
                let (p, t) = (val(*pred), val(*target));
                let sse: f64 = p.data.iter().zip(&t.data).map(|(a, b)| (a - b) * (a - b)).sum();
                out.data[0] = sse / p.data.len() as f64;
            }
            Op::Scale { input, factor } => {
                for (o, &v) in out.data.iter_mut().zip(&val(*input).data) {
                    *o = factor * v;
                }
            }
            Op::Add { a, b } => {
                for ((o, &x), &y) in out.data.iter_mut().zip(&val(*a).data).zip(&val(*b).data) {
                    *o = x + y;
                }
            }
        }
        node.value = out;
    }

    /// Accumulates d(loss)/d(node) for every node that requires a gradient.
    /// `loss` must be a 1×1 node evaluated by the last forward pass.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let ln = self.node(loss)?;
        if ln.batched || ln.rows != 1 || ln.cols != 1 {
            return Err(Error::Graph("backward needs a scalar loss node".into()));
        }
        match self.evaluated {
            Some(e) if e >= loss.0 => {}
            _ => return Err(Error::Graph("backward called before forward".into())),
        }
        let batch = self.batch.unwrap_or(0);
        for n in self.nodes.iter_mut().take(loss.0 + 1) {
            if n.requires_grad {
                let (r, c) = n.value.shape();
                n.grad.resize(r, c);
                n.grad.fill_zero();
            }
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad.data[0] = 1.0;
        for i in (0..=loss.0).rev() {
            if self.nodes[i].requires_grad {
                self.backprop_node(i, batch);
            }
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, batch: usize) {
        let (before, rest) = self.nodes.split_at_mut(i);
        let node = &rest[0];
        let g = &node.grad;
        let cols = node.cols;
        match &node.op {
            Op::Input | Op::Parameter => {}
            Op::Linear { input, weight, bias } => {
                let (ii, wi, bi) = (input.0, weight.0, bias.0);
                if before[wi].requires_grad {
                    let x = std::mem::take(&mut before[ii].value);
                    let gw = &mut before[wi].grad;
                    for s in 0..batch {
                        let gr = g.row(s);
                        let xr = x.row(s);
                        for (o, &go) in gr.iter().enumerate() {
                            if go != 0.0 {
                                axpy(go, xr, gw.row_mut(o));
                            }
                        }
                    }
                    before[ii].value = x;
                }
                if before[bi].requires_grad {
                    let gb = &mut before[bi].grad;
                    for s in 0..batch {
                        axpy(1.0, g.row(s), &mut gb.data);
                    }
                }
                if before[ii].requires_grad {
                    let w = std::mem::take(&mut before[wi].value);
                    let gx = &mut before[ii].grad;
                    for s in 0..batch {
                        let gxr = gx.row_mut(s);
                        for (o, &go) in g.row(s).iter().enumerate() {
                            if go != 0.0 {
                                axpy(go, w.row(o), gxr);
                            }
                        }
                    }
                    before[wi].value = w;
                }
            }
            Op::Dilation { input, weight } | Op::Erosion { input, weight } => {
                let (ii, wi) = (input.0, weight.0);
                let (need_x, need_w) = (before[ii].requires_grad, before[wi].requires_grad);
                for s in 0..batch {
                    for u in 0..cols {
                        let go = g.data[s * cols + u];
                        if go == 0.0 {
                            continue;
                        }
                        let k = node.selected[s * cols + u];
                        if need_w {
                            let gw = &mut before[wi].grad;
                            let wc = gw.cols;
                            gw.data[u * wc + k] += go;
                        }
                        if need_x && k > 0 {
                            let gx = &mut before[ii].grad;
                            let xc = gx.cols;
                            gx.data[s * xc + k - 1] += go;
                        }
                    }
                }
            }
            Op::SoftDilation { input, weight, beta } | Op::SoftErosion { input, weight, beta } => {
                let sign = if matches!(node.op, Op::SoftDilation { .. }) {
                    1.0
                } else {
                    -1.0
                };
                let (ii, wi, beta) = (input.0, weight.0, *beta);
                let (need_x, need_w) = (before[ii].requires_grad, before[wi].requires_grad);
                let x = std::mem::take(&mut before[ii].value);
                let w = std::mem::take(&mut before[wi].value);
                let mut probs = vec![0.0; w.cols];
                for s in 0..batch {
                    let xr = x.row(s);
                    for u in 0..cols {
                        let go = g.data[s * cols + u];
                        if go == 0.0 {
                            continue;
                        }
                        let y = node.value.data[s * cols + u];
                        let wr = w.row(u);
                        // d out / d term_k = exp(±β (term_k − out))
                        probs[0] = (sign * beta * (wr[0] - y)).exp();
                        for k in 1..wr.len() {
                            probs[k] = (sign * beta * (wr[k] + xr[k - 1] - y)).exp();
                        }
                        if need_w {
                            axpy(go, &probs, before[wi].grad.row_mut(u));
                        }
                        if need_x {
                            axpy(go, &probs[1..], before[ii].grad.row_mut(s));
                        }
                    }
                }
                before[ii].value = x;
                before[wi].value = w;
            }
            Op::Relu { input } => {
                let ii = input.0;
                let (x, gx) = {
                    let n = &mut before[ii];
                    (&n.value, &mut n.grad)
                };
                for ((gi, &v), &go) in gx.data.iter_mut().zip(&x.data).zip(&g.data) {
                    if v > 0.0 {
                        *gi += go;
                    }
                }
            }
            Op::MaxPool { input, group, beta } | Op::MinPool { input, group, beta } => {
                let sign = if matches!(node.op, Op::MaxPool { .. }) {
                    1.0
                } else {
                    -1.0
                };
                let ii = input.0;
                let gsz = *group;
                let n = &mut before[ii];
                let in_cols = n.cols;
                for s in 0..batch {
                    for k in 0..cols {
                        let go = g.data[s * cols + k];
                        if go == 0.0 {
                            continue;
                        }
                        let base = s * in_cols + k * gsz;
                        match beta {
                            None => {
                                let j = node.selected[s * cols + k];
                                n.grad.data[base + j] += go;
                            }
                            Some(b) => {
                                let y = node.value.data[s * cols + k];
                                for j in 0..gsz {
                                    let p = (sign * b * (n.value.data[base + j] - y)).exp();
                                    n.grad.data[base + j] += go * p;
                                }
                            }
                        }
                    }
                }
            }
            Op::Transform { input, kind } => {
                let n = &mut before[input.0];
                for ((gi, &z), &go) in n.grad.data.iter_mut().zip(&n.value.data).zip(&g.data) {
                    *gi += go * kind.derivative(z);
                }
            }
            Op::Concat { a, b } => {
                let wa = before[a.0].cols;
                for s in 0..batch {
                    let gr = g.row(s);
                    if before[a.0].requires_grad {
                        axpy(1.0, &gr[..wa], before[a.0].grad.row_mut(s));
                    }
                    if before[b.0].requires_grad {
                        axpy(1.0, &gr[wa..], before[b.0].grad.row_mut(s));
                    }
                }
            }
            Op::Mask { input, keep, .. } => {
                let n = &mut before[input.0];
                for s in 0..batch {
                    for ((gi, &go), &k) in n.grad.row_mut(s).iter_mut().zip(g.row(s)).zip(keep) {
                        if k {
                            *gi += go;
                        }
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, target } => {
                let go = g.data[0] / batch as f64;
                let t = std::mem::take(&mut before[target.0].value);
                let n = &mut before[logits.0];
                for s in 0..batch {
                    let class = t.data[s] as usize;
                    let zr = n.value.row(s);
                    let lse = crate::tropical::soft_max_unchecked(zr.iter().copied(), 1.0);
                    let probs: Vec<f64> = zr.iter().map(|z| (z - lse).exp()).collect();
                    let gr = n.grad.row_mut(s);
                    for (j, (gi, p)) in gr.iter_mut().zip(probs).enumerate() {
                        let y = if j == class { 1.0 } else { 0.0 };
                        *gi += go * (p - y);
                    }
                }
                before[target.0].value = t;
            }
            Op::MeanSquaredError { pred, target } => {
                let count = before[pred.0].value.data.len() as f64;
                let go = 2.0 * g.data[0] / count;
                let diff: Vec<f64> = before[pred.0]
                    .value
                    .data
                    .iter()
                    .zip(&before[target.0].value.data)
                    .map(|(p, t)| p - t)
                    .collect();
                if before[pred.0].requires_grad {
                    axpy(go, &diff, &mut before[pred.0].grad.data);
                }
                if before[target.0].requires_grad {
                    axpy(-go, &diff, &mut before[target.0].grad.data);
                }
            }
            Op::Scale { input, factor } => {
                axpy(*factor, &g.data, &mut before[input.0].grad.data);
            }
            Op::Add { a, b } => {
                for id in [a, b] {
                    if before[id.0].requires_grad {
                        axpy(1.0, &g.data, &mut before[id.0].grad.data);
                    }
                }
            }
        }
    }
}

#[inline]
fn hard_dilate(w: &[f64], x: &[f64]) -> (f64, usize) {
    let mut best = w[0];
    let mut idx = 0;
    for (i, (&wi, &xi)) in w[1..].iter().zip(x).enumerate() {
        let v = wi + xi;
        if v > best {
            best = v;
            idx = i + 1;
        }
    }
    (best, idx)
}

#[inline]
fn hard_erode(w: &[f64], x: &[f64]) -> (f64, usize) {
    let mut best = w[0];
    let mut idx = 0;
    for (i, (&wi, &xi)) in w[1..].iter().zip(x).enumerate() {
        let v = wi + xi;
        if v < best {
            best = v;
            idx = i + 1;
        }
    }
    (best, idx)
}

/// Soft dilation (`sign = 1`) or soft erosion (`sign = -1`) over the terms
/// `{w₀, w₁ + x₁, …}`.
#[inline]
fn soft_morph(w: &[f64], x: &[f64], beta: f64, sign: f64) -> f64 {
    let terms = std::iter::once(w[0])
        .chain(w[1..].iter().zip(x).map(|(a, b)| a + b))
        .map(|t| sign * t);
    sign * crate::tropical::soft_max_unchecked(terms, beta)
}

/// Central-difference check of every parameter gradient feeding `loss`.
///
/// Returns `max |analytic − numeric| / max(1, |numeric|)`. The graph's
/// bound inputs are reused; parameters are restored afterwards.
pub fn grad_check(graph: &mut Graph, loss: NodeId, epsilon: f64) -> Result<f64> {
    graph.forward_to(loss)?;
    graph.backward(loss)?;
    let params = graph.parameters();
    let analytic: Vec<Vec<f64>> = params.iter().map(|&p| graph.grad(p).data().to_vec()).collect();
    let mut worst = 0.0f64;
    for (p, a) in params.iter().zip(&analytic) {
        if p.0 > loss.0 {
            continue;
        }
        for (k, &ak) in a.iter().enumerate() {
            let orig = graph.param(*p)?.data()[k];
            graph.param_mut(*p)?.data_mut()[k] = orig + epsilon;
            graph.forward_to(loss)?;
            let up = graph.value(loss).item();
            graph.param_mut(*p)?.data_mut()[k] = orig - epsilon;
            graph.forward_to(loss)?;
            let down = graph.value(loss).item();
            graph.param_mut(*p)?.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let err = (ak - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    graph.forward_to(loss)?;
    Ok(worst)
}
