//! Reverse-mode gradient tape.
//!
//! A [`Tape`] records matrix-valued operations in execution order. Nodes are
//! appended only after their inputs, so the node list is already a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//!
//! The tape is meant to be rebuilt for every mini-batch.

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::model::activation::{selu, selu_derivative, sigmoid, softplus};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// a · bᵀ
    MatMulNt(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Selu(NodeId),
    Softplus(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Column(NodeId, usize),
    RowL2Normalize(NodeId),
    /// log Σ_j mask_ij · exp(x_ij), one value per row.
    RowLogSumExp(NodeId, Option<Matrix>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

/// Single-threaded operation recorder.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// ∂loss/∂node, or `None` when the node does not influence the loss
    /// through any tracked path.
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.adjoints.get(id.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`], but materializes zeros for untouched nodes.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Matrix {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.adjoints.get_mut(id.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Matrix, op: Op, tracked: bool) -> NodeId {
        self.nodes.push(Node { value, op, tracked });
        NodeId(self.nodes.len() - 1)
    }

    fn tracked(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].tracked)
    }

    /// Untracked input (data, masks, targets).
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Tracked input whose gradient is wanted.
    pub fn parameter(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), t))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(v, Op::MatMulNt(a, b), t))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = self.value(x).add_row_broadcast(self.value(bias))?;
        let t = self.tracked(&[x, bias]);
        Ok(self.push(v, Op::AddBias(x, bias), t))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), t))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), t))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y)?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(v, Op::Div(a, b), t))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).scale(s);
        let t = self.tracked(&[a]);
        self.push(v, Op::Scale(a, s), t)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x + s);
        let t = self.tracked(&[a]);
        self.push(v, Op::AddScalar(a), t)
    }

    pub fn selu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(selu);
        let t = self.tracked(&[a]);
        self.push(v, Op::Selu(a), t)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(softplus);
        let t = self.tracked(&[a]);
        self.push(v, Op::Softplus(a), t)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        let t = self.tracked(&[a]);
        self.push(v, Op::Log(a), t)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        let t = self.tracked(&[a]);
        self.push(v, Op::Exp(a), t)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        let t = self.tracked(&[a]);
        self.push(v, Op::Square(a), t)
    }

    /// Sum of all entries as a 1 x 1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        let t = self.tracked(&[a]);
        self.push(v, Op::Sum(a), t)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Extracts column `c` as an n x 1 node.
    pub fn column(&mut self, a: NodeId, c: usize) -> Result<NodeId> {
        let src = self.value(a);
        if c >= src.cols() {
            return Err(Error::shape(
                "column",
                format!("column {c} of {:?}", src.shape()),
            ));
        }
        let v = Matrix::from_raw(src.rows(), 1, src.column_values(c));
        let t = self.tracked(&[a]);
        Ok(self.push(v, Op::Column(a, c), t))
    }

    /// Scales every row to unit Euclidean length.
    pub fn row_l2_normalize(&mut self, a: NodeId) -> NodeId {
        let v = row_l2_normalize(self.value(a));
        let t = self.tracked(&[a]);
        self.push(v, Op::RowL2Normalize(a), t)
    }

    /// Row-wise log-sum-exp, optionally restricted to entries where the 0/1
    /// `mask` is nonzero. Rows with an empty mask produce 0.
    pub fn row_logsumexp(&mut self, a: NodeId, mask: Option<Matrix>) -> Result<NodeId> {
        let x = self.value(a);
        if let Some(m) = &mask {
            if m.shape() != x.shape() {
                return Err(Error::shape(
                    "row_logsumexp",
                    format!("mask {:?} for {:?}", m.shape(), x.shape()),
                ));
            }
        }
        let v = row_logsumexp(x, mask.as_ref());
        let t = self.tracked(&[a]);
        Ok(self.push(v, Op::RowLogSumExp(a, mask), t))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss node, got {shape:?}"
            )));
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(node, &g, &mut adj)?;
            adj[idx] = Some(g);
        }
        // Only tracked nodes carry meaningful adjoints.
        for (a, node) in adj.iter_mut().zip(&self.nodes) {
            if !node.tracked {
                *a = None;
            }
        }
        Ok(Gradients { adjoints: adj })
    }

    fn propagate(&self, node: &Node, g: &Matrix, adj: &mut [Option<Matrix>]) -> Result<()> {
        let val = |id: NodeId| &self.nodes[id.0].value;
        let mut accumulate = |id: NodeId, contribution: Matrix| {
            if !self.nodes[id.0].tracked {
                return;
            }
            match &mut adj[id.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        let tracked = |id: NodeId| self.nodes[id.0].tracked;

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if tracked(a) {
                    accumulate(a, g.matmul_nt(val(b))?);
                }
                if tracked(b) {
                    accumulate(b, val(a).matmul_tn(g)?);
                }
            }
            &Op::MatMulNt(a, b) => {
                // C = A Bᵀ: dA = G B, dB = Gᵀ A
                if tracked(a) {
                    accumulate(a, g.matmul(val(b))?);
                }
                if tracked(b) {
                    accumulate(b, g.matmul_tn(val(a))?);
                }
            }
            &Op::AddBias(x, b) => {
                if tracked(b) {
                    accumulate(b, g.sum_rows());
                }
                accumulate(x, g.clone());
            }
            &Op::Add(a, b) => {
                accumulate(a, g.clone());
                accumulate(b, g.clone());
            }
            &Op::Sub(a, b) => {
                accumulate(a, g.clone());
                if tracked(b) {
                    accumulate(b, g.scale(-1.0));
                }
            }
            &Op::Mul(a, b) => {
                if tracked(a) {
                    accumulate(a, g.hadamard(val(b))?);
                }
                if tracked(b) {
                    accumulate(b, g.hadamard(val(a))?);
                }
            }
            &Op::Div(a, b) => {
                if tracked(a) {
                    accumulate(a, g.zip_map(val(b), |gi, bi| gi / bi)?);
                }
                if tracked(b) {
                    // d(a/b)/db = -(a/b)/b
                    let q = node.value.zip_map(val(b), |q, bi| -q / bi)?;
                    accumulate(b, g.hadamard(&q)?);
                }
            }
            &Op::Scale(a, s) => accumulate(a, g.scale(s)),
            &Op::AddScalar(a) => accumulate(a, g.clone()),
            &Op::Selu(a) => accumulate(a, g.zip_map(val(a), |gi, x| gi * selu_derivative(x))?),
            &Op::Softplus(a) => accumulate(a, g.zip_map(val(a), |gi, x| gi * sigmoid(x))?),
            &Op::Log(a) => accumulate(a, g.zip_map(val(a), |gi, x| gi / x)?),
            &Op::Exp(a) => accumulate(a, g.hadamard(&node.value)?),
            &Op::Square(a) => accumulate(a, g.zip_map(val(a), |gi, x| 2.0 * gi * x)?),
            &Op::Sum(a) => {
                let (r, c) = val(a).shape();
                accumulate(a, Matrix::filled(r, c, g.get(0, 0)));
            }
            &Op::Column(a, col) => {
                let (r, c) = val(a).shape();
                let mut out = Matrix::zeros(r, c);
                for i in 0..r {
                    out.set(i, col, g.get(i, 0));
                }
                accumulate(a, out);
            }
            &Op::RowL2Normalize(a) => {
                let x = val(a);
                let y = &node.value;
                let (r, c) = x.shape();
                let mut out = Matrix::zeros(r, c);
                for i in 0..r {
                    let norm = l2(x.row(i)).max(NORM_FLOOR);
                    let yg: f64 = y.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        out.set(i, j, (g.get(i, j) - y.get(i, j) * yg) / norm);
                    }
                }
                accumulate(a, out);
            }
            Op::RowLogSumExp(a, mask) => {
                let a = *a;
                let x = val(a);
                let (r, c) = x.shape();
                let mut out = Matrix::zeros(r, c);
                for i in 0..r {
                    let lse = node.value.get(i, 0);
                    let gi = g.get(i, 0);
                    for j in 0..c {
                        let m = mask.as_ref().map_or(1.0, |m| m.get(i, j));
                        if m != 0.0 {
                            out.set(i, j, gi * m * (x.get(i, j) - lse).exp());
                        }
                    }
                }
                accumulate(a, out);
            }
        }
        Ok(())
    }
}

const NORM_FLOOR: f64 = 1e-12;

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn row_l2_normalize(x: &Matrix) -> Matrix {
    let (r, c) = x.shape();
    let mut out = Matrix::zeros(r, c);
    for i in 0..r {
        let norm = l2(x.row(i)).max(NORM_FLOOR);
        for j in 0..c {
            out.set(i, j, x.get(i, j) / norm);
        }
    }
    out
}

pub(crate) fn row_logsumexp(x: &Matrix, mask: Option<&Matrix>) -> Matrix {
    let (r, c) = x.shape();
    let mut out = Vec::with_capacity(r);
    for i in 0..r {
        let keep = |j: usize| mask.is_none_or(|m| m.get(i, j) != 0.0);
        let max = (0..c)
            .filter(|&j| keep(j))
            .map(|j| x.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            out.push(0.0);
            continue;
        }
        let s: f64 = (0..c)
            .filter(|&j| keep(j))
            .map(|j| (x.get(i, j) - max).exp())
            .sum();
        out.push(max + s.ln());
    }
    Matrix::from_raw(r, 1, out)
}
