//! Recorded computation graph.
//!
//! Every op appends a node holding its value. Inputs always point at earlier
//! nodes, so the node vector is already a topological order. All ops work on
//! rank-2 tensors; scalars are `1x1`.

use std::sync::Arc;

use crate::error::DiffError;
use crate::tensor::{self, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Op {
    Leaf,
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine { a: usize, scale: f64, shift: f64 },
    AddRow { a: usize, row: usize },
    SumRows(usize),
    BroadcastRows { a: usize, rows: usize },
    RowSum(usize),
    BroadcastCols { a: usize, cols: usize },
    SumAll(usize),
    BroadcastScalar { a: usize, rows: usize, cols: usize },
    ConcatCols(usize, usize),
    SliceCols { a: usize, start: usize, len: usize },
    PadCols { a: usize, start: usize, total: usize },
    Softplus { a: usize, beta: f64 },
    Sigmoid { a: usize, beta: f64 },
    Abs(usize),
    RowNorm(usize),
    SafeRecip(usize),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::AddRow { .. } => "add_row",
            Op::SumRows(_) => "sum_rows",
            Op::BroadcastRows { .. } => "broadcast_rows",
            Op::RowSum(_) => "row_sum",
            Op::BroadcastCols { .. } => "broadcast_cols",
            Op::SumAll(_) => "sum_all",
            Op::BroadcastScalar { .. } => "broadcast_scalar",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::Softplus { .. } => "softplus",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Abs(_) => "abs",
            Op::RowNorm(_) => "row_norm",
            Op::SafeRecip(_) => "safe_recip",
        }
    }

    /// Input node ids, in argument order.
    pub(crate) fn inputs(&self) -> ([usize; 2], usize) {
        match *self {
            Op::Leaf => ([0, 0], 0),
            Op::MatMul { a, b, .. }
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow { a, row: b }
            | Op::ConcatCols(a, b) => ([a, b], 2),
            Op::Affine { a, .. }
            | Op::SumRows(a)
            | Op::BroadcastRows { a, .. }
            | Op::RowSum(a)
            | Op::BroadcastCols { a, .. }
            | Op::SumAll(a)
            | Op::BroadcastScalar { a, .. }
            | Op::SliceCols { a, .. }
            | Op::PadCols { a, .. }
            | Op::Softplus { a, .. }
            | Op::Sigmoid { a, .. }
            | Op::Abs(a)
            | Op::RowNorm(a)
            | Op::SafeRecip(a) => ([a, 0], 1),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Arc<Tensor>,
}

/// Append-only record of one forward evaluation (and, optionally, of the
/// backward passes run over it).
#[derive(Clone, Debug, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Adds an input, parameter, or constant. Which of these it is only
    /// matters to the `wrt` set passed to `grad`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_value(Op::Leaf, Arc::new(value))
    }

    /// Like [`Tape::leaf`] but shares the buffer, so many tapes can bind the
    /// same parameters without copying them.
    pub fn leaf_shared(&mut self, value: Arc<Tensor>) -> Var {
        self.push_value(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.apply(Op::MatMul {
            a: a.0,
            b: b.0,
            ta: false,
            tb: false,
        })
    }

    /// `op(a) * op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var, DiffError> {
        self.apply(Op::MatMul { a: a.0, b: b.0, ta, tb })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.apply(Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.apply(Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.apply(Op::Mul(a.0, b.0))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var, DiffError> {
        self.apply(Op::Affine { a: a.0, scale, shift })
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Result<Var, DiffError> {
        self.affine(a, scale, 0.0)
    }

    /// Adds a `1 x n` row to every row of an `m x n` tensor.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, DiffError> {
        self.apply(Op::AddRow { a: a.0, row: row.0 })
    }

    /// Column sums, `m x n -> 1 x n`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, DiffError> {
        self.apply(Op::SumRows(a.0))
    }

    pub fn broadcast_rows(&mut self, row: Var, rows: usize) -> Result<Var, DiffError> {
        self.apply(Op::BroadcastRows { a: row.0, rows })
    }

    /// Per-row sums, `m x n -> m x 1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, DiffError> {
        self.apply(Op::RowSum(a.0))
    }

    pub fn broadcast_cols(&mut self, col: Var, cols: usize) -> Result<Var, DiffError> {
        self.apply(Op::BroadcastCols { a: col.0, cols })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        self.apply(Op::SumAll(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, DiffError> {
        let n = self.nodes[a.0].value.len();
        let s = self.sum(a)?;
        self.scale(s, if n == 0 { 0.0 } else { 1.0 / n as f64 })
    }

    pub fn broadcast_scalar(&mut self, s: Var, rows: usize, cols: usize) -> Result<Var, DiffError> {
        self.apply(Op::BroadcastScalar { a: s.0, rows, cols })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.apply(Op::ConcatCols(a.0, b.0))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, DiffError> {
        self.apply(Op::SliceCols { a: a.0, start, len })
    }

    /// Places `a` at column `start` of a zero tensor with `total` columns.
    pub fn pad_cols(&mut self, a: Var, start: usize, total: usize) -> Result<Var, DiffError> {
        self.apply(Op::PadCols { a: a.0, start, total })
    }

    pub fn softplus(&mut self, a: Var, beta: f64) -> Result<Var, DiffError> {
        self.apply(Op::Softplus { a: a.0, beta })
    }

    pub fn sigmoid(&mut self, a: Var, beta: f64) -> Result<Var, DiffError> {
        self.apply(Op::Sigmoid { a: a.0, beta })
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, DiffError> {
        self.apply(Op::Abs(a.0))
    }

    /// Euclidean norm of each row, `m x n -> m x 1`. The gradient at a zero
    /// row is taken to be zero.
    pub fn row_norm(&mut self, a: Var) -> Result<Var, DiffError> {
        self.apply(Op::RowNorm(a.0))
    }

    /// `1/x`, with `1/0` defined as 0.
    pub fn safe_recip(&mut self, a: Var) -> Result<Var, DiffError> {
        self.apply(Op::SafeRecip(a.0))
    }

    pub(crate) fn push_value(&mut self, op: Op, value: Arc<Tensor>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, id: usize) -> Result<&Tensor, DiffError> {
        self.nodes
            .get(id)
            .map(|n| n.value.as_ref())
            .ok_or(DiffError::UnknownNode(id))
    }

    fn dims(&self, op: &Op, id: usize) -> Result<(usize, usize), DiffError> {
        let t = self.check(id)?;
        t.dims2().ok_or_else(|| DiffError::Shape {
            op: op.name(),
            shapes: vec![t.shape().to_vec()],
        })
    }

    /// Validates shapes, evaluates, and records `op`.
    pub(crate) fn apply(&mut self, op: Op) -> Result<Var, DiffError> {
        let value = self.eval(&op)?;
        Ok(self.push_value(op, Arc::new(value)))
    }

    fn eval(&self, op: &Op) -> Result<Tensor, DiffError> {
        let (ins, n) = op.inputs();
        let mut d = [(0, 0); 2];
        for i in 0..n {
            d[i] = self.dims(op, ins[i])?;
        }
        let bad = || DiffError::Shape {
            op: op.name(),
            shapes: ins[..n]
                .iter()
                .map(|&i| self.nodes[i].value.shape().to_vec())
                .collect(),
        };
        let v = |i: usize| self.nodes[ins[i]].value.as_ref();
        let out = match *op {
            Op::Leaf => unreachable!("leaves are pushed directly"),
            Op::MatMul { ta, tb, .. } => {
                let k1 = if ta { d[0].0 } else { d[0].1 };
                let k2 = if tb { d[1].1 } else { d[1].0 };
                if k1 != k2 {
                    return Err(bad());
                }
                tensor::matmul(v(0), v(1), ta, tb)
            }
            Op::Add(..) | Op::Sub(..) | Op::Mul(..) => {
                if d[0] != d[1] {
                    return Err(bad());
                }
                match op {
                    Op::Add(..) => tensor::zip_map(v(0), v(1), |a, b| a + b),
                    Op::Sub(..) => tensor::zip_map(v(0), v(1), |a, b| a - b),
                    _ => tensor::zip_map(v(0), v(1), |a, b| a * b),
                }
            }
            Op::Affine { scale, shift, .. } => tensor::map(v(0), |x| scale * x + shift),
            Op::AddRow { .. } => {
                if d[1].0 != 1 || d[1].1 != d[0].1 {
                    return Err(bad());
                }
                tensor::add_row(v(0), v(1))
            }
            Op::SumRows(_) => tensor::sum_rows(v(0)),
            Op::BroadcastRows { rows, .. } => {
                if d[0].0 != 1 {
                    return Err(bad());
                }
                tensor::broadcast_rows(v(0), rows)
            }
            Op::RowSum(_) => tensor::row_sum(v(0)),
            Op::BroadcastCols { cols, .. } => {
                if d[0].1 != 1 {
                    return Err(bad());
                }
                tensor::broadcast_cols(v(0), cols)
            }
            Op::SumAll(_) => Tensor::scalar(v(0).sum()),
            Op::BroadcastScalar { rows, cols, .. } => {
                if d[0] != (1, 1) {
                    return Err(bad());
                }
                Tensor::full(rows, cols, v(0).item())
            }
            Op::ConcatCols(..) => {
                if d[0].0 != d[1].0 {
                    return Err(bad());
                }
                tensor::concat_cols(v(0), v(1))
            }
            Op::SliceCols { start, len, .. } => {
                if start + len > d[0].1 {
                    return Err(bad());
                }
                tensor::slice_cols(v(0), start, len)
            }
            Op::PadCols { start, total, .. } => {
                if start + d[0].1 > total {
                    return Err(bad());
                }
                tensor::pad_cols(v(0), start, total)
            }
            Op::Softplus { beta, .. } => tensor::map(v(0), |x| tensor::softplus(x, beta)),
            Op::Sigmoid { beta, .. } => tensor::map(v(0), |x| tensor::sigmoid(x, beta)),
            Op::Abs(_) => tensor::map(v(0), f64::abs),
            Op::RowNorm(_) => tensor::row_norm(v(0)),
            Op::SafeRecip(_) => tensor::map(v(0), tensor::safe_recip),
        };
        Ok(out)
    }
}
