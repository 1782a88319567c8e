//! Reverse-mode sweep.
//!
//! The vector-Jacobian rules are written once against [`Backend`]. The eager
//! backend evaluates them directly on tensors; the recording backend appends
//! them to the tape, so the resulting gradients are themselves differentiable.
//! Every rule is expressed with ops that have rules of their own, which keeps
//! the recorded graph closed under differentiation.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::DiffError;
use crate::tape::{Op, Tape, Var};
use crate::tensor::{self, Tensor};

trait Backend {
    type V: Clone;

    fn op(&self, id: usize) -> Op;
    fn node_dims(&self, id: usize) -> (usize, usize);
    /// Forward value of node `id`.
    fn value(&mut self, id: usize) -> Self::V;
    /// A non-differentiable constant.
    fn constant(&mut self, t: Tensor) -> Self::V;
    fn sign_of(&mut self, id: usize) -> Self::V;

    fn matmul(&mut self, a: &Self::V, b: &Self::V, ta: bool, tb: bool) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn affine(&mut self, a: &Self::V, scale: f64, shift: f64) -> Self::V;
    fn sum_rows(&mut self, a: &Self::V) -> Self::V;
    fn broadcast_rows(&mut self, a: &Self::V, rows: usize) -> Self::V;
    fn row_sum(&mut self, a: &Self::V) -> Self::V;
    fn broadcast_cols(&mut self, a: &Self::V, cols: usize) -> Self::V;
    fn sum_all(&mut self, a: &Self::V) -> Self::V;
    fn broadcast_scalar(&mut self, a: &Self::V, rows: usize, cols: usize) -> Self::V;
    fn slice_cols(&mut self, a: &Self::V, start: usize, len: usize) -> Self::V;
    fn pad_cols(&mut self, a: &Self::V, start: usize, total: usize) -> Self::V;
    fn sigmoid(&mut self, a: &Self::V, beta: f64) -> Self::V;
    fn safe_recip(&mut self, a: &Self::V) -> Self::V;
}

struct Eager<'a> {
    tape: &'a Tape,
}

impl Backend for Eager<'_> {
    type V = Arc<Tensor>;

    fn op(&self, id: usize) -> Op {
        self.tape.nodes[id].op
    }
    fn node_dims(&self, id: usize) -> (usize, usize) {
        let t = &self.tape.nodes[id].value;
        (t.rows(), t.cols())
    }
    fn value(&mut self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.tape.nodes[id].value)
    }
    fn constant(&mut self, t: Tensor) -> Arc<Tensor> {
        Arc::new(t)
    }
    fn sign_of(&mut self, id: usize) -> Arc<Tensor> {
        Arc::new(tensor::map(&self.tape.nodes[id].value, tensor::sign))
    }
    fn matmul(&mut self, a: &Arc<Tensor>, b: &Arc<Tensor>, ta: bool, tb: bool) -> Arc<Tensor> {
        Arc::new(tensor::matmul(a, b, ta, tb))
    }
    fn add(&mut self, a: &Arc<Tensor>, b: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(tensor::zip_map(a, b, |x, y| x + y))
    }
    fn mul(&mut self, a: &Arc<Tensor>, b: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(tensor::zip_map(a, b, |x, y| x * y))
    }
    fn affine(&mut self, a: &Arc<Tensor>, scale: f64, shift: f64) -> Arc<Tensor> {
        Arc::new(tensor::map(a, |x| scale * x + shift))
    }
    fn sum_rows(&mut self, a: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(tensor::sum_rows(a))
    }
    fn broadcast_rows(&mut self, a: &Arc<Tensor>, rows: usize) -> Arc<Tensor> {
        Arc::new(tensor::broadcast_rows(a, rows))
    }
    fn row_sum(&mut self, a: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(tensor::row_sum(a))
    }
    fn broadcast_cols(&mut self, a: &Arc<Tensor>, cols: usize) -> Arc<Tensor> {
        Arc::new(tensor::broadcast_cols(a, cols))
    }
    fn sum_all(&mut self, a: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(Tensor::scalar(a.sum()))
    }
    fn broadcast_scalar(&mut self, a: &Arc<Tensor>, rows: usize, cols: usize) -> Arc<Tensor> {
        Arc::new(Tensor::full(rows, cols, a.item()))
    }
    fn slice_cols(&mut self, a: &Arc<Tensor>, start: usize, len: usize) -> Arc<Tensor> {
        Arc::new(tensor::slice_cols(a, start, len))
    }
    fn pad_cols(&mut self, a: &Arc<Tensor>, start: usize, total: usize) -> Arc<Tensor> {
        Arc::new(tensor::pad_cols(a, start, total))
    }
    fn sigmoid(&mut self, a: &Arc<Tensor>, beta: f64) -> Arc<Tensor> {
        Arc::new(tensor::map(a, |x| tensor::sigmoid(x, beta)))
    }
    fn safe_recip(&mut self, a: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(tensor::map(a, tensor::safe_recip))
    }
}

struct Recording<'a> {
    tape: &'a mut Tape,
}

impl Recording<'_> {
    fn emit(&mut self, op: Op) -> usize {
        self.tape
            .apply(op)
            .expect("backward ops are shape-consistent by construction")
            .0
    }
}

impl Backend for Recording<'_> {
    type V = usize;

    fn op(&self, id: usize) -> Op {
        self.tape.nodes[id].op
    }
    fn node_dims(&self, id: usize) -> (usize, usize) {
        let t = &self.tape.nodes[id].value;
        (t.rows(), t.cols())
    }
    fn value(&mut self, id: usize) -> usize {
        id
    }
    fn constant(&mut self, t: Tensor) -> usize {
        self.tape.leaf(t).0
    }
    fn sign_of(&mut self, id: usize) -> usize {
        let s = tensor::map(&self.tape.nodes[id].value, tensor::sign);
        self.tape.leaf(s).0
    }
    fn matmul(&mut self, a: &usize, b: &usize, ta: bool, tb: bool) -> usize {
        self.emit(Op::MatMul { a: *a, b: *b, ta, tb })
    }
    fn add(&mut self, a: &usize, b: &usize) -> usize {
        self.emit(Op::Add(*a, *b))
    }
    fn mul(&mut self, a: &usize, b: &usize) -> usize {
        self.emit(Op::Mul(*a, *b))
    }
    fn affine(&mut self, a: &usize, scale: f64, shift: f64) -> usize {
        self.emit(Op::Affine { a: *a, scale, shift })
    }
    fn sum_rows(&mut self, a: &usize) -> usize {
        self.emit(Op::SumRows(*a))
    }
    fn broadcast_rows(&mut self, a: &usize, rows: usize) -> usize {
        self.emit(Op::BroadcastRows { a: *a, rows })
    }
    fn row_sum(&mut self, a: &usize) -> usize {
        self.emit(Op::RowSum(*a))
    }
    fn broadcast_cols(&mut self, a: &usize, cols: usize) -> usize {
        self.emit(Op::BroadcastCols { a: *a, cols })
    }
    fn sum_all(&mut self, a: &usize) -> usize {
        self.emit(Op::SumAll(*a))
    }
    fn broadcast_scalar(&mut self, a: &usize, rows: usize, cols: usize) -> usize {
        self.emit(Op::BroadcastScalar { a: *a, rows, cols })
    }
    fn slice_cols(&mut self, a: &usize, start: usize, len: usize) -> usize {
        self.emit(Op::SliceCols { a: *a, start, len })
    }
    fn pad_cols(&mut self, a: &usize, start: usize, total: usize) -> usize {
        self.emit(Op::PadCols { a: *a, start, total })
    }
    fn sigmoid(&mut self, a: &usize, beta: f64) -> usize {
        self.emit(Op::Sigmoid { a: *a, beta })
    }
    fn safe_recip(&mut self, a: &usize) -> usize {
        self.emit(Op::SafeRecip(*a))
    }
}

/// Gradients flowing into the inputs of node `id`, given its adjoint `g`.
/// Slots for inputs outside `needed` are left as `None`.
fn vjp<B: Backend>(b: &mut B, id: usize, g: &B::V, needed: [bool; 2]) -> [Option<B::V>; 2] {
    let op = b.op(id);
    let mut out: [Option<B::V>; 2] = [None, None];
    match op {
        Op::Leaf => {}
        Op::MatMul { a, b: bb, ta, tb } => {
            if needed[0] {
                let bv = b.value(bb);
                out[0] = Some(if ta {
                    b.matmul(&bv, g, tb, true)
                } else {
                    b.matmul(g, &bv, false, !tb)
                });
            }
            if needed[1] {
                let av = b.value(a);
                out[1] = Some(if tb {
                    b.matmul(g, &av, true, ta)
                } else {
                    b.matmul(&av, g, !ta, false)
                });
            }
        }
        Op::Add(..) => {
            out = [Some(g.clone()), Some(g.clone())];
        }
        Op::Sub(..) => {
            out[0] = Some(g.clone());
            if needed[1] {
                out[1] = Some(b.affine(g, -1.0, 0.0));
            }
        }
        Op::Mul(x, y) => {
            if needed[0] {
                let yv = b.value(y);
                out[0] = Some(b.mul(g, &yv));
            }
            if needed[1] {
                let xv = b.value(x);
                out[1] = Some(b.mul(g, &xv));
            }
        }
        Op::Affine { scale, .. } => out[0] = Some(b.affine(g, scale, 0.0)),
        Op::AddRow { .. } => {
            out[0] = Some(g.clone());
            if needed[1] {
                out[1] = Some(b.sum_rows(g));
            }
        }
        Op::SumRows(a) => {
            let rows = b.node_dims(a).0;
            out[0] = Some(b.broadcast_rows(g, rows));
        }
        Op::BroadcastRows { .. } => out[0] = Some(b.sum_rows(g)),
        Op::RowSum(a) => {
            let cols = b.node_dims(a).1;
            out[0] = Some(b.broadcast_cols(g, cols));
        }
        Op::BroadcastCols { .. } => out[0] = Some(b.row_sum(g)),
        Op::SumAll(a) => {
            let (r, c) = b.node_dims(a);
            out[0] = Some(b.broadcast_scalar(g, r, c));
        }
        Op::BroadcastScalar { .. } => out[0] = Some(b.sum_all(g)),
        Op::ConcatCols(x, y) => {
            let cx = b.node_dims(x).1;
            let cy = b.node_dims(y).1;
            if needed[0] {
                out[0] = Some(b.slice_cols(g, 0, cx));
            }
            if needed[1] {
                out[1] = Some(b.slice_cols(g, cx, cy));
            }
        }
        Op::SliceCols { a, start, .. } => {
            let total = b.node_dims(a).1;
            out[0] = Some(b.pad_cols(g, start, total));
        }
        Op::PadCols { a, start, .. } => {
            let len = b.node_dims(a).1;
            out[0] = Some(b.slice_cols(g, start, len));
        }
        Op::Softplus { a, beta } => {
            let av = b.value(a);
            let s = b.sigmoid(&av, beta);
            out[0] = Some(b.mul(g, &s));
        }
        Op::Sigmoid { beta, .. } => {
            let s = b.value(id);
            let scaled = b.affine(&s, beta, 0.0);
            let comp = b.affine(&s, -1.0, 1.0);
            let d = b.mul(&scaled, &comp);
            out[0] = Some(b.mul(g, &d));
        }
        Op::Abs(a) => {
            let s = b.sign_of(a);
            out[0] = Some(b.mul(g, &s));
        }
        Op::RowNorm(a) => {
            let cols = b.node_dims(a).1;
            let n = b.value(id);
            let r = b.safe_recip(&n);
            let gr = b.mul(g, &r);
            let wide = b.broadcast_cols(&gr, cols);
            let av = b.value(a);
            out[0] = Some(b.mul(&wide, &av));
        }
        Op::SafeRecip(_) => {
            let r = b.value(id);
            let r2 = b.mul(&r, &r);
            let gr2 = b.mul(g, &r2);
            out[0] = Some(b.affine(&gr2, -1.0, 0.0));
        }
    }
    for (slot, need) in out.iter_mut().zip(needed) {
        if !need {
            *slot = None;
        }
    }
    out
}

fn sweep<B: Backend>(b: &mut B, output: usize, wrt: &[usize]) -> HashMap<usize, B::V> {
    let n = output + 1;
    let lo = wrt.iter().copied().min().unwrap_or(n).min(n);
    let mut depends = vec![false; n];
    let mut is_target = vec![false; n];
    for &w in wrt {
        if w < n {
            depends[w] = true;
            is_target[w] = true;
        }
    }
    for i in lo..n {
        if !depends[i] {
            let (ins, k) = b.op(i).inputs();
            depends[i] = ins[..k].iter().any(|&j| depends[j]);
        }
    }

    let mut results = HashMap::new();
    if lo >= n || !depends[output] {
        return results;
    }
    let mut adj: Vec<Option<B::V>> = vec![None; n];
    adj[output] = Some(b.constant(Tensor::scalar(1.0)));
    for i in (lo..n).rev() {
        if !depends[i] {
            continue;
        }
        let Some(g) = adj[i].take() else { continue };
        if is_target[i] {
            results.insert(i, g.clone());
        }
        let (ins, k) = b.op(i).inputs();
        if k == 0 {
            continue;
        }
        let needed = [depends[ins[0]], k > 1 && depends[ins[1]]];
        let grads = vjp(b, i, &g, needed);
        for (slot, gi) in grads.into_iter().enumerate() {
            let Some(gi) = gi else { continue };
            let j = ins[slot];
            adj[j] = Some(match adj[j].take() {
                None => gi,
                Some(prev) => b.add(&prev, &gi),
            });
        }
    }
    results
}

impl Tape {
    fn check_grad_args(&self, output: Var, wrt: &[Var]) -> Result<(), DiffError> {
        let out = self
            .nodes
            .get(output.0)
            .ok_or(DiffError::UnknownNode(output.0))?;
        if out.value.shape() != [1, 1] {
            return Err(DiffError::NonScalarOutput(out.value.shape().to_vec()));
        }
        if let Some(w) = wrt.iter().find(|w| w.0 >= self.nodes.len()) {
            return Err(DiffError::UnknownNode(w.0));
        }
        Ok(())
    }

    /// Gradients of the scalar `output` with respect to each node in `wrt`.
    /// Nodes with no path to `output` get zeros.
    pub fn grad(&self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor>, DiffError> {
        self.check_grad_args(output, wrt)?;
        let ids: Vec<usize> = wrt.iter().map(|v| v.0).collect();
        let mut res = sweep(&mut Eager { tape: self }, output.0, &ids);
        Ok(wrt
            .iter()
            .map(|w| match res.remove(&w.0) {
                Some(t) => Arc::try_unwrap(t).unwrap_or_else(|shared| (*shared).clone()),
                None => {
                    let (r, c) = self.shape(*w);
                    Tensor::zeros(r, c)
                }
            })
            .collect())
    }

    /// Like [`Tape::grad`], but the backward pass is appended to this tape and
    /// the gradients come back as nodes, so they can be differentiated again.
    pub fn grad_recorded(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>, DiffError> {
        self.check_grad_args(output, wrt)?;
        let ids: Vec<usize> = wrt.iter().map(|v| v.0).collect();
        let res = sweep(&mut Recording { tape: self }, output.0, &ids);
        let mut out = Vec::with_capacity(wrt.len());
        for w in wrt {
            out.push(match res.get(&w.0) {
                Some(&id) => Var(id),
                None => {
                    let (r, c) = self.shape(*w);
                    self.leaf(Tensor::zeros(r, c))
                }
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.grad(y, &[x]).unwrap();
        assert_eq!(g[0].item(), 6.0);
    }

    #[test]
    fn norm_gradient_is_unit_vector() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[0.0, 0.0, 2.0]));
        let n = t.row_norm(x).unwrap();
        let s = t.sum(n).unwrap();
        let g = t.grad(s, &[x]).unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn norm_gradient_at_origin_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[0.0, 0.0, 0.0]));
        let n = t.row_norm(x).unwrap();
        let s = t.sum(n).unwrap();
        let g = t.grad(s, &[x]).unwrap();
        assert!(g[0].data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mixed_second_derivative() {
        // d/dw (d/dx (w x^2)) = 2x = 4 at x = 2.
        let mut t = Tape::new();
        let w = t.leaf(Tensor::scalar(5.0));
        let x = t.leaf(Tensor::scalar(2.0));
        let xx = t.mul(x, x).unwrap();
        let f = t.mul(w, xx).unwrap();
        let dfdx = t.grad_recorded(f, &[x]).unwrap()[0];
        assert_eq!(t.value(dfdx).item(), 20.0);
        let g = t.grad(dfdx, &[w]).unwrap();
        assert_eq!(g[0].item(), 4.0);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::ones(2, 1));
        assert!(matches!(
            t.grad(x, &[x]),
            Err(DiffError::NonScalarOutput(_))
        ));
    }

    #[test]
    fn absent_wrt_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.0));
        assert!(matches!(t.grad(x, &[Var(3)]), Err(DiffError::UnknownNode(3))));
    }

    #[test]
    fn unconnected_wrt_gets_zeros() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.0));
        let y = t.leaf(Tensor::ones(2, 2));
        let s = t.mul(x, x).unwrap();
        let g = t.grad(s, &[y]).unwrap();
        assert_eq!(g[0], Tensor::zeros(2, 2));
    }

    #[test]
    fn recorded_and_eager_agree() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 3, vec![0.1, -0.4, 0.3, 0.9, 0.2, -0.7]));
        let w = t.leaf(Tensor::matrix(3, 2, vec![0.5, -1.0, 0.25, 0.75, -0.3, 0.2]));
        let h = t.matmul(x, w).unwrap();
        let a = t.softplus(h, 100.0).unwrap();
        let n = t.row_norm(a).unwrap();
        let s = t.sum(n).unwrap();
        let eager = t.grad(s, &[x, w]).unwrap();
        let rec = t.grad_recorded(s, &[x, w]).unwrap();
        assert_eq!(&eager[0], t.value(rec[0]));
        assert_eq!(&eager[1], t.value(rec[1]));
    }
}
