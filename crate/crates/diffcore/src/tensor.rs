//! Dense row-major `f64` arrays and the numeric kernels behind every tape op.
//!
//! Kernels assume their inputs were already shape-checked by the tape; they
//! only `debug_assert!` the contract.

use crate::error::DiffError;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, DiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(DiffError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Rank-2 tensor from row-major data. Panics if the length is wrong.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 1.0)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(1, 1, value)
    }

    /// Single-row tensor.
    pub fn row(values: &[f64]) -> Self {
        Self::matrix(1, values.len(), values.to_vec())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn dims2(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// Value of a 1x1 tensor (or the first element of anything else).
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }
}

pub(crate) fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape, b.shape);
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

pub(crate) fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| f(x)).collect(),
    }
}

/// `op(a) * op(b)` where `op` optionally transposes.
pub(crate) fn matmul(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    debug_assert_eq!(k, k2);
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return Tensor::matrix(m, n, out);
    }
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    // SAFETY: strides describe exactly the row-major buffers above, and the
    // output buffer has m*n elements with row stride n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor::matrix(m, n, out)
}

pub(crate) fn add_row(a: &Tensor, row: &Tensor) -> Tensor {
    let c = a.cols();
    let mut out = a.data.clone();
    for chunk in out.chunks_mut(c) {
        for (o, r) in chunk.iter_mut().zip(&row.data) {
            *o += r;
        }
    }
    Tensor::matrix(a.rows(), c, out)
}

pub(crate) fn sum_rows(a: &Tensor) -> Tensor {
    let c = a.cols();
    let mut out = vec![0.0; c];
    for chunk in a.data.chunks(c) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    Tensor::matrix(1, c, out)
}

pub(crate) fn broadcast_rows(row: &Tensor, rows: usize) -> Tensor {
    let c = row.cols();
    let mut out = Vec::with_capacity(rows * c);
    for _ in 0..rows {
        out.extend_from_slice(&row.data);
    }
    Tensor::matrix(rows, c, out)
}

pub(crate) fn row_sum(a: &Tensor) -> Tensor {
    let c = a.cols();
    let out = a.data.chunks(c.max(1)).map(|r| r.iter().sum()).collect::<Vec<f64>>();
    Tensor::matrix(a.rows(), 1, if c == 0 { vec![0.0; a.rows()] } else { out })
}

pub(crate) fn broadcast_cols(col: &Tensor, cols: usize) -> Tensor {
    let mut out = Vec::with_capacity(col.rows() * cols);
    for &v in &col.data {
        out.extend(std::iter::repeat_n(v, cols));
    }
    Tensor::matrix(col.rows(), cols, out)
}

pub(crate) fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let (r, ca, cb) = (a.rows(), a.cols(), b.cols());
    let mut out = Vec::with_capacity(r * (ca + cb));
    for i in 0..r {
        out.extend_from_slice(&a.data[i * ca..(i + 1) * ca]);
        out.extend_from_slice(&b.data[i * cb..(i + 1) * cb]);
    }
    Tensor::matrix(r, ca + cb, out)
}

pub(crate) fn slice_cols(a: &Tensor, start: usize, len: usize) -> Tensor {
    let (r, c) = (a.rows(), a.cols());
    let mut out = Vec::with_capacity(r * len);
    for i in 0..r {
        out.extend_from_slice(&a.data[i * c + start..i * c + start + len]);
    }
    Tensor::matrix(r, len, out)
}

pub(crate) fn pad_cols(a: &Tensor, start: usize, total: usize) -> Tensor {
    let (r, c) = (a.rows(), a.cols());
    let mut out = vec![0.0; r * total];
    for i in 0..r {
        out[i * total + start..i * total + start + c].copy_from_slice(&a.data[i * c..(i + 1) * c]);
    }
    Tensor::matrix(r, total, out)
}

/// `ln(1 + exp(beta * x)) / beta`, evaluated without overflow.
pub fn softplus(x: f64, beta: f64) -> f64 {
    let z = beta * x;
    // Past |z| = 37, exp(-|z|) is below half an ulp of 1, so the general
    // formula reduces to these without rounding differences.
    if z > SATURATE {
        z / beta
    } else if z < -SATURATE {
        z.exp() / beta
    } else {
        (z.max(0.0) + (-z.abs()).exp().ln_1p()) / beta
    }
}

const SATURATE: f64 = 37.0;

/// Logistic function of `beta * x`.
pub fn sigmoid(x: f64, beta: f64) -> f64 {
    let z = beta * x;
    if z > SATURATE {
        1.0
    } else if z < -SATURATE {
        z.exp()
    } else if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn row_norm(a: &Tensor) -> Tensor {
    let c = a.cols();
    let out = a
        .data
        .chunks(c)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Tensor::matrix(a.rows(), 1, out)
}

pub(crate) fn safe_recip(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        1.0 / x
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_of_ones() {
        let a = Tensor::ones(2, 3);
        let b = Tensor::ones(3, 1);
        assert_eq!(matmul(&a, &b, false, false).data(), &[3.0, 3.0]);
    }

    #[test]
    fn matmul_transposes_match_naive() {
        let a = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        let b = Tensor::matrix(2, 3, vec![0.5, -1., 2., 1., 0., -2.]);
        // a * b^T
        let c = matmul(&a, &b, false, true);
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[4.5, -5., 9., -8.]);
        // a^T * b
        let d = matmul(&a, &b, true, false);
        assert_eq!(d.shape(), &[3, 3]);
        assert_eq!(d.get(0, 0), 0.5 + 4.0);
        assert_eq!(d.get(2, 1), -3.0);
    }

    #[test]
    fn saturated_branches_match_general_formulas() {
        for i in 0..8000 {
            let x = -0.8 + 0.0002 * i as f64;
            let z = 100.0 * x;
            let sp = (z.max(0.0) + (-z.abs()).exp().ln_1p()) / 100.0;
            let sg = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
            assert_eq!(softplus(x, 100.0).to_bits(), sp.to_bits(), "softplus at {x}");
            assert_eq!(sigmoid(x, 100.0).to_bits(), sg.to_bits(), "sigmoid at {x}");
        }
    }

    #[test]
    fn softplus_at_zero() {
        let v = softplus(0.0, 100.0);
        assert!((v - 2f64.ln() / 100.0).abs() < 1e-15);
        assert!((v - 0.006931).abs() < 1e-6);
    }

    #[test]
    fn softplus_is_close_to_relu() {
        let bound = 2f64.ln() / 100.0;
        for i in -2000..=2000 {
            let x = i as f64 * 1e-3;
            assert!((softplus(x, 100.0) - x.max(0.0)).abs() <= bound + 1e-15);
        }
        assert_eq!(softplus(1e6, 100.0), 1e6);
        assert_eq!(softplus(-1e6, 100.0), 0.0);
    }

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![2, 2, 2], vec![0.0; 8]).is_ok());
    }
}
