//! Row-major dense matrices and the handful of kernels the recurrent network
//! needs. Reduction order is fixed so results are bit-reproducible.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix payload does not match shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

/// `out += M[rows] · x`
pub fn gemv_rows_acc(m: &Matrix, rows: Range<usize>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), m.cols);
    debug_assert_eq!(out.len(), rows.len());
    for (o, i) in out.iter_mut().zip(rows) {
        *o += dot(m.row(i), x);
    }
}

/// `out += M · x`
pub fn gemv_acc(m: &Matrix, x: &[f64], out: &mut [f64]) {
    gemv_rows_acc(m, 0..m.rows, x, out)
}

/// `dx += M[rows]ᵀ · dy`
pub fn gemv_t_rows_acc(m: &Matrix, rows: Range<usize>, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(dx.len(), m.cols);
    for (&g, i) in dy.iter().zip(rows) {
        if g != 0.0 {
            axpy(g, m.row(i), dx);
        }
    }
}

/// `dx += Mᵀ · dy`
pub fn gemv_t_acc(m: &Matrix, dy: &[f64], dx: &mut [f64]) {
    gemv_t_rows_acc(m, 0..m.rows, dy, dx)
}

/// `G[offset..] += dy ⊗ x`
pub fn outer_rows_acc(g: &mut Matrix, offset: usize, dy: &[f64], x: &[f64]) {
    debug_assert_eq!(x.len(), g.cols);
    for (i, &d) in dy.iter().enumerate() {
        if d != 0.0 {
            axpy(d, x, g.row_mut(offset + i));
        }
    }
}

/// `G += dy ⊗ x`
pub fn outer_acc(g: &mut Matrix, dy: &[f64], x: &[f64]) {
    outer_rows_acc(g, 0, dy, x)
}

/// `y += a · x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn add_assign(y: &mut [f64], x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log Σ exp(xᵢ)`, stable for large magnitudes. `-∞` for empty input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax into a fresh vector; returns it together with `log Σ exp`.
pub fn softmax(xs: &[f64]) -> (Vec<f64>, f64) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (vec![f64::NAN; xs.len()], max);
    }
    let mut out: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    (out, max + sum.ln())
}
