//! Row-major matrices and the few kernels the networks need.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T = f32> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}x{cols} tensor", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x = *x * s);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Columns `start..start + width` of every row.
    pub fn slice_cols(&self, start: usize, width: usize) -> Self {
        let mut out = Self::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..start + width]);
        }
        out
    }

    /// Rows selected by `idx`, in that order.
    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(self.row(i));
        }
        out
    }

    /// Horizontal concatenation; all parts must have the same row count.
    pub fn hcat(parts: &[&Self]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(Error::Shape("hcat of tensors with different row counts".into()));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            let mut at = 0;
            let dst = out.row_mut(i);
            for p in parts {
                dst[at..at + p.cols].copy_from_slice(p.row(i));
                at += p.cols;
            }
        }
        Ok(out)
    }

    /// Reinterprets consecutive groups of `k` rows as one row.
    pub fn pack_rows(&self, k: usize) -> Result<Self> {
        if k == 0 || self.rows % k != 0 {
            return Err(Error::Shape(format!("{} rows cannot be packed by {k}", self.rows)));
        }
        Ok(Self { rows: self.rows / k, cols: self.cols * k, data: self.data.clone() })
    }

    pub fn unpack_rows(&self, k: usize) -> Result<Self> {
        if k == 0 || self.cols % k != 0 {
            return Err(Error::Shape(format!("{} columns cannot be unpacked by {k}", self.cols)));
        }
        Ok(Self { rows: self.rows * k, cols: self.cols / k, data: self.data.clone() })
    }
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// Dot product with a fixed eight-way accumulation order.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    for k in chunks * 8..n {
        acc[k - chunks * 8] = acc[k - chunks * 8] + a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// `x · w (+ b)` for `x: [n, in]`, `w: [in, out]`, `b: [1, out]`.
pub fn matmul<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    debug_assert_eq!(x.cols, w.rows);
    let mut out = Tensor::zeros(x.rows, w.cols);
    for i in 0..x.rows {
        let dst = &mut out.data[i * w.cols..(i + 1) * w.cols];
        if let Some(b) = b {
            dst.copy_from_slice(&b.data);
        }
        for (k, &a) in x.row(i).iter().enumerate() {
            if a != T::zero() {
                axpy(dst, a, w.row(k));
            }
        }
    }
    out
}

/// `g · wᵀ` for `g: [n, out]`, `w: [in, out]`.
pub fn matmul_nt<T: Real>(g: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(g.cols, w.cols);
    let mut out = Tensor::zeros(g.rows, w.rows);
    for i in 0..g.rows {
        let gi = g.row(i);
        for k in 0..w.rows {
            out.data[i * w.rows + k] = dot(gi, w.row(k));
        }
    }
    out
}

/// `acc += xᵀ · g` for `x: [n, in]`, `g: [n, out]`, `acc: [in, out]`.
pub fn matmul_tn_acc<T: Real>(x: &Tensor<T>, g: &Tensor<T>, acc: &mut Tensor<T>) {
    debug_assert_eq!(x.rows, g.rows);
    debug_assert_eq!(acc.shape(), [x.cols, g.cols]);
    for i in 0..x.rows {
        let gi = g.row(i);
        for (k, &a) in x.row(i).iter().enumerate() {
            if a != T::zero() {
                axpy(acc.row_mut(k), a, gi);
            }
        }
    }
}

/// Column sums accumulated into `acc: [1, cols]`.
pub fn col_sum_acc<T: Real>(g: &Tensor<T>, acc: &mut Tensor<T>) {
    for i in 0..g.rows {
        for (a, &v) in acc.data.iter_mut().zip(g.row(i)) {
            *a = *a + v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree_with_naive() {
        let x = Tensor::<f64>::from_f64(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 2.0]).unwrap();
        let w = Tensor::<f64>::from_f64(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.0, 1.0]).unwrap();
        let b = Tensor::<f64>::from_f64(1, 2, &[0.1, 0.2]).unwrap();
        let y = matmul(&x, &w, Some(&b));
        for (a, b) in y.data.iter().zip([1.0 - 2.0 + 0.1, 0.5 + 4.0 + 3.0 + 0.2, -1.0 + 0.1, -0.5 + 2.0 + 0.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = Tensor::<f64>::from_f64(2, 2, &[1.0, 1.0, 0.0, 2.0]).unwrap();
        let dx = matmul_nt(&g, &w);
        assert_eq!(dx.data, [1.5, 1.0, 1.0, 1.0, 4.0, 2.0]);
        let mut dw = Tensor::zeros(3, 2);
        matmul_tn_acc(&x, &g, &mut dw);
        assert_eq!(dw.data, [1.0, -1.0, 2.0, 2.0, 3.0, 7.0]);
    }

    #[test]
    fn dot_long() {
        let a: Vec<f64> = (0..21).map(|i| i as f64).collect();
        assert_eq!(dot(&a, &a), (0..21).map(|i| (i * i) as f64).sum::<f64>());
    }

    #[test]
    fn pack_and_concat() {
        let t = Tensor::<f32>::from_vec(4, 2, (0..8).map(|i| i as f32).collect()).unwrap();
        let p = t.pack_rows(2).unwrap();
        assert_eq!(p.shape(), [2, 4]);
        assert_eq!(p.row(1), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(p.unpack_rows(2).unwrap(), t);
        assert!(t.pack_rows(3).is_err());
        let h = Tensor::hcat(&[&t, &t.slice_cols(1, 1)]).unwrap();
        assert_eq!(h.row(2), &[4.0, 5.0, 5.0]);
    }
}
