//! Compressed sparse row matrices.

use rayon::prelude::*;

/// Row count above which products run row-parallel. Each row is still summed
/// in a fixed order, so results do not depend on the thread count.
const PAR_ROWS: usize = 16_384;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: vec![], values: vec![] }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn from_dense(nrows: usize, ncols: usize, a: &[f64]) -> Self {
        let mut t = Vec::new();
        for i in 0..nrows {
            for j in 0..ncols {
                let v = a[i * ncols + j];
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let mut s = 0.0;
        for k in a..b {
            s += self.values[k] * x[self.col_idx[k]];
        }
        s
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
    }

    /// `y += alpha A x`
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi += alpha * self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += alpha * self.row_dot(i, x);
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut count = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            count[c + 1] += 1;
        }
        for j in 0..self.ncols {
            count[j + 1] += count[j];
        }
        let row_ptr = count.clone();
        let mut next = count;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &val) in c.iter().zip(v) {
                let k = next[j];
                col_idx[k] = i;
                values[k] = val;
                next[j] += 1;
            }
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, values }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `alpha A + beta B` on the union pattern.
    pub fn add(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let take_a = q >= cb.len() || (p < ca.len() && ca[p] < cb[q]);
                let take_b = p >= ca.len() || (q < cb.len() && cb[q] < ca[p]);
                if take_a {
                    col_idx.push(ca[p]);
                    values.push(alpha * va[p]);
                    p += 1;
                } else if take_b {
                    col_idx.push(cb[q]);
                    values.push(beta * vb[q]);
                    q += 1;
                } else {
                    col_idx.push(ca[p]);
                    values.push(alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }

    /// Largest absolute entry of `A - B`.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        self.add(1.0, other, -1.0).values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Rows and columns in `dofs` replaced by those of the identity.
    pub fn constrain_identity(&self, dofs: &[usize]) -> CsrMatrix {
        assert_eq!(self.nrows, self.ncols);
        let mut mask = vec![false; self.nrows];
        for &d in dofs {
            mask[d] = true;
        }
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            if mask[i] {
                t.push((i, i, 1.0));
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &val) in c.iter().zip(v) {
                if !mask[j] {
                    t.push((i, j, val));
                }
            }
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    /// Columns in `dofs` dropped.
    pub fn zero_columns(&self, dofs: &[usize]) -> CsrMatrix {
        let mut mask = vec![false; self.ncols];
        for &d in dofs {
            mask[d] = true;
        }
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &val) in c.iter().zip(v) {
                if !mask[j] {
                    t.push((i, j, val));
                }
            }
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    /// Row-major dense copy; meant for small matrices in tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &val) in c.iter().zip(v) {
                a[i * self.ncols + j] = val;
            }
        }
        a
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(1, 2), 1.5);
        assert_eq!(a.get(0, 1), 0.0);
    }

    #[test]
    fn transpose_and_add() {
        let a = CsrMatrix::from_dense(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let at = a.transpose();
        assert_eq!(at.to_dense(), vec![1.0, 0.0, 2.0, 3.0]);
        let s = a.add(1.0, &at, 1.0);
        assert_eq!(s.to_dense(), vec![2.0, 2.0, 2.0, 6.0]);
        assert_eq!(a.max_abs_diff(&at), 2.0);
    }

    #[test]
    fn constrain() {
        let a = CsrMatrix::from_dense(3, 3, &[4.0, 1.0, 1.0, 1.0, 4.0, 1.0, 1.0, 1.0, 4.0]);
        let c = a.constrain_identity(&[1]);
        assert_eq!(c.to_dense(), vec![4.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 4.0]);
        let z = a.zero_columns(&[0]);
        assert_eq!(z.get(2, 0), 0.0);
        assert_eq!(z.get(2, 2), 4.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let d = [1.0, -2.0, 0.5, 0.0, 3.0, 1.0];
        let a = CsrMatrix::from_dense(2, 3, &d);
        let y = a.mul_vec(&[1.0, 1.0, 2.0]);
        assert_eq!(y, vec![0.0, 5.0]);
        let mut z = vec![1.0, 1.0];
        a.matvec_add(2.0, &[1.0, 1.0, 2.0], &mut z);
        assert_eq!(z, vec![1.0, 11.0]);
    }
}
