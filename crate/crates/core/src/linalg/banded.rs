//! Banded LU without pivoting, applied after a bandwidth-reducing permutation.

use crate::error::{Error, Result};
use crate::sparse::{dot, CsrMatrix};

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// row-major band storage, row `i` holds columns `i-kl ..= i+ku`
    band: Vec<f64>,
    /// `perm[new] = old`
    perm: Vec<usize>,
}

impl BandedLu {
    /// Factors `P A P^T` where `perm[new] = old`. Fails on a vanishing pivot.
    pub fn factor(a: &CsrMatrix, perm: Option<&[usize]>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument("banded LU needs a square matrix".into()));
        }
        let perm: Vec<usize> = match perm {
            Some(p) if p.len() == n => p.to_vec(),
            Some(p) => {
                return Err(Error::InvalidArgument(format!("permutation length {} != {n}", p.len())))
            }
            None => (0..n).collect(),
        };
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        if inv.contains(&usize::MAX) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            let (cols, _) = a.row(i);
            for &j in cols {
                let (r, c) = (inv[i], inv[j]);
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let w = kl + ku + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let r = inv[i];
            for (&j, &v) in cols.iter().zip(vals) {
                let c = inv[j];
                band[r * w + (c + kl - r)] += v;
            }
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let piv = band[k * w + kl];
            if !(piv.abs() > 1e-14 * scale) {
                return Err(Error::SingularMatrix(k));
            }
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku).min(n - 1);
            for i in (k + 1)..=last_row {
                let lik_idx = i * w + (k + kl - i);
                let l = band[lik_idx] / piv;
                band[lik_idx] = l;
                if l == 0.0 {
                    continue;
                }
                // row i, columns k+1..=last_col
                let src = k * w + kl + 1;
                let dst = i * w + (k + 1 + kl - i);
                let len = last_col - k;
                let (head, tail) = band.split_at_mut(i * w);
                let srow = &head[src..src + len];
                let drow = &mut tail[dst - i * w..dst - i * w + len];
                for (d, s) in drow.iter_mut().zip(srow) {
                    *d -= l * s;
                }
            }
        }
        Ok(BandedLu { n, kl, ku, band, perm })
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let w = kl + ku + 1;
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let row = &self.band[i * w + (lo + kl - i)..i * w + kl];
            y[i] -= dot(row, &y[lo..i]);
        }
        for i in (0..n).rev() {
            let hi = (i + ku).min(n - 1);
            let row = &self.band[i * w + kl + 1..i * w + kl + 1 + (hi - i)];
            y[i] = (y[i] - dot(row, &y[i + 1..=hi])) / self.band[i * w + kl];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve() {
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -0.7));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let x0: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let lu = BandedLu::factor(&a, None).unwrap();
        assert_eq!(lu.bandwidths(), (1, 1));
        let x = lu.solve(&a.mul_vec(&x0));
        for (p, q) in x.iter().zip(&x0) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn permuted_solve() {
        let a = CsrMatrix::from_dense(3, 3, &[4.0, 0.0, 1.0, 0.0, 5.0, 0.0, 1.0, 0.0, 3.0]);
        let lu = BandedLu::factor(&a, Some(&[1, 0, 2])).unwrap();
        let x = lu.solve(&a.mul_vec(&[1.0, 2.0, 3.0]));
        for (p, q) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pivot_fails() {
        let a = CsrMatrix::from_dense(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(BandedLu::factor(&a, None).is_err());
    }
}
