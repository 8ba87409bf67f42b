//! Fixed-cost approximate inverses for the Schur-complement diagonal blocks.

use super::{BandedLu, LinearOperator};
use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMethod {
    /// Chebyshev iteration of the given degree on the Jacobi-scaled operator.
    ChebyshevJacobi(usize),
    /// Given number of Jacobi-preconditioned CG iterations (symmetric blocks only).
    CgJacobi(usize),
    Direct,
}

#[derive(Debug, Clone)]
enum Kind {
    Chebyshev { degree: usize, lmin: f64, lmax: f64 },
    Cg { iters: usize },
    Direct(BandedLu),
}

/// Approximate `A^{-1}` with state prepared once per matrix.
#[derive(Debug, Clone)]
pub struct InnerSolver {
    a: CsrMatrix,
    inv_diag: Vec<f64>,
    kind: Kind,
}

/// Largest eigenvalue magnitude of `D^{-1} A` by power iteration.
fn jacobi_lambda_max(a: &CsrMatrix, inv_diag: &[f64]) -> f64 {
    let n = a.nrows();
    // deterministic, non-smooth start vector
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let mut av = vec![0.0; n];
    let mut lam = 0.0;
    for _ in 0..30 {
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        a.matvec(&v, &mut av);
        for (x, d) in av.iter_mut().zip(inv_diag) {
            *x *= d;
        }
        lam = norm2(&av);
        std::mem::swap(&mut v, &mut av);
    }
    lam
}

impl InnerSolver {
    /// `perm` is the bandwidth-reducing ordering used by the direct method.
    pub fn new(a: CsrMatrix, method: InnerMethod, perm: Option<&[usize]>) -> Result<Self> {
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDiagonal(i));
        }
        let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
        let kind = match method {
            InnerMethod::ChebyshevJacobi(degree) => {
                let lmax = jacobi_lambda_max(&a, &inv_diag);
                Kind::Chebyshev { degree, lmin: 0.1 * lmax, lmax: 1.1 * lmax }
            }
            InnerMethod::CgJacobi(iters) => Kind::Cg { iters },
            InnerMethod::Direct => Kind::Direct(BandedLu::factor(&a, perm)?),
        };
        Ok(InnerSolver { a, inv_diag, kind })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Direct(lu) => lu.solve(b),
            Kind::Chebyshev { degree, lmin, lmax } => self.chebyshev(b, *degree, *lmin, *lmax),
            Kind::Cg { iters } => self.cg(b, *iters),
        }
    }

    fn chebyshev(&self, b: &[f64], degree: usize, lmin: f64, lmax: f64) -> Vec<f64> {
        let n = b.len();
        let theta = 0.5 * (lmax + lmin);
        let delta = 0.5 * (lmax - lmin);
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut d: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(ri, di)| ri * di / theta).collect();
        let mut ad = vec![0.0; n];
        for _ in 0..degree {
            axpy(1.0, &d, &mut x);
            self.a.matvec(&d, &mut ad);
            axpy(-1.0, &ad, &mut r);
            let rho_new = 1.0 / (2.0 * sigma - rho);
            for ((di, ri), inv) in d.iter_mut().zip(&r).zip(&self.inv_diag) {
                *di = rho_new * rho * *di + 2.0 * rho_new / delta * inv * ri;
            }
            rho = rho_new;
        }
        x
    }

    fn cg(&self, b: &[f64], iters: usize) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for _ in 0..iters {
            if rz == 0.0 {
                break;
            }
            self.a.matvec(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            for ((zi, ri), d) in z.iter_mut().zip(&r).zip(&self.inv_diag) {
                *zi = ri * d;
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        x
    }
}

impl LinearOperator for InnerSolver {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.solve(x));
    }
}

/// One-shot approximate solve of `A x = b`.
pub fn block_diag_inner_solve(a: &CsrMatrix, b: &[f64], method: InnerMethod) -> Result<Vec<f64>> {
    Ok(InnerSolver::new(a.clone(), method, None)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn direct_2x2_exact() {
        let a = CsrMatrix::from_dense(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = block_diag_inner_solve(&a, &[3.0, 4.0], InnerMethod::Direct).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_and_cg_reduce_residual() {
        let a = laplace_1d(40, 0.5);
        let b: Vec<f64> = (0..40).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        for m in [InnerMethod::ChebyshevJacobi(3), InnerMethod::CgJacobi(3)] {
            let x = block_diag_inner_solve(&a, &b, m).unwrap();
            let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| q - p).collect();
            assert!(norm2(&r) < 0.5 * norm2(&b), "{m:?}");
        }
    }
}
