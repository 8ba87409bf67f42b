use super::LinearOperator;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Forward SOR sweeps on `A x = b` starting from `x`.
pub fn sor_sweep(a: &CsrMatrix, x: &[f64], b: &[f64], omega: f64, sweeps: usize) -> Result<Vec<f64>> {
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDiagonal(i));
    }
    let mut x = x.to_vec();
    forward_sweeps(a, &diag, &mut x, b, omega, sweeps);
    Ok(x)
}

fn forward_sweeps(a: &CsrMatrix, diag: &[f64], x: &mut [f64], b: &[f64], omega: f64, sweeps: usize) {
    for _ in 0..sweeps {
        for i in 0..a.nrows() {
            let (cols, vals) = a.row(i);
            let mut s = b[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    s -= v * x[j];
                }
            }
            x[i] = (1.0 - omega) * x[i] + omega * s / diag[i];
        }
    }
}

/// Fixed number of SOR sweeps from a zero initial guess, as an approximate inverse.
#[derive(Debug, Clone)]
pub struct Sor {
    a: CsrMatrix,
    diag: Vec<f64>,
    omega: f64,
    sweeps: usize,
}

impl Sor {
    pub fn new(a: CsrMatrix, omega: f64, sweeps: usize) -> Result<Self> {
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDiagonal(i));
        }
        Ok(Sor { a, diag, omega, sweeps })
    }
}

impl LinearOperator for Sor {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        forward_sweeps(&self.a, &self.diag, y, x, self.omega, self.sweeps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_exact_in_one_sweep() {
        let a = CsrMatrix::from_dense(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = sor_sweep(&a, &[0.0, 0.0], &[2.0, 2.0], 1.0, 1).unwrap();
        assert_eq!(x, vec![1.0, 0.5]);
    }

    #[test]
    fn zero_sweeps_is_identity_on_x() {
        let a = CsrMatrix::from_dense(2, 2, &[2.0, 1.0, 1.0, 4.0]);
        assert_eq!(sor_sweep(&a, &[0.3, -1.0], &[2.0, 2.0], 1.0, 0).unwrap(), vec![0.3, -1.0]);
    }

    #[test]
    fn zero_diagonal_rejected() {
        let a = CsrMatrix::from_dense(2, 2, &[0.0, 1.0, 1.0, 4.0]);
        assert!(matches!(sor_sweep(&a, &[0.0; 2], &[1.0; 2], 1.0, 1), Err(Error::ZeroDiagonal(0))));
    }
}
