use super::{LinearOperator, SolveReport};
use crate::sparse::{axpy, dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub rtol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { rtol: 1e-8, max_iter: 1000, restart: 200 }
    }
}

/// Right-preconditioned flexible GMRES with modified Gram–Schmidt.
///
/// The preconditioner may change between iterations; the preconditioned
/// directions are stored explicitly. Starts from `x0` (zero if `None`).
pub fn gmres<A, P>(
    op: &A,
    rhs: &[f64],
    precon: &P,
    opts: GmresOptions,
    x0: Option<&[f64]>,
) -> (Vec<f64>, SolveReport)
where
    A: LinearOperator + ?Sized,
    P: LinearOperator + ?Sized,
{
    let n = rhs.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let bnorm = norm2(rhs);
    let mut report = SolveReport::default();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        report.converged = true;
        report.history.push(0.0);
        return (x, report);
    }
    let restart = opts.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    loop {
        op.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if report.history.is_empty() {
            report.history.push(rel);
        }
        report.residual = rel;
        if rel <= opts.rtol {
            report.converged = true;
            return (x, report);
        }
        if report.iterations >= opts.max_iter {
            return (x, report);
        }

        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(restart);
        // Hessenberg columns after rotation
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<f64> = Vec::with_capacity(restart);
        let mut sn: Vec<f64> = Vec::with_capacity(restart);
        let mut g = vec![beta];
        let mut breakdown = false;

        while z.len() < restart && report.iterations < opts.max_iter {
            let j = z.len();
            let zj = precon.apply_vec(&v[j]);
            op.apply(&zj, &mut w);
            z.push(zj);
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                axpy(-hij, vi, &mut w);
            }
            let hnext = norm2(&w);
            col[j + 1] = hnext;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[j] / denom, col[j + 1] / denom) };
            col[j] = denom;
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.push(col);
            report.iterations += 1;
            let rel = g[j + 1].abs() / bnorm;
            report.history.push(rel);
            report.residual = rel;
            if rel <= opts.rtol || hnext <= 1e-300 {
                breakdown = hnext <= 1e-300;
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
        }

        // back substitution for the least-squares coefficients
        let m = z.len();
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = g[i];
            for k in (i + 1)..m {
                s -= h[k][i] * y[k];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (zk, yk) in z.iter().zip(&y) {
            axpy(*yk, zk, &mut x);
        }
        op.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let true_rel = norm2(&r) / bnorm;
        if true_rel <= opts.rtol || breakdown || report.iterations >= opts.max_iter {
            report.residual = true_rel;
            report.converged = true_rel <= opts.rtol;
            return (x, report);
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for SPD operators.
pub fn cg<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    inv_diag: &[f64],
    rtol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(rhs);
    let mut report = SolveReport::default();
    if bnorm == 0.0 {
        report.converged = true;
        report.history.push(0.0);
        return (x, report);
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    report.history.push(1.0);
    for _ in 0..max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        report.iterations += 1;
        let rel = norm2(&r) / bnorm;
        report.history.push(rel);
        report.residual = rel;
        if rel <= rtol {
            report.converged = true;
            break;
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    (x, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Diagonal, Identity};
    use crate::sparse::CsrMatrix;

    #[test]
    fn identity_one_iteration() {
        let b = vec![1.0, -2.0, 3.0];
        let (x, rep) = gmres(&Identity(3), &b, &Identity(3), GmresOptions::default(), None);
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        for (a, e) in x.iter().zip(&b) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_preconditioner_one_iteration() {
        let d = vec![2.0, 5.0, 0.5, 10.0];
        let a = Diagonal(d.clone());
        let p = Diagonal(d.iter().map(|v| 1.0 / v).collect());
        let (_, rep) = gmres(&a, &[1.0, 1.0, 1.0, 1.0], &p, GmresOptions::default(), None);
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn nonsymmetric_system_and_monotone_history() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.5));
                t.push((i + 1, i, -0.5));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let (x, rep) = gmres(&a, &b, &Identity(n), GmresOptions { restart: 7, ..Default::default() }, None);
        assert!(rep.converged);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) / norm2(&b) < 1e-7);
        for w in rep.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cg_solves_spd() {
        let a = CsrMatrix::from_dense(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let inv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
        let (x, rep) = cg(&a, &[1.0, 2.0, 3.0], &inv, 1e-14, 50);
        assert!(rep.converged);
        let y = a.mul_vec(&x);
        for (p, q) in y.iter().zip([1.0, 2.0, 3.0]) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
