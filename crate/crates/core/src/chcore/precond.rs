//! Row-swapped Jacobian and its block Schur-complement preconditioner.
//!
//! Swapped unknowns are `[dj, dsigma, dphi, dmu]` and rows
//! `[j-eq, sigma-eq, mu-eq, phi-eq]`:
//!
//! ```text
//! | Mdiv      0           0            -(d0/c0) D^T |
//! | 0         Mdiv        D^T           0           |
//! | 0         c0 eps^2 D  -c0 F''       M           |
//! | a D       0           M + a T       0           |
//! ```

use std::sync::Arc;

use super::{CHProblem, SchurCacheEntry, StageContext};
use crate::error::Result;
use crate::linalg::{InnerSolver, LinearOperator, Sor};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockShape {
    Diagonal,
    /// block lower-triangular: flux blocks first, then the Schur blocks
    Lower,
    /// full block LDU factorization with the approximate Schur complement
    Full,
}

/// Jacobian of the stage residual at a fixed `phi`, in swapped ordering.
pub struct SwappedJacobian<'a> {
    pub problem: &'a CHProblem,
    pub ctx: StageContext,
    /// `F''(phi)`
    pub f2: CsrMatrix,
    /// `M + a T`
    pub m_phi: CsrMatrix,
}

impl<'a> SwappedJacobian<'a> {
    pub fn new(problem: &'a CHProblem, phi: &[f64], ctx: StageContext, t: f64) -> Result<Self> {
        let f2 = problem.nonlinear_jacobian(phi)?;
        let m_phi = match problem.transport(t) {
            Some(tm) => problem.mass.add(1.0, &tm, ctx.alpha_dt),
            None => problem.mass.clone(),
        };
        Ok(SwappedJacobian { problem, ctx, f2, m_phi })
    }

    fn sizes(&self) -> (usize, usize) {
        (self.problem.n_rt(), self.problem.n_dg())
    }

    /// Action in natural ordering `(phi, j, mu, sigma)`.
    pub fn apply_natural(&self, x: &[f64]) -> Vec<f64> {
        let (nr, nd) = self.sizes();
        let (phi, rest) = x.split_at(nd);
        let (j, rest) = rest.split_at(nr);
        let (mu, sigma) = rest.split_at(nd);
        let mut swapped = Vec::with_capacity(x.len());
        swapped.extend_from_slice(j);
        swapped.extend_from_slice(sigma);
        swapped.extend_from_slice(phi);
        swapped.extend_from_slice(mu);
        let y = self.apply_vec(&swapped);
        let (yj, rest) = y.split_at(nr);
        let (ys, rest) = rest.split_at(nr);
        let (ymu, yphi) = rest.split_at(nd);
        let mut out = Vec::with_capacity(x.len());
        out.extend_from_slice(yphi);
        out.extend_from_slice(yj);
        out.extend_from_slice(ymu);
        out.extend_from_slice(ys);
        out
    }
}

impl LinearOperator for SwappedJacobian<'_> {
    fn nrows(&self) -> usize {
        let (nr, nd) = self.sizes();
        2 * nr + 2 * nd
    }

    fn ncols(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let pr = self.problem;
        let p = &pr.params;
        let c = &self.ctx;
        let (nr, nd) = self.sizes();
        let (j, rest) = x.split_at(nr);
        let (sigma, rest) = rest.split_at(nr);
        let (phi, mu) = rest.split_at(nd);
        let (yj, rest) = y.split_at_mut(nr);
        let (ys, rest) = rest.split_at_mut(nr);
        let (ymu, yphi) = rest.split_at_mut(nd);

        pr.mdiv.matvec(j, yj);
        pr.div_t.matvec_add(-p.d0 / c.c0, mu, yj);

        pr.mdiv.matvec(sigma, ys);
        pr.div_t.matvec_add(1.0, phi, ys);

        pr.mass.matvec(mu, ymu);
        self.f2.matvec_add(-c.c0, phi, ymu);
        pr.div.matvec_add(c.c0 * p.eps * p.eps, sigma, ymu);

        self.m_phi.matvec(phi, yphi);
        pr.div.matvec_add(c.alpha_dt, j, yphi);
    }
}

/// Factored pieces of the preconditioner that depend only on `(alpha_dt, t)`.
pub struct SchurBlocks {
    pub a00: Sor,
    /// `(1 + 2 tau / eps) M + tau L`, acting on mu-equation rows to give `dphi`
    pub b1: InnerSolver,
    /// `M + tau L + a T`, acting on phi-equation rows to give `dmu`
    pub b2: InnerSolver,
}

impl SchurBlocks {
    fn build(problem: &CHProblem, ctx: &StageContext, t: f64) -> Result<Self> {
        let cfg = &problem.solver;
        let p = &problem.params;
        let a00 = Sor::new(problem.mdiv.clone(), cfg.sor_omega, cfg.sor_sweeps)?;
        let b1m = problem.mass.add(1.0 + 2.0 * ctx.tau / p.eps, &problem.lap, ctx.tau);
        let mut b2m = problem.mass.add(1.0, &problem.lap, ctx.tau);
        if let Some(tm) = problem.transport(t) {
            b2m = b2m.add(1.0, &tm, ctx.alpha_dt);
        }
        let perm = Some(problem.dg_perm.as_slice());
        Ok(SchurBlocks {
            a00,
            b1: InnerSolver::new(b1m, cfg.inner_phi, perm)?,
            b2: InnerSolver::new(b2m, cfg.inner_mu, perm)?,
        })
    }
}

/// Block preconditioner for [`SwappedJacobian`].
pub struct SchurPreconditioner<'a> {
    jac: &'a SwappedJacobian<'a>,
    blocks: Arc<SchurBlocks>,
    shape: BlockShape,
}

impl<'a> SchurPreconditioner<'a> {
    /// Reuses cached factorizations when `(alpha_dt, t)` is unchanged (or the
    /// velocity is steady).
    pub fn new(jac: &'a SwappedJacobian<'a>, t: f64) -> Result<Self> {
        let pr = jac.problem;
        let steady = pr.velocity.as_ref().is_none_or(|v| v.steady);
        let key = (jac.ctx.alpha_dt.to_bits(), if steady { 0 } else { t.to_bits() });
        let mut cache = pr.schur_cache.lock().expect("preconditioner cache poisoned");
        let blocks = match cache.as_ref() {
            Some(e) if e.key == key => e.blocks.clone(),
            _ => {
                let b = Arc::new(SchurBlocks::build(pr, &jac.ctx, t)?);
                *cache = Some(SchurCacheEntry { key, blocks: b.clone() });
                b
            }
        };
        Ok(SchurPreconditioner { jac, blocks, shape: pr.solver.shape })
    }
}

impl LinearOperator for SchurPreconditioner<'_> {
    fn nrows(&self) -> usize {
        self.jac.nrows()
    }

    fn ncols(&self) -> usize {
        self.jac.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let pr = self.jac.problem;
        let p = &pr.params;
        let c = &self.jac.ctx;
        let (nr, nd) = (pr.n_rt(), pr.n_dg());
        let (rj, rest) = x.split_at(nr);
        let (rs, rest) = rest.split_at(nr);
        let (rmu, rphi) = rest.split_at(nd);

        let mut yj = self.blocks.a00.apply_vec(rj);
        let mut ys = self.blocks.a00.apply_vec(rs);
        let mut smu = rmu.to_vec();
        let mut sphi = rphi.to_vec();
        if self.shape != BlockShape::Diagonal {
            pr.div.matvec_add(-c.c0 * p.eps * p.eps, &ys, &mut smu);
            pr.div.matvec_add(-c.alpha_dt, &yj, &mut sphi);
        }
        let dphi = self.blocks.b1.solve(&smu);
        let dmu = self.blocks.b2.solve(&sphi);
        if self.shape == BlockShape::Full {
            // back-substitute the flux blocks with the Schur unknowns
            let mut tj = rj.to_vec();
            pr.div_t.matvec_add(p.d0 / c.c0, &dmu, &mut tj);
            let mut ts = rs.to_vec();
            pr.div_t.matvec_add(-1.0, &dphi, &mut ts);
            yj = self.blocks.a00.apply_vec(&tj);
            ys = self.blocks.a00.apply_vec(&ts);
        }
        y[..nr].copy_from_slice(&yj);
        y[nr..2 * nr].copy_from_slice(&ys);
        y[2 * nr..2 * nr + nd].copy_from_slice(&dphi);
        y[2 * nr + nd..].copy_from_slice(&dmu);
    }
}
