use super::precond::{SchurPreconditioner, SwappedJacobian};
use super::{CHProblem, StageContext, StageState};
use crate::error::{Error, Result};
use crate::linalg::{gmres, GmresOptions};
use crate::sparse::norm2;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    /// GMRES iterations of each Newton iteration
    pub gmres_iters: Vec<usize>,
    /// max block residual norm, starting with the initial guess
    pub residuals: Vec<f64>,
    /// stopping threshold `max(rtol * r0, atol)`
    pub threshold: f64,
    /// final `||R_phi||`
    pub phi_residual: f64,
}

impl NewtonStats {
    pub fn gmres_total(&self) -> usize {
        self.gmres_iters.iter().sum()
    }
}

/// Newton iteration on the four-field stage system, each step solved with
/// right-preconditioned FGMRES on the swapped Jacobian.
///
/// Fails with [`Error::StageFailure`] when the residual grows three times in
/// a row, becomes non-finite, or the iteration cap is reached.
pub fn newton_solve(
    problem: &CHProblem,
    phi_rhs: &[f64],
    ctx: &StageContext,
    t: f64,
    guess: StageState,
) -> Result<(StageState, NewtonStats)> {
    let cfg = problem.solver;
    let (nr, nd) = (problem.n_rt(), problem.n_dg());
    let mut state = guess;
    let mut res = problem.residual(&state, phi_rhs, ctx, t);
    let r0 = res.max_norm();
    let scale = 1.0 + norm2(&problem.mass.mul_vec(phi_rhs));
    let threshold = (cfg.newton_rtol * r0).max(cfg.newton_atol * scale);
    let mut stats = NewtonStats { threshold, residuals: vec![r0], ..Default::default() };
    let mut prev = r0;
    let mut growth = 0;
    let opts = GmresOptions { rtol: cfg.gmres_rtol, max_iter: cfg.gmres_max_iter, restart: cfg.gmres_restart };

    while prev > threshold {
        if stats.iterations >= cfg.newton_max_iter {
            return Err(Error::StageFailure(format!(
                "Newton hit the iteration cap {} at residual {prev:.3e}",
                cfg.newton_max_iter
            )));
        }
        let jac = SwappedJacobian::new(problem, &state.phi, *ctx, t)?;
        let pc = SchurPreconditioner::new(&jac, t)?;
        let mut rhs = Vec::with_capacity(2 * nr + 2 * nd);
        rhs.extend(res.j.iter().map(|v| -v));
        rhs.extend(res.sigma.iter().map(|v| -v));
        rhs.extend(res.mu.iter().map(|v| -v));
        rhs.extend(res.phi.iter().map(|v| -v));
        let (dx, rep) = gmres(&jac, &rhs, &pc, opts, None);
        stats.gmres_iters.push(rep.iterations);
        if !rep.residual.is_finite() || (!rep.converged && rep.residual > 1e-2) {
            return Err(Error::StageFailure(format!(
                "GMRES failed: relative residual {:.3e} after {} iterations",
                rep.residual, rep.iterations
            )));
        }
        for (s, d) in state.j.iter_mut().zip(&dx[..nr]) {
            *s += d;
        }
        for (s, d) in state.sigma.iter_mut().zip(&dx[nr..2 * nr]) {
            *s += d;
        }
        for (s, d) in state.phi.iter_mut().zip(&dx[2 * nr..2 * nr + nd]) {
            *s += d;
        }
        for (s, d) in state.mu.iter_mut().zip(&dx[2 * nr + nd..]) {
            *s += d;
        }
        stats.iterations += 1;
        res = problem.residual(&state, phi_rhs, ctx, t);
        let r = res.max_norm();
        stats.residuals.push(r);
        if !r.is_finite() {
            return Err(Error::StageFailure("non-finite Newton residual".into()));
        }
        growth = if r > prev { growth + 1 } else { 0 };
        if growth >= 3 {
            return Err(Error::StageFailure(format!("Newton residual grew three times, now {r:.3e}")));
        }
        prev = r;
    }
    stats.phi_residual = norm2(&res.phi);
    Ok((state, stats))
}
