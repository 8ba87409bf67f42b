//! Four-field Cahn–Hilliard stage system: residual, Jacobian, preconditioner,
//! Newton driver, auxiliary-field recovery, energy and dissipation.
//!
//! Unknown blocks in natural order are `(phi, j, mu, sigma)`:
//!
//! ```text
//! R_phi   = M (phi - phi_rhs) + a (D j + T phi - f)
//! R_j     = Mdiv j - (d0 / c0) D^T mu
//! R_mu    = M mu - c0 N(phi) + c0 eps^2 D sigma
//! R_sigma = Mdiv sigma + D^T phi
//! ```
//!
//! with `a = alpha * dt` and `N(phi)_i = (psi_i, F'(phi_h))`.

mod newton;
mod precond;

use std::sync::{Arc, Mutex};

pub use newton::{newton_solve, NewtonStats};
pub use precond::{BlockShape, SchurPreconditioner, SwappedJacobian};

use crate::assembly::{
    assemble_div, assemble_dg_mass, assemble_double_well, assemble_forcing, assemble_ip_laplacian,
    assemble_rt_mass, assemble_transport, DgMassInverse, Discretization, FluxScheme, MassWeight,
};
use crate::error::{Error, Result};
use crate::linalg::{cg, InnerMethod};
use crate::spaces::{ScalarFn, VectorFn};
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Potential {
    /// `F = (1 - phi^2)^2 / 4`
    DoubleWell,
    /// `F = 0`; makes the stage system linear
    Zero,
}

/// Choice of the scaling constant `c0` in the auxiliary equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C0Mode {
    /// `c0 = tau / eps^2`
    Tau,
    /// `c0 = 1`
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CHParams {
    pub d0: f64,
    pub eps: f64,
    pub potential: Potential,
    pub flux: FluxScheme,
    pub kappa_ip: f64,
    pub c0_mode: C0Mode,
}

impl CHParams {
    pub fn new(d0: f64, eps: f64) -> Self {
        CHParams {
            d0,
            eps,
            potential: Potential::DoubleWell,
            flux: FluxScheme::Upwind,
            kappa_ip: 10.0,
            c0_mode: C0Mode::Tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(Error::InvalidArgument(format!("d0 = {} must be positive", self.d0)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps = {} must be positive", self.eps)));
        }
        if !(self.kappa_ip > 0.0) {
            return Err(Error::InvalidArgument(format!("kappa_ip = {} must be positive", self.kappa_ip)));
        }
        Ok(())
    }

    pub fn potential_value(&self, phi: f64) -> f64 {
        match self.potential {
            Potential::DoubleWell => 0.25 * (1.0 - phi * phi).powi(2),
            Potential::Zero => 0.0,
        }
    }
}

/// Per-stage scalings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageContext {
    pub alpha_dt: f64,
    pub tau: f64,
    pub c0: f64,
}

impl StageContext {
    pub fn new(alpha_dt: f64, params: &CHParams) -> Self {
        let tau = params.eps * (alpha_dt * params.d0).sqrt();
        let c0 = match params.c0_mode {
            C0Mode::Tau => tau / (params.eps * params.eps),
            C0Mode::Unit => 1.0,
        };
        StageContext { alpha_dt, tau, c0 }
    }
}

/// Coefficient vectors of the four unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    pub phi: Vec<f64>,
    pub j: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Block residual in natural order.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub phi: Vec<f64>,
    pub j: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Residual {
    pub fn block_norms(&self) -> [f64; 4] {
        [norm2(&self.phi), norm2(&self.j), norm2(&self.mu), norm2(&self.sigma)]
    }

    pub fn max_norm(&self) -> f64 {
        self.block_norms().into_iter().fold(0.0, f64::max)
    }
}

/// Prescribed advecting velocity.
#[derive(Clone)]
pub struct Velocity {
    pub field: VectorFn,
    /// time independent; the transport matrix is assembled once
    pub steady: bool,
}

impl std::fmt::Debug for Velocity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Velocity").field("steady", &self.steady).finish()
    }
}

/// Linear solver settings for a stage solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub newton_rtol: f64,
    /// absolute floor, relative to `1 + ||M phi_rhs||`
    pub newton_atol: f64,
    pub newton_max_iter: usize,
    pub gmres_rtol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    pub sor_omega: f64,
    pub sor_sweeps: usize,
    /// solver for `(1 + 2 tau / eps) M + tau L`
    pub inner_phi: InnerMethod,
    /// solver for `M + tau L + a T`
    pub inner_mu: InnerMethod,
    pub shape: BlockShape,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_rtol: 1e-8,
            newton_atol: 1e-13,
            newton_max_iter: 25,
            gmres_rtol: 1e-8,
            gmres_restart: 200,
            gmres_max_iter: 1000,
            sor_omega: 1.0,
            sor_sweeps: 1,
            inner_phi: InnerMethod::Direct,
            inner_mu: InnerMethod::Direct,
            shape: BlockShape::Lower,
        }
    }
}

/// Factored preconditioner blocks keyed by `(alpha_dt, t)`.
pub(crate) struct SchurCacheEntry {
    pub key: (u64, u64),
    pub blocks: Arc<precond::SchurBlocks>,
}

/// Assembled operators for one discretization, parameter set and case data.
pub struct CHProblem {
    pub disc: Discretization,
    pub params: CHParams,
    pub velocity: Option<Velocity>,
    pub forcing: Option<ScalarFn>,
    pub solver: SolverConfig,
    pub mass: CsrMatrix,
    pub mass_inv: DgMassInverse,
    /// RT mass with boundary rows/columns replaced by the identity
    pub mdiv: CsrMatrix,
    pub mdiv_inv_diag: Vec<f64>,
    /// divergence with boundary columns removed
    pub div: CsrMatrix,
    pub div_t: CsrMatrix,
    pub lap: CsrMatrix,
    steady_transport: Option<CsrMatrix>,
    pub(crate) dg_perm: Vec<usize>,
    pub(crate) schur_cache: Mutex<Option<SchurCacheEntry>>,
}

impl std::fmt::Debug for CHProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CHProblem")
            .field("n_dg", &self.disc.n_dg())
            .field("n_rt", &self.disc.n_rt())
            .field("params", &self.params)
            .field("velocity", &self.velocity)
            .field("solver", &self.solver)
            .finish()
    }
}

impl CHProblem {
    pub fn new(
        disc: Discretization,
        params: CHParams,
        velocity: Option<Velocity>,
        forcing: Option<ScalarFn>,
        solver: SolverConfig,
    ) -> Result<Self> {
        params.validate()?;
        let mass = assemble_dg_mass(&disc, MassWeight::One)?;
        let mass_inv = DgMassInverse::new(&disc, &mass)?;
        let bdofs = disc.rt.boundary_dofs().to_vec();
        let mdiv = assemble_rt_mass(&disc).constrain_identity(&bdofs);
        let mdiv_inv_diag = mdiv.diagonal().iter().map(|d| 1.0 / d).collect();
        let div = assemble_div(&disc).zero_columns(&bdofs);
        let div_t = div.transpose();
        let lap = assemble_ip_laplacian(&disc, params.kappa_ip);
        let steady_transport = match &velocity {
            Some(v) if v.steady => Some(assemble_transport(&disc, &v.field, 0.0, params.flux)),
            _ => None,
        };
        let nb = disc.dg.dofs_per_cell();
        let dg_perm = disc
            .mesh
            .banded_cell_order()
            .into_iter()
            .flat_map(|c| (c * nb)..((c + 1) * nb))
            .collect();
        Ok(CHProblem {
            disc,
            params,
            velocity,
            forcing,
            solver,
            mass,
            mass_inv,
            mdiv,
            mdiv_inv_diag,
            div,
            div_t,
            lap,
            steady_transport,
            dg_perm,
            schur_cache: Mutex::new(None),
        })
    }

    pub fn n_dg(&self) -> usize {
        self.disc.n_dg()
    }

    pub fn n_rt(&self) -> usize {
        self.disc.n_rt()
    }

    /// Transport matrix at time `t`, `None` without velocity.
    pub fn transport(&self, t: f64) -> Option<std::borrow::Cow<'_, CsrMatrix>> {
        let v = self.velocity.as_ref()?;
        Some(match &self.steady_transport {
            Some(m) => std::borrow::Cow::Borrowed(m),
            None => std::borrow::Cow::Owned(assemble_transport(&self.disc, &v.field, t, self.params.flux)),
        })
    }

    /// `(psi_i, S(., t))`, zero without forcing.
    pub fn forcing_vector(&self, t: f64) -> Vec<f64> {
        match &self.forcing {
            Some(s) => assemble_forcing(&self.disc, s, t),
            None => vec![0.0; self.n_dg()],
        }
    }

    /// `N(phi)_i = (psi_i, F'(phi_h))`.
    pub fn nonlinear_load(&self, phi: &[f64]) -> Vec<f64> {
        match self.params.potential {
            Potential::DoubleWell => assemble_double_well(&self.disc, phi),
            Potential::Zero => vec![0.0; phi.len()],
        }
    }

    /// Matrix of the derivative of `N`: `3 M_{phi^2} - M` for the double well.
    pub fn nonlinear_jacobian(&self, phi: &[f64]) -> Result<CsrMatrix> {
        match self.params.potential {
            Potential::DoubleWell => {
                let m2 = assemble_dg_mass(&self.disc, MassWeight::FieldSquared(phi))?;
                Ok(m2.add(3.0, &self.mass, -1.0))
            }
            Potential::Zero => Ok(CsrMatrix::zeros(phi.len(), phi.len())),
        }
    }

    pub fn residual(&self, state: &StageState, phi_rhs: &[f64], ctx: &StageContext, t: f64) -> Residual {
        let p = &self.params;
        let a = ctx.alpha_dt;

        let diff: Vec<f64> = state.phi.iter().zip(phi_rhs).map(|(x, y)| x - y).collect();
        let mut r_phi = self.mass.mul_vec(&diff);
        let mut flux = self.div.mul_vec(&state.j);
        if let Some(tm) = self.transport(t) {
            tm.matvec_add(1.0, &state.phi, &mut flux);
        }
        let f = self.forcing_vector(t);
        for ((r, fl), s) in r_phi.iter_mut().zip(&flux).zip(&f) {
            *r += a * (fl - s);
        }

        let mut r_j = self.mdiv.mul_vec(&state.j);
        self.div_t.matvec_add(-p.d0 / ctx.c0, &state.mu, &mut r_j);

        let mut r_mu = self.mass.mul_vec(&state.mu);
        let n = self.nonlinear_load(&state.phi);
        for (r, ni) in r_mu.iter_mut().zip(&n) {
            *r -= ctx.c0 * ni;
        }
        self.div.matvec_add(ctx.c0 * p.eps * p.eps, &state.sigma, &mut r_mu);

        let mut r_sigma = self.mdiv.mul_vec(&state.sigma);
        self.div_t.matvec_add(1.0, &state.phi, &mut r_sigma);

        Residual { phi: r_phi, j: r_j, mu: r_mu, sigma: r_sigma }
    }

    /// Solves an SPD system with the constrained RT mass matrix.
    pub fn solve_mdiv(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (x, rep) = cg(&self.mdiv, b, &self.mdiv_inv_diag, 1e-14, 2000);
        if !rep.converged && rep.residual > 1e-10 {
            return Err(Error::LinearSolve(format!(
                "RT mass CG stalled at relative residual {:.3e}",
                rep.residual
            )));
        }
        Ok(x)
    }

    /// Recovers `(sigma, mu, j)` from `phi` by solving the auxiliary equations.
    pub fn solve_auxiliary(&self, phi: &[f64], ctx: &StageContext) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let p = &self.params;
        let mut rhs = self.div_t.mul_vec(phi);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let sigma = self.solve_mdiv(&rhs)?;
        let mut b = self.nonlinear_load(phi);
        self.div.matvec_add(-p.eps * p.eps, &sigma, &mut b);
        let mut mu = self.mass_inv.apply(&b);
        mu.iter_mut().for_each(|v| *v *= ctx.c0);
        let mut rj = self.div_t.mul_vec(&mu);
        rj.iter_mut().for_each(|v| *v *= p.d0 / ctx.c0);
        let j = self.solve_mdiv(&rj)?;
        Ok((sigma, mu, j))
    }

    /// Full stage state consistent with `phi`.
    pub fn state_from_phi(&self, phi: &[f64], ctx: &StageContext) -> Result<StageState> {
        let (sigma, mu, j) = self.solve_auxiliary(phi, ctx)?;
        Ok(StageState { phi: phi.to_vec(), j, mu, sigma })
    }

    /// `H = int F(phi_h) + eps^2 / 2 |sigma_h|^2` with `sigma` the discrete gradient.
    pub fn energy_with_sigma(&self, phi: &[f64], sigma: &[f64]) -> f64 {
        let p = self.params;
        let bulk = self.disc.integrate_dg(phi, |_, v| p.potential_value(v));
        bulk + 0.5 * p.eps * p.eps * dot(sigma, &self.mdiv.mul_vec(sigma))
    }

    pub fn energy(&self, phi: &[f64]) -> Result<f64> {
        let mut rhs = self.div_t.mul_vec(phi);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let sigma = self.solve_mdiv(&rhs)?;
        Ok(self.energy_with_sigma(phi, &sigma))
    }

    /// `(1 / d0) j^T Mdiv j`.
    pub fn dissipation(&self, j: &[f64]) -> f64 {
        dot(j, &self.mdiv.mul_vec(j)) / self.params.d0
    }

    /// Explicit rate `M^{-1} B(phi, t)` with `B = -D j(phi) - T phi + f`.
    pub fn explicit_rate(&self, phi: &[f64], t: f64) -> Result<Vec<f64>> {
        // j does not depend on c0, so any context works
        let ctx = StageContext { alpha_dt: 0.0, tau: 0.0, c0: 1.0 };
        let (_, _, j) = self.solve_auxiliary(phi, &ctx)?;
        let mut b = self.forcing_vector(t);
        self.div.matvec_add(-1.0, &j, &mut b);
        if let Some(tm) = self.transport(t) {
            tm.matvec_add(-1.0, phi, &mut b);
        }
        Ok(self.mass_inv.apply(&b))
    }

    pub fn total_mass(&self, phi: &[f64]) -> f64 {
        self.mass.mul_vec(phi).iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn problem(n: usize, potential: Potential) -> CHProblem {
        let mesh = Mesh::build_structured(n, n, 1.0, 1.0, true, true).unwrap();
        let disc = Discretization::new(mesh, 2).unwrap();
        let mut params = CHParams::new(1.0, 0.1);
        params.potential = potential;
        CHProblem::new(disc, params, None, None, SolverConfig::default()).unwrap()
    }

    #[test]
    fn tau_from_parameters() {
        let p = CHParams::new(1.0, 0.1);
        let a = (1.0 - 1.0 / 2f64.sqrt()) * 1e-3;
        let ctx = StageContext::new(a, &p);
        // 0.1 * sqrt((1 - 1/sqrt 2) * 1e-3), evaluated independently in high precision
        assert!((ctx.tau - 1.711412337262568e-3).abs() < 1e-15);
        assert!((ctx.c0 - ctx.tau / 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_state_has_zero_residual() {
        let pr = problem(3, Potential::DoubleWell);
        let z = vec![0.0; pr.n_dg()];
        let zr = vec![0.0; pr.n_rt()];
        let st = StageState { phi: z.clone(), j: zr.clone(), mu: z.clone(), sigma: zr };
        let ctx = StageContext::new(1e-3, &pr.params);
        assert_eq!(pr.residual(&st, &z, &ctx, 0.0).max_norm(), 0.0);
    }

    #[test]
    fn pure_phase_is_stationary() {
        let pr = problem(3, Potential::DoubleWell);
        let ones = vec![1.0; pr.n_dg()];
        let ctx = StageContext::new(1e-3, &pr.params);
        let st = pr.state_from_phi(&ones, &ctx).unwrap();
        assert!(norm2(&st.sigma) < 1e-13 && norm2(&st.mu) < 1e-13 && norm2(&st.j) < 1e-13);
        let rhs = vec![0.5; pr.n_dg()];
        let r = pr.residual(&st, &rhs, &ctx, 0.0);
        let expect = pr.mass.mul_vec(&vec![0.5; pr.n_dg()]);
        for (a, b) in r.phi.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((pr.energy(&ones).unwrap()).abs() < 1e-14);
        assert!((pr.energy(&vec![0.0; pr.n_dg()]).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn f_second_derivative_at_unit_phase() {
        let pr = problem(2, Potential::DoubleWell);
        let f2 = pr.nonlinear_jacobian(&vec![1.0; pr.n_dg()]).unwrap();
        let mut m2 = pr.mass.clone();
        m2.scale(2.0);
        assert!(f2.max_abs_diff(&m2) < 1e-12);
    }
}
