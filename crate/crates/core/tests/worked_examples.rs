//! End-to-end checks on small configurations of the shipped cases.

use chdg_core::assembly::{assemble_forcing, Discretization};
use chdg_core::cases::{case_manufactured, case_spinodal2d, TimeConfig};
use chdg_core::chcore::{
    newton_solve, C0Mode, CHParams, CHProblem, Potential, SchurPreconditioner, SolverConfig, StageContext,
    SwappedJacobian,
};
use chdg_core::diagnostics::{
    field_vtk, l2_error_dg, l2_error_rt, read_timeseries, read_vtk_point_scalars, write_field_vtk, write_timeseries,
};
use chdg_core::experiments::{run_case, run_problem, ERROR_QUAD};
use chdg_core::linalg::{cg, gmres, GmresOptions, Identity, LinearOperator};
use chdg_core::sparse::{dot, norm2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stage residual of the manufactured case at the `L2` projection of the
/// exact solution, measured in the `(M + L)^-1` norm.
fn consistency_residual(n: usize) -> f64 {
    let case = case_manufactured(n);
    let pr = case.problem(SolverConfig::default()).unwrap();
    let phi = pr.mass_inv.apply(&assemble_forcing(&pr.disc, case.exact.as_ref().unwrap(), 0.0));
    let a = (1.0 - 0.5f64.sqrt()) * 1e-3;
    let ctx = StageContext::new(a, &pr.params);
    let state = pr.state_from_phi(&phi, &ctx).unwrap();
    let r = pr.residual(&state, &phi, &ctx, 0.0);
    let op = pr.mass.add(1.0, &pr.lap, 1.0);
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let (z, rep) = cg(&op, &r.phi, &inv_diag, 1e-12, 10_000);
    assert!(rep.converged);
    dot(&r.phi, &z).sqrt() / a
}

#[test]
fn manufactured_residual_is_second_order_consistent() {
    let r: Vec<f64> = [16, 32, 64].iter().map(|&n| consistency_residual(n)).collect();
    let (early, late) = (r[0] / r[1], r[1] / r[2]);
    assert!(early > 2.5 && late > 3.2 && late > early, "residuals {r:?}");
}

#[test]
fn gradient_of_interpolant_converges_at_second_order() {
    let err = |n: usize| {
        let case = case_manufactured(n);
        let pr = case.problem(SolverConfig::default()).unwrap();
        let phi = case.initial.evaluate(&pr.disc);
        let mut rhs = pr.div_t.mul_vec(&phi);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let sigma = pr.solve_mdiv(&rhs).unwrap();
        l2_error_rt(&pr.disc, &sigma, case.exact_grad.as_ref().unwrap(), 0.0, ERROR_QUAD).unwrap()
    };
    let rate = (err(16) / err(32)).log2();
    assert!(rate > 1.8, "rate {rate:.3}");
}

#[test]
fn manufactured_forcing_matches_refined_quadrature() {
    let case = case_manufactured(16);
    let s = case.forcing.clone().unwrap();
    let coarse = assemble_forcing(&case.discretization().unwrap(), &s, 0.0);
    let fine_disc = Discretization::with_quadrature(case.mesh.build().unwrap(), case.degree, 12).unwrap();
    let fine = assemble_forcing(&fine_disc, &s, 0.0);
    let diff: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| a - b).collect();
    let rel = norm2(&diff) / norm2(&fine);
    assert!(rel < 1e-8, "relative difference {rel:.3e}");
}

#[test]
fn steady_manufactured_solution_settles() {
    let case = case_manufactured(16);
    let pr = case.problem(SolverConfig::default()).unwrap();
    let norm = |v: &[f64]| dot(v, &pr.mass.mul_vec(v)).sqrt();
    let mut prev = case.initial.evaluate(&pr.disc);
    let mut increments = Vec::new();
    let out = run_problem(&case, &pr, |_, y| {
        let d: Vec<f64> = y.iter().zip(&prev).map(|(a, b)| a - b).collect();
        increments.push(norm(&d));
        prev = y.to_vec();
        Ok(())
    })
    .unwrap();
    assert_eq!(increments.len(), 10);
    // the interpolant relaxes onto the discrete steady state
    assert!(increments.windows(2).all(|w| w[1] < w[0]), "{increments:?}");
    assert!(increments[9] < 0.05 * increments[0], "{increments:?}");

    let err = out.phi_error.unwrap();
    let err_fine = l2_error_dg(&pr.disc, &out.phi, case.exact.as_ref().unwrap(), out.t, ERROR_QUAD + 1).unwrap();
    assert!((err - err_fine).abs() < 0.01 * err, "quadrature guard {err:.6e} vs {err_fine:.6e}");
}

fn spinodal_problem(n: usize, params: CHParams) -> (CHProblem, Vec<f64>) {
    let mut case = case_spinodal2d(1);
    case.mesh.nx = n;
    case.mesh.ny = n;
    case.params = params;
    let pr = case.problem(SolverConfig::default()).unwrap();
    let phi = case.initial.evaluate(&pr.disc);
    (pr, phi)
}

#[test]
fn schur_preconditioner_cuts_gmres_iterations() {
    let params = case_spinodal2d(1).params;
    let (pr, phi) = spinodal_problem(16, params);
    let ctx = StageContext::new((1.0 - 0.5f64.sqrt()) * 1e-4, &params);
    let jac = SwappedJacobian::new(&pr, &phi, ctx, 0.0).unwrap();
    let pc = SchurPreconditioner::new(&jac, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rhs: Vec<f64> = (0..jac.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let opts = GmresOptions { rtol: 1e-8, max_iter: 4000, restart: 200 };
    let (_, with) = gmres(&jac, &rhs, &pc, opts, None);
    let (_, without) = gmres(&jac, &rhs, &Identity(jac.nrows()), opts, None);
    assert!(with.converged);
    assert!(
        (with.iterations as f64) <= 0.6 * without.iterations as f64,
        "preconditioned {} vs unpreconditioned {}",
        with.iterations,
        without.iterations
    );
}

#[test]
fn linear_stage_needs_one_newton_iteration() {
    let mut params = CHParams::new(1.0, 0.1);
    params.potential = Potential::Zero;
    let (pr, phi) = spinodal_problem(8, params);
    let ctx = StageContext::new(1e-3, &params);
    let guess = pr.state_from_phi(&phi, &ctx).unwrap();
    let rhs: Vec<f64> = phi.iter().map(|v| 0.5 * v).collect();
    let (_, stats) = newton_solve(&pr, &rhs, &ctx, 0.0, guess).unwrap();
    assert_eq!(stats.iterations, 1, "residuals {:?}", stats.residuals);
}

#[test]
fn spinodal_stage_needs_few_newton_iterations() {
    let params = case_spinodal2d(1).params;
    let (pr, phi) = spinodal_problem(32, params);
    let ctx = StageContext::new((1.0 - 0.5f64.sqrt()) * 1e-4, &params);
    let guess = pr.state_from_phi(&phi, &ctx).unwrap();
    let (_, stats) = newton_solve(&pr, &phi, &ctx, 0.0, guess).unwrap();
    assert!(stats.iterations <= 3, "residuals {:?}", stats.residuals);
}

#[test]
fn trajectory_does_not_depend_on_c0() {
    let run = |mode: C0Mode| {
        let mut case = case_spinodal2d(1);
        case.params.c0_mode = mode;
        case.time = TimeConfig::fixed(1e-4, 5e-4);
        run_case(&case, SolverConfig::default()).unwrap().1
    };
    let (a, b) = (run(C0Mode::Tau), run(C0Mode::Unit));
    assert_eq!(a.accepted().count(), 6);
    let diff: Vec<f64> = a.phi.iter().zip(&b.phi).map(|(x, y)| x - y).collect();
    let rel = norm2(&diff) / norm2(&a.phi);
    assert!(rel < 1e-8, "relative difference {rel:.3e}");
}

#[test]
fn csv_and_vtk_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut case = case_manufactured(4);
    case.time = TimeConfig::fixed(1e-3, 3e-3);
    let (pr, out) = run_case(&case, SolverConfig::default()).unwrap();

    let csv = dir.path().join("ts.csv");
    write_timeseries(&out.records, &csv).unwrap();
    assert_eq!(read_timeseries(&csv).unwrap(), out.records);

    let ones = vec![1.0; pr.n_dg()];
    let vtk = dir.path().join("ones.vtk");
    write_field_vtk(&pr.disc, &[("phi", &ones)], &[], &vtk).unwrap();
    let vals = read_vtk_point_scalars(&vtk).unwrap();
    assert_eq!(vals.len(), 4 * pr.disc.mesh.num_cells());
    assert!(vals.iter().all(|&v| v == 1.0));

    let text = field_vtk(&pr.disc, &[("phi", &out.phi)], &[]).unwrap();
    assert!(text.starts_with("# vtk DataFile"));
}
