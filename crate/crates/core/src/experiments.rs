//! Drivers that run cases end to end: single runs, the manufactured-solution
//! convergence study, and the solver robustness sweep.

use crate::cases::{case_manufactured, case_robustness, CaseSetup};
use crate::chcore::{CHProblem, SolverConfig, StageContext};
use crate::diagnostics::{convergence_rates, l2_error_dg, l2_error_rt};
use crate::error::Result;
use crate::timeloop::{advance, ButcherTableau, CHDirk, StageStats, StateDiagnostics, StepRecord};

/// Quadrature points per direction for error norms.
pub const ERROR_QUAD: usize = 5;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub phi: Vec<f64>,
    pub t: f64,
    /// stage statistics of every accepted step
    pub stage_stats: Vec<Vec<StageStats>>,
    pub phi_error: Option<f64>,
    pub sigma_error: Option<f64>,
}

impl RunOutput {
    pub fn accepted(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    /// Largest ratio of the final `||R_phi||` to the Newton threshold over
    /// all implicit stages.
    pub fn worst_conservation_ratio(&self) -> f64 {
        self.stage_stats.iter().flatten().map(|s| s.conservation_ratio).fold(0.0, f64::max)
    }
}

pub fn state_diagnostics(problem: &CHProblem, phi: &[f64]) -> Result<StateDiagnostics> {
    let ctx = StageContext { alpha_dt: 0.0, tau: 0.0, c0: 1.0 };
    let (sigma, _, j) = problem.solve_auxiliary(phi, &ctx)?;
    Ok(StateDiagnostics {
        mass: problem.total_mass(phi),
        energy: problem.energy_with_sigma(phi, &sigma),
        dissipation: problem.dissipation(&j),
    })
}

/// `L2` errors of `phi` and of its discrete gradient against the case's exact solution.
pub fn solution_errors(case: &CaseSetup, problem: &CHProblem, phi: &[f64], t: f64, nq: usize) -> Result<(Option<f64>, Option<f64>)> {
    let disc = &problem.disc;
    let e_phi = match &case.exact {
        Some(f) => Some(l2_error_dg(disc, phi, f, t, nq)?),
        None => None,
    };
    let e_sigma = match &case.exact_grad {
        Some(g) => {
            let mut rhs = problem.div_t.mul_vec(phi);
            rhs.iter_mut().for_each(|v| *v = -*v);
            let sigma = problem.solve_mdiv(&rhs)?;
            Some(l2_error_rt(disc, &sigma, g, t, nq)?)
        }
        None => None,
    };
    Ok((e_phi, e_sigma))
}

/// Runs a case with a prepared problem. `observe` sees every accepted state.
pub fn run_problem<O>(case: &CaseSetup, problem: &CHProblem, observe: O) -> Result<RunOutput>
where
    O: FnMut(&StepRecord, &[f64]) -> Result<()>,
{
    case.validate()?;
    let tab = ButcherTableau::trbdf2();
    let phi0 = case.initial.evaluate(&problem.disc);
    let mut sys = CHDirk::new(problem, tab.s);
    let res = advance(
        &mut sys,
        &tab,
        phi0,
        0.0,
        case.time.t_end,
        case.time.mode(),
        |phi| state_diagnostics(problem, phi),
        observe,
    )?;
    let (phi_error, sigma_error) = solution_errors(case, problem, &res.y, res.t, ERROR_QUAD)?;
    Ok(RunOutput {
        records: res.records,
        phi: res.y,
        t: res.t,
        stage_stats: res.stage_stats,
        phi_error,
        sigma_error,
    })
}

pub fn run_case(case: &CaseSetup, solver: SolverConfig) -> Result<(CHProblem, RunOutput)> {
    case.validate()?;
    let problem = case.problem(solver)?;
    let out = run_problem(case, &problem, |_, _| Ok(()))?;
    Ok((problem, out))
}

pub const CONVERGENCE_MESHES: [usize; 3] = [16, 32, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub n: Vec<usize>,
    pub h: Vec<f64>,
    pub phi_errors: Vec<f64>,
    pub sigma_errors: Vec<f64>,
    pub phi_rates: Vec<f64>,
    pub sigma_rates: Vec<f64>,
    pub wall_seconds: f64,
}

impl ConvergenceStudy {
    pub fn table(&self) -> String {
        let mut s = String::from("n,h,phi_error,phi_rate,sigma_error,sigma_rate\n");
        for i in 0..self.n.len() {
            let rate = |r: &[f64]| if i == 0 { String::from("-") } else { format!("{:.4}", r[i - 1]) };
            s.push_str(&format!(
                "{},{:.6e},{:.6e},{},{:.6e},{}\n",
                self.n[i],
                self.h[i],
                self.phi_errors[i],
                rate(&self.phi_rates),
                self.sigma_errors[i],
                rate(&self.sigma_rates)
            ));
        }
        s
    }

    pub fn min_rate(&self) -> f64 {
        self.phi_rates.iter().chain(&self.sigma_rates).copied().fold(f64::INFINITY, f64::min)
    }
}

/// Manufactured solution on each mesh, errors at the final time.
/// `adjust` may override case fields before each run.
pub fn convergence_study<F>(meshes: &[usize], solver: SolverConfig, mut adjust: F) -> Result<ConvergenceStudy>
where
    F: FnMut(&mut CaseSetup) -> Result<()>,
{
    let start = std::time::Instant::now();
    let mut study = ConvergenceStudy {
        n: meshes.to_vec(),
        h: Vec::new(),
        phi_errors: Vec::new(),
        sigma_errors: Vec::new(),
        phi_rates: Vec::new(),
        sigma_rates: Vec::new(),
        wall_seconds: 0.0,
    };
    for &n in meshes {
        let mut case = case_manufactured(n);
        adjust(&mut case)?;
        case.mesh.nx = n;
        case.mesh.ny = n;
        let (_, out) = run_case(&case, solver)?;
        study.h.push(case.mesh.lx / n as f64);
        study.phi_errors.push(out.phi_error.unwrap_or(f64::NAN));
        study.sigma_errors.push(out.sigma_error.unwrap_or(f64::NAN));
    }
    study.phi_rates = convergence_rates(&study.phi_errors, &study.h)?;
    study.sigma_rates = convergence_rates(&study.sigma_errors, &study.h)?;
    study.wall_seconds = start.elapsed().as_secs_f64();
    Ok(study)
}

/// Average GMRES iterations per Newton iteration over the implicit stages
/// of the last `window` accepted steps.
pub fn average_gmres_per_newton(stage_stats: &[Vec<StageStats>], window: usize) -> f64 {
    let tail = &stage_stats[stage_stats.len().saturating_sub(window)..];
    let (g, n) = tail
        .iter()
        .flatten()
        .fold((0usize, 0usize), |(g, n), s| (g + s.gmres_iters, n + s.newton_iters));
    if n == 0 {
        0.0
    } else {
        g as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessPoint {
    pub k_dx: u32,
    pub k_dt: u32,
    pub eps_pow: i32,
    pub avg_gmres: f64,
    pub avg_newton: f64,
    pub converged: bool,
}

pub fn robustness_point(k_dx: u32, k_dt: u32, eps_pow: i32, solver: SolverConfig) -> Result<RobustnessPoint> {
    let case = case_robustness(k_dx, k_dt, eps_pow);
    let (_, out) = run_case(&case, solver)?;
    let tail = &out.stage_stats[out.stage_stats.len().saturating_sub(10)..];
    let newton: usize = tail.iter().flatten().map(|s| s.newton_iters).sum();
    let stages = tail.iter().map(|s| s.len()).sum::<usize>().max(1);
    Ok(RobustnessPoint {
        k_dx,
        k_dt,
        eps_pow,
        avg_gmres: average_gmres_per_newton(&out.stage_stats, 10),
        avg_newton: newton as f64 / stages as f64,
        // every fixed step completed, so every stage met its tolerances
        converged: out.accepted().count() == 21,
    })
}

/// Rows of `(k, [eps = 2^-4, eps = 2^-6])` average iteration counts.
pub fn robustness_table(points: &[RobustnessPoint], by_dx: bool) -> String {
    let mut keys: Vec<u32> = points.iter().map(|p| if by_dx { p.k_dx } else { p.k_dt }).collect();
    keys.sort_unstable();
    keys.dedup();
    let head = if by_dx { "k_dx" } else { "k_dt" };
    let mut s = format!("{head},eps_2^-4,eps_2^-6\n");
    for k in keys {
        let cell = |e: i32| {
            points
                .iter()
                .find(|p| (if by_dx { p.k_dx } else { p.k_dt }) == k && p.eps_pow == e)
                .map_or(String::from("-"), |p| format!("{:.2}", p.avg_gmres))
        };
        s.push_str(&format!("{k},{},{}\n", cell(4), cell(6)));
    }
    s
}

/// `max / min` of the average iteration counts of one `eps` column.
pub fn column_ratio(points: &[RobustnessPoint], eps_pow: i32) -> f64 {
    let v: Vec<f64> = points.iter().filter(|p| p.eps_pow == eps_pow).map(|p| p.avg_gmres).collect();
    let hi = v.iter().copied().fold(0.0, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}
