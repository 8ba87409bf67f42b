//! Fixtures shared by the criterion benchmarks in `benches/`.

use chdg_core::cases::case_spinodal2d;
use chdg_core::chcore::{CHProblem, SolverConfig, StageContext, StageState};

/// A spinodal problem on an `n x n` mesh with its random initial field.
pub struct Fixture {
    pub problem: CHProblem,
    pub phi: Vec<f64>,
    pub ctx: StageContext,
}

impl Fixture {
    pub fn spinodal(n: usize) -> Fixture {
        let mut case = case_spinodal2d(1);
        case.mesh.nx = n;
        case.mesh.ny = n;
        let problem = case.problem(SolverConfig::default()).expect("spinodal problem");
        let phi = case.initial.evaluate(&problem.disc);
        let ctx = StageContext::new((1.0 - 0.5f64.sqrt()) * 1e-4, &problem.params);
        Fixture { problem, phi, ctx }
    }

    pub fn state(&self) -> StageState {
        self.problem.state_from_phi(&self.phi, &self.ctx).expect("auxiliary solve")
    }
}
