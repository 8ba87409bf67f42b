//! Structure-preserving Cahn–Hilliard solver: mixed DG discretization on
//! quadrilaterals, upwind advection, TR-BDF2 time stepping with an embedded
//! error controller, and a Schur-complement preconditioned Newton–Krylov solver.

pub mod assembly;
pub mod cases;
pub mod chcore;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod spaces;
pub mod sparse;
pub mod timeloop;

pub use assembly::{Discretization, FluxScheme};
pub use cases::CaseSetup;
pub use chcore::{CHParams, CHProblem, SolverConfig};
pub use error::{Error, Result};
pub use mesh::Mesh;
pub use sparse::CsrMatrix;
pub use timeloop::{ButcherTableau, ControllerParams, StepRecord};
