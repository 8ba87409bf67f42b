//! Experimental setups: meshes, initial conditions, velocities, forcings and
//! time-stepping parameters of the benchmark problems.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{velocity_facet_violation, Discretization, FluxScheme};
use crate::chcore::{CHParams, CHProblem, SolverConfig, Velocity};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spaces::{ScalarFn, VectorFn};
use crate::timeloop::{ControllerParams, StepMode};

/// Largest admissible normal-velocity jump across facets.
pub const VELOCITY_JUMP_TOL: f64 = 1e-12;

pub const CASE_NAMES: [&str; 6] = ["manufactured", "spinodal2d", "transport", "robustness", "bubbles", "shear"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub periodic_x: bool,
    pub periodic_y: bool,
    /// vertex perturbation as a fraction of the cell size
    pub perturb: f64,
    pub perturb_seed: u64,
}

impl MeshSpec {
    pub fn periodic_square(n: usize) -> Self {
        MeshSpec { nx: n, ny: n, lx: 1.0, ly: 1.0, periodic_x: true, periodic_y: true, perturb: 0.0, perturb_seed: 0 }
    }

    pub fn build(&self) -> Result<Mesh> {
        let m = Mesh::build_structured(self.nx, self.ny, self.lx, self.ly, self.periodic_x, self.periodic_y)?;
        if self.perturb > 0.0 {
            m.perturb(self.perturb, self.perturb_seed)
        } else {
            Ok(m)
        }
    }
}

#[derive(Clone)]
pub enum InitialCondition {
    /// nodal interpolation of `phi(x, 0)`
    Analytic(ScalarFn),
    /// independent uniform values in `[lo, hi]` at the DG nodes, zero at
    /// nodes with `y` outside `strip`
    Random { seed: u64, lo: f64, hi: f64, strip: Option<(f64, f64)> },
}

impl std::fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialCondition::Analytic(_) => f.write_str("Analytic"),
            InitialCondition::Random { seed, lo, hi, strip } => f
                .debug_struct("Random")
                .field("seed", seed)
                .field("lo", lo)
                .field("hi", hi)
                .field("strip", strip)
                .finish(),
        }
    }
}

impl InitialCondition {
    pub fn evaluate(&self, disc: &Discretization) -> Vec<f64> {
        match self {
            InitialCondition::Analytic(f) => disc.dg.interpolate(&disc.mesh, f, 0.0),
            InitialCondition::Random { seed, lo, hi, strip } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let nodes = disc.dg.ref_nodes();
                let mut out = Vec::with_capacity(disc.n_dg());
                for c in 0..disc.mesh.num_cells() {
                    for r in &nodes {
                        let u: f64 = rng.random();
                        let y = disc.mesh.map_point(c, *r).x[1];
                        let inside = strip.is_none_or(|(a, b)| y >= a && y <= b);
                        out.push(if inside { lo + (hi - lo) * u } else { 0.0 });
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    /// initial step when adaptive, the step otherwise
    pub dt0: f64,
    pub adaptive: bool,
    pub controller: ControllerParams,
}

impl TimeConfig {
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        TimeConfig { t_end, dt0: dt, adaptive: false, controller: ControllerParams::default() }
    }

    pub fn adaptive(dt0: f64, t_end: f64) -> Self {
        TimeConfig { t_end, dt0, adaptive: true, controller: ControllerParams::default() }
    }

    pub fn mode(&self) -> StepMode {
        if self.adaptive {
            StepMode::Adaptive { dt0: self.dt0, params: self.controller }
        } else {
            StepMode::Fixed { dt: self.dt0 }
        }
    }
}

#[derive(Clone)]
pub struct CaseSetup {
    pub name: String,
    pub mesh: MeshSpec,
    /// Raviart–Thomas order; the DG space has order `degree - 1`
    pub degree: usize,
    pub params: CHParams,
    pub initial: InitialCondition,
    pub velocity: Option<Velocity>,
    pub forcing: Option<ScalarFn>,
    pub exact: Option<ScalarFn>,
    pub exact_grad: Option<VectorFn>,
    pub time: TimeConfig,
}

impl std::fmt::Debug for CaseSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaseSetup")
            .field("name", &self.name)
            .field("mesh", &self.mesh)
            .field("degree", &self.degree)
            .field("params", &self.params)
            .field("initial", &self.initial)
            .field("velocity", &self.velocity)
            .field("forcing", &self.forcing.is_some())
            .field("exact", &self.exact.is_some())
            .field("time", &self.time)
            .finish()
    }
}

impl CaseSetup {
    pub fn discretization(&self) -> Result<Discretization> {
        Discretization::new(self.mesh.build()?, self.degree)
    }

    /// Builds the problem after checking the velocity's facet continuity.
    pub fn problem(&self, solver: SolverConfig) -> Result<CHProblem> {
        let disc = self.discretization()?;
        if let Some(v) = &self.velocity {
            let times: &[f64] = if v.steady { &[0.0] } else { &[0.0, 0.5 * self.time.t_end, self.time.t_end] };
            for &t in times {
                let jump = velocity_facet_violation(&disc, &v.field, t);
                if jump > VELOCITY_JUMP_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "velocity of case {} violates normal continuity by {jump:.3e} at t = {t}",
                        self.name
                    )));
                }
            }
        }
        CHProblem::new(disc, self.params, self.velocity.clone(), self.forcing.clone(), solver)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Parse(format!("{key}: cannot parse {value:?} as {what}"));
        let float = || value.trim().parse::<f64>().map_err(|_| bad("a number"));
        let uint = || value.trim().parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let boolean = || match value.trim() {
            "true" | "on" | "1" | "yes" => Ok(true),
            "false" | "off" | "0" | "no" => Ok(false),
            _ => Err(bad("a boolean")),
        };
        match key {
            "mesh.nx" => self.mesh.nx = uint()?,
            "mesh.ny" => self.mesh.ny = uint()?,
            "mesh.n" => {
                let n = uint()?;
                self.mesh.nx = n;
                self.mesh.ny = n;
            }
            "mesh.lx" => self.mesh.lx = float()?,
            "mesh.ly" => self.mesh.ly = float()?,
            "mesh.periodic_x" => self.mesh.periodic_x = boolean()?,
            "mesh.periodic_y" => self.mesh.periodic_y = boolean()?,
            "mesh.perturb" => self.mesh.perturb = float()?,
            "mesh.seed" => self.mesh.perturb_seed = uint()? as u64,
            "degree" => self.degree = uint()?,
            "d0" | "params.d0" => self.params.d0 = float()?,
            "eps" | "params.eps" => self.params.eps = float()?,
            "params.kappa" => self.params.kappa_ip = float()?,
            "params.flux" => {
                self.params.flux = match value.trim() {
                    "upwind" => FluxScheme::Upwind,
                    "centered" => FluxScheme::Centered,
                    _ => return Err(bad("upwind|centered")),
                }
            }
            "seed" => match &mut self.initial {
                InitialCondition::Random { seed, .. } => *seed = uint()? as u64,
                InitialCondition::Analytic(_) => {
                    return Err(Error::InvalidArgument(format!("case {} has no random initial condition", self.name)))
                }
            },
            "t_end" | "time.t_end" => self.time.t_end = float()?,
            "dt" | "dt0" | "time.dt0" => self.time.dt0 = float()?,
            "adaptive" | "time.adaptive" => self.time.adaptive = boolean()?,
            "dt_max" | "time.dt_max" => self.time.controller.dt_max = float()?,
            "tol_a" | "controller.tol_a" => self.time.controller.tol_a = float()?,
            "tol_r" | "controller.tol_r" => self.time.controller.tol_r = float()?,
            _ => return Err(Error::InvalidArgument(format!("unknown case key {key:?}"))),
        }
        Ok(())
    }

    /// Every settable key with its current value, in a form accepted by [`CaseSetup::set`].
    pub fn settings(&self) -> Vec<(String, String)> {
        let m = &self.mesh;
        let p = &self.params;
        let t = &self.time;
        let flux = match p.flux {
            FluxScheme::Upwind => "upwind",
            FluxScheme::Centered => "centered",
        };
        let mut out: Vec<(&str, String)> = vec![
            ("mesh.nx", m.nx.to_string()),
            ("mesh.ny", m.ny.to_string()),
            ("mesh.lx", format!("{:?}", m.lx)),
            ("mesh.ly", format!("{:?}", m.ly)),
            ("mesh.periodic_x", m.periodic_x.to_string()),
            ("mesh.periodic_y", m.periodic_y.to_string()),
            ("mesh.perturb", format!("{:?}", m.perturb)),
            ("mesh.seed", m.perturb_seed.to_string()),
            ("degree", self.degree.to_string()),
            ("params.d0", format!("{:?}", p.d0)),
            ("params.eps", format!("{:?}", p.eps)),
            ("params.kappa", format!("{:?}", p.kappa_ip)),
            ("params.flux", flux.to_string()),
            ("time.t_end", format!("{:?}", t.t_end)),
            ("time.dt0", format!("{:?}", t.dt0)),
            ("time.adaptive", t.adaptive.to_string()),
            ("time.dt_max", format!("{:?}", t.controller.dt_max)),
            ("controller.tol_a", format!("{:?}", t.controller.tol_a)),
            ("controller.tol_r", format!("{:?}", t.controller.tol_r)),
        ];
        if let InitialCondition::Random { seed, .. } = &self.initial {
            out.push(("seed", seed.to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let t = &self.time;
        if !(t.t_end > 0.0 && t.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end = {} must be positive", t.t_end)));
        }
        if !(t.dt0 > 0.0 && t.dt0.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt0 = {} must be positive", t.dt0)));
        }
        if !(1..=3).contains(&self.degree) {
            return Err(Error::InvalidArgument(format!("degree {} not in 1..=3", self.degree)));
        }
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return Err(Error::InvalidArgument("mesh needs at least one cell per direction".into()));
        }
        Ok(())
    }
}

/// Case by name with its default parameters.
pub fn by_name(name: &str) -> Result<CaseSetup> {
    Ok(match name {
        "manufactured" => case_manufactured(16),
        "spinodal2d" => case_spinodal2d(1),
        "transport" => case_transport(1.0, FluxScheme::Upwind),
        "robustness" => case_robustness(0, 6, 4),
        "bubbles" => case_bubbles(),
        "shear" => case_shear(1),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown case {name:?}; valid cases: {}",
                CASE_NAMES.join(", ")
            )))
        }
    })
}

/// `S = -d Lap(phi^3 - phi - eps^2 Lap phi)` from the pointwise derivatives of
/// `phi`: value, gradient, Laplacian, and bilaplacian.
pub fn counter_forcing(d: f64, eps: f64, phi: f64, grad: [f64; 2], lap: f64, bilap: f64) -> f64 {
    let g2 = grad[0] * grad[0] + grad[1] * grad[1];
    let lap_cube = 3.0 * phi * phi * lap + 6.0 * phi * g2;
    -d * (lap_cube - lap - eps * eps * bilap)
}

/// `sin(2 pi x) sin(4 pi y)` on the periodic unit square, `d = 1`,
/// `eps = 0.1`, ten fixed steps of `1e-3`.
pub fn case_manufactured(n: usize) -> CaseSetup {
    let (d, eps) = (1.0, 0.1);
    let phi = |x: [f64; 2]| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin();
    let grad = |x: [f64; 2]| {
        [
            2.0 * PI * (2.0 * PI * x[0]).cos() * (4.0 * PI * x[1]).sin(),
            4.0 * PI * (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos(),
        ]
    };
    let k2 = 20.0 * PI * PI;
    let forcing: ScalarFn = Arc::new(move |x, _| {
        let p = phi(x);
        counter_forcing(d, eps, p, grad(x), -k2 * p, k2 * k2 * p)
    });
    let exact: ScalarFn = Arc::new(move |x, _| phi(x));
    CaseSetup {
        name: "manufactured".into(),
        mesh: MeshSpec::periodic_square(n),
        degree: 2,
        params: CHParams::new(d, eps),
        initial: InitialCondition::Analytic(exact.clone()),
        velocity: None,
        forcing: Some(forcing),
        exact: Some(exact),
        exact_grad: Some(Arc::new(move |x, _| grad(x))),
        time: TimeConfig::fixed(1e-3, 1e-2),
    }
}

/// Two-dimensional analogue of the random spinodal test: `d = 0.1`,
/// `eps = 0.02`, 32x32 periodic cells, adaptive from `1e-4` to `t = 4`.
pub fn case_spinodal2d(seed: u64) -> CaseSetup {
    CaseSetup {
        name: "spinodal2d".into(),
        mesh: MeshSpec::periodic_square(32),
        degree: 2,
        params: CHParams::new(0.1, 0.02),
        initial: InitialCondition::Random { seed, lo: -1.0, hi: 1.0, strip: None },
        velocity: None,
        forcing: None,
        exact: None,
        exact_grad: None,
        time: TimeConfig::adaptive(1e-4, 4.0),
    }
}

pub const TRANSPORT_SIGMA0: f64 = 0.03;

/// Smoothed step `f(a, a0)` and its first four derivatives in `a`.
pub fn smoothed_step(a: f64, a0: f64, s0: f64) -> [f64; 5] {
    let derivs = |z: f64| {
        let h = z.tanh();
        let h1 = 1.0 - h * h;
        [h, h1, -2.0 * h * h1, (6.0 * h * h - 2.0) * h1, h1 * (16.0 * h - 24.0 * h * h * h)]
    };
    let p = derivs((a - a0) / s0);
    let m = derivs((a - (1.0 - a0)) / s0);
    let mut out = [0.0; 5];
    for n in 0..5 {
        out[n] = 0.5 * (p[n] - m[n]) / s0.powi(n as i32);
    }
    out
}

/// Rectangle profile `f(x, 0.4) f(y, 0.2)` advected with `(u0, 0)` on a
/// perturbed 20x20 periodic mesh, `d = 1/4000`, `eps = 1/100`, fixed
/// `dt = 0.01` to `t = 8`. The moving counter-forcing makes
/// `phi(x, t) = phi_IC(x - u t)` exact.
pub fn case_transport(u0: f64, scheme: FluxScheme) -> CaseSetup {
    let (d, eps, s0) = (1.0 / 4000.0, 1.0 / 100.0, TRANSPORT_SIGMA0);
    let shifted = move |x: [f64; 2], t: f64| [(x[0] - u0 * t).rem_euclid(1.0), x[1]];
    let exact: ScalarFn = Arc::new(move |x, t| {
        let p = shifted(x, t);
        smoothed_step(p[0], 0.4, s0)[0] * smoothed_step(p[1], 0.2, s0)[0]
    });
    let exact_grad: VectorFn = Arc::new(move |x, t| {
        let p = shifted(x, t);
        let (f, g) = (smoothed_step(p[0], 0.4, s0), smoothed_step(p[1], 0.2, s0));
        [f[1] * g[0], f[0] * g[1]]
    });
    let forcing: ScalarFn = Arc::new(move |x, t| {
        let p = shifted(x, t);
        let (f, g) = (smoothed_step(p[0], 0.4, s0), smoothed_step(p[1], 0.2, s0));
        let phi = f[0] * g[0];
        let grad = [f[1] * g[0], f[0] * g[1]];
        let lap = f[2] * g[0] + f[0] * g[2];
        let bilap = f[4] * g[0] + 2.0 * f[2] * g[2] + f[0] * g[4];
        counter_forcing(d, eps, phi, grad, lap, bilap)
    });
    let velocity = (u0 != 0.0).then(|| Velocity { field: Arc::new(move |_, _| [u0, 0.0]), steady: true });
    let mut params = CHParams::new(d, eps);
    params.flux = scheme;
    let name = match scheme {
        FluxScheme::Upwind => "transport",
        FluxScheme::Centered => "transport-centered",
    };
    CaseSetup {
        name: name.into(),
        mesh: MeshSpec { perturb: 0.06, perturb_seed: 2024, ..MeshSpec::periodic_square(20) },
        degree: 2,
        params,
        initial: InitialCondition::Analytic(exact.clone()),
        velocity,
        forcing: Some(forcing),
        exact: Some(exact),
        exact_grad: Some(exact_grad),
        time: TimeConfig::fixed(0.01, 8.0),
    }
}

/// `eps = 2^-eps_pow`, mesh `(8 2^k_dx)^2`, 20 fixed steps of `0.002 2^-k_dt`.
pub fn case_robustness(k_dx: u32, k_dt: u32, eps_pow: i32) -> CaseSetup {
    let n = 8usize << k_dx;
    let dt = 0.002 * 0.5f64.powi(k_dt as i32);
    let ic: ScalarFn =
        Arc::new(|x, _| 0.5 * (1.0 - (4.0 * PI * x[0]).cos()) * (1.0 - (2.0 * PI * x[1]).cos()) - 1.0);
    CaseSetup {
        name: "robustness".into(),
        mesh: MeshSpec::periodic_square(n),
        degree: 2,
        params: CHParams::new(1.0, 2.0f64.powi(-eps_pow)),
        initial: InitialCondition::Analytic(ic),
        velocity: None,
        forcing: None,
        exact: None,
        exact_grad: None,
        time: TimeConfig::fixed(dt, 20.0 * dt),
    }
}

/// `(x_i, y_i, r_i)` of the five elliptic bubbles.
pub const BUBBLES: [(f64, f64, f64); 5] =
    [(0.50, 0.32, 0.23), (1.00, 0.65, 0.25), (1.59, 0.60, 0.28), (0.55, 0.80, 0.09), (1.20, 0.17, 0.11)];
pub const BUBBLE_DELTA0: f64 = 0.2;

pub fn bubble_indicator(x: [f64; 2]) -> f64 {
    let inside = BUBBLES.iter().any(|&(xi, yi, ri)| {
        let (dx, dy) = (x[0] - xi, x[1] - yi);
        dx * dx + (1.0 - BUBBLE_DELTA0) * dy * dy < ri * ri
    });
    if inside {
        1.0
    } else {
        -1.0
    }
}

/// Five elliptic bubbles on `[0,2] x [0,1]`, 64x32 cells, `d = 1/100`,
/// `eps = 1/50`, adaptive from `1e-5` with `dt_max = 12` to `t = 30`.
pub fn case_bubbles() -> CaseSetup {
    let mut time = TimeConfig::adaptive(1e-5, 30.0);
    time.controller.dt_max = 12.0;
    CaseSetup {
        name: "bubbles".into(),
        mesh: MeshSpec { nx: 64, ny: 32, lx: 2.0, ..MeshSpec::periodic_square(1) },
        degree: 2,
        params: CHParams::new(1.0 / 100.0, 1.0 / 50.0),
        initial: InitialCondition::Analytic(Arc::new(|x, _| bubble_indicator(x))),
        velocity: None,
        forcing: None,
        exact: None,
        exact_grad: None,
        time,
    }
}

/// Random strip `y in [0.05, 0.95]` sheared by `u = (1 + y, 0)` between walls
/// at `y = 0, 1`; perturbed 64x64 mesh, `d = 1/400`, `eps = 1/50`, adaptive
/// from `1e-5` to `t = 20`.
pub fn case_shear(seed: u64) -> CaseSetup {
    CaseSetup {
        name: "shear".into(),
        mesh: MeshSpec {
            periodic_y: false,
            perturb: 0.06,
            perturb_seed: seed,
            ..MeshSpec::periodic_square(64)
        },
        degree: 2,
        params: CHParams::new(1.0 / 400.0, 1.0 / 50.0),
        initial: InitialCondition::Random { seed, lo: -1.0, hi: 1.0, strip: Some((0.05, 0.95)) },
        velocity: Some(Velocity { field: Arc::new(|x, _| [1.0 + x[1], 0.0]), steady: true }),
        forcing: None,
        exact: None,
        exact_grad: None,
        time: TimeConfig::adaptive(1e-5, 20.0),
    }
}
