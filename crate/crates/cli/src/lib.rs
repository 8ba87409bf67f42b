//! Configuration handling and subcommands of the `chdg` driver.
//!
//! Configuration is flat `key=value` text with dotted namespaces. Case keys
//! (`mesh.nx`, `params.eps`, `time.t_end`, ...) are forwarded to the case;
//! `solver.*`, `output.*` and `robustness.*` keys are handled here.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chdg_core::cases::{by_name, CaseSetup};
use chdg_core::chcore::{BlockShape, SolverConfig, StageContext};
use chdg_core::diagnostics::{relative_mass_drift, write_field_vtk, write_timeseries};
use chdg_core::experiments::{
    column_ratio, convergence_study, robustness_point, robustness_table, run_problem, CONVERGENCE_MESHES,
};
use chdg_core::linalg::InnerMethod;
use chdg_core::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Convergence runs fail below this observed order.
pub const MIN_RATE: f64 = 1.8;
/// Robustness runs fail above this max/min iteration ratio per column.
pub const MAX_ITER_RATIO: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Convergence,
    Robustness,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: String,
    pub out: PathBuf,
    pub solver: SolverConfig,
    /// case-level overrides in application order
    pub overrides: Vec<(String, String)>,
    /// VTK snapshot every this many accepted steps; 0 writes only the
    /// initial and final states
    pub vtk_every: usize,
    /// one stderr line per accepted step
    pub progress: bool,
    pub k_dx_max: u32,
    pub dt_sweep: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: "manufactured".into(),
            out: PathBuf::from("out"),
            solver: SolverConfig::default(),
            overrides: Vec::new(),
            vtk_every: 0,
            progress: false,
            k_dx_max: 3,
            dt_sweep: false,
        }
    }
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(split_pair(line).map_err(|_| Error::Parse(format!("line {}: expected key=value, got {raw:?}", no + 1)))?);
    }
    Ok(out)
}

pub fn split_pair(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Parse(format!("expected key=value, got {s:?}"))),
    }
}

fn parse_inner(v: &str) -> Result<InnerMethod> {
    let bad = || Error::Parse(format!("inner solver {v:?}: expected direct, chebyshev:N or cg:N"));
    let (name, arg) = v.split_once(':').unwrap_or((v, ""));
    let n = || arg.parse::<usize>().map_err(|_| bad());
    match name {
        "direct" => Ok(InnerMethod::Direct),
        "chebyshev" => Ok(InnerMethod::ChebyshevJacobi(n()?)),
        "cg" => Ok(InnerMethod::CgJacobi(n()?)),
        _ => Err(bad()),
    }
}

fn fmt_inner(m: InnerMethod) -> String {
    match m {
        InnerMethod::Direct => "direct".into(),
        InnerMethod::ChebyshevJacobi(n) => format!("chebyshev:{n}"),
        InnerMethod::CgJacobi(n) => format!("cg:{n}"),
    }
}

impl RunConfig {
    /// Applies pairs in order. Case keys are collected and checked against
    /// the final case in [`RunConfig::case_setup`].
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Parse(format!("{key}: cannot parse {value:?} as {what}"));
        let float = || value.parse::<f64>().map_err(|_| bad("a number"));
        let uint = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let s = &mut self.solver;
        match key {
            "case" => self.case = value.to_string(),
            "out" | "output.dir" => self.out = PathBuf::from(value),
            "output.vtk_every" => self.vtk_every = uint()?,
            "output.progress" => self.progress = parse_bool(key, value)?,
            "solver.newton_rtol" => s.newton_rtol = float()?,
            "solver.newton_atol" => s.newton_atol = float()?,
            "solver.newton_max_iter" => s.newton_max_iter = uint()?,
            "solver.gmres_rtol" => s.gmres_rtol = float()?,
            "solver.gmres_restart" => s.gmres_restart = uint()?,
            "solver.gmres_max_iter" => s.gmres_max_iter = uint()?,
            "solver.sor_omega" => s.sor_omega = float()?,
            "solver.sor_sweeps" => s.sor_sweeps = uint()?,
            "solver.inner" => {
                s.inner_phi = parse_inner(value)?;
                s.inner_mu = s.inner_phi;
            }
            "solver.inner_phi" => s.inner_phi = parse_inner(value)?,
            "solver.inner_mu" => s.inner_mu = parse_inner(value)?,
            "solver.shape" => {
                s.shape = match value {
                    "diagonal" => BlockShape::Diagonal,
                    "lower" => BlockShape::Lower,
                    "full" => BlockShape::Full,
                    _ => return Err(bad("diagonal|lower|full")),
                }
            }
            "robustness.k_dx_max" => self.k_dx_max = uint()? as u32,
            "robustness.dt_sweep" => self.dt_sweep = parse_bool(key, value)?,
            _ => {
                // validated against a case in case_setup; reject obvious typos now
                let mut probe = by_name("spinodal2d")?;
                match probe.set(key, value) {
                    Ok(()) => {}
                    Err(Error::InvalidArgument(m)) if m.starts_with("unknown") => {
                        return Err(Error::InvalidArgument(format!("unknown configuration key {key:?}")))
                    }
                    Err(e) => return Err(e),
                }
                self.overrides.push((key.to_string(), value.to_string()));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.solver;
        for (name, v) in [("solver.newton_rtol", s.newton_rtol), ("solver.gmres_rtol", s.gmres_rtol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if !(s.sor_omega > 0.0 && s.sor_omega < 2.0) {
            return Err(Error::InvalidArgument(format!("solver.sor_omega = {} must lie in (0, 2)", s.sor_omega)));
        }
        if s.sor_sweeps == 0 || s.newton_max_iter == 0 || s.gmres_restart == 0 || s.gmres_max_iter == 0 {
            return Err(Error::InvalidArgument("iteration counts must be positive".into()));
        }
        Ok(())
    }

    pub fn case_setup(&self) -> Result<CaseSetup> {
        let mut c = by_name(&self.case)?;
        for (k, v) in &self.overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Fully resolved configuration; feeding it back through `--config`
    /// reproduces the run.
    pub fn manifest(&self, command: Command, case: Option<&CaseSetup>) -> String {
        let s = &self.solver;
        let mut m = String::new();
        let _ = writeln!(m, "# chdg {} manifest", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "# command = {command:?}");
        let _ = writeln!(m, "case={}", self.case);
        let _ = writeln!(m, "output.vtk_every={}", self.vtk_every);
        let _ = writeln!(m, "output.progress={}", self.progress);
        for (k, v) in [
            ("solver.newton_rtol", format!("{:?}", s.newton_rtol)),
            ("solver.newton_atol", format!("{:?}", s.newton_atol)),
            ("solver.newton_max_iter", s.newton_max_iter.to_string()),
            ("solver.gmres_rtol", format!("{:?}", s.gmres_rtol)),
            ("solver.gmres_restart", s.gmres_restart.to_string()),
            ("solver.gmres_max_iter", s.gmres_max_iter.to_string()),
            ("solver.sor_omega", format!("{:?}", s.sor_omega)),
            ("solver.sor_sweeps", s.sor_sweeps.to_string()),
            ("solver.inner_phi", fmt_inner(s.inner_phi)),
            ("solver.inner_mu", fmt_inner(s.inner_mu)),
            ("solver.shape", format!("{:?}", s.shape).to_lowercase()),
            ("robustness.k_dx_max", self.k_dx_max.to_string()),
            ("robustness.dt_sweep", self.dt_sweep.to_string()),
        ] {
            let _ = writeln!(m, "{k}={v}");
        }
        match case {
            Some(c) => {
                for (k, v) in c.settings() {
                    let _ = writeln!(m, "{k}={v}");
                }
            }
            None => {
                for (k, v) in &self.overrides {
                    let _ = writeln!(m, "{k}={v}");
                }
            }
        }
        m
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// Maps library errors to exit codes.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) | Error::Geometry(_) | Error::SpaceMismatch(_) | Error::Io(_) => {
            EXIT_VALIDATION
        }
        _ => EXIT_SOLVER,
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_vtk(problem: &chdg_core::CHProblem, phi: &[f64], path: &Path) -> Result<()> {
    let ctx = StageContext { alpha_dt: 0.0, tau: 0.0, c0: 1.0 };
    let (sigma, mu, j) = problem.solve_auxiliary(phi, &ctx)?;
    write_field_vtk(&problem.disc, &[("phi", phi), ("mu", &mu)], &[("sigma", &sigma), ("j", &j)], path)
}

/// Runs one case; returns a human-readable summary.
pub fn cmd_run(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let case = cfg.case_setup()?;
    prepare_out(&cfg.out)?;
    fs::write(cfg.out.join("manifest.txt"), cfg.manifest(Command::Run, Some(&case)))?;
    let problem = case.problem(cfg.solver)?;
    let vtk_dir = cfg.out.join("vtk");
    fs::create_dir_all(&vtk_dir)?;
    let phi0 = case.initial.evaluate(&problem.disc);
    write_vtk(&problem, &phi0, &vtk_dir.join("phi_00000.vtk"))?;
    let mut accepted = 0usize;
    let out = run_problem(&case, &problem, |rec, phi| {
        accepted += 1;
        if cfg.progress {
            eprintln!("step {:6}  t = {:.6e}  dt = {:.3e}  newton {:3}  gmres {:5}", rec.step, rec.t, rec.dt, rec.newton_iters, rec.gmres_iters_total);
        }
        if cfg.vtk_every > 0 && accepted.is_multiple_of(cfg.vtk_every) {
            write_vtk(&problem, phi, &vtk_dir.join(format!("phi_{:05}.vtk", rec.step)))?;
        }
        Ok(())
    })?;
    write_vtk(&problem, &out.phi, &vtk_dir.join("phi_final.vtk"))?;
    write_timeseries(&out.records, &cfg.out.join("timeseries.csv"))?;

    let acc: Vec<_> = out.accepted().collect();
    let rejected = out.records.len() - acc.len();
    let dts = acc.iter().skip(1).map(|r| r.dt);
    let (dmin, dmax) = dts.fold((f64::INFINITY, 0.0f64), |(a, b), d| (a.min(d), b.max(d)));
    let mut s = String::new();
    let _ = writeln!(s, "case {} reached t = {} in {} accepted steps ({} rejected)", case.name, out.t, acc.len() - 1, rejected);
    let _ = writeln!(s, "dt range [{dmin:.3e}, {dmax:.3e}]");
    let _ = writeln!(s, "relative mass drift {:.3e}", relative_mass_drift(&out.records));
    if let Some(last) = acc.last() {
        let _ = writeln!(s, "final energy {:.10e}", last.energy);
    }
    if let Some(e) = out.phi_error {
        let _ = writeln!(s, "L2 error phi {e:.6e}");
    }
    if let Some(e) = out.sigma_error {
        let _ = writeln!(s, "L2 error sigma {e:.6e}");
    }
    let _ = writeln!(s, "output written to {}", cfg.out.display());
    Ok(s)
}

/// Manufactured-solution study; the flag is false when a rate is below [`MIN_RATE`].
pub fn cmd_convergence(cfg: &RunConfig) -> Result<(String, bool)> {
    cfg.validate()?;
    prepare_out(&cfg.out)?;
    fs::write(cfg.out.join("manifest.txt"), cfg.manifest(Command::Convergence, None))?;
    let study = convergence_study(&CONVERGENCE_MESHES, cfg.solver, |c| {
        for (k, v) in &cfg.overrides {
            c.set(k, v)?;
        }
        Ok(())
    })?;
    let table = study.table();
    fs::write(cfg.out.join("convergence.csv"), &table)?;
    let ok = study.min_rate() >= MIN_RATE;
    let mut s = table;
    let _ = writeln!(s, "wall time {:.1} s", study.wall_seconds);
    let _ = writeln!(s, "{} (minimum rate {:.3}, required {MIN_RATE})", if ok { "PASS" } else { "FAIL" }, study.min_rate());
    Ok((s, ok))
}

/// Solver robustness sweep; the flag is false when a solve failed or an
/// iteration ratio exceeds [`MAX_ITER_RATIO`].
pub fn cmd_robustness(cfg: &RunConfig) -> Result<(String, bool)> {
    cfg.validate()?;
    prepare_out(&cfg.out)?;
    fs::write(cfg.out.join("manifest.txt"), cfg.manifest(Command::Robustness, None))?;
    let mut s = String::new();
    let mut ok = true;
    let mut by_dx = Vec::new();
    for k_dx in 0..=cfg.k_dx_max {
        for eps_pow in [4, 6] {
            by_dx.push(robustness_point(k_dx, 6, eps_pow, cfg.solver)?);
        }
    }
    let table = robustness_table(&by_dx, true);
    fs::write(cfg.out.join("robustness_dx.csv"), &table)?;
    let _ = writeln!(s, "average GMRES iterations per Newton iteration, k_dt = 6");
    s.push_str(&table);
    for eps_pow in [4, 6] {
        let r = column_ratio(&by_dx, eps_pow);
        let pass = r <= MAX_ITER_RATIO;
        ok &= pass;
        let _ = writeln!(s, "eps = 2^-{eps_pow}: max/min ratio {r:.3} {}", if pass { "PASS" } else { "FAIL" });
    }
    ok &= by_dx.iter().all(|p| p.converged);
    if cfg.dt_sweep {
        let mut by_dt = Vec::new();
        for k_dt in 3..=8 {
            for eps_pow in [4, 6] {
                by_dt.push(robustness_point(3, k_dt, eps_pow, cfg.solver)?);
            }
        }
        let table = robustness_table(&by_dt, false);
        fs::write(cfg.out.join("robustness_dt.csv"), &table)?;
        let _ = writeln!(s, "average GMRES iterations per Newton iteration, k_dx = 3");
        s.push_str(&table);
        ok &= by_dt.iter().all(|p| p.converged);
    }
    Ok((s, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_parse_comments_and_spaces() {
        let p = parse_pairs("# header\ncase = bubbles\n\nmesh.nx=8 # trailing\n").unwrap();
        assert_eq!(p, vec![("case".into(), "bubbles".into()), ("mesh.nx".into(), "8".into())]);
        assert!(parse_pairs("novalue\n").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut c = RunConfig::default();
        assert!(c.set("solver.bogus", "1").is_err());
        assert!(c.set("mesh.bogus", "1").is_err());
        assert!(c.set("solver.shape", "upper").is_err());
        c.set("solver.inner", "cg:5").unwrap();
        assert_eq!(c.solver.inner_mu, InnerMethod::CgJacobi(5));
    }

    #[test]
    fn defaults_follow_paper_settings() {
        let c = RunConfig::default();
        assert_eq!(c.solver.gmres_rtol, 1e-8);
        assert_eq!(c.solver.newton_rtol, 1e-8);
        assert_eq!(c.solver.sor_sweeps, 1);
    }

    #[test]
    fn manifest_reproduces_config() {
        let mut c = RunConfig::default();
        c.apply(&[("case".into(), "bubbles".into()), ("time.t_end".into(), "2".into()), ("solver.shape".into(), "full".into())])
            .unwrap();
        let case = c.case_setup().unwrap();
        let text = c.manifest(Command::Run, Some(&case));
        let mut d = RunConfig::default();
        d.apply(&parse_pairs(&text).unwrap()).unwrap();
        assert_eq!(d.solver, c.solver);
        assert_eq!(d.case_setup().unwrap().settings(), case.settings());
        assert_eq!(d.manifest(Command::Run, Some(&d.case_setup().unwrap())), text);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::StageFailure("x".into())), EXIT_SOLVER);
        assert_eq!(exit_code(&Error::StepCollapse { t: 0.0, floor: 1e-12 }), EXIT_SOLVER);
    }
}
