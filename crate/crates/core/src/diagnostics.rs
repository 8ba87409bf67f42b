//! Error norms, convergence rates, time-series CSV and legacy VTK output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::quadrature::CellRule;
use crate::spaces::{ScalarFn, VectorFn};
use crate::sparse::CsrMatrix;
use crate::timeloop::StepRecord;

pub const CSV_HEADER: &str =
    "step,t,dt,accepted,eps,mass,energy,dissipation,newton_iters,gmres_iters_total,wall_seconds";

/// `1^T M phi`.
pub fn total_mass(mass: &CsrMatrix, phi: &[f64]) -> f64 {
    mass.mul_vec(phi).iter().sum()
}

/// `||phi_h - exact(., t)||_{L2}` with an `nq x nq` Gauss rule per cell.
pub fn l2_error_dg(disc: &Discretization, phi: &[f64], exact: &ScalarFn, t: f64, nq: usize) -> Result<f64> {
    let rule = CellRule::gauss(nq);
    let tab = disc.dg.tabulate(&rule.points);
    let mut acc = 0.0;
    for c in 0..disc.mesh.num_cells() {
        let geom = disc.mesh.geometry(c, &rule.points)?;
        let vals = disc.dg.eval_cell(phi, c, &tab);
        for ((g, w), v) in geom.iter().zip(&rule.weights).zip(&vals) {
            let e = v - exact(g.x, t);
            acc += w * g.det * e * e;
        }
    }
    Ok(acc.sqrt())
}

/// `||v_h - exact(., t)||_{L2}` for an RT field.
pub fn l2_error_rt(disc: &Discretization, v: &[f64], exact: &VectorFn, t: f64, nq: usize) -> Result<f64> {
    let rule = CellRule::gauss(nq);
    let reft = disc.rt.tabulate_ref(&rule.points);
    let mut acc = 0.0;
    for c in 0..disc.mesh.num_cells() {
        let geom = disc.mesh.geometry(c, &rule.points)?;
        let tab = disc.rt.map_tabulation(c, &reft, &geom);
        let vals = disc.rt.eval_cell(v, c, &tab);
        for ((g, w), vh) in geom.iter().zip(&rule.weights).zip(&vals) {
            let ex = exact(g.x, t);
            let (a, b) = (vh[0] - ex[0], vh[1] - ex[1]);
            acc += w * g.det * (a * a + b * b);
        }
    }
    Ok(acc.sqrt())
}

/// Observed orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn convergence_rates(errors: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != h.len() {
        return Err(Error::InvalidArgument(format!("{} errors but {} mesh sizes", errors.len(), h.len())));
    }
    Ok(errors
        .windows(2)
        .zip(h.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect())
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn timeseries_csv(records: &[StepRecord]) -> String {
    let mut s = String::with_capacity(64 + 200 * records.len());
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f(r.t),
            fmt_f(r.dt),
            r.accepted,
            fmt_f(r.eps),
            fmt_f(r.mass),
            fmt_f(r.energy),
            fmt_f(r.dissipation),
            r.newton_iters,
            r.gmres_iters_total,
            fmt_f(r.wall_seconds)
        );
    }
    s
}

pub fn write_timeseries(records: &[StepRecord], path: &Path) -> Result<()> {
    fs::write(path, timeseries_csv(records))?;
    Ok(())
}

pub fn parse_timeseries(text: &str) -> Result<Vec<StepRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected CSV header {other:?}"))),
    }
    let mut out = Vec::new();
    for (no, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::Parse(format!("row {}: expected 11 fields, got {}", no + 1, f.len())));
        }
        let bad = |i: usize| Error::Parse(format!("row {}: bad field {:?}", no + 1, f[i]));
        let fl = |i: usize| f[i].parse::<f64>().map_err(|_| bad(i));
        let us = |i: usize| f[i].parse::<usize>().map_err(|_| bad(i));
        out.push(StepRecord {
            step: us(0)?,
            t: fl(1)?,
            dt: fl(2)?,
            accepted: f[3].parse::<bool>().map_err(|_| bad(3))?,
            eps: fl(4)?,
            mass: fl(5)?,
            energy: fl(6)?,
            dissipation: fl(7)?,
            newton_iters: us(8)?,
            gmres_iters_total: us(9)?,
            wall_seconds: fl(10)?,
        });
    }
    Ok(out)
}

pub fn read_timeseries(path: &Path) -> Result<Vec<StepRecord>> {
    parse_timeseries(&fs::read_to_string(path)?)
}

/// Legacy VTK unstructured grid with one quad per cell and unshared corner
/// points, so discontinuous DG fields are written exactly at the corners.
/// RT fields are written as cell averages.
pub fn write_field_vtk(
    disc: &Discretization,
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[f64])],
    path: &Path,
) -> Result<()> {
    fs::write(path, field_vtk(disc, scalars, vectors)?)?;
    Ok(())
}

pub fn field_vtk(disc: &Discretization, scalars: &[(&str, &[f64])], vectors: &[(&str, &[f64])]) -> Result<String> {
    let mesh = &disc.mesh;
    let nc = mesh.num_cells();
    for (name, v) in scalars {
        if v.len() != disc.n_dg() {
            return Err(Error::SpaceMismatch(format!("scalar {name} has {} values, expected {}", v.len(), disc.n_dg())));
        }
    }
    for (name, v) in vectors {
        if v.len() != disc.n_rt() {
            return Err(Error::SpaceMismatch(format!("vector {name} has {} values, expected {}", v.len(), disc.n_rt())));
        }
    }
    let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let corner_tab = disc.dg.tabulate(&corners);
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nchdg field\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", 4 * nc);
    for c in 0..nc {
        for p in mesh.cell_corners(c) {
            let _ = writeln!(s, "{:.16e} {:.16e} 0", p[0], p[1]);
        }
    }
    let _ = writeln!(s, "CELLS {} {}", nc, 5 * nc);
    for c in 0..nc {
        let b = 4 * c;
        let _ = writeln!(s, "4 {} {} {} {}", b, b + 1, b + 2, b + 3);
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        s.push_str("9\n");
    }
    if !scalars.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", 4 * nc);
        for (name, v) in scalars {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for c in 0..nc {
                for x in disc.dg.eval_cell(v, c, &corner_tab) {
                    let _ = writeln!(s, "{x:.16e}");
                }
            }
        }
    }
    if !vectors.is_empty() {
        let _ = writeln!(s, "CELL_DATA {nc}");
        for (name, v) in vectors {
            let _ = writeln!(s, "VECTORS {name} double");
            for c in 0..nc {
                let cd = &disc.cells[c];
                let vals = disc.rt.eval_cell(v, c, &cd.rt);
                let mut avg = [0.0; 2];
                for (w, val) in cd.jxw.iter().zip(&vals) {
                    avg[0] += w * val[0];
                    avg[1] += w * val[1];
                }
                let _ = writeln!(s, "{:.16e} {:.16e} 0", avg[0] / cd.area, avg[1] / cd.area);
            }
        }
    }
    Ok(s)
}

/// Point scalars of the first `SCALARS` block of an ASCII legacy VTK file.
pub fn read_vtk_point_scalars(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut npts = None;
    while let Some(l) = lines.next() {
        if let Some(rest) = l.strip_prefix("POINT_DATA ") {
            npts = Some(rest.trim().parse::<usize>().map_err(|_| Error::Parse(l.into()))?);
        }
        if l.starts_with("SCALARS") {
            lines.next();
            let n = npts.ok_or_else(|| Error::Parse("SCALARS before POINT_DATA".into()))?;
            return lines
                .take(n)
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse(v.into())))
                .collect();
        }
    }
    Err(Error::Parse("no point scalars".into()))
}

/// Times at which the step size drops by at least `factor` below its running
/// peak. After an event the detector re-arms once the step has recovered by
/// `factor` from its trough.
pub fn dt_reductions(records: &[StepRecord], factor: f64) -> Vec<f64> {
    let mut events = Vec::new();
    let mut peak = 0.0f64;
    let mut trough = f64::INFINITY;
    let mut armed = true;
    for r in records.iter().filter(|r| r.accepted && r.dt > 0.0) {
        if armed {
            peak = peak.max(r.dt);
            if r.dt * factor <= peak {
                events.push(r.t);
                armed = false;
                trough = r.dt;
            }
        } else {
            trough = trough.min(r.dt);
            if r.dt >= factor * trough {
                armed = true;
                peak = r.dt;
            }
        }
    }
    events
}

/// `log10(max dt / min dt)` over accepted steps.
pub fn dt_span_decades(records: &[StepRecord]) -> f64 {
    let dts = records.iter().filter(|r| r.accepted && r.dt > 0.0).map(|r| r.dt);
    let (lo, hi) = dts.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if hi > 0.0 {
        (hi / lo).log10()
    } else {
        0.0
    }
}

/// Largest `|m_i - m_0| / |m_0|` over accepted records (absolute when `m_0 = 0`).
pub fn relative_mass_drift(records: &[StepRecord]) -> f64 {
    let acc: Vec<f64> = records.iter().filter(|r| r.accepted).map(|r| r.mass).collect();
    let Some(&m0) = acc.first() else { return 0.0 };
    let scale = if m0 == 0.0 { 1.0 } else { m0.abs() };
    acc.iter().map(|m| (m - m0).abs() / scale).fold(0.0, f64::max)
}

/// Appends a line to a file, creating it if needed.
pub fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_dg_mass, MassWeight};
    use crate::mesh::Mesh;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn rec(step: usize, t: f64, dt: f64) -> StepRecord {
        StepRecord {
            step,
            t,
            dt,
            accepted: true,
            eps: 0.5,
            mass: 1.0,
            energy: 0.1,
            dissipation: 0.0,
            newton_iters: 1,
            gmres_iters_total: 3,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn mass_of_constants() {
        for (lx, expect) in [(1.0, 1.0), (2.0, 2.0)] {
            let m = Mesh::build_structured(4, 4, lx, 1.0, true, true).unwrap();
            let disc = Discretization::new(m, 2).unwrap();
            let mm = assemble_dg_mass(&disc, MassWeight::One).unwrap();
            assert!((total_mass(&mm, &vec![1.0; disc.n_dg()]) - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn rates_from_log_ratios() {
        let r = convergence_rates(&[1.0, 0.25], &[1.0, 0.5]).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-14);
        let r = convergence_rates(&[1.0, 0.5], &[1.0, 0.5]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-14);
        assert!(convergence_rates(&[1.0], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn interpolation_error_ratio() {
        let f: ScalarFn = Arc::new(|x, _| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin());
        let err = |n| {
            let disc = Discretization::new(Mesh::build_structured(n, n, 1.0, 1.0, true, true).unwrap(), 2).unwrap();
            let phi = disc.dg.interpolate(&disc.mesh, &f, 0.0);
            l2_error_dg(&disc, &phi, &f, 0.0, 4).unwrap()
        };
        let ratio = err(16) / err(32);
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(timeseries_csv(&[]), format!("{CSV_HEADER}\n"));
        assert!(parse_timeseries(&timeseries_csv(&[])).unwrap().is_empty());
    }

    #[test]
    fn detector_counts_distinct_drops() {
        let dts = [1e-3, 1e-2, 1e-1, 1e-2, 5e-3, 1e-1, 2e-1, 1e-2, 1e-1];
        let recs: Vec<StepRecord> = dts.iter().enumerate().map(|(i, d)| rec(i, i as f64, *d)).collect();
        assert_eq!(dt_reductions(&recs, 5.0), vec![3.0, 7.0]);
        assert!((dt_span_decades(&recs) - (2e-1f64 / 1e-3).log10()).abs() < 1e-12);
    }

    #[test]
    fn mass_drift_ignores_rejected() {
        let mut recs = vec![rec(0, 0.0, 0.0), rec(1, 1.0, 1.0)];
        recs[1].mass = 1.0 + 1e-12;
        let mut bad = rec(2, 2.0, 1.0);
        bad.accepted = false;
        bad.mass = f64::NAN;
        recs.push(bad);
        assert!((relative_mass_drift(&recs) - 1e-12).abs() < 1e-15);
    }
}
