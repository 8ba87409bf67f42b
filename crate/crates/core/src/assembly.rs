//! Sparse operator and load-vector assembly over a cached discretization.

use crate::error::{Error, Result};
use crate::linalg::dense::DenseLu;
use crate::mesh::{ref_edge_point, EdgeSide, Mesh};
use crate::quadrature::{CellRule, EdgeRule};
use crate::spaces::{DgSpace, FunctionSpace, RtSpace, RtTabulation, ScalarFn, VectorFn};
use crate::sparse::CsrMatrix;

/// Default Gauss points per direction on cells and edges.
pub const DEFAULT_QUAD: usize = 4;
/// Gauss points per direction for source terms, which are not polynomial.
pub const SOURCE_QUAD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxScheme {
    Upwind,
    Centered,
}

/// Cell quadrature data.
#[derive(Debug, Clone)]
pub struct CellData {
    pub x: Vec<[f64; 2]>,
    /// quadrature weight times `det J`
    pub jxw: Vec<f64>,
    /// physical DG gradients `[q][i]`
    pub dg_grads: Vec<Vec<[f64; 2]>>,
    pub rt: RtTabulation,
    pub area: f64,
}

/// Interior facet quadrature data, seen from the "+" side.
#[derive(Debug, Clone)]
pub struct FacetData {
    pub edge: usize,
    pub plus: EdgeSide,
    pub minus: EdgeSide,
    pub x: Vec<[f64; 2]>,
    /// unit normal pointing out of the "+" cell
    pub normal: Vec<[f64; 2]>,
    /// quadrature weight times arc-length factor
    pub w: Vec<f64>,
    pub vals_plus: Vec<Vec<f64>>,
    pub vals_minus: Vec<Vec<f64>>,
    pub grads_plus: Vec<Vec<[f64; 2]>>,
    pub grads_minus: Vec<Vec<[f64; 2]>>,
    /// `(|K+| + |K-|) / (2 |e|)`
    pub h: f64,
}

/// Mesh, the `(RT_k, dQ_{k-1})` pair, and precomputed quadrature data.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub dg: DgSpace,
    pub rt: RtSpace,
    pub cell_rule: CellRule,
    pub edge_rule: EdgeRule,
    /// reference DG values `[q][i]`, identical on every cell
    pub dg_vals: Vec<Vec<f64>>,
    pub cells: Vec<CellData>,
    pub facets: Vec<FacetData>,
    source: SourceQuadrature,
}

/// Cell-major points, weights and DG values of the source rule.
#[derive(Debug, Clone)]
struct SourceQuadrature {
    nq: usize,
    x: Vec<[f64; 2]>,
    jxw: Vec<f64>,
    vals: Vec<Vec<f64>>,
}

impl Discretization {
    pub fn new(mesh: Mesh, k: usize) -> Result<Self> {
        Self::with_quadrature(mesh, k, DEFAULT_QUAD)
    }

    pub fn with_quadrature(mesh: Mesh, k: usize, nq: usize) -> Result<Self> {
        if !(1..=3).contains(&k) {
            return Err(Error::InvalidArgument(format!("element order k = {k} not supported")));
        }
        let dg = DgSpace::new(&mesh, k - 1);
        let rt = RtSpace::new(&mesh, k)?;
        let cell_rule = CellRule::gauss(nq);
        let edge_rule = EdgeRule::gauss(nq);
        let dg_tab = dg.tabulate(&cell_rule.points);
        let rt_ref = rt.tabulate_ref(&cell_rule.points);

        let mut cells = Vec::with_capacity(mesh.num_cells());
        for c in 0..mesh.num_cells() {
            let geom = mesh.geometry(c, &cell_rule.points)?;
            let jxw: Vec<f64> = geom.iter().zip(&cell_rule.weights).map(|(g, w)| w * g.det).collect();
            cells.push(CellData {
                x: geom.iter().map(|g| g.x).collect(),
                area: jxw.iter().sum(),
                jxw,
                dg_grads: DgSpace::physical_gradients(&dg_tab, &geom),
                rt: rt.map_tabulation(c, &rt_ref, &geom),
            });
        }

        let source_rule = CellRule::gauss(SOURCE_QUAD.max(nq));
        let mut source = SourceQuadrature {
            nq: source_rule.points.len(),
            x: Vec::new(),
            jxw: Vec::new(),
            vals: dg.tabulate(&source_rule.points).values,
        };
        for c in 0..mesh.num_cells() {
            for (g, w) in mesh.geometry(c, &source_rule.points)?.iter().zip(&source_rule.weights) {
                source.x.push(g.x);
                source.jxw.push(w * g.det);
            }
        }

        let mut facets = Vec::new();
        for (e, edge) in mesh.edges.iter().enumerate() {
            let Some(minus) = edge.minus else { continue };
            let plus = edge.plus;
            let mut f = FacetData {
                edge: e,
                plus,
                minus,
                x: vec![],
                normal: vec![],
                w: vec![],
                vals_plus: vec![],
                vals_minus: vec![],
                grads_plus: vec![],
                grads_minus: vec![],
                h: (cells[plus.cell].area + cells[minus.cell].area) / (2.0 * mesh.edge_length(e)),
            };
            for (&s, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
                let (x, n, len, gp) = mesh.edge_side_point(plus, s);
                let gm = mesh.map_point(minus.cell, ref_edge_point(minus.local, s));
                let tp = dg.tabulate(&[ref_edge_point(plus.local, s)]);
                let tm = dg.tabulate(&[ref_edge_point(minus.local, s)]);
                f.x.push(x);
                f.normal.push(n);
                f.w.push(w * len);
                f.grads_plus.push(DgSpace::physical_gradients(&tp, &[gp]).remove(0));
                f.grads_minus.push(DgSpace::physical_gradients(&tm, &[gm]).remove(0));
                f.vals_plus.push(tp.values.into_iter().next().unwrap());
                f.vals_minus.push(tm.values.into_iter().next().unwrap());
            }
            facets.push(f);
        }

        Ok(Discretization {
            dg_vals: dg_tab.values,
            mesh,
            dg,
            rt,
            cell_rule,
            edge_rule,
            cells,
            facets,
            source,
        })
    }

    pub fn n_dg(&self) -> usize {
        self.dg.ndofs()
    }

    pub fn n_rt(&self) -> usize {
        self.rt.ndofs()
    }

    /// DG field values at the quadrature points of `cell`.
    pub fn dg_at_quad(&self, phi: &[f64], cell: usize) -> Vec<f64> {
        let dofs = &phi[self.dg.cell_dofs(cell)];
        self.dg_vals.iter().map(|v| v.iter().zip(dofs).map(|(a, b)| a * b).sum()).collect()
    }

    /// RT field values at the quadrature points of `cell`.
    pub fn rt_at_quad(&self, v: &[f64], cell: usize) -> Vec<[f64; 2]> {
        self.rt.eval_cell(v, cell, &self.cells[cell].rt)
    }

    /// `sum_K int_K f(x, phi_h(x))` by cell quadrature.
    pub fn integrate_dg<F: Fn([f64; 2], f64) -> f64>(&self, phi: &[f64], f: F) -> f64 {
        let mut total = 0.0;
        for (c, cd) in self.cells.iter().enumerate() {
            let vals = self.dg_at_quad(phi, c);
            for ((x, w), v) in cd.x.iter().zip(&cd.jxw).zip(vals) {
                total += w * f(*x, v);
            }
        }
        total
    }
}

/// Weight inside a DG mass integral.
#[derive(Debug, Clone, Copy)]
pub enum MassWeight<'a> {
    One,
    Constant(f64),
    /// DG coefficients `w`; integrand `w_h psi_i psi_j`
    Field(&'a [f64]),
    /// DG coefficients `w`; integrand `w_h^2 psi_i psi_j`
    FieldSquared(&'a [f64]),
}

/// `int w psi_i psi_j`, block diagonal per cell.
pub fn assemble_dg_mass(disc: &Discretization, weight: MassWeight) -> Result<CsrMatrix> {
    let n = disc.n_dg();
    if let MassWeight::Field(w) | MassWeight::FieldSquared(w) = weight {
        if w.len() != n {
            return Err(Error::SpaceMismatch(format!("weight has {} entries, DG space {n}", w.len())));
        }
    }
    let nb = disc.dg.dofs_per_cell();
    let mut t = Vec::with_capacity(disc.cells.len() * nb * nb);
    for (c, cd) in disc.cells.iter().enumerate() {
        let wq: Vec<f64> = match weight {
            MassWeight::One => cd.jxw.clone(),
            MassWeight::Constant(a) => cd.jxw.iter().map(|w| a * w).collect(),
            MassWeight::Field(f) => {
                disc.dg_at_quad(f, c).iter().zip(&cd.jxw).map(|(v, w)| v * w).collect()
            }
            MassWeight::FieldSquared(f) => {
                disc.dg_at_quad(f, c).iter().zip(&cd.jxw).map(|(v, w)| v * v * w).collect()
            }
        };
        let off = disc.dg.cell_dofs(c).start;
        let mut block = vec![0.0; nb * nb];
        for (q, wq) in wq.iter().enumerate() {
            let v = &disc.dg_vals[q];
            for i in 0..nb {
                for j in 0..nb {
                    block[i * nb + j] += wq * v[i] * v[j];
                }
            }
        }
        for i in 0..nb {
            for j in 0..nb {
                t.push((off + i, off + j, block[i * nb + j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, t))
}

/// `int v_i . v_j` on the RT space (unconstrained).
pub fn assemble_rt_mass(disc: &Discretization) -> CsrMatrix {
    let n = disc.n_rt();
    let nl = disc.rt.local_dim();
    let mut t = Vec::with_capacity(disc.cells.len() * nl * nl);
    for (c, cd) in disc.cells.iter().enumerate() {
        let dofs = disc.rt.cell_dofs(c);
        let mut block = vec![0.0; nl * nl];
        for (q, w) in cd.jxw.iter().enumerate() {
            let v = &cd.rt.values[q];
            for i in 0..nl {
                for j in 0..nl {
                    block[i * nl + j] += w * (v[i][0] * v[j][0] + v[i][1] * v[j][1]);
                }
            }
        }
        for i in 0..nl {
            for j in 0..nl {
                t.push((dofs[i], dofs[j], block[i * nl + j]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, t)
}

/// `D[i, j] = int psi_i div v_j`, shape DG x RT (unconstrained).
pub fn assemble_div(disc: &Discretization) -> CsrMatrix {
    let nb = disc.dg.dofs_per_cell();
    let nl = disc.rt.local_dim();
    let mut t = Vec::with_capacity(disc.cells.len() * nb * nl);
    for (c, cd) in disc.cells.iter().enumerate() {
        let dofs = disc.rt.cell_dofs(c);
        let off = disc.dg.cell_dofs(c).start;
        let mut block = vec![0.0; nb * nl];
        for (q, w) in cd.jxw.iter().enumerate() {
            let psi = &disc.dg_vals[q];
            let div = &cd.rt.divs[q];
            for i in 0..nb {
                for j in 0..nl {
                    block[i * nl + j] += w * psi[i] * div[j];
                }
            }
        }
        for i in 0..nb {
            for j in 0..nl {
                t.push((off + i, dofs[j], block[i * nl + j]));
            }
        }
    }
    CsrMatrix::from_triplets(disc.n_dg(), disc.n_rt(), t)
}

/// Sign with `sign(0) = 0`.
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Upwind weights `(s+, s-)` for a facet with `u . n+ = un`.
pub fn upwind_weights(un: f64) -> (f64, f64) {
    let sp = 0.5 * (sign0(un) + 1.0);
    (sp, 1.0 - sp)
}

/// Transport operator
/// `T[i, j] = -int grad psi_i . u psi_j + sum_e int (u.n+) [psi_i] (s+ psi_j+ + s- psi_j-)`.
pub fn assemble_transport(disc: &Discretization, u: &VectorFn, t: f64, scheme: FluxScheme) -> CsrMatrix {
    let nb = disc.dg.dofs_per_cell();
    let mut trip = Vec::with_capacity(disc.cells.len() * nb * nb * 5);
    for (c, cd) in disc.cells.iter().enumerate() {
        let off = disc.dg.cell_dofs(c).start;
        let mut block = vec![0.0; nb * nb];
        for q in 0..cd.jxw.len() {
            let uq = u(cd.x[q], t);
            let g = &cd.dg_grads[q];
            let psi = &disc.dg_vals[q];
            for i in 0..nb {
                let gu = g[i][0] * uq[0] + g[i][1] * uq[1];
                for j in 0..nb {
                    block[i * nb + j] -= cd.jxw[q] * gu * psi[j];
                }
            }
        }
        for i in 0..nb {
            for j in 0..nb {
                trip.push((off + i, off + j, block[i * nb + j]));
            }
        }
    }
    for f in &disc.facets {
        let op = disc.dg.cell_dofs(f.plus.cell).start;
        let om = disc.dg.cell_dofs(f.minus.cell).start;
        // blocks indexed [test side][trial side]
        let mut pp = vec![0.0; nb * nb];
        let mut pm = vec![0.0; nb * nb];
        let mut mp = vec![0.0; nb * nb];
        let mut mm = vec![0.0; nb * nb];
        for q in 0..f.w.len() {
            let uq = u(f.x[q], t);
            let un = uq[0] * f.normal[q][0] + uq[1] * f.normal[q][1];
            if un == 0.0 {
                continue;
            }
            let (sp, sm) = match scheme {
                FluxScheme::Upwind => upwind_weights(un),
                FluxScheme::Centered => (0.5, 0.5),
            };
            let a = f.w[q] * un;
            let (vp, vm) = (&f.vals_plus[q], &f.vals_minus[q]);
            for i in 0..nb {
                for j in 0..nb {
                    pp[i * nb + j] += a * vp[i] * sp * vp[j];
                    pm[i * nb + j] += a * vp[i] * sm * vm[j];
                    mp[i * nb + j] -= a * vm[i] * sp * vp[j];
                    mm[i * nb + j] -= a * vm[i] * sm * vm[j];
                }
            }
        }
        for i in 0..nb {
            for j in 0..nb {
                trip.push((op + i, op + j, pp[i * nb + j]));
                trip.push((op + i, om + j, pm[i * nb + j]));
                trip.push((om + i, op + j, mp[i * nb + j]));
                trip.push((om + i, om + j, mm[i * nb + j]));
            }
        }
    }
    let n = disc.n_dg();
    CsrMatrix::from_triplets(n, n, trip)
}

/// Symmetric interior penalty Laplacian with penalty `kappa / h_e` on interior facets.
pub fn assemble_ip_laplacian(disc: &Discretization, kappa: f64) -> CsrMatrix {
    let nb = disc.dg.dofs_per_cell();
    let mut trip = Vec::with_capacity(disc.cells.len() * nb * nb * 5);
    for (c, cd) in disc.cells.iter().enumerate() {
        let off = disc.dg.cell_dofs(c).start;
        let mut block = vec![0.0; nb * nb];
        for q in 0..cd.jxw.len() {
            let g = &cd.dg_grads[q];
            for i in 0..nb {
                for j in 0..nb {
                    block[i * nb + j] += cd.jxw[q] * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        for i in 0..nb {
            for j in 0..nb {
                trip.push((off + i, off + j, block[i * nb + j]));
            }
        }
    }
    for f in &disc.facets {
        let offs = [disc.dg.cell_dofs(f.plus.cell).start, disc.dg.cell_dofs(f.minus.cell).start];
        let pen = kappa / f.h;
        // blocks[a][b]: test side a, trial side b (0 = plus, 1 = minus)
        let mut blocks = vec![vec![0.0; nb * nb]; 4];
        for q in 0..f.w.len() {
            let n = f.normal[q];
            let jump = [&f.vals_plus[q], &f.vals_minus[q]];
            let sgn = [1.0, -1.0];
            let dn: [Vec<f64>; 2] = [
                f.grads_plus[q].iter().map(|g| 0.5 * (g[0] * n[0] + g[1] * n[1])).collect(),
                f.grads_minus[q].iter().map(|g| 0.5 * (g[0] * n[0] + g[1] * n[1])).collect(),
            ];
            for a in 0..2 {
                for b in 0..2 {
                    let blk = &mut blocks[2 * a + b];
                    for i in 0..nb {
                        let ji = sgn[a] * jump[a][i];
                        for j in 0..nb {
                            let jj = sgn[b] * jump[b][j];
                            blk[i * nb + j] +=
                                f.w[q] * (-dn[a][i] * jj - dn[b][j] * ji + pen * ji * jj);
                        }
                    }
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                for i in 0..nb {
                    for j in 0..nb {
                        trip.push((offs[a] + i, offs[b] + j, blocks[2 * a + b][i * nb + j]));
                    }
                }
            }
        }
    }
    let n = disc.n_dg();
    CsrMatrix::from_triplets(n, n, trip)
}

/// Load vector `int psi_i S(x, t)`, integrated with the finer source rule.
pub fn assemble_forcing(disc: &Discretization, s: &ScalarFn, t: f64) -> Vec<f64> {
    let src = &disc.source;
    let mut out = vec![0.0; disc.n_dg()];
    for c in 0..disc.mesh.num_cells() {
        let off = disc.dg.cell_dofs(c).start;
        for q in 0..src.nq {
            let k = c * src.nq + q;
            let sw = src.jxw[k] * s(src.x[k], t);
            for (i, v) in src.vals[q].iter().enumerate() {
                out[off + i] += sw * v;
            }
        }
    }
    out
}

/// Nonlinear load `int psi_i F'(phi_h)` for `F'(phi) = phi^3 - phi`.
pub fn assemble_double_well(disc: &Discretization, phi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; disc.n_dg()];
    for (c, cd) in disc.cells.iter().enumerate() {
        let off = disc.dg.cell_dofs(c).start;
        let vals = disc.dg_at_quad(phi, c);
        for q in 0..cd.jxw.len() {
            let p = vals[q];
            let sw = cd.jxw[q] * (p * p * p - p);
            for (i, v) in disc.dg_vals[q].iter().enumerate() {
                out[off + i] += sw * v;
            }
        }
    }
    out
}

/// Largest normal-velocity jump across interior facets and largest `|u.n|` on
/// boundary facets, at edge quadrature points.
pub fn velocity_facet_violation(disc: &Discretization, u: &VectorFn, t: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mesh = &disc.mesh;
    for edge in &mesh.edges {
        for &s in &disc.edge_rule.points {
            let (xp, np, _, _) = mesh.edge_side_point(edge.plus, s);
            let up = u(xp, t);
            let unp = up[0] * np[0] + up[1] * np[1];
            match edge.minus {
                Some(minus) => {
                    let (xm, nm, _, _) = mesh.edge_side_point(minus, s);
                    let um = u(xm, t);
                    worst = worst.max((unp + um[0] * nm[0] + um[1] * nm[1]).abs());
                }
                None => worst = worst.max(unp.abs()),
            }
        }
    }
    worst
}

/// Cell-local factorizations of the DG mass matrix.
#[derive(Debug, Clone)]
pub struct DgMassInverse {
    nb: usize,
    blocks: Vec<DenseLu>,
}

impl DgMassInverse {
    pub fn new(disc: &Discretization, mass: &CsrMatrix) -> Result<Self> {
        let nb = disc.dg.dofs_per_cell();
        let mut blocks = Vec::with_capacity(disc.cells.len());
        for c in 0..disc.cells.len() {
            let off = disc.dg.cell_dofs(c).start;
            let mut a = vec![0.0; nb * nb];
            for i in 0..nb {
                for j in 0..nb {
                    a[i * nb + j] = mass.get(off + i, off + j);
                }
            }
            blocks.push(DenseLu::factor(nb, &a)?);
        }
        Ok(DgMassInverse { nb, blocks })
    }

    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(b.len());
        for (c, lu) in self.blocks.iter().enumerate() {
            x.extend(lu.solve(&b[c * self.nb..(c + 1) * self.nb]));
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn disc(n: usize, k: usize, periodic: bool) -> Discretization {
        let m = Mesh::build_structured(n, n, 1.0, 1.0, periodic, periodic).unwrap();
        Discretization::new(m, k).unwrap()
    }

    #[test]
    fn dq0_single_cell_mass_is_area() {
        let d = disc(1, 1, false);
        let m = assemble_dg_mass(&d, MassWeight::One).unwrap();
        assert_eq!(m.nrows(), 1);
        assert!((m.get(0, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mass_symmetric_and_linear_in_weight() {
        let d = disc(3, 2, true);
        let m = assemble_dg_mass(&d, MassWeight::One).unwrap();
        assert!(m.max_abs_diff(&m.transpose()) < 1e-14);
        let c = vec![0.7; d.n_dg()];
        let mw = assemble_dg_mass(&d, MassWeight::Field(&c)).unwrap();
        let mut m7 = m.clone();
        m7.scale(0.7);
        assert!(mw.max_abs_diff(&m7) < 1e-14);
        let mc = assemble_dg_mass(&d, MassWeight::Constant(0.7)).unwrap();
        assert!(mc.max_abs_diff(&m7) < 1e-14);
    }

    #[test]
    fn div_of_x_field_matches_mass_times_ones() {
        let d = disc(1, 2, false);
        let f: VectorFn = Arc::new(|x: [f64; 2], _| [x[0], 0.0]);
        let c = d.rt.interpolate(&d.mesh, &f, 0.0);
        let div = assemble_div(&d).mul_vec(&c);
        let m1 = assemble_dg_mass(&d, MassWeight::One).unwrap().mul_vec(&vec![1.0; d.n_dg()]);
        for (a, b) in div.iter().zip(&m1) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn transport_conserves_and_kills_constants() {
        let d = disc(4, 2, true);
        let u: VectorFn = Arc::new(|_x, _| [1.0, 0.0]);
        let t = assemble_transport(&d, &u, 0.0, FluxScheme::Upwind);
        assert!(t.mul_vec(&vec![1.0; d.n_dg()]).iter().all(|v| v.abs() < 1e-13));
        assert!(t.transpose().mul_vec(&vec![1.0; d.n_dg()]).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn upwind_selector() {
        assert_eq!(upwind_weights(0.3), (1.0, 0.0));
        assert_eq!(upwind_weights(-0.3), (0.0, 1.0));
        assert_eq!(upwind_weights(0.0), (0.5, 0.5));
    }

    #[test]
    fn ip_laplacian_kernel_and_symmetry() {
        let d = disc(4, 2, true);
        let l = assemble_ip_laplacian(&d, 10.0);
        assert!(l.max_abs_diff(&l.transpose()) < 1e-12);
        assert!(l.mul_vec(&vec![1.0; d.n_dg()]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn forcing_of_one_integrates_to_area() {
        let d = disc(3, 2, false);
        let one: ScalarFn = Arc::new(|_x, _| 1.0);
        let f = assemble_forcing(&d, &one, 0.0);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let zero: ScalarFn = Arc::new(|_x, _| 0.0);
        assert!(assemble_forcing(&d, &zero, 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_inverse_roundtrip() {
        let d = disc(2, 2, true);
        let m = assemble_dg_mass(&d, MassWeight::One).unwrap();
        let inv = DgMassInverse::new(&d, &m).unwrap();
        let b: Vec<f64> = (0..d.n_dg()).map(|i| (i as f64).sin()).collect();
        let x = inv.apply(&m.mul_vec(&b));
        for (a, e) in x.iter().zip(&b) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
