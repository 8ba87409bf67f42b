use crate::error::{Error, Result};
use crate::linalg::dense::DenseLu;
use crate::mesh::{ref_edge_normal, ref_edge_point, GeomPoint, Mesh};
use crate::quadrature::{legendre_all, CellRule, EdgeRule};

use super::{FunctionSpace, VectorFn};

/// One primal polynomial `L_a(xi) L_b(eta)` placed in vector component `comp`.
#[derive(Debug, Clone, Copy)]
struct Primal {
    comp: usize,
    a: usize,
    b: usize,
}

/// Raviart–Thomas space `RT_[k]` on quadrilaterals: x-component in `Q_{k,k-1}`,
/// y-component in `Q_{k-1,k}`, mapped with the contravariant Piola transform.
///
/// Local dofs: `k` normal moments per edge against Legendre polynomials in the
/// edge parameter (edge-major), then interior moments of `v_x` against
/// `Q_{k-2,k-1}` and of `v_y` against `Q_{k-1,k-2}`. Global numbering puts
/// all edge dofs first (`edge * k + m`), followed by cell-interior blocks.
#[derive(Debug, Clone)]
pub struct RtSpace {
    k: usize,
    num_edges: usize,
    num_cells: usize,
    primals: Vec<Primal>,
    /// `coeffs[p * nloc + i]`: primal `p` coefficient of reference basis `i`
    coeffs: Vec<f64>,
    cell_dofs: Vec<Vec<usize>>,
    cell_signs: Vec<Vec<f64>>,
    boundary_dofs: Vec<usize>,
}

/// Reference basis data at a set of reference points.
#[derive(Debug, Clone)]
pub struct RtRefTabulation {
    /// `values[p][i]`
    pub values: Vec<Vec<[f64; 2]>>,
    /// `divs[p][i]`, reference divergence
    pub divs: Vec<Vec<f64>>,
}

/// Physical (Piola-mapped, orientation-signed) basis data on one cell.
#[derive(Debug, Clone)]
pub struct RtTabulation {
    pub values: Vec<Vec<[f64; 2]>>,
    pub divs: Vec<Vec<f64>>,
}

impl RtSpace {
    pub fn new(mesh: &Mesh, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("RT order must be at least 1".into()));
        }
        let mut primals = Vec::new();
        for b in 0..k {
            for a in 0..=k {
                primals.push(Primal { comp: 0, a, b });
            }
        }
        for b in 0..=k {
            for a in 0..k {
                primals.push(Primal { comp: 1, a, b });
            }
        }
        let nloc = primals.len();
        debug_assert_eq!(nloc, 4 * k + 2 * k * (k - 1));

        let mut space = RtSpace {
            k,
            num_edges: mesh.num_edges(),
            num_cells: mesh.num_cells(),
            primals,
            coeffs: vec![],
            cell_dofs: vec![],
            cell_signs: vec![],
            boundary_dofs: vec![],
        };

        // dof functionals applied to primals
        let mut vander = vec![0.0; nloc * nloc];
        for p in 0..nloc {
            let row = space.functionals_of(|r| space.eval_primal(p, r).0);
            for (d, v) in row.into_iter().enumerate() {
                vander[d * nloc + p] = v;
            }
        }
        space.coeffs = DenseLu::factor(nloc, &vander)?.inverse();

        let n_int = space.interior_dofs_per_cell();
        let n_edge_dofs = mesh.num_edges() * k;
        for c in 0..mesh.num_cells() {
            let mut dofs = Vec::with_capacity(nloc);
            let mut signs = Vec::with_capacity(nloc);
            for l in 0..4 {
                let e = mesh.cell_edges[c][l];
                let edge = &mesh.edges[e];
                let sign = if edge.plus.cell == c && edge.plus.local == l { 1.0 } else { -1.0 };
                for m in 0..k {
                    dofs.push(e * k + m);
                    signs.push(sign);
                }
            }
            for i in 0..n_int {
                dofs.push(n_edge_dofs + c * n_int + i);
                signs.push(1.0);
            }
            space.cell_dofs.push(dofs);
            space.cell_signs.push(signs);
        }
        space.boundary_dofs = mesh
            .boundary_edges
            .iter()
            .flat_map(|&e| (0..k).map(move |m| e * k + m))
            .collect();
        Ok(space)
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn local_dim(&self) -> usize {
        self.primals.len()
    }

    pub fn interior_dofs_per_cell(&self) -> usize {
        2 * self.k * (self.k - 1)
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        &self.cell_dofs[cell]
    }

    pub fn cell_signs(&self, cell: usize) -> &[f64] {
        &self.cell_signs[cell]
    }

    /// Dofs on non-periodic boundary edges.
    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    fn eval_primal(&self, p: usize, r: [f64; 2]) -> ([f64; 2], f64) {
        let pr = self.primals[p];
        let (lx, dlx) = legendre_all(self.k, r[0]);
        let (ly, dly) = legendre_all(self.k, r[1]);
        let v = lx[pr.a] * ly[pr.b];
        if pr.comp == 0 {
            ([v, 0.0], dlx[pr.a] * ly[pr.b])
        } else {
            ([0.0, v], lx[pr.a] * dly[pr.b])
        }
    }

    /// Applies all local dof functionals to a reference vector field.
    fn functionals_of<F: Fn([f64; 2]) -> [f64; 2]>(&self, f: F) -> Vec<f64> {
        self.functionals_with_rules(f, &EdgeRule::gauss(self.k + 2), &CellRule::gauss(self.k + 2))
    }

    fn functionals_with_rules<F: Fn([f64; 2]) -> [f64; 2]>(
        &self,
        f: F,
        er: &EdgeRule,
        cr: &CellRule,
    ) -> Vec<f64> {
        let k = self.k;
        let mut out = Vec::with_capacity(self.local_dim());
        for l in 0..4 {
            let n = ref_edge_normal(l);
            let mut mom = vec![0.0; k];
            for (s, w) in er.points.iter().zip(&er.weights) {
                let v = f(ref_edge_point(l, *s));
                let vn = v[0] * n[0] + v[1] * n[1];
                let (leg, _) = legendre_all(k, *s);
                for m in 0..k {
                    mom[m] += w * vn * leg[m];
                }
            }
            out.extend(mom);
        }
        if k >= 2 {
            let mut mx = vec![0.0; (k - 1) * k];
            let mut my = vec![0.0; k * (k - 1)];
            for (r, w) in cr.points.iter().zip(&cr.weights) {
                let v = f(*r);
                let (lx, _) = legendre_all(k, r[0]);
                let (ly, _) = legendre_all(k, r[1]);
                let mut idx = 0;
                for b in 0..k {
                    for a in 0..(k - 1) {
                        mx[idx] += w * v[0] * lx[a] * ly[b];
                        idx += 1;
                    }
                }
                idx = 0;
                for b in 0..(k - 1) {
                    for a in 0..k {
                        my[idx] += w * v[1] * lx[a] * ly[b];
                        idx += 1;
                    }
                }
            }
            out.extend(mx);
            out.extend(my);
        }
        out
    }

    /// Reference basis values and divergences.
    pub fn tabulate_ref(&self, ref_points: &[[f64; 2]]) -> RtRefTabulation {
        let nloc = self.local_dim();
        let mut values = Vec::with_capacity(ref_points.len());
        let mut divs = Vec::with_capacity(ref_points.len());
        for r in ref_points {
            let prim: Vec<([f64; 2], f64)> = (0..nloc).map(|p| self.eval_primal(p, *r)).collect();
            let mut v = vec![[0.0; 2]; nloc];
            let mut d = vec![0.0; nloc];
            for (p, (pv, pd)) in prim.iter().enumerate() {
                for i in 0..nloc {
                    let c = self.coeffs[p * nloc + i];
                    if c != 0.0 {
                        v[i][0] += c * pv[0];
                        v[i][1] += c * pv[1];
                        d[i] += c * pd;
                    }
                }
            }
            values.push(v);
            divs.push(d);
        }
        RtRefTabulation { values, divs }
    }

    /// Piola-mapped, sign-corrected basis on `cell` given its geometry at the
    /// same points that produced `reft`.
    pub fn map_tabulation(&self, cell: usize, reft: &RtRefTabulation, geom: &[GeomPoint]) -> RtTabulation {
        let signs = &self.cell_signs[cell];
        let mut values = Vec::with_capacity(geom.len());
        let mut divs = Vec::with_capacity(geom.len());
        for ((vs, ds), g) in reft.values.iter().zip(&reft.divs).zip(geom) {
            values.push(
                vs.iter()
                    .zip(signs)
                    .map(|(v, s)| {
                        let p = g.piola(*v);
                        [s * p[0], s * p[1]]
                    })
                    .collect(),
            );
            divs.push(ds.iter().zip(signs).map(|(d, s)| s * d / g.det).collect());
        }
        RtTabulation { values, divs }
    }

    /// Physical basis values and divergences on `cell` at reference points.
    pub fn tabulate(&self, mesh: &Mesh, cell: usize, ref_points: &[[f64; 2]]) -> Result<RtTabulation> {
        let geom = mesh.geometry(cell, ref_points)?;
        Ok(self.map_tabulation(cell, &self.tabulate_ref(ref_points), &geom))
    }

    /// Moment interpolation of a physical vector field.
    pub fn interpolate(&self, mesh: &Mesh, f: &VectorFn, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.ndofs()];
        let mut done = vec![false; self.ndofs()];
        let er = EdgeRule::gauss(8);
        let cr = CellRule::gauss(8);
        for c in 0..mesh.num_cells() {
            let pulled = |r: [f64; 2]| {
                let g = mesh.map_point(c, r);
                g.inverse_piola(f(g.x, t))
            };
            let local = self.functionals_with_rules(pulled, &er, &cr);
            for ((&d, &s), v) in self.cell_dofs[c].iter().zip(&self.cell_signs[c]).zip(local) {
                if !done[d] {
                    out[d] = s * v;
                    done[d] = true;
                }
            }
        }
        out
    }

    /// Evaluates a coefficient vector on a cell from a physical tabulation.
    pub fn eval_cell(&self, coeffs: &[f64], cell: usize, tab: &RtTabulation) -> Vec<[f64; 2]> {
        let dofs = &self.cell_dofs[cell];
        tab.values
            .iter()
            .map(|vs| {
                vs.iter().zip(dofs).fold([0.0, 0.0], |acc, (v, &d)| {
                    [acc[0] + v[0] * coeffs[d], acc[1] + v[1] * coeffs[d]]
                })
            })
            .collect()
    }

    /// Zeroes boundary entries of a coefficient vector (homogeneous normal trace).
    pub fn zero_boundary(&self, v: &mut [f64]) {
        for &d in &self.boundary_dofs {
            v[d] = 0.0;
        }
    }

    /// Reference dof functionals applied to reference basis `i`; identity when unisolvent.
    pub fn reference_dual_matrix(&self) -> Vec<f64> {
        let nloc = self.local_dim();
        let mut out = vec![0.0; nloc * nloc];
        for i in 0..nloc {
            let col = self.functionals_of(|r| self.tabulate_ref(&[r]).values[0][i]);
            for (d, v) in col.into_iter().enumerate() {
                out[d * nloc + i] = v;
            }
        }
        out
    }
}

impl FunctionSpace for RtSpace {
    fn ndofs(&self) -> usize {
        self.num_edges * self.k + self.num_cells * self.interior_dofs_per_cell()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn dimension_count() {
        let m = Mesh::build_structured(1, 1, 1.0, 1.0, false, false).unwrap();
        let rt = RtSpace::new(&m, 2).unwrap();
        assert_eq!(rt.local_dim(), 12);
        assert_eq!(rt.ndofs(), 12);
        let rt1 = RtSpace::new(&m, 1).unwrap();
        assert_eq!(rt1.local_dim(), 4);
    }

    #[test]
    fn unisolvence() {
        let m = Mesh::build_structured(1, 1, 1.0, 1.0, false, false).unwrap();
        for k in 1..=3 {
            let rt = RtSpace::new(&m, k).unwrap();
            let n = rt.local_dim();
            let d = rt.reference_dual_matrix();
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((d[i * n + j] - e).abs() < 1e-12, "k={k} ({i},{j}) = {}", d[i * n + j]);
                }
            }
        }
    }

    #[test]
    fn edge_basis_has_zero_moments_on_other_edges() {
        let m = Mesh::build_structured(1, 1, 1.0, 1.0, false, false).unwrap();
        let rt = RtSpace::new(&m, 2).unwrap();
        let d = rt.reference_dual_matrix();
        // basis 0 is dual to the first moment on edge 0
        for dof in 2..8 {
            assert!(d[dof * 12].abs() < 1e-12);
        }
    }

    #[test]
    fn normal_trace_continuous_across_edges() {
        let m = Mesh::build_structured(4, 3, 1.0, 1.0, true, true).unwrap().perturb(0.15, 5).unwrap();
        let rt = RtSpace::new(&m, 2).unwrap();
        let coeffs: Vec<f64> = (0..rt.ndofs()).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        for e in &m.edges {
            let minus = e.minus.unwrap();
            for &s in &[-0.77, 0.0, 0.5] {
                let mut flux = [0.0; 2];
                for (slot, side) in [e.plus, minus].into_iter().enumerate() {
                    let (_, n, _, _) = m.edge_side_point(side, s);
                    let r = ref_edge_point(side.local, s);
                    let tab = rt.tabulate(&m, side.cell, &[r]).unwrap();
                    let v = rt.eval_cell(&coeffs, side.cell, &tab)[0];
                    flux[slot] = v[0] * n[0] + v[1] * n[1];
                }
                assert!((flux[0] + flux[1]).abs() < 1e-10, "{:?}", flux);
            }
        }
    }

    #[test]
    fn interpolation_of_linear_field_has_unit_divergence() {
        let m = Mesh::build_structured(1, 1, 1.0, 1.0, false, false).unwrap();
        let rt = RtSpace::new(&m, 2).unwrap();
        let f: VectorFn = Arc::new(|x: [f64; 2], _| [x[0], 0.0]);
        let c = rt.interpolate(&m, &f, 0.0);
        let pts = [[-0.3, 0.8], [0.9, -0.1], [0.0, 0.0]];
        let tab = rt.tabulate(&m, 0, &pts).unwrap();
        for p in 0..pts.len() {
            let div: f64 = tab.divs[p].iter().zip(rt.cell_dofs(0)).map(|(d, &i)| d * c[i]).sum();
            assert!((div - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_dofs_of_shear_mesh() {
        let m = Mesh::build_structured(4, 4, 1.0, 1.0, true, false).unwrap();
        let rt = RtSpace::new(&m, 2).unwrap();
        assert_eq!(rt.boundary_dofs().len(), 2 * 4 * 2);
        let f: VectorFn = Arc::new(|_x, _| [0.0, 1.0]);
        let mut c = rt.interpolate(&m, &f, 0.0);
        assert!(rt.boundary_dofs().iter().any(|&d| c[d].abs() > 1e-3));
        rt.zero_boundary(&mut c);
        assert!(rt.boundary_dofs().iter().all(|&d| c[d] == 0.0));
        let periodic = Mesh::build_structured(4, 4, 1.0, 1.0, true, true).unwrap();
        assert!(RtSpace::new(&periodic, 2).unwrap().boundary_dofs().is_empty());
    }
}
