use std::ops::Range;

use crate::mesh::{GeomPoint, Mesh};
use crate::quadrature::gauss_lobatto_points;

use super::{FunctionSpace, ScalarFn};

/// Discontinuous tensor-product Lagrange space `dQ_order` with Gauss–Lobatto
/// nodes. Local dofs are numbered with the x index fastest, so for `dQ1` the
/// nodes are `(-1,-1), (1,-1), (-1,1), (1,1)`.
#[derive(Debug, Clone)]
pub struct DgSpace {
    order: usize,
    nodes: Vec<f64>,
    num_cells: usize,
}

/// Basis values and reference gradients at a set of reference points.
#[derive(Debug, Clone)]
pub struct DgTabulation {
    /// `values[p][i]`
    pub values: Vec<Vec<f64>>,
    /// `grads[p][i]` with respect to reference coordinates
    pub grads: Vec<Vec<[f64; 2]>>,
}

fn lagrange_1d(nodes: &[f64], x: f64) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    let mut v = vec![1.0; n];
    let mut d = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            if b == a {
                continue;
            }
            let denom = nodes[a] - nodes[b];
            // product rule for the derivative
            let mut term = 1.0 / denom;
            for c in 0..n {
                if c != a && c != b {
                    term *= (x - nodes[c]) / (nodes[a] - nodes[c]);
                }
            }
            d[a] += term;
            v[a] *= (x - nodes[b]) / denom;
        }
    }
    (v, d)
}

impl DgSpace {
    pub fn new(mesh: &Mesh, order: usize) -> Self {
        DgSpace { order, nodes: gauss_lobatto_points(order + 1), num_cells: mesh.num_cells() }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn dofs_per_cell(&self) -> usize {
        (self.order + 1) * (self.order + 1)
    }

    pub fn cell_dofs(&self, cell: usize) -> Range<usize> {
        let n = self.dofs_per_cell();
        cell * n..(cell + 1) * n
    }

    /// Reference coordinates of the local nodes in dof order.
    pub fn ref_nodes(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.dofs_per_cell());
        for &y in &self.nodes {
            for &x in &self.nodes {
                out.push([x, y]);
            }
        }
        out
    }

    pub fn tabulate(&self, ref_points: &[[f64; 2]]) -> DgTabulation {
        let n1 = self.order + 1;
        let mut values = Vec::with_capacity(ref_points.len());
        let mut grads = Vec::with_capacity(ref_points.len());
        for p in ref_points {
            let (vx, dx) = lagrange_1d(&self.nodes, p[0]);
            let (vy, dy) = lagrange_1d(&self.nodes, p[1]);
            let mut v = Vec::with_capacity(n1 * n1);
            let mut g = Vec::with_capacity(n1 * n1);
            for b in 0..n1 {
                for a in 0..n1 {
                    v.push(vx[a] * vy[b]);
                    g.push([dx[a] * vy[b], vx[a] * dy[b]]);
                }
            }
            values.push(v);
            grads.push(g);
        }
        DgTabulation { values, grads }
    }

    /// Physical gradients `J^{-T} grad_ref` at the given geometry points.
    pub fn physical_gradients(tab: &DgTabulation, geom: &[GeomPoint]) -> Vec<Vec<[f64; 2]>> {
        tab.grads
            .iter()
            .zip(geom)
            .map(|(gs, g)| gs.iter().map(|r| g.push_gradient(*r)).collect())
            .collect()
    }

    /// Nodal interpolation of `f(x, t)`.
    pub fn interpolate(&self, mesh: &Mesh, f: &ScalarFn, t: f64) -> Vec<f64> {
        let nodes = self.ref_nodes();
        let mut out = vec![0.0; self.ndofs()];
        for c in 0..mesh.num_cells() {
            for (l, r) in nodes.iter().enumerate() {
                let x = mesh.map_point(c, *r).x;
                out[self.cell_dofs(c).start + l] = f(x, t);
            }
        }
        out
    }

    /// Evaluates a coefficient vector at reference points of one cell.
    pub fn eval_cell(&self, coeffs: &[f64], cell: usize, tab: &DgTabulation) -> Vec<f64> {
        let dofs = &coeffs[self.cell_dofs(cell)];
        tab.values.iter().map(|v| v.iter().zip(dofs).map(|(a, b)| a * b).sum()).collect()
    }
}

impl FunctionSpace for DgSpace {
    fn ndofs(&self) -> usize {
        self.num_cells * self.dofs_per_cell()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> Mesh {
        Mesh::build_structured(1, 1, 1.0, 1.0, false, false).unwrap()
    }

    #[test]
    fn nodal_property_and_partition_of_unity() {
        let dg = DgSpace::new(&mesh(), 1);
        let tab = dg.tabulate(&[[-1.0, -1.0], [0.3, -0.2]]);
        assert_eq!(tab.values[0], vec![1.0, 0.0, 0.0, 0.0]);
        let s: f64 = tab.values[1].iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        let gs: [f64; 2] = tab.grads[1].iter().fold([0.0, 0.0], |a, g| [a[0] + g[0], a[1] + g[1]]);
        assert!(gs[0].abs() < 1e-15 && gs[1].abs() < 1e-15);
    }

    #[test]
    fn linear_reproduction() {
        let m = mesh();
        let dg = DgSpace::new(&m, 1);
        let f: ScalarFn = std::sync::Arc::new(|x: [f64; 2], _t| x[0]);
        let c = dg.interpolate(&m, &f, 0.0);
        let pts = [[0.1, 0.7], [-0.5, 0.5], [0.9, -0.9]];
        let tab = dg.tabulate(&pts);
        let geom = m.geometry(0, &pts).unwrap();
        let grads = DgSpace::physical_gradients(&tab, &geom);
        for g in grads {
            let v = g.iter().zip(&c).fold([0.0, 0.0], |a, (gi, ci)| [a[0] + gi[0] * ci, a[1] + gi[1] * ci]);
            assert!((v[0] - 1.0).abs() < 1e-14 && v[1].abs() < 1e-14);
        }
    }

    #[test]
    fn constant_interpolates_to_ones() {
        let m = Mesh::build_structured(3, 2, 1.0, 1.0, true, false).unwrap();
        let dg = DgSpace::new(&m, 1);
        let f: ScalarFn = std::sync::Arc::new(|_x, _t| 1.0);
        assert!(dg.interpolate(&m, &f, 0.0).iter().all(|&v| v == 1.0));
        assert_eq!(dg.ndofs(), 24);
    }

    #[test]
    fn piecewise_constant_space() {
        let dg = DgSpace::new(&mesh(), 0);
        assert_eq!(dg.dofs_per_cell(), 1);
        let tab = dg.tabulate(&[[0.4, -0.1]]);
        assert_eq!(tab.values[0], vec![1.0]);
    }
}
