//! Structured quadrilateral meshes with optional periodic identification.
//!
//! Cells are numbered row-major, `cell = i + nx * j`. Every cell keeps its own
//! copy of the four corner coordinates (geometric vertices live on the unwrapped
//! `(nx+1) x (ny+1)` grid), while topology uses vertex classes so that periodic
//! sides are identified without coordinate wrapping.
//!
//! Edge numbering: all vertical edges (normal along x) first, row-major in
//! `(i, j)`, then all horizontal edges (normal along y).
//!
//! Reference cell is `[-1, 1]^2` with counter-clockwise corners
//! `(-1,-1), (1,-1), (1,1), (-1,1)`. Local edges are 0 = bottom, 1 = right,
//! 2 = top, 3 = left; every local edge is parameterised by `s in [-1, 1]`
//! running in the +x (bottom/top) or +y (left/right) reference direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quadrature::CellRule;

/// One side of an edge: the owning cell and its local edge index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSide {
    pub cell: usize,
    pub local: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// x = const, normal along x
    Vertical,
    /// y = const, normal along y
    Horizontal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Vertex classes in global edge direction (+y for vertical, +x for horizontal).
    pub vertices: [usize; 2],
    pub kind: EdgeKind,
    /// Lower cell index (the "+" side); its outward normal is the edge normal.
    pub plus: EdgeSide,
    /// `None` on physical boundary edges.
    pub minus: Option<EdgeSide>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }
}

/// Bilinear map data at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomPoint {
    pub x: [f64; 2],
    /// `jac[r][c] = d x_r / d xi_c`
    pub jac: [[f64; 2]; 2],
    pub det: f64,
}

impl GeomPoint {
    /// `J^{-T} g` for a reference gradient `g`.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let j = &self.jac;
        let inv_det = 1.0 / self.det;
        // J^{-1} = 1/det [[j11, -j01], [-j10, j00]]; J^{-T} g
        [
            inv_det * (j[1][1] * g[0] - j[1][0] * g[1]),
            inv_det * (-j[0][1] * g[0] + j[0][0] * g[1]),
        ]
    }

    /// Contravariant Piola: `J v / det J`.
    pub fn piola(&self, v: [f64; 2]) -> [f64; 2] {
        let j = &self.jac;
        let inv_det = 1.0 / self.det;
        [
            inv_det * (j[0][0] * v[0] + j[0][1] * v[1]),
            inv_det * (j[1][0] * v[0] + j[1][1] * v[1]),
        ]
    }

    /// Inverse contravariant Piola: `det J * J^{-1} v`.
    pub fn inverse_piola(&self, v: [f64; 2]) -> [f64; 2] {
        let j = &self.jac;
        [j[1][1] * v[0] - j[0][1] * v[1], -j[1][0] * v[0] + j[0][0] * v[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub periodic_x: bool,
    pub periodic_y: bool,
    /// Unwrapped geometric vertex grid, index `i + (nx+1) * j`.
    pub vertices: Vec<[f64; 2]>,
    /// Topological class of every geometric vertex.
    pub vertex_class: Vec<usize>,
    /// Counter-clockwise geometric vertex indices per cell.
    pub cells: Vec<[usize; 4]>,
    /// Global edge index per local edge (bottom, right, top, left).
    pub cell_edges: Vec<[usize; 4]>,
    pub edges: Vec<Edge>,
    pub boundary_edges: Vec<usize>,
}

/// Reference point on local edge `local` at parameter `s`.
pub fn ref_edge_point(local: usize, s: f64) -> [f64; 2] {
    match local {
        0 => [s, -1.0],
        1 => [1.0, s],
        2 => [s, 1.0],
        3 => [-1.0, s],
        _ => panic!("local edge index {local} out of range"),
    }
}

/// Reference tangent `d xi / d s` of a local edge.
pub fn ref_edge_tangent(local: usize) -> [f64; 2] {
    match local {
        0 | 2 => [1.0, 0.0],
        1 | 3 => [0.0, 1.0],
        _ => panic!("local edge index {local} out of range"),
    }
}

/// Outward unit normal of a local edge on the reference square.
pub fn ref_edge_normal(local: usize) -> [f64; 2] {
    match local {
        0 => [0.0, -1.0],
        1 => [1.0, 0.0],
        2 => [0.0, 1.0],
        3 => [-1.0, 0.0],
        _ => panic!("local edge index {local} out of range"),
    }
}

impl Mesh {
    pub fn build_structured(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        periodic_x: bool,
        periodic_y: bool,
    ) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "cell counts must be positive, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }

        let gw = nx + 1;
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut vertex_class = Vec::with_capacity((nx + 1) * (ny + 1));
        let cw = if periodic_x { nx } else { nx + 1 };
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
                let ci = if periodic_x { i % nx } else { i };
                let cj = if periodic_y { j % ny } else { j };
                vertex_class.push(ci + cw * cj);
            }
        }

        let cell_index = |i: usize, j: usize| i + nx * j;
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let v0 = i + gw * j;
                cells.push([v0, v0 + 1, v0 + 1 + gw, v0 + gw]);
            }
        }

        let nvx = if periodic_x { nx } else { nx + 1 };
        let nhy = if periodic_y { ny } else { ny + 1 };
        let mut edges = Vec::with_capacity(nvx * ny + nx * nhy);
        let mut cell_edges = vec![[usize::MAX; 4]; nx * ny];

        let order_sides = |a: EdgeSide, b: EdgeSide| -> (EdgeSide, EdgeSide) {
            if (a.cell, a.local) <= (b.cell, b.local) {
                (a, b)
            } else {
                (b, a)
            }
        };

        // vertical edges at x-index i, between rows j and j+1
        for j in 0..ny {
            for i in 0..nvx {
                let left = if i > 0 {
                    Some(cell_index(i - 1, j))
                } else if periodic_x {
                    Some(cell_index(nx - 1, j))
                } else {
                    None
                };
                let right = if i < nx { Some(cell_index(i, j)) } else { None };
                let gv0 = i + gw * j;
                let verts = [vertex_class[gv0], vertex_class[gv0 + gw]];
                let (plus, minus) = match (left, right) {
                    (Some(l), Some(r)) => {
                        let (p, m) = order_sides(
                            EdgeSide { cell: l, local: 1 },
                            EdgeSide { cell: r, local: 3 },
                        );
                        (p, Some(m))
                    }
                    (Some(l), None) => (EdgeSide { cell: l, local: 1 }, None),
                    (None, Some(r)) => (EdgeSide { cell: r, local: 3 }, None),
                    (None, None) => unreachable!(),
                };
                let e = edges.len();
                for side in std::iter::once(plus).chain(minus) {
                    cell_edges[side.cell][side.local] = e;
                }
                edges.push(Edge { vertices: verts, kind: EdgeKind::Vertical, plus, minus });
            }
        }
        // horizontal edges at y-index j
        for j in 0..nhy {
            for i in 0..nx {
                let below = if j > 0 {
                    Some(cell_index(i, j - 1))
                } else if periodic_y {
                    Some(cell_index(i, ny - 1))
                } else {
                    None
                };
                let above = if j < ny { Some(cell_index(i, j)) } else { None };
                let gv0 = i + gw * j;
                let verts = [vertex_class[gv0], vertex_class[gv0 + 1]];
                let (plus, minus) = match (below, above) {
                    (Some(b), Some(a)) => {
                        let (p, m) = order_sides(
                            EdgeSide { cell: b, local: 2 },
                            EdgeSide { cell: a, local: 0 },
                        );
                        (p, Some(m))
                    }
                    (Some(b), None) => (EdgeSide { cell: b, local: 2 }, None),
                    (None, Some(a)) => (EdgeSide { cell: a, local: 0 }, None),
                    (None, None) => unreachable!(),
                };
                let e = edges.len();
                for side in std::iter::once(plus).chain(minus) {
                    cell_edges[side.cell][side.local] = e;
                }
                edges.push(Edge { vertices: verts, kind: EdgeKind::Horizontal, plus, minus });
            }
        }

        let boundary_edges = edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_boundary())
            .map(|(i, _)| i)
            .collect();

        Ok(Mesh {
            nx,
            ny,
            lx,
            ly,
            periodic_x,
            periodic_y,
            vertices,
            vertex_class,
            cells,
            cell_edges,
            edges,
            boundary_edges,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_interior_edges(&self) -> usize {
        self.edges.len() - self.boundary_edges.len()
    }

    /// Nominal cell widths `(Lx/nx, Ly/ny)`.
    pub fn spacing(&self) -> (f64, f64) {
        (self.lx / self.nx as f64, self.ly / self.ny as f64)
    }

    /// Whether geometric vertex `(i, j)` lies on the periodic or physical boundary.
    fn is_boundary_vertex(&self, i: usize, j: usize) -> bool {
        i == 0 || i == self.nx || j == 0 || j == self.ny
    }

    /// Randomly displaces every vertex that is not on the domain boundary by an
    /// independent uniform offset in `[-factor*dx, factor*dx] x [-factor*dy, factor*dy]`.
    ///
    /// Offsets are drawn from ChaCha8 seeded with `seed`, two draws per interior
    /// vertex in row-major order (x then y), each mapped as `2u - 1` from a
    /// uniform `u in [0, 1)`.
    pub fn perturb(&self, factor: f64, seed: u64) -> Result<Mesh> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!("perturbation factor {factor}")));
        }
        let mut out = self.clone();
        if factor == 0.0 {
            return Ok(out);
        }
        let (dx, dy) = self.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gw = self.nx + 1;
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                if self.is_boundary_vertex(i, j) {
                    continue;
                }
                let ux: f64 = rng.random();
                let uy: f64 = rng.random();
                let v = &mut out.vertices[i + gw * j];
                v[0] += factor * dx * (2.0 * ux - 1.0);
                v[1] += factor * dy * (2.0 * uy - 1.0);
            }
        }
        out.check_jacobians()?;
        Ok(out)
    }

    /// Verifies a strictly positive Jacobian at corners and 4x4 Gauss points of every cell.
    pub fn check_jacobians(&self) -> Result<()> {
        let rule = CellRule::gauss(4);
        let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        for c in 0..self.num_cells() {
            for p in rule.points.iter().chain(corners.iter()) {
                let g = self.map_point(c, *p);
                if !(g.det > 0.0) {
                    return Err(Error::Geometry(format!(
                        "non-positive Jacobian determinant {} in cell {c}",
                        g.det
                    )));
                }
            }
        }
        Ok(())
    }

    /// Corner coordinates of a cell in counter-clockwise order.
    pub fn cell_corners(&self, cell: usize) -> [[f64; 2]; 4] {
        let v = &self.cells[cell];
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]], self.vertices[v[3]]]
    }

    /// Bilinear map at a single reference point (no bounds checks).
    pub fn map_point(&self, cell: usize, r: [f64; 2]) -> GeomPoint {
        let x = self.cell_corners(cell);
        let (xi, eta) = (r[0], r[1]);
        let n = [
            0.25 * (1.0 - xi) * (1.0 - eta),
            0.25 * (1.0 + xi) * (1.0 - eta),
            0.25 * (1.0 + xi) * (1.0 + eta),
            0.25 * (1.0 - xi) * (1.0 + eta),
        ];
        let dn_dxi = [
            -0.25 * (1.0 - eta),
            0.25 * (1.0 - eta),
            0.25 * (1.0 + eta),
            -0.25 * (1.0 + eta),
        ];
        let dn_deta = [
            -0.25 * (1.0 - xi),
            -0.25 * (1.0 + xi),
            0.25 * (1.0 + xi),
            0.25 * (1.0 - xi),
        ];
        let mut p = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        for a in 0..4 {
            for r in 0..2 {
                p[r] += n[a] * x[a][r];
                jac[r][0] += dn_dxi[a] * x[a][r];
                jac[r][1] += dn_deta[a] * x[a][r];
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        GeomPoint { x: p, jac, det }
    }

    /// Physical points, Jacobians and determinants of `cell` at reference points.
    pub fn geometry(&self, cell: usize, ref_points: &[[f64; 2]]) -> Result<Vec<GeomPoint>> {
        if cell >= self.num_cells() {
            return Err(Error::OutOfRange { index: cell, len: self.num_cells() });
        }
        ref_points
            .iter()
            .map(|r| {
                if r[0].abs() > 1.0 + 1e-12 || r[1].abs() > 1.0 + 1e-12 {
                    Err(Error::InvalidArgument(format!("reference point {r:?} outside [-1,1]^2")))
                } else {
                    Ok(self.map_point(cell, *r))
                }
            })
            .collect()
    }

    /// Cell area; 2x2 Gauss is exact since det J is affine for bilinear maps.
    pub fn cell_area(&self, cell: usize) -> f64 {
        let rule = CellRule::gauss(2);
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * self.map_point(cell, *p).det)
            .sum()
    }

    /// Physical length of an edge, measured on its "+" side.
    pub fn edge_length(&self, edge: usize) -> f64 {
        let side = self.edges[edge].plus;
        let x = self.cell_corners(side.cell);
        let (a, b) = match side.local {
            0 => (x[0], x[1]),
            1 => (x[1], x[2]),
            2 => (x[3], x[2]),
            3 => (x[0], x[3]),
            _ => unreachable!(),
        };
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Physical point, outward unit normal and arc-length factor `ds/ds_ref`
    /// on a side of an edge at edge parameter `s`.
    pub fn edge_side_point(&self, side: EdgeSide, s: f64) -> ([f64; 2], [f64; 2], f64, GeomPoint) {
        let r = ref_edge_point(side.local, s);
        let g = self.map_point(side.cell, r);
        let t = ref_edge_tangent(side.local);
        let tx = g.jac[0][0] * t[0] + g.jac[0][1] * t[1];
        let ty = g.jac[1][0] * t[0] + g.jac[1][1] * t[1];
        let len = (tx * tx + ty * ty).sqrt();
        // (ty, -tx) is outward for edges traversed counter-clockwise (bottom, right).
        let sgn = if side.local < 2 { 1.0 } else { -1.0 };
        let n = [sgn * ty / len, -sgn * tx / len];
        (g.x, n, len, g)
    }

    /// Cell permutation giving a narrow band for cell-local DG couplings: the
    /// shorter axis runs fastest and periodic slow axes are folded
    /// (0, n-1, 1, n-2, ...) so wrap-around neighbours stay close.
    pub fn banded_cell_order(&self) -> Vec<usize> {
        let x_fast = self.nx <= self.ny;
        let (nf, ns, periodic_slow) = if x_fast {
            (self.nx, self.ny, self.periodic_y)
        } else {
            (self.ny, self.nx, self.periodic_x)
        };
        let slow: Vec<usize> = if periodic_slow && ns > 2 {
            let mut v = Vec::with_capacity(ns);
            let (mut lo, mut hi) = (0usize, ns - 1);
            while lo <= hi {
                v.push(lo);
                if lo != hi {
                    v.push(hi);
                }
                lo += 1;
                if hi == 0 {
                    break;
                }
                hi -= 1;
            }
            v
        } else {
            (0..ns).collect()
        };
        let mut order = Vec::with_capacity(self.num_cells());
        for s in slow {
            for f in 0..nf {
                let (i, j) = if x_fast { (f, s) } else { (s, f) };
                order.push(i + self.nx * j);
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_topology() {
        let m = Mesh::build_structured(1, 1, 1.0, 1.0, false, false).unwrap();
        assert_eq!(m.num_cells(), 1);
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.boundary_edges.len(), 4);
        assert_eq!(m.num_interior_edges(), 0);
    }

    #[test]
    fn two_by_one_periodic_x() {
        let m = Mesh::build_structured(2, 1, 1.0, 1.0, true, false).unwrap();
        assert_eq!(m.num_cells(), 2);
        let vertical: Vec<_> = m.edges.iter().filter(|e| e.kind == EdgeKind::Vertical).collect();
        let horizontal: Vec<_> =
            m.edges.iter().filter(|e| e.kind == EdgeKind::Horizontal).collect();
        assert_eq!(vertical.len(), 2);
        assert!(vertical.iter().all(|e| !e.is_boundary()));
        assert_eq!(horizontal.len(), 4);
        assert!(horizontal.iter().all(|e| e.is_boundary()));
    }

    #[test]
    fn fully_periodic_has_no_boundary() {
        let m = Mesh::build_structured(64, 32, 2.0, 1.0, true, true).unwrap();
        assert_eq!(m.num_cells(), 2048);
        assert!(m.boundary_edges.is_empty());
        assert_eq!(m.num_edges(), 2 * 2048);
    }

    #[test]
    fn invalid_arguments() {
        assert!(matches!(
            Mesh::build_structured(0, 1, 1.0, 1.0, false, false),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            Mesh::build_structured(1, 1, -1.0, 1.0, false, false),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn interior_edges_have_two_sides() {
        let m = Mesh::build_structured(3, 4, 1.0, 2.0, true, false).unwrap();
        for e in &m.edges {
            match e.minus {
                Some(minus) => assert!(e.plus.cell <= minus.cell),
                None => assert_eq!(e.kind, EdgeKind::Horizontal),
            }
        }
        for (c, ce) in m.cell_edges.iter().enumerate() {
            for (l, &e) in ce.iter().enumerate() {
                let edge = &m.edges[e];
                let side = EdgeSide { cell: c, local: l };
                assert!(edge.plus == side || edge.minus == Some(side));
            }
        }
    }

    #[test]
    fn unit_cell_geometry() {
        let m = Mesh::build_structured(1, 1, 1.0, 1.0, false, false).unwrap();
        let g = m.geometry(0, &[[0.0, 0.0]]).unwrap();
        assert!((g[0].x[0] - 0.5).abs() < 1e-15 && (g[0].x[1] - 0.5).abs() < 1e-15);
        assert!((g[0].det - 0.25).abs() < 1e-15);
        assert!(m.geometry(1, &[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn uniform_mesh_determinant() {
        let m = Mesh::build_structured(16, 16, 1.0, 1.0, true, true).unwrap();
        let rule = CellRule::gauss(3);
        for c in 0..m.num_cells() {
            for g in m.geometry(c, &rule.points).unwrap() {
                assert!((g.det - 1.0 / 1024.0).abs() < 1e-17);
            }
        }
    }

    #[test]
    fn skewed_cell_jacobian_matches_finite_differences() {
        let mut m = Mesh::build_structured(1, 1, 1.0, 1.0, false, false).unwrap();
        m.vertices[3] = [0.0, 1.2];
        let r = [0.0, 0.0];
        let g = m.map_point(0, r);
        let h = 1e-6;
        let f = |a: [f64; 2]| m.map_point(0, a).x;
        let dxi = {
            let (p, q) = (f([r[0] + h, r[1]]), f([r[0] - h, r[1]]));
            [(p[0] - q[0]) / (2.0 * h), (p[1] - q[1]) / (2.0 * h)]
        };
        let deta = {
            let (p, q) = (f([r[0], r[1] + h]), f([r[0], r[1] - h]));
            [(p[0] - q[0]) / (2.0 * h), (p[1] - q[1]) / (2.0 * h)]
        };
        let det_fd = dxi[0] * deta[1] - dxi[1] * deta[0];
        assert!((g.det - det_fd).abs() < 1e-10);
    }

    #[test]
    fn perturbation_bounds_and_determinism() {
        let m = Mesh::build_structured(20, 20, 1.0, 1.0, true, true).unwrap();
        let same = m.perturb(0.0, 7).unwrap();
        assert_eq!(same.vertices, m.vertices);
        let a = m.perturb(0.06, 42).unwrap();
        let b = m.perturb(0.06, 42).unwrap();
        assert_eq!(a.vertices, b.vertices);
        let bound = 0.06 / 20.0 + 1e-15;
        let mut moved = 0;
        for (p, q) in a.vertices.iter().zip(&m.vertices) {
            assert!((p[0] - q[0]).abs() <= bound && (p[1] - q[1]).abs() <= bound);
            if p != q {
                moved += 1;
            }
        }
        assert_eq!(moved, 19 * 19);
        assert_eq!(a.edges, m.edges);
        assert_eq!(a.cells, m.cells);
    }

    #[test]
    fn area_sum_is_domain_area() {
        let m = Mesh::build_structured(12, 7, 2.0, 1.0, false, true).unwrap().perturb(0.2, 3).unwrap();
        let total: f64 = (0..m.num_cells()).map(|c| m.cell_area(c)).sum();
        assert!((total - 2.0).abs() < 1e-12 * 2.0);
    }

    #[test]
    fn interior_normals_are_opposite() {
        let m = Mesh::build_structured(5, 4, 1.0, 1.0, true, true).unwrap().perturb(0.1, 9).unwrap();
        for e in &m.edges {
            let minus = e.minus.unwrap();
            for &s in &[-0.7, 0.1, 0.9] {
                let (_, np, lp, _) = m.edge_side_point(e.plus, s);
                let (_, nm, lm, _) = m.edge_side_point(minus, s);
                assert!((np[0] + nm[0]).abs() < 1e-12 && (np[1] + nm[1]).abs() < 1e-12);
                assert!((lp - lm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn banded_order_is_permutation() {
        let m = Mesh::build_structured(6, 5, 1.0, 1.0, true, true).unwrap();
        let mut o = m.banded_cell_order();
        o.sort_unstable();
        assert_eq!(o, (0..30).collect::<Vec<_>>());
    }
}
