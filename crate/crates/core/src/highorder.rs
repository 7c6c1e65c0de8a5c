//! Degree-k Lagrange elements and a C⁰ interior-penalty discretization of the
//! fourth-order operator `Q = L²`, `L = div M∇`, with Dirichlet values imposed
//! strongly and the conormal derivative `ν·M∇u` imposed by Nitsche's method.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::P1Space;
use crate::field::ScalarField;
use crate::mesh::{distance, BoundaryTag, Point};
use crate::quadrature::{gauss_legendre, triangle_rule};
use crate::sparse::{CsrMatrix, SparseLu, TripletBuilder};
use crate::tensor::SpdTensor2;

/// Interior-penalty strength before the `k² · cond(M) / h_e` scaling.
pub const PENALTY: f64 = 10.0;

/// Lagrange basis on the reference triangle with nodes on the lattice
/// `(i/k, j/k)`, `i + j ≤ k`.
#[derive(Clone, Debug)]
struct ReferenceBasis {
    k: usize,
    /// Lattice node integer coordinates `(i, j)`.
    nodes: Vec<(usize, usize)>,
    exps: Vec<(usize, usize)>,
    /// `coeffs[(m, n)]`: coefficient of monomial `m` in basis function `n`.
    coeffs: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Jet {
    value: f64,
    grad: [f64; 2],
    /// `[∂11, ∂12, ∂22]`
    hess: [f64; 3],
}

fn pow(x: f64, n: usize) -> f64 {
    x.powi(n as i32)
}

fn monomial_jet(a: usize, b: usize, x: f64, y: f64) -> Jet {
    let d = |n: usize, t: f64| if n == 0 { 0.0 } else { n as f64 * pow(t, n - 1) };
    let dd = |n: usize, t: f64| if n < 2 { 0.0 } else { (n * (n - 1)) as f64 * pow(t, n - 2) };
    Jet {
        value: pow(x, a) * pow(y, b),
        grad: [d(a, x) * pow(y, b), pow(x, a) * d(b, y)],
        hess: [dd(a, x) * pow(y, b), d(a, x) * d(b, y), pow(x, a) * dd(b, y)],
    }
}

impl ReferenceBasis {
    fn new(k: usize) -> Self {
        let mut nodes = Vec::new();
        for j in 0..=k {
            for i in 0..=k - j {
                nodes.push((i, j));
            }
        }
        let exps = nodes.clone();
        let n = nodes.len();
        let v = DMatrix::from_fn(n, n, |r, c| {
            let (i, j) = nodes[r];
            monomial_jet(exps[c].0, exps[c].1, i as f64 / k as f64, j as f64 / k as f64).value
        });
        let coeffs = v.try_inverse().expect("Lagrange Vandermonde matrix is invertible");
        ReferenceBasis { k, nodes, exps, coeffs }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Jets of all basis functions at a reference point.
    fn eval(&self, xi: [f64; 2]) -> Vec<Jet> {
        let mono: Vec<Jet> = self.exps.iter().map(|&(a, b)| monomial_jet(a, b, xi[0], xi[1])).collect();
        (0..self.len())
            .map(|n| {
                let mut j = Jet::default();
                for (m, mj) in mono.iter().enumerate() {
                    let c = self.coeffs[(m, n)];
                    j.value += c * mj.value;
                    for d in 0..2 {
                        j.grad[d] += c * mj.grad[d];
                    }
                    for d in 0..3 {
                        j.hess[d] += c * mj.hess[d];
                    }
                }
                j
            })
            .collect()
    }

    /// Barycentric integer weights `(λ0, λ1, λ2)·k` of a lattice node.
    fn bary(&self, n: usize) -> [usize; 3] {
        let (i, j) = self.nodes[n];
        [self.k - i - j, i, j]
    }
}

/// Affine element geometry.
#[derive(Clone, Copy, Debug)]
struct ElementMap {
    origin: Point,
    jac: [[f64; 2]; 2],
    /// Inverse Jacobian.
    inv: [[f64; 2]; 2],
    area: f64,
}

impl ElementMap {
    fn new(p: [Point; 3]) -> Self {
        let jac = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        ElementMap { origin: p[0], jac, inv, area: 0.5 * det }
    }

    fn point(&self, xi: [f64; 2]) -> Point {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    /// Physical gradient `J⁻ᵀ ∇_ξ`.
    fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [self.inv[0][0] * g[0] + self.inv[1][0] * g[1], self.inv[0][1] * g[0] + self.inv[1][1] * g[1]]
    }

    /// Physical Hessian `J⁻ᵀ H_ξ J⁻¹` as `[∂11, ∂12, ∂22]`.
    fn hess(&self, h: [f64; 3]) -> [f64; 3] {
        let hm = [[h[0], h[1]], [h[1], h[2]]];
        let mut out = [[0.0; 2]; 2];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                for c in 0..2 {
                    for d in 0..2 {
                        *v += self.inv[c][a] * hm[c][d] * self.inv[d][b];
                    }
                }
            }
        }
        [out[0][0], out[0][1], out[1][1]]
    }
}

fn div_m_grad(m: &SpdTensor2, h: [f64; 3]) -> f64 {
    m.m11 * h[0] + 2.0 * m.m12 * h[1] + m.m22 * h[2]
}

/// Location on a boundary edge handed to data callbacks.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub tag: BoundaryTag,
    /// Edge index in the boundary loop; the edge runs from loop vertex `edge`
    /// to loop vertex `edge + 1`.
    pub edge: usize,
    /// Position along the edge in `[0, 1]`.
    pub t: f64,
    pub x: Point,
    /// Outward unit normal of the subdomain.
    pub normal: [f64; 2],
}

type EdgeKey = (usize, usize);

#[derive(Clone, Debug)]
struct BoundaryEdgeInfo {
    tag: BoundaryTag,
    loop_edge: usize,
    /// Local P1 vertex at the start of the loop edge.
    start: usize,
    normal: [f64; 2],
}

/// Continuous degree-k Lagrange space over the triangles of a P1 space.
pub struct HighOrderSpace {
    p1: Arc<P1Space>,
    basis: ReferenceBasis,
    elem_dofs: Vec<Vec<usize>>,
    dof_points: Vec<Point>,
    boundary_dofs: Vec<usize>,
    /// For each mesh edge, the adjacent `(triangle, local edge)` pairs.
    edges: Vec<(EdgeKey, Vec<(usize, usize)>)>,
    boundary_edges: HashMap<EdgeKey, BoundaryEdgeInfo>,
}

/// Lattice nodes of local edge `e` (from local vertex `e` to `e + 1`) as
/// `(node, position from vertex e in units of 1/k)`.
fn edge_nodes(basis: &ReferenceBasis, e: usize) -> Vec<(usize, usize)> {
    let (a, b, c) = (e, (e + 1) % 3, (e + 2) % 3);
    let mut out: Vec<(usize, usize)> = (0..basis.len())
        .filter_map(|n| {
            let l = basis.bary(n);
            (l[c] == 0).then_some((n, l[b]))
        })
        .collect();
    out.sort_by_key(|&(_, s)| s);
    debug_assert!(out.iter().all(|&(n, _)| basis.bary(n)[a] + basis.bary(n)[b] == basis.k));
    out
}

fn reference_vertex(e: usize) -> [f64; 2] {
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]][e]
}

impl HighOrderSpace {
    pub fn new(p1: Arc<P1Space>, degree: usize) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidInput(format!(
                "the interior-penalty fourth-order form needs degree ≥ 2, got {degree}"
            )));
        }
        let basis = ReferenceBasis::new(degree);
        let k = degree;
        let nv = p1.num_dofs();
        let tris = p1.triangles();

        let mut edge_index: HashMap<EdgeKey, usize> = HashMap::new();
        let mut edges: Vec<(EdgeKey, Vec<(usize, usize)>)> = Vec::new();
        for (t, tri) in tris.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push((key, Vec::new()));
                    edges.len() - 1
                });
                edges[id].1.push((t, e));
            }
        }
        let per_edge = k - 1;
        let per_cell = (k - 1) * (k - 2) / 2;
        let edge_base = nv;
        let cell_base = nv + edges.len() * per_edge;
        let ndofs = cell_base + tris.len() * per_cell;

        let mut elem_dofs = Vec::with_capacity(tris.len());
        let mut dof_points = vec![[0.0; 2]; ndofs];
        for (t, tri) in tris.iter().enumerate() {
            let map = ElementMap::new(p1.triangle_points(t));
            let mut dofs = vec![usize::MAX; basis.len()];
            let mut cell_count = 0;
            for n in 0..basis.len() {
                let l = basis.bary(n);
                let nonzero: Vec<usize> = (0..3).filter(|&v| l[v] > 0).collect();
                let dof = match nonzero.len() {
                    1 => tri[nonzero[0]],
                    2 => {
                        let (va, vb) = (tri[nonzero[0]], tri[nonzero[1]]);
                        let key = (va.min(vb), va.max(vb));
                        // position counted from the endpoint with the smaller index
                        let steps_from_low = if va < vb { l[nonzero[1]] } else { l[nonzero[0]] };
                        edge_base + edge_index[&key] * per_edge + steps_from_low - 1
                    }
                    _ => {
                        cell_count += 1;
                        cell_base + t * per_cell + cell_count - 1
                    }
                };
                let (i, j) = basis.nodes[n];
                dof_points[dof] = map.point([i as f64 / k as f64, j as f64 / k as f64]);
                dofs[n] = dof;
            }
            elem_dofs.push(dofs);
        }

        let mut boundary_edges = HashMap::new();
        for part in p1.boundary_parts() {
            for kk in 0..part.len() {
                let (a, b) = part.edge(kk);
                let (va, vb) = (part.vertices[a], part.vertices[b]);
                boundary_edges.insert(
                    (va.min(vb), va.max(vb)),
                    BoundaryEdgeInfo { tag: part.tag, loop_edge: kk, start: va, normal: part.normals[kk] },
                );
            }
        }
        let mut on_boundary = vec![false; ndofs];
        for (key, adj) in &edges {
            if boundary_edges.contains_key(key) {
                let (t, e) = adj[0];
                for (n, _) in edge_nodes(&basis, e) {
                    on_boundary[elem_dofs[t][n]] = true;
                }
            }
        }
        let boundary_dofs = (0..ndofs).filter(|&d| on_boundary[d]).collect();
        Ok(HighOrderSpace { p1, basis, elem_dofs, dof_points, boundary_dofs, edges, boundary_edges })
    }

    pub fn degree(&self) -> usize {
        self.basis.k
    }

    pub fn p1(&self) -> &Arc<P1Space> {
        &self.p1
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_points.len()
    }

    pub fn dof_points(&self) -> &[Point] {
        &self.dof_points
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        &self.elem_dofs[t]
    }

    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.dof_points.iter().map(|&p| f(p)).collect()
    }

    /// Values at the mesh vertices, which carry the first dofs.
    pub fn vertex_values(&self, coeffs: &[f64]) -> ScalarField {
        ScalarField::new(self.p1.subdomain(), coeffs[..self.p1.num_dofs()].to_vec())
    }

    fn element_map(&self, t: usize) -> ElementMap {
        ElementMap::new(self.p1.triangle_points(t))
    }

    /// Element-local quadrature data: physical point, weight and basis jets.
    fn element_quadrature(&self, t: usize, degree: usize) -> Vec<(Point, f64, Vec<Jet>)> {
        let map = self.element_map(t);
        triangle_rule(degree)
            .into_iter()
            .map(|(xi, w)| {
                let jets = self
                    .basis
                    .eval(xi)
                    .into_iter()
                    .map(|j| Jet { value: j.value, grad: map.grad(j.grad), hess: map.hess(j.hess) })
                    .collect();
                (map.point(xi), 2.0 * map.area * w, jets)
            })
            .collect()
    }

    /// Basis jets along local edge `e` of triangle `t` at parameter `s`
    /// measured from local vertex `e`.
    fn edge_jets(&self, t: usize, e: usize, s: f64) -> (Point, Vec<Jet>) {
        let map = self.element_map(t);
        let (a, b) = (reference_vertex(e), reference_vertex((e + 1) % 3));
        let xi = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
        let jets = self
            .basis
            .eval(xi)
            .into_iter()
            .map(|j| Jet { value: j.value, grad: map.grad(j.grad), hess: map.hess(j.hess) })
            .collect();
        (map.point(xi), jets)
    }

    /// Assembles `∫ c(x) u v` style forms: `f(jet_u, jet_v)` integrated per element.
    fn volume_form<F>(&self, quad_degree: usize, f: F) -> CsrMatrix
    where
        F: Fn(&Jet, &Jet) -> f64 + Sync,
    {
        let n = self.num_dofs();
        let locals: Vec<Vec<f64>> = (0..self.elem_dofs.len())
            .into_par_iter()
            .map(|t| {
                let nb = self.basis.len();
                let mut local = vec![0.0; nb * nb];
                for (_, w, jets) in self.element_quadrature(t, quad_degree) {
                    for i in 0..nb {
                        for j in 0..nb {
                            local[i * nb + j] += w * f(&jets[j], &jets[i]);
                        }
                    }
                }
                local
            })
            .collect();
        let mut b = TripletBuilder::new(n, n);
        let nb = self.basis.len();
        for (t, local) in locals.iter().enumerate() {
            let dofs = &self.elem_dofs[t];
            for i in 0..nb {
                for j in 0..nb {
                    b.push(dofs[i], dofs[j], local[i * nb + j]);
                }
            }
        }
        b.build()
    }

    /// `∫ ∇v·M∇u`.
    pub fn stiffness(&self, m: &SpdTensor2) -> CsrMatrix {
        self.volume_form(2 * self.degree(), |u, v| m.form(v.grad, u.grad))
    }

    /// `∫ u v`.
    pub fn mass(&self) -> CsrMatrix {
        self.volume_form(2 * self.degree(), |u, v| u.value * v.value)
    }

    /// `∫ (a·∇u + a0 u)(−Δv)`, elementwise.
    pub fn reaction_against_laplacian(&self, a: [f64; 2], a0: f64) -> CsrMatrix {
        self.volume_form(2 * self.degree(), |u, v| {
            (a[0] * u.grad[0] + a[1] * u.grad[1] + a0 * u.value) * -(v.hess[0] + v.hess[2])
        })
    }

    /// `∫ (a·∇u + a0 u) v`.
    pub fn reaction(&self, a: [f64; 2], a0: f64) -> CsrMatrix {
        self.volume_form(2 * self.degree(), |u, v| (a[0] * u.grad[0] + a[1] * u.grad[1] + a0 * u.value) * v.value)
    }

    /// `∫ s v` for a source given per element: `s(triangle, barycentric, x)`.
    pub fn load<S>(&self, source: S) -> Vec<f64>
    where
        S: Fn(usize, [f64; 3], Point) -> f64 + Sync,
    {
        self.tested_load(source, |j| j.value)
    }

    /// `∫ s (−Δv)` for a source given per element.
    pub fn load_against_laplacian<S>(&self, source: S) -> Vec<f64>
    where
        S: Fn(usize, [f64; 3], Point) -> f64 + Sync,
    {
        self.tested_load(source, |j| -(j.hess[0] + j.hess[2]))
    }

    fn tested_load<S, T>(&self, source: S, test: T) -> Vec<f64>
    where
        S: Fn(usize, [f64; 3], Point) -> f64 + Sync,
        T: Fn(&Jet) -> f64 + Sync,
    {
        let deg = 2 * self.degree() + 2;
        let locals: Vec<Vec<f64>> = (0..self.elem_dofs.len())
            .into_par_iter()
            .map(|t| {
                let map = self.element_map(t);
                let mut local = vec![0.0; self.basis.len()];
                for (xi, w) in triangle_rule(deg) {
                    let x = map.point(xi);
                    let s = source(t, [1.0 - xi[0] - xi[1], xi[0], xi[1]], x);
                    for (i, jet) in self.basis.eval(xi).iter().enumerate() {
                        let jet = Jet { value: jet.value, grad: map.grad(jet.grad), hess: map.hess(jet.hess) };
                        local[i] += 2.0 * map.area * w * s * test(&jet);
                    }
                }
                local
            })
            .collect();
        let mut f = vec![0.0; self.num_dofs()];
        for (t, local) in locals.iter().enumerate() {
            for (i, v) in local.iter().enumerate() {
                f[self.elem_dofs[t][i]] += v;
            }
        }
        f
    }

    /// Penalty coefficient `η / h_e` on an edge of length `len`.
    fn penalty(&self, m: &SpdTensor2, len: f64) -> f64 {
        let k = self.degree() as f64;
        PENALTY * k * k * m.condition_number() / len
    }

    /// Gauss points on each mesh edge with the jets of both sides:
    /// returns, per edge, `(weight, [(dofs, L φ, ∂_M φ, outward normal)] per side, key)`.
    fn edge_terms(&self, m: &SpdTensor2, quad_points: usize) -> Vec<EdgeQuadrature> {
        let gauss = gauss_legendre(quad_points);
        self.edges
            .par_iter()
            .map(|(key, adj)| {
                let (t0, e0) = adj[0];
                let tri0 = self.p1.triangles()[t0];
                let (pa, pb) = (self.p1.points()[tri0[e0]], self.p1.points()[tri0[(e0 + 1) % 3]]);
                let len = distance(pa, pb);
                let mut points = Vec::with_capacity(gauss.len());
                for &(s, w) in &gauss {
                    let mut sides = Vec::with_capacity(adj.len());
                    let mut x = [0.0; 2];
                    for &(t, e) in adj {
                        let tri = self.p1.triangles()[t];
                        let (qa, qb) = (self.p1.points()[tri[e]], self.p1.points()[tri[(e + 1) % 3]]);
                        // both sides evaluate the same physical point
                        let s_local = if tri[e] == tri0[e0] { s } else { 1.0 - s };
                        let (px, jets) = self.edge_jets(t, e, s_local);
                        x = px;
                        let nrm = [(qb[1] - qa[1]) / len, -(qb[0] - qa[0]) / len];
                        let lphi: Vec<f64> = jets.iter().map(|j| div_m_grad(m, j.hess)).collect();
                        let dphi: Vec<f64> = jets.iter().map(|j| m.form(nrm, j.grad)).collect();
                        sides.push(EdgeSide { triangle: t, lphi, dphi });
                    }
                    points.push(EdgePoint { weight: w * len, x, sides });
                }
                EdgeQuadrature { key: *key, len, points, penalty: self.penalty(m, len) }
            })
            .collect()
    }

    /// The C⁰ interior-penalty matrix of `Q = (div M∇)²` including the
    /// Nitsche terms for the conormal condition; no Dirichlet rows applied.
    pub fn fourth_order_matrix(&self, m: &SpdTensor2) -> CsrMatrix {
        let n = self.num_dofs();
        let volume = self.volume_form(2 * self.degree(), |u, v| div_m_grad(m, u.hess) * div_m_grad(m, v.hess));
        let mut b = TripletBuilder::new(n, n);
        b.extend_from(&volume, 0, 0, 1.0);
        for eq in self.edge_terms(m, self.degree() + 1) {
            let boundary = eq.points.first().is_some_and(|p| p.sides.len() == 1);
            let avg = if boundary { 1.0 } else { 0.5 };
            for p in &eq.points {
                // concatenated (dof, average of Lφ, jump of ∂_M φ)
                let mut entries: Vec<(usize, f64, f64)> = Vec::new();
                for side in &p.sides {
                    let dofs = &self.elem_dofs[side.triangle];
                    for (i, &d) in dofs.iter().enumerate() {
                        entries.push((d, avg * side.lphi[i], side.dphi[i]));
                    }
                }
                for &(di, li, ji) in &entries {
                    for &(dj, lj, jj) in &entries {
                        let val = -li * jj - lj * ji + eq.penalty * ji * jj;
                        // row = test function i, column = trial function j
                        b.push(di, dj, p.weight * val);
                    }
                }
            }
        }
        b.build()
    }

    /// Right-hand side `∫ g v − ∫_∂ L v g_n + Σ η/h ∫_∂ g_n ∂_M v`.
    pub fn fourth_order_rhs<S, G>(&self, m: &SpdTensor2, source: S, conormal: G) -> Vec<f64>
    where
        S: Fn(usize, [f64; 3], Point) -> f64 + Sync,
        G: Fn(BoundaryPoint) -> f64 + Sync,
    {
        let mut f = self.load(source);
        for eq in self.edge_terms(m, self.degree() + 2) {
            let Some(info) = self.boundary_edges.get(&eq.key) else { continue };
            let start = self.p1.points()[info.start];
            for p in &eq.points {
                let side = &p.sides[0];
                let t = distance(start, p.x) / eq.len;
                let gn = conormal(BoundaryPoint {
                    tag: info.tag,
                    edge: info.loop_edge,
                    t,
                    x: p.x,
                    normal: info.normal,
                });
                for (i, &d) in self.elem_dofs[side.triangle].iter().enumerate() {
                    f[d] += p.weight * gn * (-side.lphi[i] + eq.penalty * side.dphi[i]);
                }
            }
        }
        f
    }

    /// Strong Dirichlet values at the boundary dofs, `dirichlet(BoundaryPoint)`.
    pub fn boundary_values<D>(&self, dirichlet: D) -> Vec<(usize, f64)>
    where
        D: Fn(BoundaryPoint) -> f64,
    {
        let mut out: HashMap<usize, f64> = HashMap::new();
        for (key, adj) in &self.edges {
            let Some(info) = self.boundary_edges.get(key) else { continue };
            let (t, e) = adj[0];
            let start = self.p1.points()[info.start];
            let len = distance(self.p1.points()[key.0], self.p1.points()[key.1]);
            for (n, _) in edge_nodes(&self.basis, e) {
                let d = self.elem_dofs[t][n];
                let x = self.dof_points[d];
                out.entry(d).or_insert_with(|| {
                    dirichlet(BoundaryPoint {
                        tag: info.tag,
                        edge: info.loop_edge,
                        t: distance(start, x) / len,
                        x,
                        normal: info.normal,
                    })
                });
            }
        }
        let mut v: Vec<(usize, f64)> = out.into_iter().collect();
        v.sort_by_key(|&(d, _)| d);
        v
    }

    /// Solves `A u = f` with the listed dofs fixed, by eliminating them.
    pub fn solve_with_dirichlet(&self, a: &CsrMatrix, f: &[f64], fixed: &[(usize, f64)]) -> Result<Vec<f64>> {
        let n = self.num_dofs();
        let mut u = vec![0.0; n];
        let mut is_fixed = vec![false; n];
        for &(d, v) in fixed {
            u[d] = v;
            is_fixed[d] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
        let fixed_idx: Vec<usize> = fixed.iter().map(|&(d, _)| d).collect();
        let fixed_val: Vec<f64> = fixed.iter().map(|&(_, v)| v).collect();
        let corr = a.submatrix(&free, &fixed_idx).mul_vec(&fixed_val);
        let rhs: Vec<f64> = free.iter().zip(&corr).map(|(&i, c)| f[i] - c).collect();
        let lu = SparseLu::new(&a.submatrix(&free, &free))?;
        for (&i, v) in free.iter().zip(lu.solve(&rhs)?) {
            u[i] = v;
        }
        Ok(u)
    }

    /// Replaces the rows of the given dofs by identity rows.
    pub fn with_identity_rows(&self, a: &CsrMatrix, dofs: &[usize]) -> CsrMatrix {
        let mut fixed = vec![false; a.nrows()];
        for &d in dofs {
            fixed[d] = true;
        }
        let mut b = TripletBuilder::new(a.nrows(), a.ncols());
        for (i, j, v) in a.iter() {
            if !fixed[i] {
                b.push(i, j, v);
            }
        }
        for &d in dofs {
            b.push(d, d, 1.0);
        }
        b.build()
    }

    /// `(Σ_T ∫ |∇u_h − ∇u|²)^{1/2}` against an exact gradient.
    pub fn h1_seminorm_error(&self, coeffs: &[f64], grad: impl Fn(Point) -> [f64; 2] + Sync) -> f64 {
        let deg = 2 * self.degree() + 4;
        (0..self.elem_dofs.len())
            .into_par_iter()
            .map(|t| {
                let dofs = &self.elem_dofs[t];
                self.element_quadrature(t, deg)
                    .iter()
                    .map(|(x, w, jets)| {
                        let mut g = [0.0; 2];
                        for (i, j) in jets.iter().enumerate() {
                            g[0] += coeffs[dofs[i]] * j.grad[0];
                            g[1] += coeffs[dofs[i]] * j.grad[1];
                        }
                        let e = grad(*x);
                        w * ((g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2))
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `(∫ |u_h − u|²)^{1/2}`.
    pub fn l2_error(&self, coeffs: &[f64], exact: impl Fn(Point) -> f64 + Sync) -> f64 {
        let deg = 2 * self.degree() + 4;
        (0..self.elem_dofs.len())
            .into_par_iter()
            .map(|t| {
                let dofs = &self.elem_dofs[t];
                self.element_quadrature(t, deg)
                    .iter()
                    .map(|(x, w, jets)| {
                        let v: f64 = jets.iter().enumerate().map(|(i, j)| coeffs[dofs[i]] * j.value).sum();
                        w * (v - exact(*x)).powi(2)
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}

struct EdgeSide {
    triangle: usize,
    lphi: Vec<f64>,
    dphi: Vec<f64>,
}

struct EdgePoint {
    weight: f64,
    x: Point,
    sides: Vec<EdgeSide>,
}

struct EdgeQuadrature {
    key: EdgeKey,
    len: f64,
    points: Vec<EdgePoint>,
    penalty: f64,
}

/// Data of the clamped problem `Q u = g`, `u = u_D`, `ν·M∇u = g_n`.
pub struct ClampedData<'a> {
    pub source: Box<dyn Fn(usize, [f64; 3], Point) -> f64 + Sync + 'a>,
    pub dirichlet: Box<dyn Fn(BoundaryPoint) -> f64 + 'a>,
    pub conormal: Box<dyn Fn(BoundaryPoint) -> f64 + Sync + 'a>,
}

impl<'a> ClampedData<'a> {
    /// Data given by smooth functions of position (and the outward normal).
    pub fn from_functions(
        source: impl Fn(Point) -> f64 + Sync + 'a,
        dirichlet: impl Fn(Point) -> f64 + 'a,
        conormal: impl Fn(Point, [f64; 2]) -> f64 + Sync + 'a,
    ) -> Self {
        ClampedData {
            source: Box::new(move |_, _, x| source(x)),
            dirichlet: Box::new(move |b| dirichlet(b.x)),
            conormal: Box::new(move |b| conormal(b.x, b.normal)),
        }
    }
}

/// Solution of a clamped fourth-order problem on a degree-k space.
pub struct ClampedSolution {
    pub coeffs: Vec<f64>,
}

/// Solves `(div M∇)² u = g` with clamped data by the interior-penalty method.
pub fn solve_clamped(space: &HighOrderSpace, m: &SpdTensor2, data: &ClampedData<'_>) -> Result<ClampedSolution> {
    m.validate()?;
    let a = space.fourth_order_matrix(m);
    let f = space.fourth_order_rhs(m, &data.source, &data.conormal);
    let fixed = space.boundary_values(&data.dirichlet);
    let coeffs = space.solve_with_dirichlet(&a, &f, &fixed)?;
    Ok(ClampedSolution { coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::P1Space;
    use crate::mesh::{build_disk_in_disk_mesh, Subdomain};

    fn space(h: f64, k: usize) -> HighOrderSpace {
        let mesh = build_disk_in_disk_mesh(1.0, 2.0, h).unwrap();
        HighOrderSpace::new(Arc::new(P1Space::new(&mesh, Subdomain::Heart).unwrap()), k).unwrap()
    }

    #[test]
    fn reference_basis_is_nodal() {
        for k in 2..=4 {
            let b = ReferenceBasis::new(k);
            assert_eq!(b.len(), (k + 1) * (k + 2) / 2);
            for (n, &(i, j)) in b.nodes.iter().enumerate() {
                let jets = b.eval([i as f64 / k as f64, j as f64 / k as f64]);
                for (m, jet) in jets.iter().enumerate() {
                    let expect = if m == n { 1.0 } else { 0.0 };
                    assert!((jet.value - expect).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn continuous_interpolation_reproduces_polynomials() {
        for k in 2..=3 {
            let sp = space(0.3, k);
            let f = |p: Point| 1.0 + p[0] - 2.0 * p[1] * p[0] + p[1] * p[1];
            let u = sp.interpolate(f);
            assert!(sp.l2_error(&u, f) < 1e-12);
            assert!(sp.h1_seminorm_error(&u, |p| [1.0 - 2.0 * p[1], -2.0 * p[0] + 2.0 * p[1]]) < 1e-11);
        }
    }

    #[test]
    fn constants_solve_the_clamped_problem() {
        let sp = space(0.25, 2);
        let data = ClampedData::from_functions(|_| 0.0, |_| 1.0, |_, _| 0.0);
        let sol = solve_clamped(&sp, &SpdTensor2::identity(), &data).unwrap();
        assert!(sol.coeffs.iter().all(|c| (c - 1.0).abs() < 1e-9));
    }

    #[test]
    fn quadratics_are_reproduced_exactly() {
        // u = x² + 2y² has constant L u, so Q u = 0 and the scheme is exact.
        let sp = space(0.25, 2);
        let m = SpdTensor2::new(1.5, 0.2, 1.0).unwrap();
        let u = |p: Point| p[0] * p[0] + 2.0 * p[1] * p[1];
        let data = ClampedData::from_functions(
            |_| 0.0,
            u,
            move |p, n| m.form(n, [2.0 * p[0], 4.0 * p[1]]),
        );
        let sol = solve_clamped(&sp, &m, &data).unwrap();
        assert!(sp.l2_error(&sol.coeffs, u) < 1e-10);
    }
}
