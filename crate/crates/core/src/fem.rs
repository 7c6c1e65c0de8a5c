//! Piecewise-linear finite element space on one subdomain.
//!
//! Vertices of the subdomain get local indices in increasing global order.
//! Each boundary tag touching the subdomain carries its vertex loop (in the
//! mesh loop order), per-edge outward normals for this side, and the
//! consistent boundary mass matrix in loop indexing.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{distance, left_normal_right, triangle_area, BoundaryTag, Mesh2D, Point, Subdomain};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::tensor::SpdTensor2;

#[derive(Clone, Debug)]
pub struct BoundaryPart {
    pub tag: BoundaryTag,
    /// Local vertex indices in loop order; edge `k` joins `k` and `k + 1 (mod n)`.
    pub vertices: Vec<usize>,
    /// Unit normal of edge `k` pointing out of this subdomain.
    pub normals: Vec<[f64; 2]>,
    pub lengths: Vec<f64>,
    /// Consistent mass matrix `∫ φ_a φ_b dσ` in loop indexing.
    pub mass: CsrMatrix,
}

impl BoundaryPart {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.lengths.iter().sum()
    }

    pub fn edge(&self, k: usize) -> (usize, usize) {
        (k, (k + 1) % self.len())
    }

    /// `∫ f dσ` for a loop-indexed nodal function (trapezoidal, exact for P1).
    pub fn integrate(&self, f: &[f64]) -> f64 {
        (0..self.len())
            .map(|k| {
                let (a, b) = self.edge(k);
                0.5 * self.lengths[k] * (f[a] + f[b])
            })
            .sum()
    }

    /// `∫ f g dσ` for loop-indexed P1 functions.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        crate::sparse::dot(f, &self.mass.mul_vec(g))
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }

    /// `∫ φ_a dσ` for every loop vertex.
    pub fn weights(&self) -> Vec<f64> {
        self.mass.mul_vec(&vec![1.0; self.len()])
    }
}

#[derive(Clone, Debug)]
pub struct P1Space {
    subdomain: Subdomain,
    points: Vec<Point>,
    global: Vec<usize>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryPart>,
    h: f64,
}

/// Gradients of the three barycentric coordinates and the area of a triangle.
pub fn p1_gradients(p: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let area = triangle_area(p[0], p[1], p[2]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[i] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    (g, area)
}

impl P1Space {
    pub fn new(mesh: &Mesh2D, subdomain: Subdomain) -> Result<Self> {
        let mut local = vec![usize::MAX; mesh.num_vertices()];
        let tris: Vec<[usize; 3]> = mesh
            .triangles()
            .iter()
            .zip(mesh.triangle_subdomains())
            .filter(|(_, s)| **s == subdomain)
            .map(|(t, _)| *t)
            .collect();
        if tris.is_empty() {
            return Err(Error::TagEmpty(format!("{subdomain:?}")));
        }
        for t in &tris {
            for &v in t {
                local[v] = 0;
            }
        }
        let mut global = Vec::new();
        for (g, l) in local.iter_mut().enumerate() {
            if *l == 0 {
                *l = global.len();
                global.push(g);
            }
        }
        let points: Vec<Point> = global.iter().map(|&g| mesh.vertices()[g]).collect();
        let triangles: Vec<[usize; 3]> = tris.iter().map(|t| t.map(|v| local[v])).collect();

        let mut boundary = Vec::new();
        for &tag in subdomain.boundary_tags() {
            let lp = mesh.boundary_loop(tag)?;
            let sign = if tag.owner() == subdomain { 1.0 } else { -1.0 };
            let n = lp.len();
            let mut normals = Vec::with_capacity(n);
            let mut lengths = Vec::with_capacity(n);
            let mut mass = TripletBuilder::new(n, n);
            for k in 0..n {
                let (a, b) = (mesh.vertices()[lp[k]], mesh.vertices()[lp[(k + 1) % n]]);
                let nr = left_normal_right(a, b);
                normals.push([sign * nr[0], sign * nr[1]]);
                let len = distance(a, b);
                lengths.push(len);
                let (i, j) = (k, (k + 1) % n);
                mass.push(i, i, len / 3.0);
                mass.push(j, j, len / 3.0);
                mass.push(i, j, len / 6.0);
                mass.push(j, i, len / 6.0);
            }
            boundary.push(BoundaryPart {
                tag,
                vertices: lp.iter().map(|&g| local[g]).collect(),
                normals,
                lengths,
                mass: mass.build(),
            });
        }
        let mut h: f64 = 0.0;
        for t in &triangles {
            for e in 0..3 {
                h = h.max(distance(points[t[e]], points[t[(e + 1) % 3]]));
            }
        }
        Ok(P1Space { subdomain, points, global, triangles, boundary, h })
    }

    pub fn subdomain(&self) -> Subdomain {
        self.subdomain
    }

    pub fn num_dofs(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn global_indices(&self) -> &[usize] {
        &self.global
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.points[v])
    }

    pub fn boundary_parts(&self) -> &[BoundaryPart] {
        &self.boundary
    }

    pub fn boundary(&self, tag: BoundaryTag) -> Result<&BoundaryPart> {
        self.boundary.iter().find(|b| b.tag == tag).ok_or_else(|| Error::tag_empty(tag))
    }

    /// Local indices of every boundary vertex, each listed once.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary.iter().flat_map(|b| b.vertices.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        let mut on = vec![false; self.num_dofs()];
        for v in self.boundary_vertices() {
            on[v] = true;
        }
        (0..self.num_dofs()).filter(|&i| !on[i]).collect()
    }

    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.points.iter().map(|&p| f(p)).collect()
    }

    /// Values at the loop vertices of `tag`.
    pub fn trace(&self, values: &[f64], tag: BoundaryTag) -> Result<Vec<f64>> {
        Ok(self.boundary(tag)?.vertices.iter().map(|&v| values[v]).collect())
    }

    /// Adds loop-indexed `b` into a full nodal vector.
    pub fn scatter_add(&self, tag: BoundaryTag, b: &[f64], out: &mut [f64]) -> Result<()> {
        for (k, &v) in self.boundary(tag)?.vertices.iter().enumerate() {
            out[v] += b[k];
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let p = self.triangle_points(t);
                triangle_area(p[0], p[1], p[2])
            })
            .sum()
    }

    /// Global stiffness `∫ ∇φ_j · M ∇φ_i`.
    pub fn stiffness(&self, m: &SpdTensor2) -> CsrMatrix {
        let n = self.num_dofs();
        let locals: Vec<[[f64; 3]; 3]> = (0..self.triangles.len())
            .into_par_iter()
            .map(|t| {
                let (g, area) = p1_gradients(self.triangle_points(t));
                let mut k = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in i..3 {
                        k[i][j] = area * m.form(g[i], g[j]);
                        k[j][i] = k[i][j];
                    }
                }
                k
            })
            .collect();
        let mut b = TripletBuilder::new(n, n);
        for (t, k) in self.triangles.iter().zip(&locals) {
            for i in 0..3 {
                for j in 0..3 {
                    b.push(t[i], t[j], k[i][j]);
                }
            }
        }
        b.build()
    }

    /// Consistent mass `∫ φ_j φ_i`.
    pub fn mass(&self) -> CsrMatrix {
        let n = self.num_dofs();
        let mut b = TripletBuilder::new(n, n);
        for (k, t) in self.triangles.iter().enumerate() {
            let p = self.triangle_points(k);
            let area = triangle_area(p[0], p[1], p[2]);
            for i in 0..3 {
                for j in 0..3 {
                    b.push(t[i], t[j], if i == j { area / 6.0 } else { area / 12.0 });
                }
            }
        }
        b.build()
    }

    /// Drift matrix `∫ (a · ∇φ_j) φ_i`.
    pub fn convection(&self, a: [f64; 2]) -> CsrMatrix {
        let n = self.num_dofs();
        let mut b = TripletBuilder::new(n, n);
        for (k, t) in self.triangles.iter().enumerate() {
            let (g, area) = p1_gradients(self.triangle_points(k));
            for i in 0..3 {
                for j in 0..3 {
                    b.push(t[i], t[j], area / 3.0 * (a[0] * g[j][0] + a[1] * g[j][1]));
                }
            }
        }
        b.build()
    }

    /// Locates the triangle containing `x` and returns its barycentric coordinates.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        (0..self.triangles.len()).find_map(|t| {
            let p = self.triangle_points(t);
            let area = triangle_area(p[0], p[1], p[2]);
            let l = [
                triangle_area(x, p[1], p[2]) / area,
                triangle_area(p[0], x, p[2]) / area,
                triangle_area(p[0], p[1], x) / area,
            ];
            l.iter().all(|&c| c >= -1e-12).then_some((t, l))
        })
    }

    /// Evaluates a nodal field at an arbitrary point of the subdomain.
    pub fn evaluate(&self, values: &[f64], x: Point) -> Option<f64> {
        let (t, l) = self.locate(x)?;
        let tri = self.triangles[t];
        Some(l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]])
    }

    /// Map from global mesh vertex to local index.
    pub fn local_index_map(&self) -> HashMap<usize, usize> {
        self.global.iter().enumerate().map(|(l, &g)| (g, l)).collect()
    }
}
