//! Torso Cauchy problem: Tikhonov-regularized recovery of `u_b` from
//! Dirichlet and conormal data on the outer boundary, and the Green
//! representation potential `F`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::elliptic::EllipticSystem;
use crate::error::{Error, Result};
use crate::fem::P1Space;
use crate::field::{BoundaryField, ScalarField};
use crate::mesh::{distance, BoundaryTag, Point, Subdomain};
use crate::quadrature::{gauss_legendre, triangle_rule};
use crate::tensor::SpdTensor2;

/// Data of the torso problem: volume source, Dirichlet and conormal traces on
/// the outer boundary.
#[derive(Clone, Debug)]
pub struct CauchyData {
    pub f: ScalarField,
    pub f0: BoundaryField,
    pub f1: BoundaryField,
    pub m_b: SpdTensor2,
}

impl CauchyData {
    pub fn zeros(torso: &P1Space, m_b: SpdTensor2) -> Result<Self> {
        Ok(CauchyData {
            f: ScalarField::zeros(torso),
            f0: BoundaryField::zeros(torso, BoundaryTag::Outer)?,
            f1: BoundaryField::zeros(torso, BoundaryTag::Outer)?,
            m_b,
        })
    }

    /// Data generated from a torso field and its source: `f0 = u|_∂Ω`,
    /// `f1 = ν·M_b∇u` (variational).
    pub fn from_field(sys_b: &EllipticSystem, u: &ScalarField, f: &ScalarField) -> Result<Self> {
        let torso = sys_b.space();
        Ok(CauchyData {
            f: f.clone(),
            f0: u.trace(torso, BoundaryTag::Outer)?,
            f1: sys_b.conormal_derivative(u, Some(f), BoundaryTag::Outer)?,
            m_b: sys_b.tensor(),
        })
    }

    pub fn check(&self, torso: &P1Space) -> Result<()> {
        self.m_b.validate()?;
        if torso.subdomain() != Subdomain::Torso {
            return Err(Error::InvalidInput("Cauchy data live on the torso".into()));
        }
        self.f.check(torso)?;
        self.f0.check(torso)?;
        self.f1.check(torso)?;
        if self.f0.tag != BoundaryTag::Outer || self.f1.tag != BoundaryTag::Outer {
            return Err(Error::InvalidInput("Cauchy data live on the outer boundary".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        CauchyData { f: self.f.scaled(s), f0: self.f0.scaled(s), f1: self.f1.scaled(s), m_b: self.m_b }
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: f64, other: &CauchyData) -> Self {
        CauchyData {
            f: self.f.axpy(s, &other.f),
            f0: self.f0.axpy(s, &other.f0),
            f1: self.f1.axpy(s, &other.f1),
            m_b: self.m_b,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CauchySolution {
    pub u_b: ScalarField,
    /// Recovered Dirichlet trace on the heart surface.
    pub inner_trace: BoundaryField,
    /// `‖u_b − f0‖_{L²(∂Ω)}`.
    pub misfit: f64,
}

/// Precomputed forward map from heart-surface traces to outer traces, reused
/// across regularization parameters.
pub struct CauchySolver<'a> {
    sys: &'a EllipticSystem,
    /// Outer trace of the mixed solution for each unit inner trace.
    response: DMatrix<f64>,
    /// Transposed Cholesky factors of the outer and inner boundary masses.
    lo_t: DMatrix<f64>,
    li_t: DMatrix<f64>,
}

fn boundary_cholesky(sys: &EllipticSystem, tag: BoundaryTag) -> Result<DMatrix<f64>> {
    let m = sys.boundary_mass(tag)?.to_dense();
    let chol = Cholesky::new(m).ok_or_else(|| Error::SingularSystem(format!("boundary mass on {tag:?}")))?;
    Ok(chol.l().transpose())
}

impl<'a> CauchySolver<'a> {
    pub fn new(sys: &'a EllipticSystem) -> Result<Self> {
        let space = sys.space();
        if space.subdomain() != Subdomain::Torso {
            return Err(Error::InvalidInput("the Cauchy solver works on the torso".into()));
        }
        let inner = space.boundary(BoundaryTag::Inner)?;
        let outer = space.boundary(BoundaryTag::Outer)?;
        let n = space.num_dofs();
        let mut fixed = vec![false; n];
        for &v in &inner.vertices {
            fixed[v] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let mut position = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            position[i] = k;
        }
        let lu = sys.mixed_factor(BoundaryTag::Inner, &free)?;
        let coupling = sys.stiffness().submatrix(&free, &inner.vertices);
        let cols: Vec<Vec<f64>> = (0..inner.len())
            .into_par_iter()
            .map(|k| {
                let mut e = vec![0.0; inner.len()];
                e[k] = 1.0;
                let rhs: Vec<f64> = coupling.mul_vec(&e).iter().map(|v| -v).collect();
                let x = lu.solve(&rhs)?;
                Ok(outer.vertices.iter().map(|&v| x[position[v]]).collect())
            })
            .collect::<Result<_>>()?;
        let response = DMatrix::from_fn(outer.len(), inner.len(), |i, j| cols[j][i]);
        Ok(CauchySolver {
            sys,
            response,
            lo_t: boundary_cholesky(sys, BoundaryTag::Outer)?,
            li_t: boundary_cholesky(sys, BoundaryTag::Inner)?,
        })
    }

    pub fn solve(&self, data: &CauchyData, lambda: f64) -> Result<CauchySolution> {
        let space = self.sys.space();
        data.check(space)?;
        if data.m_b != self.sys.tensor() {
            return Err(Error::InvalidInput("data conductivity differs from the assembled torso tensor".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be non-negative, got {lambda}")));
        }
        let (no, ni) = self.response.shape();
        let zero_inner = BoundaryField::zeros(space, BoundaryTag::Inner)?;
        let base = self.sys.solve_mixed(&data.f, &zero_inner, &data.f1)?;
        let base_outer = DVector::from_vec(base.trace(space, BoundaryTag::Outer)?.values);
        let target = DVector::from_vec(data.f0.values.clone()) - base_outer;

        let mut a = DMatrix::zeros(no + ni, ni);
        a.view_mut((0, 0), (no, ni)).copy_from(&(&self.lo_t * &self.response));
        a.view_mut((no, 0), (ni, ni)).copy_from(&(&self.li_t * lambda.sqrt()));
        let mut rhs = DVector::zeros(no + ni);
        rhs.rows_mut(0, no).copy_from(&(&self.lo_t * target));

        let qr = a.qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diag_min = r.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if !(diag_min > 1e-14 * diag_max) {
            return Err(Error::SingularNormalEquations(format!(
                "triangular factor has pivot ratio {:.3e}",
                diag_min / diag_max
            )));
        }
        let qtb = qr.q().transpose() * rhs;
        let phi = r
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::SingularNormalEquations("triangular solve failed".into()))?;
        let inner_trace = BoundaryField::new(BoundaryTag::Inner, phi.iter().copied().collect());
        let u_b = self.sys.solve_mixed(&data.f, &inner_trace, &data.f1)?;
        let resid = u_b.trace(space, BoundaryTag::Outer)?.axpy(-1.0, &data.f0);
        let misfit = resid.l2_norm(space)?;
        Ok(CauchySolution { u_b, inner_trace, misfit })
    }
}

/// Minimizes `‖u(φ)|_∂Ω − f0‖² + λ‖φ‖²` over heart-surface traces `φ`, where
/// `u(φ)` solves `Δ_b u = f`, `u = φ` on the heart surface and `ν·M_b∇u = f1`
/// on the outer boundary.
pub fn tikhonov_cauchy(sys_b: &EllipticSystem, data: &CauchyData, lambda: f64) -> Result<CauchySolution> {
    CauchySolver::new(sys_b)?.solve(data, lambda)
}

/// Fundamental solution of `−div M∇` in the plane:
/// `φ(x, y) = −ln(√det M · (x−y)ᵀM⁻¹(x−y)) / (4π √det M)`, which is
/// `−ln|x − y| / (2πσ)` for `M = σI`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalSolution {
    tensor: SpdTensor2,
    inverse: SpdTensor2,
    sqrt_det: f64,
}

impl FundamentalSolution {
    pub fn laplace2d(sigma: f64) -> Result<Self> {
        Self::anisotropic(SpdTensor2::isotropic(sigma)?)
    }

    pub fn anisotropic(m: SpdTensor2) -> Result<Self> {
        m.validate()?;
        Ok(FundamentalSolution { tensor: m, inverse: m.inverse(), sqrt_det: m.det().sqrt() })
    }

    pub fn tensor(&self) -> SpdTensor2 {
        self.tensor
    }

    pub fn value(&self, x: Point, y: Point) -> f64 {
        let d = [x[0] - y[0], x[1] - y[1]];
        -(self.sqrt_det * self.inverse.form(d, d)).ln() / (4.0 * std::f64::consts::PI * self.sqrt_det)
    }

    /// `ν·M∇_y φ(x, y)`.
    pub fn conormal_y(&self, x: Point, y: Point, normal: [f64; 2]) -> f64 {
        let d = [y[0] - x[0], y[1] - x[1]];
        -(normal[0] * d[0] + normal[1] * d[1]) / (2.0 * std::f64::consts::PI * self.sqrt_det * self.inverse.form(d, d))
    }
}

const EDGE_GAUSS: usize = 8;
const MAX_DEPTH: usize = 14;

/// `∫_a^b (c0(y) ·  + c1(y) ·)` for linear densities `fa → fb` along the
/// segment, subdividing where `x` is close.
fn segment_integral(k: &dyn Fn(Point) -> f64, x: Point, a: Point, b: Point, fa: f64, fb: f64, gauss: &[(f64, f64)], depth: usize) -> f64 {
    let len = distance(a, b);
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    if depth < MAX_DEPTH && distance(x, mid) < 1.5 * len {
        let fm = (fa + fb) / 2.0;
        return segment_integral(k, x, a, mid, fa, fm, gauss, depth + 1)
            + segment_integral(k, x, mid, b, fm, fb, gauss, depth + 1);
    }
    gauss
        .iter()
        .map(|&(s, w)| {
            let y = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            w * len * ((1.0 - s) * fa + s * fb) * k(y)
        })
        .sum()
}

fn triangle_integral(phi: &FundamentalSolution, x: Point, p: [Point; 3], f: [f64; 3], rule: &[([f64; 2], f64)], depth: usize) -> f64 {
    let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
    let diam = distance(p[0], p[1]).max(distance(p[1], p[2])).max(distance(p[2], p[0]));
    if depth < 6 && distance(x, c) < 2.0 * diam {
        let mid = |i: usize, j: usize| [(p[i][0] + p[j][0]) / 2.0, (p[i][1] + p[j][1]) / 2.0];
        let fm = |i: usize, j: usize| (f[i] + f[j]) / 2.0;
        let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
        let (f01, f12, f20) = (fm(0, 1), fm(1, 2), fm(2, 0));
        return triangle_integral(phi, x, [p[0], m01, m20], [f[0], f01, f20], rule, depth + 1)
            + triangle_integral(phi, x, [m01, p[1], m12], [f01, f[1], f12], rule, depth + 1)
            + triangle_integral(phi, x, [m20, m12, p[2]], [f20, f12, f[2]], rule, depth + 1)
            + triangle_integral(phi, x, [m01, m12, m20], [f01, f12, f20], rule, depth + 1);
    }
    let area2 = ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
    rule.iter()
        .map(|&(xi, w)| {
            let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
            let y = [
                l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
            ];
            let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
            if d2 == 0.0 {
                return 0.0;
            }
            w * area2 * (l[0] * f[0] + l[1] * f[1] + l[2] * f[2]) * phi.value(x, y)
        })
        .sum()
}

/// `∫_{Ω_b} φ f dy + Σ_pieces ∫ (φ f1 − f0 B_y φ) dσ` over the given
/// boundary pieces `(f0, f1)`; normals are the torso's outward normals.
pub fn green_potential(
    torso: &P1Space,
    x: Point,
    f: &ScalarField,
    pieces: &[(&BoundaryField, &BoundaryField)],
    phi: &FundamentalSolution,
) -> Result<f64> {
    f.check(torso)?;
    let rule = triangle_rule(6);
    let mut total = 0.0;
    if f.max_abs() > 0.0 {
        for (t, tri) in torso.triangles().iter().enumerate() {
            let vals = tri.map(|v| f.values[v]);
            if vals.iter().all(|v| *v == 0.0) {
                continue;
            }
            total += triangle_integral(phi, x, torso.triangle_points(t), vals, &rule, 0);
        }
    }
    let gauss = gauss_legendre(EDGE_GAUSS);
    for (f0, f1) in pieces {
        f0.check(torso)?;
        f1.check(torso)?;
        if f0.tag != f1.tag {
            return Err(Error::InvalidInput("Dirichlet and conormal data on different tags".into()));
        }
        let part = torso.boundary(f0.tag)?;
        for k in 0..part.len() {
            let (i, j) = part.edge(k);
            let (a, b) = (torso.points()[part.vertices[i]], torso.points()[part.vertices[j]]);
            let nrm = part.normals[k];
            let single = |y: Point| phi.value(x, y);
            let double = |y: Point| phi.conormal_y(x, y, nrm);
            total += segment_integral(&single, x, a, b, f1.values[i], f1.values[j], &gauss, 0);
            total -= segment_integral(&double, x, a, b, f0.values[i], f0.values[j], &gauss, 0);
        }
    }
    Ok(total)
}

/// Distance from `x` to a boundary loop of the torso.
fn loop_distance(torso: &P1Space, tag: BoundaryTag, x: Point) -> Result<f64> {
    let part = torso.boundary(tag)?;
    let mut best = f64::INFINITY;
    for k in 0..part.len() {
        let (i, j) = part.edge(k);
        let (a, b) = (torso.points()[part.vertices[i]], torso.points()[part.vertices[j]]);
        let ab = [b[0] - a[0], b[1] - a[1]];
        let t = (((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
        best = best.min(distance(x, [a[0] + t * ab[0], a[1] + t * ab[1]]));
    }
    Ok(best)
}

/// `F(x) = ∫_{Ω_b} φ_b f + ∫_{∂Ω} (φ_b f1 − f0 B_y φ_b) dσ`.
#[allow(non_snake_case)]
pub fn potential_F(torso: &P1Space, x: Point, data: &CauchyData, phi: &FundamentalSolution) -> Result<f64> {
    data.check(torso)?;
    let d = loop_distance(torso, BoundaryTag::Outer, x)?;
    if d < 0.5 * torso.mesh_size() {
        return Err(Error::OnBoundary(d));
    }
    green_potential(torso, x, &data.f, &[(&data.f0, &data.f1)], phi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reproduction {
    /// `max |F(x) − u(x)| / max |u|` over interior samples.
    pub interior_error: f64,
    /// `max |F(x)| / max |u|` over samples outside the torso.
    pub exterior_leak: f64,
}

/// Sample points of the Green reproduction check: interior radii at least
/// `3h` from both circles, and exterior points in the heart and beyond the
/// torso.
pub fn reproduction_samples(r_inner: f64, r_outer: f64, h: f64) -> (Vec<Point>, Vec<Point>) {
    let ring = |r: f64, n: usize, phase: f64| -> Vec<Point> {
        (0..n)
            .map(|k| {
                let t = phase + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect()
    };
    let (lo, hi) = (r_inner + 3.0 * h, r_outer - 3.0 * h);
    let mut interior = Vec::new();
    if lo <= hi {
        for s in [0.0, 0.5, 1.0] {
            interior.extend(ring(lo + s * (hi - lo), 12, 0.1 + s));
        }
    }
    let mut exterior = ring(0.5 * r_inner, 8, 0.2);
    exterior.extend(ring(1.25 * r_outer, 12, 0.3));
    exterior.extend(ring(1.5 * r_outer, 12, 0.4));
    (interior, exterior)
}

/// Builds full-boundary Green data of `u_star` (trace and variational
/// conormal on both torso boundaries, source `f`) and compares `F` with
/// `u_star` inside and with zero outside.
pub fn reproduction_check(
    sys_b: &EllipticSystem,
    u_star: &ScalarField,
    f: &ScalarField,
    phi: &FundamentalSolution,
    interior: &[Point],
    exterior: &[Point],
) -> Result<Reproduction> {
    let torso = sys_b.space();
    u_star.check(torso)?;
    let mut traces = Vec::new();
    for tag in [BoundaryTag::Inner, BoundaryTag::Outer] {
        traces.push((u_star.trace(torso, tag)?, sys_b.conormal_derivative(u_star, Some(f), tag)?));
    }
    let pieces: Vec<(&BoundaryField, &BoundaryField)> = traces.iter().map(|(a, b)| (a, b)).collect();
    let scale = u_star.max_abs();
    if scale == 0.0 {
        return Ok(Reproduction { interior_error: 0.0, exterior_leak: 0.0 });
    }
    let inside: Vec<f64> = interior
        .par_iter()
        .map(|&x| {
            let u = torso.evaluate(&u_star.values, x).ok_or_else(|| {
                Error::InvalidInput(format!("interior sample {x:?} is outside the torso"))
            })?;
            Ok((green_potential(torso, x, f, &pieces, phi)? - u).abs())
        })
        .collect::<Result<_>>()?;
    let outside: Vec<f64> = exterior
        .par_iter()
        .map(|&x| Ok(green_potential(torso, x, f, &pieces, phi)?.abs()))
        .collect::<Result<_>>()?;
    Ok(Reproduction {
        interior_error: inside.iter().fold(0.0, |m: f64, v| m.max(*v)) / scale,
        exterior_leak: outside.iter().fold(0.0, |m: f64, v| m.max(*v)) / scale,
    })
}
