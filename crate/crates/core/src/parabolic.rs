//! Reduced cable dynamics on the heart.
//!
//! Under proportional conductivities the null-space evolution `w` obeys
//! `𝓛w = ∂_t w + κΔ_e w + a·∇w + a₀w = 0` with `Δ_e = −div M_e∇` and
//! `κ = (μ_eα_i + μ_iα_e)/(α_i + α_eγ)`. This module assembles the spatial
//! part, time-steps it with a theta scheme under zero Dirichlet data, and
//! provides the heat kernel of `𝓛`, its four potentials and the Green
//! representation used to reproduce caloric functions.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::elliptic::EllipticSystem;
use crate::error::{Error, Result};
use crate::fem::P1Space;
use crate::field::ScalarField;
use crate::mesh::{distance, BoundaryTag, Mesh2D, Point, Subdomain};
use crate::quadrature::{gauss_legendre, triangle_rule};
use crate::sparse::{dot, CsrMatrix, SparseLu};
use crate::tensor::SpdTensor2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CableCoefficients {
    pub mu_i: f64,
    pub mu_e: f64,
    pub alpha_i: f64,
    pub alpha_e: f64,
    pub gamma: f64,
    /// Drift `(a₁, a₂)`.
    pub a: [f64; 2],
    pub a0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Parabolic,
    BackwardParabolic,
    /// `κ = 0`: no diffusion survives the reduction.
    Degenerate,
}

impl CableCoefficients {
    /// Pure heat flow with `κ = 1`.
    pub fn heat() -> Self {
        CableCoefficients { mu_i: 1.0, mu_e: 1.0, alpha_i: 1.0, alpha_e: 1.0, gamma: 1.0, a: [0.0; 2], a0: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.mu_i, self.mu_e, self.alpha_i, self.alpha_e, self.gamma, self.a[0], self.a[1], self.a0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cable coefficients must be finite".into()));
        }
        if self.mu_i * self.mu_i + self.mu_e * self.mu_e == 0.0 {
            return Err(Error::InvalidInput("mu_i and mu_e vanish together".into()));
        }
        Ok(())
    }

    /// `α_i + α_eγ`, the capacity of the reduced equation.
    pub fn capacity(&self) -> f64 {
        self.alpha_i + self.alpha_e * self.gamma
    }

    pub fn kappa(&self) -> Result<f64> {
        self.validate()?;
        let cap = self.capacity();
        if cap == 0.0 {
            return Err(Error::DegenerateReduction);
        }
        Ok((self.mu_e * self.alpha_i + self.mu_i * self.alpha_e) / cap)
    }

    pub fn classification(&self) -> Result<Classification> {
        let k = self.kappa()?;
        Ok(if k > 0.0 {
            Classification::Parabolic
        } else if k < 0.0 {
            Classification::BackwardParabolic
        } else {
            Classification::Degenerate
        })
    }
}

/// Spatial part `D = κK + C(a) + a₀M` of the reduced operator on the heart.
pub struct CableOperator {
    coeffs: CableCoefficients,
    kappa: f64,
    classification: Classification,
    system: EllipticSystem,
    matrix: CsrMatrix,
}

pub fn build_cable_operator(c: &CableCoefficients, m_e: SpdTensor2, mesh: &Mesh2D) -> Result<CableOperator> {
    CableOperator::on_space(c, m_e, Arc::new(P1Space::new(mesh, Subdomain::Heart)?))
}

impl CableOperator {
    pub fn on_space(c: &CableCoefficients, m_e: SpdTensor2, space: Arc<P1Space>) -> Result<Self> {
        let kappa = c.kappa()?;
        let classification = c.classification()?;
        let convection = space.convection(c.a);
        let system = EllipticSystem::on_space(space, m_e)?;
        let matrix = system
            .stiffness()
            .scaled(kappa)
            .add_scaled(&convection, 1.0)
            .add_scaled(system.mass(), c.a0);
        Ok(CableOperator { coeffs: *c, kappa, classification, system, matrix })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn classification(&self) -> Classification {
        self.classification
    }

    pub fn coefficients(&self) -> &CableCoefficients {
        &self.coeffs
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn system(&self) -> &EllipticSystem {
        &self.system
    }

    pub fn space(&self) -> &Arc<P1Space> {
        self.system.space()
    }

    /// Largest step for which the theta scheme stays stable: unbounded for
    /// `θ ≥ 1/2`, otherwise `2 / ((1 − 2θ) λ_max)` with `λ_max` the largest
    /// eigenvalue of the symmetric part against the lumped mass.
    pub fn stability_bound(&self, theta: f64) -> Result<f64> {
        if theta >= 0.5 {
            return Ok(f64::INFINITY);
        }
        let interior = self.space().interior_vertices();
        if interior.is_empty() {
            return Ok(f64::INFINITY);
        }
        let sym = self.system.stiffness().scaled(self.kappa).add_scaled(self.system.mass(), self.coeffs.a0);
        let a = sym.submatrix(&interior, &interior);
        let lumped: Vec<f64> = self.system.mass().submatrix(&interior, &interior).mul_vec(&vec![1.0; interior.len()]);
        let mut x: Vec<f64> = (0..interior.len()).map(|i| 1.0 + ((i * 7919) % 13) as f64).collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let y: Vec<f64> = a.mul_vec(&x).iter().zip(&lumped).map(|(v, m)| v / m).collect();
            let next = dot(&x, &a.mul_vec(&x)) / x.iter().zip(&lumped).map(|(v, m)| v * v * m).sum::<f64>();
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            x = y.iter().map(|v| v / norm).collect();
            let done = (next - lambda).abs() <= 1e-6 * next.abs();
            lambda = next;
            if done {
                break;
            }
        }
        Ok(2.0 / ((1.0 - 2.0 * theta) * lambda.max(f64::MIN_POSITIVE)))
    }

    /// Factorizes one theta step `(M + θ dt D) wⁿ⁺¹ = (M − (1−θ) dt D) wⁿ + dt M g`.
    pub fn stepper(&self, dt: f64, theta: f64) -> Result<CableStepper<'_>> {
        if self.classification != Classification::Parabolic {
            return Err(Error::UnstableStep(format!(
                "{:?} operator cannot be advanced forward in time",
                self.classification
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) || !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidInput(format!("need dt > 0 and theta in [0, 1], got dt = {dt}, theta = {theta}")));
        }
        let bound = self.stability_bound(theta)?;
        if dt > bound {
            return Err(Error::UnstableStep(format!("dt = {dt:.3e} exceeds the bound {bound:.3e} for theta = {theta}")));
        }
        let interior = self.space().interior_vertices();
        let mass = self.system.mass();
        let lhs = mass.add_scaled(&self.matrix, theta * dt).submatrix(&interior, &interior);
        let rhs = mass.add_scaled(&self.matrix, -(1.0 - theta) * dt);
        Ok(CableStepper { op: self, dt, theta, lu: SparseLu::new(&lhs)?, rhs, interior })
    }
}

pub struct CableStepper<'a> {
    op: &'a CableOperator,
    dt: f64,
    theta: f64,
    lu: SparseLu,
    rhs: CsrMatrix,
    interior: Vec<usize>,
}

impl CableStepper<'_> {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step with zero Dirichlet data. `source` holds `g` at the old and
    /// new time levels, combined with the scheme's weight.
    pub fn step(&self, w: &[f64], source: Option<(&[f64], &[f64])>) -> Result<Vec<f64>> {
        let mut r = self.rhs.mul_vec(w);
        if let Some((g0, g1)) = source {
            let g: Vec<f64> = g0.iter().zip(g1).map(|(a, b)| (1.0 - self.theta) * a + self.theta * b).collect();
            for (ri, mg) in r.iter_mut().zip(self.op.system.mass().mul_vec(&g)) {
                *ri += self.dt * mg;
            }
        }
        let rhs: Vec<f64> = self.interior.iter().map(|&i| r[i]).collect();
        let mut next = vec![0.0; w.len()];
        for (&i, v) in self.interior.iter().zip(self.lu.solve(&rhs)?) {
            next[i] = v;
        }
        Ok(next)
    }
}

/// One theta step of the reduced equation with zero Dirichlet data.
pub fn step_cable(op: &CableOperator, w: &ScalarField, dt: f64, theta: f64) -> Result<ScalarField> {
    w.check(op.space())?;
    Ok(ScalarField::new(w.subdomain, op.stepper(dt, theta)?.step(&w.values, None)?))
}

/// Nodal values on a uniform time grid `t_k = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    pub subdomain: Subdomain,
    pub dt: f64,
    pub slices: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn final_time(&self) -> f64 {
        self.dt * self.slices.len().saturating_sub(1) as f64
    }

    /// Long-format CSV `t,vertex_index,value` with global vertex indices.
    pub fn write_csv<W: Write>(&self, space: &P1Space, mut w: W) -> Result<()> {
        writeln!(w, "t,vertex_index,value")?;
        for (k, slice) in self.slices.iter().enumerate() {
            let t = k as f64 * self.dt;
            for (l, v) in slice.iter().enumerate() {
                writeln!(w, "{:e},{},{:e}", t, space.global_indices()[l], v)?;
            }
        }
        Ok(())
    }
}

/// Evolves `w0` for `n_steps` theta steps; boundary values are set to zero.
pub fn evolve(op: &CableOperator, w0: &ScalarField, dt: f64, theta: f64, n_steps: usize) -> Result<SpaceTimeField> {
    w0.check(op.space())?;
    let stepper = op.stepper(dt, theta)?;
    let mut first = w0.values.clone();
    for v in op.space().boundary_vertices() {
        first[v] = 0.0;
    }
    let mut slices = vec![first];
    for _ in 0..n_steps {
        let next = stepper.step(slices.last().expect("nonempty"), None)?;
        slices.push(next);
    }
    Ok(SpaceTimeField { subdomain: w0.subdomain, dt, slices })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniquenessProbe {
    /// `Σ_k ‖ν·M_e∇w(t_k)‖² dt` over the implicit trajectory.
    pub value: f64,
    /// The same functional for the frozen field `w(t) = w0`: the
    /// discretization floor of the `H²₀` defect of the initial data.
    pub static_floor: f64,
}

/// Evolves `w0` implicitly with zero Dirichlet data and accumulates the
/// squared conormal trace on the heart surface. A genuine null-space
/// evolution would keep both traces zero; any growth witnesses that the
/// over-determined problem admits only `w = 0`.
pub fn uniqueness_probe(op: &CableOperator, w0: &ScalarField, dt: f64, n_steps: usize) -> Result<UniquenessProbe> {
    let traj = evolve(op, w0, dt, 1.0, n_steps)?;
    let part = op.space().boundary(BoundaryTag::Inner)?;
    let defect = |values: &[f64]| -> Result<f64> {
        let b = op.system.conormal_derivative(&ScalarField::new(w0.subdomain, values.to_vec()), None, BoundaryTag::Inner)?;
        Ok(part.inner(&b.values, &b.values))
    };
    let mut value = 0.0;
    for slice in &traj.slices[1..] {
        value += defect(slice)? * dt;
    }
    let static_floor = defect(&traj.slices[0])? * dt * n_steps as f64;
    Ok(UniquenessProbe { value, static_floor })
}

/// CSV `amplitude,probe_value`.
pub fn write_probe_csv<W: Write>(rows: &[(f64, f64)], mut w: W) -> Result<()> {
    writeln!(w, "amplitude,probe_value")?;
    for (a, v) in rows {
        writeln!(w, "{a:e},{v:e}")?;
    }
    Ok(())
}

/// Fundamental solution of `𝓛 = ∂_t − κ div M∇ + a·∇ + a₀`:
/// `Ψ(z, s) = (4πκs)⁻¹ (det M)^{-1/2} exp(−(z − as)ᵀM⁻¹(z − as)/(4κs)) e^{−a₀s}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernel {
    pub kappa: f64,
    pub m: SpdTensor2,
    pub a: [f64; 2],
    pub a0: f64,
}

impl HeatKernel {
    pub fn new(c: &CableCoefficients, m_e: SpdTensor2) -> Result<Self> {
        m_e.validate()?;
        let kappa = c.kappa()?;
        if kappa <= 0.0 {
            return Err(Error::NotPositive(format!("kappa = {kappa}: the kernel needs a forward parabolic operator")));
        }
        Ok(HeatKernel { kappa, m: m_e, a: c.a, a0: c.a0 })
    }

    pub fn value(&self, z: Point, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::NonPositiveTime(s));
        }
        Ok(self.eval(z, s))
    }

    fn eval(&self, z: Point, s: f64) -> f64 {
        let d = [z[0] - self.a[0] * s, z[1] - self.a[1] * s];
        let q = self.m.inverse().form(d, d);
        (-q / (4.0 * self.kappa * s) - self.a0 * s).exp() / (4.0 * std::f64::consts::PI * self.kappa * s * self.m.det().sqrt())
    }

    /// `∇_z Ψ(z, s)`.
    pub fn gradient(&self, z: Point, s: f64) -> Result<[f64; 2]> {
        let psi = self.value(z, s)?;
        let d = self.m.inverse().apply([z[0] - self.a[0] * s, z[1] - self.a[1] * s]);
        let k = -psi / (2.0 * self.kappa * s);
        Ok([k * d[0], k * d[1]])
    }

    /// `κ ν·M∇u`, the conormal operator of `𝓛`.
    pub fn conormal(&self, grad: [f64; 2], nu: [f64; 2]) -> f64 {
        self.kappa * self.m.form(nu, grad)
    }

    /// First operator of the dual pair: `κ ν·M∇v + (a·ν) v`.
    pub fn dual_conormal(&self, v: f64, grad: [f64; 2], nu: [f64; 2]) -> f64 {
        self.conormal(grad, nu) + (self.a[0] * nu[0] + self.a[1] * nu[1]) * v
    }

    /// Width scale of `Ψ(·, s)`.
    fn width(&self, s: f64) -> f64 {
        (4.0 * self.kappa * s * self.m.eigenvalues().0).sqrt()
    }
}

/// `Ψ(x, t)` for the reduced operator of `c` with tensor `m_e`.
pub fn heat_fundamental(x: Point, t: f64, c: &CableCoefficients, m_e: SpdTensor2) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    HeatKernel::new(c, m_e)?.value(x, t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    /// `I_Ω(h)(x, t) = ∫_Ω Ψ(x−y, t) h(y) dy`.
    Initial,
    /// `G_Ω(f)(x, t) = ∫_0^t ∫_Ω Ψ(x−y, t−τ) f(y, τ) dy dτ`.
    Volume,
    /// `V_S(v)(x, t) = ∫_0^t ∫_S Ψ(x−y, t−τ) v(y, τ) dσ dτ`.
    Single,
    /// `W_S(w)(x, t) = ∫_0^t ∫_S w(y, τ) B̃_y Ψ(x−y, t−τ) dσ dτ`.
    Double,
}

/// Density `ρ(y, ν, τ)`; `ν` is the outward edge normal on boundaries and
/// zero inside the domain.
pub type Density<'a> = &'a (dyn Fn(Point, [f64; 2], f64) -> f64 + Sync);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeatQuadrature {
    /// Gauss panels in `σ = √(t − τ)`.
    pub time_panels: usize,
    pub time_points: usize,
    pub edge_points: usize,
    pub triangle_degree: usize,
}

impl Default for HeatQuadrature {
    fn default() -> Self {
        HeatQuadrature { time_panels: 16, time_points: 6, edge_points: 6, triangle_degree: 6 }
    }
}

const MAX_DEPTH: usize = 10;

fn edge_integral(f: &dyn Fn(Point) -> f64, a: Point, b: Point, center: Point, width: f64, gauss: &[(f64, f64)], depth: usize) -> f64 {
    let len = distance(a, b);
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    if depth < MAX_DEPTH && len > width && distance(center, mid) < len + 8.0 * width {
        return edge_integral(f, a, mid, center, width, gauss, depth + 1) + edge_integral(f, mid, b, center, width, gauss, depth + 1);
    }
    gauss
        .iter()
        .map(|&(s, w)| w * len * f([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]))
        .sum()
}

fn tri_integral(f: &dyn Fn(Point) -> f64, p: [Point; 3], center: Point, width: f64, rule: &[([f64; 2], f64)], depth: usize) -> f64 {
    let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
    let diam = distance(p[0], p[1]).max(distance(p[1], p[2])).max(distance(p[2], p[0]));
    if depth < MAX_DEPTH && diam > width && distance(center, c) < diam + 8.0 * width {
        let mid = |i: usize, j: usize| [(p[i][0] + p[j][0]) / 2.0, (p[i][1] + p[j][1]) / 2.0];
        let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
        return [[p[0], m01, m20], [m01, p[1], m12], [m20, m12, p[2]], [m01, m12, m20]]
            .iter()
            .map(|q| tri_integral(f, *q, center, width, rule, depth + 1))
            .sum();
    }
    let area2 = ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
    rule.iter()
        .map(|&(xi, w)| {
            let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
            let y = [
                l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
            ];
            w * area2 * f(y)
        })
        .sum()
}

/// Nodes `(s, weight)` for `∫_0^t h(s) ds` after `s = σ²`.
fn time_nodes(t: f64, q: &HeatQuadrature) -> Vec<(f64, f64)> {
    let g = gauss_legendre(q.time_points);
    let root = t.sqrt();
    let panel = root / q.time_panels as f64;
    (0..q.time_panels)
        .flat_map(|k| {
            g.iter().map(move |&(x, w)| {
                let sigma = (k as f64 + x) * panel;
                (sigma * sigma, 2.0 * sigma * w * panel)
            })
        })
        .collect()
}

fn domain_integral(space: &P1Space, f: &dyn Fn(Point) -> f64, center: Point, width: f64, rule: &[([f64; 2], f64)]) -> f64 {
    (0..space.triangles().len())
        .map(|t| tri_integral(f, space.triangle_points(t), center, width, rule, 0))
        .sum()
}

fn boundary_integral(
    space: &P1Space,
    tag: BoundaryTag,
    f: &dyn Fn(Point, [f64; 2]) -> f64,
    center: Point,
    width: f64,
    gauss: &[(f64, f64)],
) -> Result<f64> {
    let part = space.boundary(tag)?;
    Ok((0..part.len())
        .map(|k| {
            let (a, b) = part.edge(k);
            let nu = part.normals[k];
            let g = |y: Point| f(y, nu);
            edge_integral(&g, space.points()[part.vertices[a]], space.points()[part.vertices[b]], center, width, gauss, 0)
        })
        .sum())
}

/// Evaluates one heat potential of `kernel` at `(x, t)`.
#[allow(clippy::too_many_arguments)]
pub fn heat_potential(
    kernel: &HeatKernel,
    space: &P1Space,
    kind: PotentialKind,
    density: Density<'_>,
    tag: BoundaryTag,
    x: Point,
    t: f64,
    q: &HeatQuadrature,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let rule = triangle_rule(q.triangle_degree);
    let gauss = gauss_legendre(q.edge_points);
    let centre = |s: f64| [x[0] - kernel.a[0] * s, x[1] - kernel.a[1] * s];
    match kind {
        PotentialKind::Initial => {
            let f = |y: Point| kernel.eval([x[0] - y[0], x[1] - y[1]], t) * density(y, [0.0; 2], 0.0);
            Ok(domain_integral(space, &f, centre(t), kernel.width(t), &rule))
        }
        PotentialKind::Volume => Ok(time_nodes(t, q)
            .iter()
            .map(|&(s, w)| {
                let f = |y: Point| kernel.eval([x[0] - y[0], x[1] - y[1]], s) * density(y, [0.0; 2], t - s);
                w * domain_integral(space, &f, centre(s), kernel.width(s), &rule)
            })
            .sum()),
        PotentialKind::Single | PotentialKind::Double => {
            space.boundary(tag)?;
            let mut total = 0.0;
            for (s, w) in time_nodes(t, q) {
                let f = |y: Point, nu: [f64; 2]| {
                    let z = [x[0] - y[0], x[1] - y[1]];
                    let rho = density(y, nu, t - s);
                    if kind == PotentialKind::Single {
                        return kernel.eval(z, s) * rho;
                    }
                    // ∇_y Ψ(x − y, s) = −(∇Ψ)(x − y, s)
                    let psi = kernel.eval(z, s);
                    let d = kernel.m.inverse().apply([z[0] - kernel.a[0] * s, z[1] - kernel.a[1] * s]);
                    let k = psi / (2.0 * kernel.kappa * s);
                    rho * kernel.dual_conormal(psi, [k * d[0], k * d[1]], nu)
                };
                total += w * boundary_integral(space, tag, &f, centre(s), kernel.width(s), &gauss)?;
            }
            Ok(total)
        }
    }
}

/// A smooth function of space and time with its gradient and `𝓛u`.
pub trait SpaceTimeFunction: Sync {
    fn value(&self, x: Point, t: f64) -> f64;
    fn gradient(&self, x: Point, t: f64) -> [f64; 2];
    /// `𝓛u`; zero for caloric functions.
    fn operator(&self, x: Point, t: f64) -> f64;
}

/// `u(x, t) = amplitude · Ψ(x − center, t + t0)`, an exact caloric function.
#[derive(Clone, Copy, Debug)]
pub struct CaloricGaussian {
    pub kernel: HeatKernel,
    pub center: Point,
    pub t0: f64,
    pub amplitude: f64,
}

impl SpaceTimeFunction for CaloricGaussian {
    fn value(&self, x: Point, t: f64) -> f64 {
        self.amplitude * self.kernel.eval([x[0] - self.center[0], x[1] - self.center[1]], t + self.t0)
    }

    fn gradient(&self, x: Point, t: f64) -> [f64; 2] {
        let g = self
            .kernel
            .gradient([x[0] - self.center[0], x[1] - self.center[1]], t + self.t0)
            .expect("positive time");
        [self.amplitude * g[0], self.amplitude * g[1]]
    }

    fn operator(&self, _: Point, _: f64) -> f64 {
        0.0
    }
}

/// A space-constant field `u = c`; `𝓛u = a₀c`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantField {
    pub value: f64,
    pub a0: f64,
}

impl SpaceTimeFunction for ConstantField {
    fn value(&self, _: Point, _: f64) -> f64 {
        self.value
    }

    fn gradient(&self, _: Point, _: f64) -> [f64; 2] {
        [0.0; 2]
    }

    fn operator(&self, _: Point, _: f64) -> f64 {
        self.a0 * self.value
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenHeat {
    /// `max |rep − u| / max |u|` over the interior samples.
    pub interior_error: f64,
    /// `max |rep| / max |u|` over the exterior samples.
    pub exterior_value: f64,
}

/// `I_Ω(u(·,0)) + G_Ω(𝓛u) + V_∂Ω(κν·M∇u) − W_∂Ω(u)` at one point.
pub fn green_representation(kernel: &HeatKernel, space: &P1Space, u: &dyn SpaceTimeFunction, x: Point, t: f64, q: &HeatQuadrature) -> Result<f64> {
    let init = |y: Point, _: [f64; 2], _: f64| u.value(y, 0.0);
    let source = |y: Point, _: [f64; 2], tau: f64| u.operator(y, tau);
    let flux = |y: Point, nu: [f64; 2], tau: f64| kernel.conormal(u.gradient(y, tau), nu);
    let trace = |y: Point, _: [f64; 2], tau: f64| u.value(y, tau);
    let mut rep = heat_potential(kernel, space, PotentialKind::Initial, &init, BoundaryTag::Inner, x, t, q)?;
    rep += heat_potential(kernel, space, PotentialKind::Volume, &source, BoundaryTag::Inner, x, t, q)?;
    for part in space.boundary_parts() {
        rep += heat_potential(kernel, space, PotentialKind::Single, &flux, part.tag, x, t, q)?;
        rep -= heat_potential(kernel, space, PotentialKind::Double, &trace, part.tag, x, t, q)?;
    }
    Ok(rep)
}

/// Green reproduction of `u` at time `t`: relative interior error and
/// relative exterior leak, both scaled by the largest interior sample.
pub fn green_heat_residual(
    kernel: &HeatKernel,
    space: &P1Space,
    u: &dyn SpaceTimeFunction,
    t: f64,
    interior: &[Point],
    exterior: &[Point],
    q: &HeatQuadrature,
) -> Result<GreenHeat> {
    let eval = |pts: &[Point]| -> Result<Vec<f64>> {
        pts.par_iter().map(|&x| green_representation(kernel, space, u, x, t, q)).collect()
    };
    let inside = eval(interior)?;
    let outside = eval(exterior)?;
    let scale = interior.iter().fold(0.0, |m: f64, &x| m.max(u.value(x, t).abs()));
    if scale == 0.0 {
        let worst = inside.iter().chain(&outside).fold(0.0, |m: f64, v| m.max(v.abs()));
        return Ok(GreenHeat { interior_error: worst, exterior_value: worst });
    }
    let err = interior.iter().zip(&inside).fold(0.0, |m: f64, (&x, r)| m.max((r - u.value(x, t)).abs()));
    let leak = outside.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(GreenHeat { interior_error: err / scale, exterior_value: leak / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_in_disk_mesh;
    use crate::transmission::make_h20_bump;

    fn op(c: &CableCoefficients, h: f64) -> CableOperator {
        let mesh = build_disk_in_disk_mesh(1.0, 2.0, h).unwrap();
        build_cable_operator(c, SpdTensor2::identity(), &mesh).unwrap()
    }

    #[test]
    fn kappa_and_classification() {
        let c = CableCoefficients::heat();
        assert_eq!(c.kappa().unwrap(), 1.0);
        assert_eq!(c.classification().unwrap(), Classification::Parabolic);
        let back = CableCoefficients { mu_e: -3.0, ..c };
        assert_eq!(back.classification().unwrap(), Classification::BackwardParabolic);
        let degenerate = CableCoefficients { gamma: -1.0, ..c };
        assert!(matches!(degenerate.kappa(), Err(Error::DegenerateReduction)));
        let silent = CableCoefficients { mu_i: 0.0, mu_e: 0.0, ..c };
        assert!(silent.validate().is_err());
    }

    #[test]
    fn pure_heat_operator_is_the_stiffness() {
        let o = op(&CableCoefficients::heat(), 0.3);
        for (i, j, v) in o.system().stiffness().iter() {
            assert_eq!(o.matrix().get(i, j), v);
        }
    }

    #[test]
    fn backward_inputs_are_classified_but_not_stepped() {
        let c = CableCoefficients { mu_e: -3.0, ..CableCoefficients::heat() };
        let o = op(&c, 0.3);
        assert_eq!(o.classification(), Classification::BackwardParabolic);
        let w = ScalarField::zeros(o.space());
        assert!(matches!(step_cable(&o, &w, 1e-3, 1.0), Err(Error::UnstableStep(_))));
    }

    #[test]
    fn explicit_steps_respect_the_bound() {
        let o = op(&CableCoefficients::heat(), 0.2);
        let bound = o.stability_bound(0.0).unwrap();
        let w = ScalarField::zeros(o.space());
        assert!(matches!(step_cable(&o, &w, 2.0 * bound, 0.0), Err(Error::UnstableStep(_))));
        assert_eq!(step_cable(&o, &w, 0.5 * bound, 0.0).unwrap(), w);
        assert_eq!(o.stability_bound(0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn implicit_heat_flow_decays_in_l2() {
        let o = op(&CableCoefficients::heat(), 0.15);
        let w0 = make_h20_bump(o.space(), [0.1, 0.0], 0.7, 1.0).unwrap();
        let traj = evolve(&o, &w0, 0.01, 1.0, 20).unwrap();
        let norms: Vec<f64> = traj.slices.iter().map(|s| o.system().l2_norm(s)).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
        assert!((traj.final_time() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn kernel_rejects_nonpositive_time() {
        let c = CableCoefficients::heat();
        assert!(matches!(heat_fundamental([0.1, 0.0], 0.0, &c, SpdTensor2::identity()), Err(Error::NonPositiveTime(_))));
        let small = heat_fundamental([0.5, 0.0], 1e-3, &c, SpdTensor2::identity()).unwrap();
        let smaller = heat_fundamental([0.5, 0.0], 5e-4, &c, SpdTensor2::identity()).unwrap();
        assert!(smaller < small && small < 1e-20);
    }

    #[test]
    fn zero_density_gives_zero_potentials() {
        let o = op(&CableCoefficients::heat(), 0.3);
        let k = HeatKernel::new(&CableCoefficients::heat(), SpdTensor2::identity()).unwrap();
        let zero = |_: Point, _: [f64; 2], _: f64| 0.0;
        for kind in [PotentialKind::Initial, PotentialKind::Volume, PotentialKind::Single, PotentialKind::Double] {
            let v = heat_potential(&k, o.space(), kind, &zero, BoundaryTag::Inner, [0.2, 0.1], 0.1, &HeatQuadrature::default()).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn dual_pair_closes_the_green_identity_on_the_disk() {
        // ∫_D (v 𝓐u − u 𝓐*v) = ∫_∂D ((B̃₁v)u − v κν·M∇u) on the exact unit disk
        // for 𝓐 = −κ div M∇ + a·∇ + a₀, with polynomial u, v.
        let c = CableCoefficients { a: [0.4, -0.3], a0: 0.7, mu_e: 2.0, ..CableCoefficients::heat() };
        let m = SpdTensor2::new(1.5, 0.2, 0.8).unwrap();
        let k = HeatKernel::new(&c, m).unwrap();
        let u = |x: Point| (x[0] * x[0] * x[1] + 2.0 * x[1], [2.0 * x[0] * x[1], x[0] * x[0] + 2.0], [2.0 * x[1], 2.0 * x[0], 0.0]);
        let v = |x: Point| (x[0] - x[1] * x[1] + 1.0, [1.0, -2.0 * x[1]], [0.0, 0.0, -2.0]);
        // hess = [∂11, ∂12, ∂22]
        let div_m = |h: [f64; 3]| m.m11 * h[0] + 2.0 * m.m12 * h[1] + m.m22 * h[2];
        let a = c.a;
        let integrand = |x: Point| {
            let (uu, gu, hu) = u(x);
            let (vv, gv, hv) = v(x);
            let au = -k.kappa * div_m(hu) + a[0] * gu[0] + a[1] * gu[1] + c.a0 * uu;
            let asv = -k.kappa * div_m(hv) - (a[0] * gv[0] + a[1] * gv[1]) + c.a0 * vv;
            vv * au - uu * asv
        };
        let g = gauss_legendre(12);
        let mut lhs = 0.0;
        for &(r, wr) in &g {
            for j in 0..64 {
                let th = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
                lhs += wr * r * 2.0 * std::f64::consts::PI / 64.0 * integrand([r * th.cos(), r * th.sin()]);
            }
        }
        let mut rhs = 0.0;
        for j in 0..64 {
            let th = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
            let (x, nu) = ([th.cos(), th.sin()], [th.cos(), th.sin()]);
            let (uu, gu, _) = u(x);
            let (vv, gv, _) = v(x);
            rhs += 2.0 * std::f64::consts::PI / 64.0 * (k.dual_conormal(vv, gv, nu) * uu - vv * k.conormal(gu, nu));
        }
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}
