//! Lamé instance of the transmission framework.
//!
//! The operator is `𝒜*ℳ𝒜 u = −(μΔu + (λ+μ)∇div u)` with `𝒜` the stacked
//! full gradient plus the divergence, so its Galerkin form is
//! `∫ μ∇u:∇v + (λ+μ) div u div v` and its kernel is the constant
//! displacements. Vector P1 fields are stored interleaved, dof `2i + c`.
//!
//! Two tractions are exposed. The natural traction of the `𝒜` form,
//! `μ∂_ν u + (λ+μ)ν div u`, is the boundary operator of Neumann solves and
//! transmission residuals. The classical stress operator
//! `𝒯u = λ(div u)ν + μ(∇u + ∇uᵀ)ν` is the natural traction of the
//! symmetric-strain form `∫ 2μ ε(u):ε(v) + λ div u div v`; both forms share
//! their interior rows, so one recovered source serves both.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use nalgebra::{Complex, Matrix2, Vector2};

use crate::elliptic::{EllipticSystem, GreenResidual, COMPAT_TOL};
use crate::error::{Error, Result};
use crate::fem::{p1_gradients, P1Space};
use crate::mesh::{BoundaryTag, Mesh2D, Point, Subdomain};
use crate::sparse::{dot, CsrMatrix, SparseLu, TripletBuilder};
use crate::tensor::SpdTensor2;
use crate::transmission::{make_h20_bump, TransmissionCoefficients, TransmissionResiduals};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LameParameters {
    pub lambda: f64,
    pub mu: f64,
    /// Ellipticity margin.
    pub m0: f64,
}

impl LameParameters {
    pub fn new(lambda: f64, mu: f64, m0: f64) -> Result<Self> {
        let p = LameParameters { lambda, mu, m0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let LameParameters { lambda, mu, m0 } = *self;
        if !(lambda.is_finite() && mu.is_finite() && m0.is_finite()) || m0 <= 0.0 {
            return Err(Error::NotElliptic(format!("need finite parameters and m0 > 0, got m0 = {m0}")));
        }
        if mu < m0 {
            return Err(Error::NotElliptic(format!("mu = {mu} < m0 = {m0}")));
        }
        if lambda + 2.0 * mu < m0 {
            return Err(Error::NotElliptic(format!("lambda + 2 mu = {} < m0 = {m0}", lambda + 2.0 * mu)));
        }
        if lambda + mu < 0.0 {
            return Err(Error::NotElliptic(format!("lambda + mu = {} < 0", lambda + mu)));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> LameParameters {
        LameParameters { lambda: s * self.lambda, mu: s * self.mu, m0: s * self.m0 }
    }
}

/// Two displacement components per vertex of a subdomain space.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2 {
    pub subdomain: Subdomain,
    pub values: Vec<[f64; 2]>,
}

/// Two components per vertex of a boundary loop, in loop order.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryVectorField {
    pub tag: BoundaryTag,
    pub values: Vec<[f64; 2]>,
}

impl VectorField2 {
    pub fn zeros(space: &P1Space) -> Self {
        VectorField2 { subdomain: space.subdomain(), values: vec![[0.0; 2]; space.num_dofs()] }
    }

    pub fn interpolate(space: &P1Space, f: impl Fn(Point) -> [f64; 2]) -> Self {
        VectorField2 { subdomain: space.subdomain(), values: space.points().iter().map(|&p| f(p)).collect() }
    }

    pub fn from_flat(subdomain: Subdomain, flat: &[f64]) -> Self {
        VectorField2 { subdomain, values: flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect() }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| *v).collect()
    }

    pub fn check(&self, space: &P1Space) -> Result<()> {
        if self.subdomain != space.subdomain() || self.values.len() != space.num_dofs() {
            return Err(Error::InvalidInput(format!(
                "vector field on {:?} with {} values does not match the {:?} space with {} vertices",
                self.subdomain,
                self.values.len(),
                space.subdomain(),
                space.num_dofs()
            )));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("vector field has non-finite values".into()));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self, space: &P1Space, tag: BoundaryTag) -> Result<BoundaryVectorField> {
        let part = space.boundary(tag)?;
        Ok(BoundaryVectorField { tag, values: part.vertices.iter().map(|&v| self.values[v]).collect() })
    }

    /// CSV with header `vertex_index,x,y,ux,uy`; the index is the global mesh vertex.
    pub fn write_csv<W: Write>(&self, space: &P1Space, mut w: W) -> Result<()> {
        self.check(space)?;
        writeln!(w, "vertex_index,x,y,ux,uy")?;
        for (l, v) in self.values.iter().enumerate() {
            let p = space.points()[l];
            writeln!(w, "{},{:e},{:e},{:e},{:e}", space.global_indices()[l], p[0], p[1], v[0], v[1])?;
        }
        Ok(())
    }
}

impl BoundaryVectorField {
    /// `(∫_∂ |b|² dσ)^{1/2}` with the consistent boundary mass.
    pub fn l2_norm(&self, space: &P1Space) -> Result<f64> {
        let part = space.boundary(self.tag)?;
        let (x, y) = self.components();
        Ok((part.inner(&x, &x) + part.inner(&y, &y)).max(0.0).sqrt())
    }

    pub fn components(&self) -> (Vec<f64>, Vec<f64>) {
        (self.values.iter().map(|v| v[0]).collect(), self.values.iter().map(|v| v[1]).collect())
    }

    pub fn axpy(&self, s: f64, other: &BoundaryVectorField) -> BoundaryVectorField {
        BoundaryVectorField {
            tag: self.tag,
            values: self.values.iter().zip(&other.values).map(|(a, b)| [a[0] + s * b[0], a[1] + s * b[1]]).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The Lamé operator on one subdomain.
pub struct LameSystem {
    params: LameParameters,
    scalar: EllipticSystem,
    stiffness: CsrMatrix,
    classical: CsrMatrix,
    neumann_lu: OnceLock<SparseLu>,
}

pub fn assemble_lame(mesh: &Mesh2D, p: LameParameters, subdomain: Subdomain) -> Result<LameSystem> {
    p.validate()?;
    LameSystem::on_space(Arc::new(P1Space::new(mesh, subdomain)?), p)
}

fn interleave(scalar: &[f64], c: usize, out: &mut [f64]) {
    for (i, v) in scalar.iter().enumerate() {
        out[2 * i + c] = *v;
    }
}

fn component(flat: &[f64], c: usize) -> Vec<f64> {
    flat.iter().skip(c).step_by(2).copied().collect()
}

impl LameSystem {
    pub fn on_space(space: Arc<P1Space>, p: LameParameters) -> Result<Self> {
        p.validate()?;
        let n = space.num_dofs();
        let (mu, lm) = (p.mu, p.lambda + p.mu);
        let mut a = TripletBuilder::new(2 * n, 2 * n);
        let mut s = TripletBuilder::new(2 * n, 2 * n);
        for (t, tri) in space.triangles().iter().enumerate() {
            let (g, area) = p1_gradients(space.triangle_points(t));
            for i in 0..3 {
                for j in 0..3 {
                    let gg = g[i][0] * g[j][0] + g[i][1] * g[j][1];
                    for c in 0..2 {
                        for d in 0..2 {
                            let delta = if c == d { gg } else { 0.0 };
                            // ∫ μ ∂_k u_d ∂_k v_c δ_cd + (λ+μ) ∂_d u_d ∂_c v_c
                            a.push(2 * tri[i] + c, 2 * tri[j] + d, area * (mu * delta + lm * (g[i][c] * g[j][d])));
                            // ∫ μ (∂_k u_d ∂_k v_c δ_cd + ∂_c u_d ∂_d v_c) + λ ∂_d u_d ∂_c v_c
                            s.push(
                                2 * tri[i] + c,
                                2 * tri[j] + d,
                                area * (mu * (delta + g[i][d] * g[j][c]) + p.lambda * (g[i][c] * g[j][d])),
                            );
                        }
                    }
                }
            }
        }
        Ok(LameSystem {
            params: p,
            scalar: EllipticSystem::on_space(space, SpdTensor2::identity())?,
            stiffness: a.build(),
            classical: s.build(),
            neumann_lu: OnceLock::new(),
        })
    }

    pub fn params(&self) -> LameParameters {
        self.params
    }

    pub fn space(&self) -> &Arc<P1Space> {
        self.scalar.space()
    }

    /// Stiffness of the `𝒜` form, interleaved.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Stiffness of the symmetric-strain form, interleaved.
    pub fn classical_stiffness(&self) -> &CsrMatrix {
        &self.classical
    }

    /// Scalar P1 stiffness of the Laplacian on the same space.
    pub fn scalar_stiffness(&self) -> &CsrMatrix {
        self.scalar.stiffness()
    }

    /// Vector mass `∫ u·v`.
    pub fn mass_apply(&self, flat: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; flat.len()];
        for c in 0..2 {
            interleave(&self.scalar.mass().mul_vec(&component(flat, c)), c, &mut out);
        }
        out
    }

    /// `∫ (𝒜u)·ℳ(𝒜u)`.
    pub fn energy(&self, u: &VectorField2) -> Result<f64> {
        u.check(self.space())?;
        let f = u.flat();
        Ok(dot(&f, &self.stiffness.mul_vec(&f)))
    }

    /// `L² projection of 𝒜*ℳ𝒜 u`, componentwise as for scalar fields.
    pub fn recover_source(&self, u: &VectorField2) -> Result<VectorField2> {
        u.check(self.space())?;
        let ku = self.stiffness.mul_vec(&u.flat());
        let mut g = vec![0.0; ku.len()];
        for c in 0..2 {
            interleave(&self.scalar.source_from_action(&component(&ku, c))?, c, &mut g);
        }
        Ok(VectorField2::from_flat(u.subdomain, &g))
    }

    fn traction(
        &self,
        matrix: &CsrMatrix,
        u: &VectorField2,
        source: Option<&VectorField2>,
        tag: BoundaryTag,
    ) -> Result<BoundaryVectorField> {
        u.check(self.space())?;
        let recovered;
        let g = match source {
            Some(g) => {
                g.check(self.space())?;
                g
            }
            None => {
                recovered = self.recover_source(u)?;
                &recovered
            }
        };
        let ku = matrix.mul_vec(&u.flat());
        let mg = self.mass_apply(&g.flat());
        let r: Vec<f64> = ku.iter().zip(&mg).map(|(a, b)| a - b).collect();
        let bx = self.scalar.flux_from_residual(&component(&r, 0), tag)?;
        let by = self.scalar.flux_from_residual(&component(&r, 1), tag)?;
        Ok(BoundaryVectorField { tag, values: bx.into_iter().zip(by).map(|(x, y)| [x, y]).collect() })
    }

    /// Natural traction of the `𝒜` form, `μ∂_ν u + (λ+μ)ν div u`.
    pub fn natural_traction(
        &self,
        u: &VectorField2,
        source: Option<&VectorField2>,
        tag: BoundaryTag,
    ) -> Result<BoundaryVectorField> {
        self.traction(&self.stiffness, u, source, tag)
    }

    /// Boundary stress operator `𝒯_mj = μδ_mj∂_ν + λν_m∂_j + μν_j∂_m`,
    /// variationally consistent with the symmetric-strain form.
    pub fn stress_operator(
        &self,
        u: &VectorField2,
        source: Option<&VectorField2>,
        tag: BoundaryTag,
    ) -> Result<BoundaryVectorField> {
        self.traction(&self.classical, u, source, tag)
    }

    /// Neumann solve for an interleaved load, normalized by zero boundary
    /// mean of each component. The kernel is the constants `ℝ²`.
    pub fn solve_neumann_load(&self, mut load: Vec<f64>, scale: f64) -> Result<Vec<f64>> {
        let n = self.space().num_dofs();
        let w = self.scalar.mass().mul_vec(&vec![1.0; n]);
        let area: f64 = w.iter().sum();
        for c in 0..2 {
            let defect: f64 = load.iter().skip(c).step_by(2).sum();
            let allowed = COMPAT_TOL * scale;
            if defect.abs() > allowed {
                return Err(Error::IncompatibleData { defect: defect.abs(), allowed });
            }
            for (i, wi) in w.iter().enumerate() {
                load[2 * i + c] -= defect * wi / area;
            }
        }
        let lu = match self.neumann_lu.get() {
            Some(lu) => lu,
            None => {
                let c = self.scalar.boundary_weights();
                let mut b = TripletBuilder::new(2 * n + 2, 2 * n + 2);
                b.extend_from(&self.stiffness, 0, 0, 1.0);
                for (i, &ci) in c.iter().enumerate() {
                    if ci != 0.0 {
                        for d in 0..2 {
                            b.push(2 * i + d, 2 * n + d, ci);
                            b.push(2 * n + d, 2 * i + d, ci);
                        }
                    }
                }
                let lu = SparseLu::new(&b.build())?;
                self.neumann_lu.get_or_init(|| lu)
            }
        };
        load.extend([0.0, 0.0]);
        let mut x = lu.solve(&load)?;
        x.truncate(2 * n);
        Ok(x)
    }
}

/// Residuals of the two discrete Green identities: the `𝒜` form with its
/// natural traction, and the symmetric-strain form with `𝒯`.
#[derive(Clone, Copy, Debug)]
pub struct ElasticGreenResidual {
    pub natural: GreenResidual,
    pub stress: GreenResidual,
}

impl ElasticGreenResidual {
    /// Largest residual relative to its own scale (1 when the scale is zero).
    pub fn relative(&self) -> f64 {
        [self.natural, self.stress]
            .iter()
            .map(|g| if g.scale > 0.0 { g.residual / g.scale } else { g.residual })
            .fold(0.0, f64::max)
    }
}

/// `|∫_∂ v·t(u) dσ − a(u, v) + ∫ v·𝒜*ℳ𝒜u|` for both form/traction pairs.
pub fn elasticity_green_residual(sys: &LameSystem, u: &VectorField2, v: &VectorField2) -> Result<ElasticGreenResidual> {
    v.check(sys.space())?;
    let g = sys.recover_source(u)?;
    let (uf, vf) = (u.flat(), v.flat());
    let source = dot(&vf, &sys.mass_apply(&g.flat()));
    let pair = |matrix: &CsrMatrix| -> Result<GreenResidual> {
        let mut boundary_term = 0.0;
        for part in sys.space().boundary_parts() {
            let t = sys.traction(matrix, u, Some(&g), part.tag)?;
            let vt = v.trace(sys.space(), part.tag)?;
            let (tx, ty) = t.components();
            let (vx, vy) = vt.components();
            boundary_term += part.inner(&vx, &tx) + part.inner(&vy, &ty);
        }
        let energy = dot(&vf, &matrix.mul_vec(&uf));
        Ok(GreenResidual {
            residual: (boundary_term - energy + source).abs(),
            scale: boundary_term.abs() + energy.abs() + source.abs(),
        })
    };
    Ok(ElasticGreenResidual { natural: pair(&sys.stiffness)?, stress: pair(&sys.classical)? })
}

/// `φ₂(x) = −(1/2π) log|x|`.
pub fn laplace_fundamental(x: Point) -> f64 {
    -(x[0].hypot(x[1])).ln() / (2.0 * std::f64::consts::PI)
}

/// Kelvin–Somigliana matrix
/// `Φ_mj = (δ_mj(λ+3μ)φ₂ − (λ+μ)x_j∂_mφ₂) / (2μ(λ+2μ))`.
pub fn kelvin_somigliana(x: Point, p: &LameParameters) -> Result<[[f64; 2]; 2]> {
    p.validate()?;
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2.sqrt() < 1e-14 {
        return Err(Error::AtSingularity);
    }
    let (l, mu) = (p.lambda, p.mu);
    let k = 1.0 / (2.0 * mu * (l + 2.0 * mu));
    let phi = laplace_fundamental(x);
    let mut out = [[0.0; 2]; 2];
    for m in 0..2 {
        for j in 0..2 {
            let delta = if m == j { 1.0 } else { 0.0 };
            let dphi_m = -x[m] / (2.0 * std::f64::consts::PI * r2);
            out[m][j] = k * (delta * (l + 3.0 * mu) * phi - (l + mu) * x[j] * dphi_m);
        }
    }
    Ok(out)
}

/// Principal symbol values of the Lamé operator, each computed directly from
/// the symbol matrix and from the closed forms.
#[derive(Clone, Copy, Debug)]
pub struct SymbolCheck {
    pub det_direct: f64,
    pub det_closed: f64,
    pub form_direct: f64,
    pub form_closed: f64,
}

impl SymbolCheck {
    /// Largest of the two relative discrepancies.
    pub fn discrepancy(&self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let d = if self.det_direct == 0.0 && self.det_closed == 0.0 { 0.0 } else { rel(self.det_direct, self.det_closed) };
        let f = if self.form_direct == 0.0 && self.form_closed == 0.0 { 0.0 } else { rel(self.form_direct, self.form_closed) };
        d.max(f)
    }
}

/// `σ(𝒜*ℳ𝒜)(ζ) = −σ(𝒜)ᵀ ℳ σ(𝒜)`, with `det σ` and `−Re(w*σw)` compared
/// against `|ζ|⁴μ(λ+2μ)` and `μ|ζ|²|w|² + (λ+μ)|ζᵀw|²`.
pub fn symbol_check(p: &LameParameters, zeta: [f64; 2], w: [Complex<f64>; 2]) -> SymbolCheck {
    let (l, mu) = (p.lambda, p.mu);
    let rows = [[zeta[0], 0.0], [zeta[1], 0.0], [0.0, zeta[0]], [0.0, zeta[1]], [zeta[0], zeta[1]]];
    let weights = [mu, mu, mu, mu, l + mu];
    let mut sigma = Matrix2::<f64>::zeros();
    for (row, wt) in rows.iter().zip(weights) {
        for a in 0..2 {
            for b in 0..2 {
                sigma[(a, b)] -= wt * row[a] * row[b];
            }
        }
    }
    let wv = Vector2::new(w[0], w[1]);
    let sw = sigma.map(|v| Complex::new(v, 0.0)) * wv;
    let form_direct = -(wv.adjoint() * sw)[(0, 0)].re;

    let z2 = zeta[0] * zeta[0] + zeta[1] * zeta[1];
    let w2 = w[0].norm_sqr() + w[1].norm_sqr();
    let zw = w[0] * zeta[0] + w[1] * zeta[1];
    SymbolCheck {
        det_direct: sigma.determinant(),
        det_closed: z2 * z2 * mu * (l + 2.0 * mu),
        form_direct,
        form_closed: mu * z2 * w2 + (l + mu) * zw.norm_sqr(),
    }
}

/// The three Lamé systems of an elastic composite: inner and outer materials
/// on the heart domain, body material on the torso.
pub struct ElasticSetup {
    pub sys_i: LameSystem,
    pub sys_e: LameSystem,
    pub sys_b: LameSystem,
}

impl ElasticSetup {
    pub fn new(mesh: &Mesh2D, inner: LameParameters, outer: LameParameters, body: LameParameters) -> Result<Self> {
        let heart = Arc::new(P1Space::new(mesh, Subdomain::Heart)?);
        let torso = Arc::new(P1Space::new(mesh, Subdomain::Torso)?);
        Ok(ElasticSetup {
            sys_i: LameSystem::on_space(heart.clone(), inner)?,
            sys_e: LameSystem::on_space(heart, outer)?,
            sys_b: LameSystem::on_space(torso, body)?,
        })
    }

    pub fn heart(&self) -> &Arc<P1Space> {
        self.sys_i.space()
    }

    pub fn torso(&self) -> &Arc<P1Space> {
        self.sys_b.space()
    }
}

#[derive(Clone, Debug)]
pub struct ElasticTriple {
    pub u_i: VectorField2,
    pub u_e: VectorField2,
    pub u_b: VectorField2,
}

#[derive(Clone, Debug)]
pub struct ElasticDemo {
    pub triple: ElasticTriple,
    pub residuals: TransmissionResiduals,
}

/// Vector bump `amplitude · profile(x) · direction` with the scalar bump profile.
pub fn make_vector_bump(heart: &P1Space, center: Point, radius: f64, amplitude: f64, direction: [f64; 2]) -> Result<VectorField2> {
    let s = make_h20_bump(heart, center, radius, amplitude)?;
    Ok(VectorField2 {
        subdomain: Subdomain::Heart,
        values: s.values.iter().map(|v| [v * direction[0], v * direction[1]]).collect(),
    })
}

fn interior_dual_norm(sys: &LameSystem, r: &[f64]) -> f64 {
    let lumped = sys.scalar.mass().mul_vec(&vec![1.0; sys.space().num_dofs()]);
    sys.space()
        .interior_vertices()
        .iter()
        .map(|&j| (r[2 * j] * r[2 * j] + r[2 * j + 1] * r[2 * j + 1]) / lumped[j])
        .sum::<f64>()
        .sqrt()
}

/// Null-space triple of the elastic composite generated by an `H²₀`
/// displacement `u`, with its transmission residuals for zero body data.
/// Needs `α_i = α_e`, `β_i = 0`, `β_e = 1`: a traction-free inner material,
/// continuous displacement and transmitted traction on the heart surface.
pub fn elastic_transmission_demo(
    setup: &ElasticSetup,
    coeffs: &TransmissionCoefficients,
    u: &VectorField2,
    h0: [f64; 2],
) -> Result<ElasticDemo> {
    coeffs.validate()?;
    if coeffs.alpha_i != coeffs.alpha_e || coeffs.beta_i != 0.0 || coeffs.beta_e != 1.0 || coeffs.alpha_i == 0.0 {
        return Err(Error::InvalidInput(
            "the elastic composite needs alpha_i = alpha_e != 0, beta_i = 0 and beta_e = 1".into(),
        ));
    }
    let heart = setup.heart().clone();
    let torso = setup.torso().clone();
    u.check(&heart)?;
    let inner = heart.boundary(BoundaryTag::Inner)?;
    let trace_sup = inner.vertices.iter().flat_map(|&v| u.values[v]).fold(0.0, |m: f64, x| m.max(x.abs()));
    if trace_sup > 1e-10 * u.max_abs().max(1.0) {
        return Err(Error::NotH20(format!("boundary trace {trace_sup:.3e}")));
    }

    let ratio = coeffs.alpha_e / coeffs.alpha_i;
    let ke = setup.sys_e.stiffness().mul_vec(&u.flat());
    let load: Vec<f64> = ke.iter().map(|v| -ratio * v).collect();
    let scale: f64 = load.iter().map(|v| v.abs()).sum();
    let mut ui = setup.sys_i.solve_neumann_load(load, scale)?;
    for (k, v) in ui.iter_mut().enumerate() {
        *v += h0[k % 2];
    }
    let triple = ElasticTriple {
        u_i: VectorField2::from_flat(Subdomain::Heart, &ui),
        u_e: u.clone(),
        u_b: VectorField2::zeros(&torso),
    };

    let ki = setup.sys_i.stiffness().mul_vec(&ui);
    let r7v: Vec<f64> = ki.iter().zip(&ke).map(|(a, b)| coeffs.alpha_i * a + coeffs.alpha_e * b).collect();
    let kb = setup.sys_b.stiffness().mul_vec(&triple.u_b.flat());
    let ue_tr = triple.u_e.trace(&heart, BoundaryTag::Inner)?;
    let ub_tr = triple.u_b.trace(&torso, BoundaryTag::Inner)?;
    let zero_b = VectorField2::zeros(&torso);
    let bb_inner = setup.sys_b.natural_traction(&triple.u_b, Some(&zero_b), BoundaryTag::Inner)?;
    let bb_outer = setup.sys_b.natural_traction(&triple.u_b, Some(&zero_b), BoundaryTag::Outer)?;
    let be = setup.sys_e.natural_traction(&triple.u_e, None, BoundaryTag::Inner)?;
    let bi = setup.sys_i.natural_traction(&triple.u_i, None, BoundaryTag::Inner)?;
    let residuals = TransmissionResiduals {
        r7: interior_dual_norm(&setup.sys_e, &r7v),
        r8: interior_dual_norm(&setup.sys_b, &kb),
        r9: ue_tr.axpy(-1.0, &ub_tr).l2_norm(&heart)?,
        r10: be.axpy(-coeffs.beta_e, &bb_inner).l2_norm(&heart)?,
        r11: bi.axpy(-coeffs.beta_i, &bb_inner).l2_norm(&heart)?,
        r12: bb_outer.l2_norm(&torso)?,
        r6: triple.u_b.trace(&torso, BoundaryTag::Outer)?.l2_norm(&torso)?,
    };
    Ok(ElasticDemo { triple, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_in_disk_mesh;
    use std::f64::consts::PI;

    fn heart(h: f64, p: LameParameters) -> LameSystem {
        let mesh = build_disk_in_disk_mesh(1.0, 2.0, h).unwrap();
        assemble_lame(&mesh, p, Subdomain::Heart).unwrap()
    }

    fn params(l: f64, mu: f64) -> LameParameters {
        LameParameters::new(l, mu, 0.1).unwrap()
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(LameParameters::new(1.0, 1.0, 0.5).is_ok());
        assert!(LameParameters::new(-1.0, 1.0, 0.5).is_ok());
        assert!(matches!(LameParameters::new(1.0, 0.2, 0.5), Err(Error::NotElliptic(_))));
        assert!(matches!(LameParameters::new(-1.5, 1.0, 0.5), Err(Error::NotElliptic(_))));
        assert!(matches!(LameParameters::new(1.0, 1.0, 0.0), Err(Error::NotElliptic(_))));
    }

    #[test]
    fn constants_span_the_kernel() {
        let sys = heart(0.25, params(2.0, 1.0));
        assert!(sys.stiffness().is_symmetric() && sys.classical_stiffness().is_symmetric());
        let n = sys.space().num_dofs();
        for c in [[1.0, 0.0], [0.3, -2.0]] {
            let u: Vec<f64> = (0..n).flat_map(|_| c).collect();
            let ku = sys.stiffness().mul_vec(&u);
            assert!(ku.iter().all(|v| v.abs() < 1e-12));
        }
        // rotations carry energy under the stacked-gradient form
        let rot = VectorField2::interpolate(sys.space(), |p| [-p[1], p[0]]);
        assert!(sys.energy(&rot).unwrap() > 1.0);
        let r = rot.flat();
        assert!(dot(&r, &sys.classical_stiffness().mul_vec(&r)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_lambda_gives_block_laplacian() {
        let sys = heart(0.25, params(-1.5, 1.5));
        let k = sys.scalar_stiffness();
        for (i, j, v) in k.iter() {
            for c in 0..2 {
                assert!((sys.stiffness().get(2 * i + c, 2 * j + c) - 1.5 * v).abs() < 1e-13);
                assert!(sys.stiffness().get(2 * i + c, 2 * j + 1 - c).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn manufactured_quadratic_field() {
        // u = (x₁², 0): 𝒜*ℳ𝒜u = −(2μ + 2(λ+μ), 0)
        let p = params(1.0, 2.0);
        let sys = heart(0.05, p);
        let u = VectorField2::interpolate(sys.space(), |x| [x[0] * x[0], 0.0]);
        let g = sys.recover_source(&u).unwrap();
        let expected = -(2.0 * p.mu + 2.0 * (p.lambda + p.mu));
        let err: Vec<f64> = g.values.iter().flat_map(|v| [v[0] - expected, v[1]]).collect();
        let rel = dot(&err, &sys.mass_apply(&err)).sqrt() / (expected.abs() * PI.sqrt());
        assert!(rel < 0.05, "relative L2 error of the recovered operator {rel}");
    }

    #[test]
    fn stress_of_linear_fields() {
        let p = params(1.0, 1.5);
        let sys = heart(0.05, p);
        let sp = sys.space();
        let part = sp.boundary(BoundaryTag::Inner).unwrap();
        let c = VectorField2::interpolate(sp, |_| [2.0, -1.0]);
        assert!(sys.stress_operator(&c, None, BoundaryTag::Inner).unwrap().max_abs() < 1e-10);

        let u = VectorField2::interpolate(sp, |x| [x[0], -x[1]]);
        let t = sys.stress_operator(&u, None, BoundaryTag::Inner).unwrap();
        let err: Vec<[f64; 2]> = part
            .vertices
            .iter()
            .zip(&t.values)
            .map(|(&v, tv)| {
                let x = sp.points()[v];
                let r = x[0].hypot(x[1]);
                [tv[0] - 2.0 * p.mu * x[0] / r, tv[1] + 2.0 * p.mu * x[1] / r]
            })
            .collect();
        let e = BoundaryVectorField { tag: BoundaryTag::Inner, values: err }.l2_norm(sp).unwrap();
        assert!(e < 0.1 * 2.0 * p.mu * (2.0 * PI).sqrt(), "traction error {e}");

        let rot = VectorField2::interpolate(sp, |x| [-x[1], x[0]]);
        let t = sys.stress_operator(&rot, None, BoundaryTag::Inner).unwrap();
        assert!(t.l2_norm(sp).unwrap() < 0.05, "rotation traction {}", t.l2_norm(sp).unwrap());
        // the natural traction of the stacked-gradient form does not vanish on rotations
        let n = sys.natural_traction(&rot, None, BoundaryTag::Inner).unwrap();
        assert!(n.l2_norm(sp).unwrap() > 0.5 * p.mu * (2.0 * PI).sqrt());
    }

    #[test]
    fn green_identities_hold_for_smooth_pairs() {
        let sys = heart(0.1, params(0.5, 1.0));
        let u = VectorField2::interpolate(sys.space(), |x| [x[0] * x[1] + x[1].sin(), (x[0] - x[1]).exp()]);
        let v = VectorField2::interpolate(sys.space(), |x| [x[0] * x[0], 1.0 + x[1]]);
        let g = elasticity_green_residual(&sys, &u, &v).unwrap();
        assert!(g.relative() < 1e-10, "{g:?}");
        let z = VectorField2::zeros(sys.space());
        assert_eq!(elasticity_green_residual(&sys, &z, &v).unwrap().natural.residual, 0.0);
    }

    #[test]
    fn kelvin_somigliana_structure() {
        let p = params(1.0, 1.0);
        assert!(matches!(kelvin_somigliana([0.0, 0.0], &p), Err(Error::AtSingularity)));
        let x = [0.3, -0.7];
        let k = kelvin_somigliana(x, &p).unwrap();
        assert!((k[0][1] - k[1][0]).abs() < 1e-15);
        let kr = kelvin_somigliana([-x[0], -x[1]], &p).unwrap();
        assert_eq!(k, kr);
        let d = params(-1.0, 1.0);
        let k = kelvin_somigliana(x, &d).unwrap();
        assert!(k[0][1].abs() < 1e-16);
        assert!((k[0][0] - laplace_fundamental(x) / d.mu).abs() < 1e-15);
    }

    #[test]
    fn symbol_closed_forms() {
        let p = params(1.0, 1.0);
        let one = Complex::new(1.0, 0.0);
        let s = symbol_check(&p, [1.0, 0.0], [one, one]);
        assert!((s.det_direct - 3.0).abs() < 1e-14 && (s.det_closed - 3.0).abs() < 1e-14);
        let s = symbol_check(&p, [0.0, 0.0], [one, one]);
        assert_eq!((s.det_direct, s.form_direct, s.form_closed), (0.0, 0.0, 0.0));
        let s = symbol_check(&params(0.3, 2.0), [0.4, -1.3], [Complex::new(0.2, 1.0), Complex::new(-0.7, 0.5)]);
        assert!(s.discrepancy() < 1e-13, "{s:?}");
    }
}
