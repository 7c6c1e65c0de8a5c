//! The steady transmission problem between heart and torso: null-space
//! triples, residuals of the seven equations, the existence condition,
//! reconstruction of `u_e` by a clamped fourth-order problem and of `u_i` by
//! a Neumann solve with calibration, and the cardiac fourth-order operator.
//!
//! On the heart surface `B_b u_b` is the conormal with the torso's outward
//! normal, while `B_e`, `B_i` use the heart's outward normal.

use std::sync::Arc;

use crate::cauchy::CauchyData;
use crate::elliptic::EllipticSystem;
use crate::error::{Error, Result};
use crate::fem::{p1_gradients, P1Space};
use crate::field::{BoundaryField, ScalarField};
use crate::highorder::{BoundaryPoint, ClampedData, HighOrderSpace};
use crate::mesh::{distance, BoundaryTag, Mesh2D, Point, Subdomain};
use crate::sparse::{CsrMatrix, SparseLu, TripletBuilder};
use crate::tensor::SpdTensor2;

/// Boundary-trace tolerance of the discrete `H²₀` test.
pub const H20_TRACE_TOL: f64 = 1e-10;
/// Conormal tolerance factor: `‖ν·M∇u‖ ≤ H20_CONORMAL_FACTOR · h · ‖u‖`.
pub const H20_CONORMAL_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransmissionCoefficients {
    pub alpha_i: f64,
    pub alpha_e: f64,
    pub beta_e: f64,
    pub beta_i: f64,
    /// Ratio `M_e = γ M_i` in the proportional case.
    pub gamma: f64,
    /// Calibration constant.
    pub c0: f64,
}

impl TransmissionCoefficients {
    /// The electrocardiography instance `α_i = α_e = 1`, `β_e = −1`, `β_i = 0`.
    pub fn ecg(gamma: f64, c0: f64) -> Self {
        TransmissionCoefficients { alpha_i: 1.0, alpha_e: 1.0, beta_e: -1.0, beta_i: 0.0, gamma, c0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha_i, self.alpha_e, self.beta_e, self.beta_i, self.gamma, self.c0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("transmission coefficients must be finite".into()));
        }
        if self.alpha_i == 0.0 && self.alpha_e == 0.0 {
            return Err(Error::InvalidInput("alpha_i and alpha_e vanish together".into()));
        }
        if self.beta_i == 0.0 && self.beta_e == 0.0 {
            return Err(Error::InvalidInput("beta_i and beta_e vanish together".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::NotPositive("gamma".into()));
        }
        Ok(())
    }

    /// `β_e α_e + α_i β_i`.
    pub fn existence_prefactor(&self) -> f64 {
        self.beta_e * self.alpha_e + self.alpha_i * self.beta_i
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conductivities {
    pub m_i: SpdTensor2,
    pub m_e: SpdTensor2,
    pub m_b: SpdTensor2,
}

impl Conductivities {
    pub fn isotropic(sigma_i: f64, sigma_e: f64, sigma_b: f64) -> Result<Self> {
        Ok(Conductivities {
            m_i: SpdTensor2::isotropic(sigma_i)?,
            m_e: SpdTensor2::isotropic(sigma_e)?,
            m_b: SpdTensor2::isotropic(sigma_b)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTriple {
    pub u_i: ScalarField,
    pub u_e: ScalarField,
    pub u_b: ScalarField,
}

/// Heart and torso spaces with the three assembled operators.
pub struct TransmissionSetup {
    heart: Arc<P1Space>,
    torso: Arc<P1Space>,
    pub sys_i: EllipticSystem,
    pub sys_e: EllipticSystem,
    pub sys_b: EllipticSystem,
}

impl TransmissionSetup {
    pub fn new(mesh: &Mesh2D, c: &Conductivities) -> Result<Self> {
        let heart = Arc::new(P1Space::new(mesh, Subdomain::Heart)?);
        let torso = Arc::new(P1Space::new(mesh, Subdomain::Torso)?);
        Ok(TransmissionSetup {
            sys_i: EllipticSystem::on_space(heart.clone(), c.m_i)?,
            sys_e: EllipticSystem::on_space(heart.clone(), c.m_e)?,
            sys_b: EllipticSystem::on_space(torso.clone(), c.m_b)?,
            heart,
            torso,
        })
    }

    pub fn heart(&self) -> &Arc<P1Space> {
        &self.heart
    }

    pub fn torso(&self) -> &Arc<P1Space> {
        &self.torso
    }

    pub fn zero_triple(&self) -> PotentialTriple {
        PotentialTriple {
            u_i: ScalarField::zeros(&self.heart),
            u_e: ScalarField::zeros(&self.heart),
            u_b: ScalarField::zeros(&self.torso),
        }
    }

    /// `B_b u_b` on `tag` (torso outward normal), with volume source `f`.
    pub fn torso_conormal(&self, u_b: &ScalarField, f: &ScalarField, tag: BoundaryTag) -> Result<BoundaryField> {
        self.sys_b.conormal_derivative(u_b, Some(f), tag)
    }

    /// `|∂Ω_m|`.
    pub fn heart_perimeter(&self) -> f64 {
        self.heart.boundary(BoundaryTag::Inner).map(|p| p.perimeter()).unwrap_or(0.0)
    }

    fn check_triple(&self, t: &PotentialTriple) -> Result<()> {
        t.u_i.check(&self.heart)?;
        t.u_e.check(&self.heart)?;
        t.u_b.check(&self.torso)
    }
}

/// Nodal interpolant of `A · max(0, r² − |x − c|²)² / r⁴` on the heart.
pub fn make_h20_bump(heart: &P1Space, center: Point, radius: f64, amplitude: f64) -> Result<ScalarField> {
    if heart.subdomain() != Subdomain::Heart {
        return Err(Error::InvalidInput("bumps live on the heart".into()));
    }
    if !(radius > 0.0) || !center.iter().all(|c| c.is_finite()) || !amplitude.is_finite() {
        return Err(Error::InvalidInput(format!("bad bump parameters: centre {center:?}, radius {radius}")));
    }
    let part = heart.boundary(BoundaryTag::Inner)?;
    let touches = part
        .vertices
        .iter()
        .any(|&v| distance(heart.points()[v], center) < radius * (1.0 - 1e-9));
    if touches || heart.locate(center).is_none() {
        return Err(Error::SupportNotInside);
    }
    let r2 = radius * radius;
    Ok(ScalarField::interpolate(heart, |x| {
        let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
        let s = (r2 - d2).max(0.0);
        amplitude * s * s / (r2 * r2)
    }))
}

/// Boundary trace sup-norm and conormal `L²` norm of a heart field.
#[derive(Clone, Copy, Debug)]
pub struct H20Defect {
    pub trace_sup: f64,
    pub conormal_l2: f64,
    /// Allowed conormal norm `10 h ‖u‖`.
    pub conormal_allowed: f64,
}

impl H20Defect {
    pub fn trace_allowed(u: &ScalarField) -> f64 {
        H20_TRACE_TOL * u.max_abs().max(1.0)
    }
}

pub fn h20_defect(sys: &EllipticSystem, u: &ScalarField) -> Result<H20Defect> {
    let space = sys.space();
    let trace = u.trace(space, BoundaryTag::Inner)?;
    let b = sys.conormal_derivative(u, None, BoundaryTag::Inner)?;
    Ok(H20Defect {
        trace_sup: trace.max_abs(),
        conormal_l2: b.l2_norm(space)?,
        conormal_allowed: H20_CONORMAL_FACTOR * space.mesh_size() * sys.l2_norm(&u.values),
    })
}

fn check_h20(sys: &EllipticSystem, u: &ScalarField, need_trace: bool) -> Result<()> {
    let d = h20_defect(sys, u)?;
    if need_trace && d.trace_sup > H20Defect::trace_allowed(u) {
        return Err(Error::NotH20(format!("boundary trace {:.3e}", d.trace_sup)));
    }
    if d.conormal_l2 > d.conormal_allowed {
        return Err(Error::NotH20(format!(
            "conormal trace {:.3e} exceeds {:.3e}",
            d.conormal_l2, d.conormal_allowed
        )));
    }
    Ok(())
}

/// Null-space triple `(u_i, u_e, u_b) = (−(α_e/α_i) 𝒩_i(Δ_e u, 0) + h0, u, 0)`;
/// for `α_i = 0` the triple is `(u, 0, 0)` with `B_i u = 0` and `h0` unused.
pub fn nullspace_generate(
    setup: &TransmissionSetup,
    u: &ScalarField,
    h0: f64,
    coeffs: &TransmissionCoefficients,
) -> Result<PotentialTriple> {
    coeffs.validate()?;
    u.check(setup.heart())?;
    let zero_b = ScalarField::zeros(setup.torso());
    if coeffs.alpha_i == 0.0 {
        check_h20(&setup.sys_i, u, false)?;
        return Ok(PotentialTriple { u_i: u.clone(), u_e: ScalarField::zeros(setup.heart()), u_b: zero_b });
    }
    check_h20(&setup.sys_e, u, true)?;
    // Δ_e u tested against the P1 basis; the boundary term vanishes on H²₀.
    let ratio = coeffs.alpha_e / coeffs.alpha_i;
    let load: Vec<f64> = setup.sys_e.stiffness().mul_vec(&u.values).iter().map(|v| -ratio * v).collect();
    let scale: f64 = load.iter().map(|v| v.abs()).sum();
    let mut ui = setup.sys_i.solve_neumann_load(load, scale)?;
    for v in &mut ui {
        *v += h0;
    }
    Ok(PotentialTriple { u_i: ScalarField::new(Subdomain::Heart, ui), u_e: u.clone(), u_b: zero_b })
}

/// Norms of the residuals of the seven equations of the transmission problem.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransmissionResiduals {
    /// `α_i Δ_i u_i + α_e Δ_e u_e = 0` in the heart.
    pub r7: f64,
    /// `Δ_b u_b = f` in the torso.
    pub r8: f64,
    /// `u_e = u_b` on the heart surface.
    pub r9: f64,
    /// `B_e u_e = β_e B_b u_b` on the heart surface.
    pub r10: f64,
    /// `B_i u_i = β_i B_b u_b` on the heart surface.
    pub r11: f64,
    /// `B_b u_b = f1` on the outer boundary.
    pub r12: f64,
    /// `u_b = f0` on the outer boundary.
    pub r6: f64,
}

impl TransmissionResiduals {
    pub fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("r7", self.r7),
            ("r8", self.r8),
            ("r9", self.r9),
            ("r10", self.r10),
            ("r11", self.r11),
            ("r12", self.r12),
            ("r6", self.r6),
        ]
    }

    pub fn max(&self) -> f64 {
        self.named().iter().fold(0.0, |m, (_, v)| m.max(*v))
    }
}

/// `(Σ_interior r_j² / m_j)^{1/2}` with the lumped mass `m_j`.
fn interior_dual_norm(sys: &EllipticSystem, r: &[f64]) -> f64 {
    let lumped = sys.mass().mul_vec(&vec![1.0; r.len()]);
    sys.space()
        .interior_vertices()
        .iter()
        .map(|&j| r[j] * r[j] / lumped[j])
        .sum::<f64>()
        .sqrt()
}

pub fn transmission_residuals(
    setup: &TransmissionSetup,
    triple: &PotentialTriple,
    coeffs: &TransmissionCoefficients,
    data: &CauchyData,
) -> Result<TransmissionResiduals> {
    setup.check_triple(triple)?;
    data.check(setup.torso())?;
    let heart = setup.heart();
    let torso = setup.torso();
    let inner_h = heart.boundary(BoundaryTag::Inner)?;
    let outer = torso.boundary(BoundaryTag::Outer)?;

    let ki = setup.sys_i.stiffness().mul_vec(&triple.u_i.values);
    let ke = setup.sys_e.stiffness().mul_vec(&triple.u_e.values);
    let r7v: Vec<f64> = ki.iter().zip(&ke).map(|(a, b)| coeffs.alpha_i * a + coeffs.alpha_e * b).collect();
    let kb = setup.sys_b.stiffness().mul_vec(&triple.u_b.values);
    let mf = setup.sys_b.mass().mul_vec(&data.f.values);
    let r8v: Vec<f64> = kb.iter().zip(&mf).map(|(a, b)| a - b).collect();

    let ue_tr = triple.u_e.trace(heart, BoundaryTag::Inner)?;
    let ub_tr = triple.u_b.trace(torso, BoundaryTag::Inner)?;
    let diff = ue_tr.axpy(-1.0, &ub_tr);

    let bb_inner = setup.torso_conormal(&triple.u_b, &data.f, BoundaryTag::Inner)?;
    let bb_outer = setup.torso_conormal(&triple.u_b, &data.f, BoundaryTag::Outer)?;
    let be = setup.sys_e.conormal_derivative(&triple.u_e, None, BoundaryTag::Inner)?;
    let bi = setup.sys_i.conormal_derivative(&triple.u_i, None, BoundaryTag::Inner)?;
    let r10v = be.axpy(-coeffs.beta_e, &bb_inner);
    let r11v = bi.axpy(-coeffs.beta_i, &bb_inner);
    let r12v = bb_outer.axpy(-1.0, &data.f1);
    let r6v = triple.u_b.trace(torso, BoundaryTag::Outer)?.axpy(-1.0, &data.f0);

    Ok(TransmissionResiduals {
        r7: interior_dual_norm(&setup.sys_e, &r7v),
        r8: interior_dual_norm(&setup.sys_b, &r8v),
        r9: inner_h.l2_norm(&diff.values),
        r10: inner_h.l2_norm(&r10v.values),
        r11: inner_h.l2_norm(&r11v.values),
        r12: outer.l2_norm(&r12v.values),
        r6: outer.l2_norm(&r6v.values),
    })
}

/// `(β_e α_e + α_i β_i)(∫_{Ω_b} f + Σ ∫ f1 dσ)` over the supplied boundary
/// fields: the outer datum, and optionally a heart-surface field.
pub fn existence_condition(
    torso: &P1Space,
    f: &ScalarField,
    f1: &[BoundaryField],
    coeffs: &TransmissionCoefficients,
) -> Result<f64> {
    f.check(torso)?;
    let mut total: f64 = torso
        .triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let (_, area) = p1_gradients(torso.triangle_points(t));
            area * (f.values[tri[0]] + f.values[tri[1]] + f.values[tri[2]]) / 3.0
        })
        .sum();
    for b in f1 {
        total += b.integral(torso)?;
    }
    Ok(coeffs.existence_prefactor() * total)
}

/// Linear interpolation of loop-indexed nodal data at a boundary point.
fn along_edge(values: &[f64], p: &BoundaryPoint) -> f64 {
    let n = values.len();
    (1.0 - p.t) * values[p.edge] + p.t * values[(p.edge + 1) % n]
}

/// Per-element linear interpolation of a P1 heart field.
fn p1_source<'a>(g: &'a ScalarField, space: &'a P1Space) -> impl Fn(usize, [f64; 3], Point) -> f64 + Sync + 'a {
    move |t, bary, _| {
        let tri = space.triangles()[t];
        bary[0] * g.values[tri[0]] + bary[1] * g.values[tri[1]] + bary[2] * g.values[tri[2]]
    }
}

/// Heart-surface data derived from the torso field: the trace of `u_b` and
/// `β_e B_b u_b`, both loop-indexed.
fn heart_surface_data(
    setup: &TransmissionSetup,
    u_b: &ScalarField,
    torso_source: &ScalarField,
    beta_e: f64,
) -> Result<(Vec<f64>, Vec<f64>, BoundaryField)> {
    let trace = u_b.trace(setup.torso(), BoundaryTag::Inner)?.values;
    let bb = setup.torso_conormal(u_b, torso_source, BoundaryTag::Inner)?;
    let flux: Vec<f64> = bb.values.iter().map(|v| beta_e * v).collect();
    Ok((trace, flux, bb))
}

/// Reconstructed `u_e` on a degree-k space together with its vertex values.
pub struct UeReconstruction {
    pub coeffs: Vec<f64>,
    pub u_e: ScalarField,
}

/// Solves `(Δ_e)² u = g` in the heart with `u = u_b` and `B_e u = β_e B_b u_b`
/// on the heart surface, by the interior-penalty method on `space`.
pub fn reconstruct_ue(
    setup: &TransmissionSetup,
    space: &HighOrderSpace,
    u_b: &ScalarField,
    torso_source: &ScalarField,
    g: &ScalarField,
    coeffs: &TransmissionCoefficients,
) -> Result<UeReconstruction> {
    coeffs.validate()?;
    u_b.check(setup.torso())?;
    g.check(setup.heart())?;
    if !Arc::ptr_eq(space.p1(), setup.heart()) {
        return Err(Error::InvalidInput("the high-order space must be built on the setup's heart space".into()));
    }
    let (trace, flux, _) = heart_surface_data(setup, u_b, torso_source, coeffs.beta_e)?;
    let data = ClampedData {
        source: Box::new(p1_source(g, setup.heart())),
        dirichlet: Box::new(|p: BoundaryPoint| along_edge(&trace, &p)),
        conormal: Box::new(|p: BoundaryPoint| along_edge(&flux, &p)),
    };
    let sol = crate::highorder::solve_clamped(space, &setup.sys_e.tensor(), &data)?;
    let u_e = space.vertex_values(&sol.coeffs);
    Ok(UeReconstruction { coeffs: sol.coeffs, u_e })
}

/// Neumann load of the `u_i` problem:
/// `−(α_e/α_i)(K_e u_e − ∫ β_e B_b u_b φ) + ∫ β_i B_b u_b φ`, with its scale.
fn ui_load(
    setup: &TransmissionSetup,
    u_e: &ScalarField,
    bb: &BoundaryField,
    coeffs: &TransmissionCoefficients,
) -> Result<(Vec<f64>, f64)> {
    let ratio = coeffs.alpha_e / coeffs.alpha_i;
    let heart = setup.heart();
    let ke = setup.sys_e.stiffness().mul_vec(&u_e.values);
    let mb = heart.boundary(BoundaryTag::Inner)?.mass.mul_vec(&bb.values);
    let mut scale: f64 = ke.iter().map(|v| (ratio * v).abs()).sum();
    scale += mb.iter().map(|v| v.abs()).sum::<f64>() * (ratio * coeffs.beta_e).abs().max(coeffs.beta_i.abs());
    let mut load: Vec<f64> = ke.iter().map(|v| -ratio * v).collect();
    let surface: Vec<f64> = mb.iter().map(|v| (ratio * coeffs.beta_e + coeffs.beta_i) * v).collect();
    heart.scatter_add(BoundaryTag::Inner, &surface, &mut load)?;
    Ok((load, scale))
}

/// Boundary mean over the heart surface.
fn surface_mean(space: &P1Space, tag_values: &[f64]) -> Result<f64> {
    let part = space.boundary(BoundaryTag::Inner)?;
    Ok(part.integrate(tag_values) / part.perimeter())
}

/// Reconstructed intracellular potential and the calibration shift `h0`.
#[derive(Clone, Debug)]
pub struct UiReconstruction {
    pub u_i: ScalarField,
    pub h0: f64,
}

/// `u_i = 𝒩_i(−(α_e/α_i) Δ_e u_e, β_i B_b u_b) + h0` with `h0 = −c0 · mean(u_b)`.
pub fn reconstruct_ui(
    setup: &TransmissionSetup,
    u_e: &ScalarField,
    u_b: &ScalarField,
    torso_source: &ScalarField,
    coeffs: &TransmissionCoefficients,
) -> Result<UiReconstruction> {
    coeffs.validate()?;
    if coeffs.alpha_i == 0.0 {
        return Err(Error::AlphaIZero);
    }
    u_e.check(setup.heart())?;
    u_b.check(setup.torso())?;
    let bb = setup.torso_conormal(u_b, torso_source, BoundaryTag::Inner)?;
    let (load, scale) = ui_load(setup, u_e, &bb, coeffs)?;
    let n = setup.sys_i.solve_neumann_load(load, scale)?;
    let h0 = -coeffs.c0 * surface_mean(setup.heart(), &u_b.trace(setup.torso(), BoundaryTag::Inner)?.values)?;
    let u_i = n.iter().map(|v| v + h0).collect();
    Ok(UiReconstruction { u_i: ScalarField::new(Subdomain::Heart, u_i), h0 })
}

/// Proportional case `M_e = γ M_i`:
/// `u_i = −(α_e/α_i) γ u_e + (β_i + (α_e/α_i) β_e) 𝒩_i(0, B_b u_b) + h0'`, with
/// `h0'` chosen so that the calibration holds.
pub fn shortcut_ui(
    setup: &TransmissionSetup,
    u_e: &ScalarField,
    u_b: &ScalarField,
    torso_source: &ScalarField,
    coeffs: &TransmissionCoefficients,
) -> Result<UiReconstruction> {
    coeffs.validate()?;
    if coeffs.alpha_i == 0.0 {
        return Err(Error::AlphaIZero);
    }
    let me = setup.sys_e.tensor();
    let mi = setup.sys_i.tensor();
    match me.ratio_to(&mi) {
        Some(r) if (r - coeffs.gamma).abs() <= 1e-12 * r => {}
        _ => {
            return Err(Error::InvalidInput(format!(
                "shortcut needs M_e = gamma M_i with gamma = {}",
                coeffs.gamma
            )))
        }
    }
    let ratio = coeffs.alpha_e / coeffs.alpha_i;
    let bb = setup.torso_conormal(u_b, torso_source, BoundaryTag::Inner)?;
    let n = setup.sys_i.solve_neumann(&ScalarField::zeros(setup.heart()), &[bb])?;
    let k = coeffs.beta_i + ratio * coeffs.beta_e;
    let mean_ue = surface_mean(setup.heart(), &u_e.trace(setup.heart(), BoundaryTag::Inner)?.values)?;
    let h0 = (ratio * coeffs.gamma - coeffs.c0) * mean_ue;
    let u_i = u_e
        .values
        .iter()
        .zip(&n.values)
        .map(|(ue, nv)| -ratio * coeffs.gamma * ue + k * nv + h0)
        .collect();
    Ok(UiReconstruction { u_i: ScalarField::new(Subdomain::Heart, u_i), h0 })
}

/// `|∫_{∂Ω_m} (u_i + c0 u_e) dσ|`.
pub fn calibration_residual(heart: &P1Space, u_i: &ScalarField, u_e: &ScalarField, c0: f64) -> Result<f64> {
    let combined = u_i.axpy(c0, u_e);
    combined.check(heart)?;
    Ok(combined.trace(heart, BoundaryTag::Inner)?.integral(heart)?.abs())
}

/// Solution of the supplemented system: `u_e` from the fourth-order problem,
/// calibrated `u_i`, and the multiplier of the `u_i` equation, which is zero
/// exactly when the existence condition holds.
pub struct SupplementSolution {
    pub u_e_coeffs: Vec<f64>,
    pub u_e: ScalarField,
    pub u_i: ScalarField,
    pub multiplier: f64,
    pub dimension: usize,
}

/// Assembles and solves the block system
///
/// ```text
/// [ A_Q (Dirichlet rows)     0      0 ] [U]   [F_Q]
/// [ (α_e/α_i) K_e P          K_i    c ] [w] = [(β_i + (α_e/α_i) β_e) ∫ B_b u_b φ]
/// [ c0 cᵀ P                  cᵀ     0 ] [λ]   [0]
/// ```
///
/// where `P` takes vertex values of the degree-k field and `c = ∫_∂ φ dσ`.
pub fn supplement_solve(
    setup: &TransmissionSetup,
    space: &HighOrderSpace,
    u_b: &ScalarField,
    torso_source: &ScalarField,
    g: &ScalarField,
    coeffs: &TransmissionCoefficients,
) -> Result<SupplementSolution> {
    coeffs.validate()?;
    if coeffs.alpha_i == 0.0 {
        return Err(Error::AlphaIZero);
    }
    u_b.check(setup.torso())?;
    g.check(setup.heart())?;
    if !Arc::ptr_eq(space.p1(), setup.heart()) {
        return Err(Error::InvalidInput("the high-order space must be built on the setup's heart space".into()));
    }
    let (trace, flux, bb) = heart_surface_data(setup, u_b, torso_source, coeffs.beta_e)?;
    let me = setup.sys_e.tensor();
    let nq = space.num_dofs();
    let np = setup.heart().num_dofs();
    let dim = nq + np + 1;

    let aq = space.fourth_order_matrix(&me);
    let mut fq = space.fourth_order_rhs(&me, p1_source(g, setup.heart()), |p| along_edge(&flux, &p));
    let fixed = space.boundary_values(|p| along_edge(&trace, &p));
    let fixed_dofs: Vec<usize> = fixed.iter().map(|&(d, _)| d).collect();
    let aq = space.with_identity_rows(&aq, &fixed_dofs);
    for &(d, v) in &fixed {
        fq[d] = v;
    }

    let ratio = coeffs.alpha_e / coeffs.alpha_i;
    let c = setup.sys_i.boundary_weights();
    let mut b = TripletBuilder::new(dim, dim);
    b.extend_from(&aq, 0, 0, 1.0);
    // vertex dofs of the degree-k space come first, so P is the identity block
    b.extend_from(setup.sys_e.stiffness(), nq, 0, ratio);
    b.extend_from(setup.sys_i.stiffness(), nq, nq, 1.0);
    for (j, &cj) in c.iter().enumerate() {
        if cj != 0.0 {
            b.push(nq + j, dim - 1, cj);
            b.push(dim - 1, nq + j, cj);
            b.push(dim - 1, j, coeffs.c0 * cj);
        }
    }
    let system = b.build();
    let mut rhs = fq;
    let mut neumann = vec![0.0; np];
    let mb = setup.heart().boundary(BoundaryTag::Inner)?.mass.mul_vec(&bb.values);
    let surface: Vec<f64> = mb.iter().map(|v| (coeffs.beta_i + ratio * coeffs.beta_e) * v).collect();
    setup.heart().scatter_add(BoundaryTag::Inner, &surface, &mut neumann)?;
    rhs.extend(neumann);
    rhs.push(0.0);
    let x = SparseLu::new(&system)?.solve(&rhs)?;
    let u_e_coeffs = x[..nq].to_vec();
    let u_e = space.vertex_values(&u_e_coeffs);
    Ok(SupplementSolution {
        u_e,
        u_e_coeffs,
        u_i: ScalarField::new(Subdomain::Heart, x[nq..nq + np].to_vec()),
        multiplier: x[dim - 1],
        dimension: dim,
    })
}

/// Constants of the cardiac fourth-order equation with the affine ionic
/// current `I_ion(u) = a·∇u + a0 u + b`.
#[derive(Clone, Debug)]
pub struct CardioConstants {
    pub sigma_i: f64,
    pub sigma_e: f64,
    pub chi: f64,
    pub c_m: f64,
    pub eps_eps0: f64,
    pub a: [f64; 2],
    pub a0: f64,
    /// Source `b` of the ionic current, a heart field.
    pub b: ScalarField,
}

impl CardioConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_i", self.sigma_i),
            ("sigma_e", self.sigma_e),
            ("chi", self.chi),
            ("C_m", self.c_m),
            ("eps_eps0", self.eps_eps0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NotPositive(name.into()));
            }
        }
        if !(self.a.iter().all(|v| v.is_finite()) && self.a0.is_finite()) {
            return Err(Error::InvalidInput("ionic coefficients must be finite".into()));
        }
        Ok(())
    }

    /// `σ_i σ_e εε₀ / (σ_e + σ_i)`.
    pub fn leading_coefficient(&self) -> f64 {
        self.sigma_i * self.sigma_e * self.eps_eps0 / (self.sigma_e + self.sigma_i)
    }
}

/// Assembled cardiac operator on a degree-k heart space, with identity rows
/// at the boundary dofs carrying `u_e = u_b` and the conormal condition
/// imposed weakly.
pub struct CardioOperator {
    pub leading_coefficient: f64,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub boundary_dofs: Vec<usize>,
}

impl CardioOperator {
    pub fn solve(&self) -> Result<Vec<f64>> {
        SparseLu::new(&self.matrix)?.solve(&self.rhs)
    }
}

/// `(σ_iσ_eεε₀/(σ_e+σ_i)) Δ² u + χC_mσ_e Δu + (C_m(σ_e+σ_i)/σ_i) χ I_ion(u)
/// + χσ_eεε₀ Δ I_ion(u) = −(σ_e/σ_i) χ C_m I_ion(𝒩_i(0, ν_i·M_b∇u_b))`,
/// with `Δ = −div ∇`. The `b` parts of `I_ion(u)` move to the right-hand side.
pub fn cardio_fourth_order_operator(
    setup: &TransmissionSetup,
    space: &HighOrderSpace,
    consts: &CardioConstants,
    u_b: &ScalarField,
    torso_source: &ScalarField,
    coeffs: &TransmissionCoefficients,
) -> Result<CardioOperator> {
    consts.validate()?;
    coeffs.validate()?;
    let heart = setup.heart();
    consts.b.check(heart)?;
    u_b.check(setup.torso())?;
    if !Arc::ptr_eq(space.p1(), heart) {
        return Err(Error::InvalidInput("the high-order space must be built on the setup's heart space".into()));
    }
    let (si, se) = (consts.sigma_i, consts.sigma_e);
    let matches = |m: SpdTensor2, s: f64| m.as_isotropic().is_some_and(|v| (v - s).abs() <= 1e-12 * s);
    if !matches(setup.sys_i.tensor(), si) || !matches(setup.sys_e.tensor(), se) {
        return Err(Error::InvalidInput("cardio constants must match the isotropic heart conductivities".into()));
    }
    let lead = consts.leading_coefficient();
    let ident = SpdTensor2::identity();
    let second = consts.chi * consts.c_m * se;
    let ionic = consts.c_m * (se + si) / si * consts.chi;
    let ionic_lap = consts.chi * se * consts.eps_eps0;

    let (trace, _, bb) = heart_surface_data(setup, u_b, torso_source, coeffs.beta_e)?;
    // σ_e ∂_ν u_e = β_e B_b u_b, so the identity-tensor conormal is β_e B_b u_b / σ_e.
    let flux: Vec<f64> = bb.values.iter().map(|v| coeffs.beta_e * v / se).collect();

    let mut a = space.fourth_order_matrix(&ident).scaled(lead);
    a = a.add_scaled(&space.stiffness(&ident), second);
    if consts.a != [0.0, 0.0] || consts.a0 != 0.0 {
        a = a.add_scaled(&space.reaction(consts.a, consts.a0), ionic);
        a = a.add_scaled(&space.reaction_against_laplacian(consts.a, consts.a0), ionic_lap);
    }

    // ν_i·M_b∇u_b = −B_b u_b on the heart surface
    let heart_flux = bb.scaled(-1.0);
    let n = setup.sys_i.solve_neumann(&ScalarField::zeros(heart), &[heart_flux])?;
    let grads: Vec<[f64; 2]> = (0..heart.triangles().len())
        .map(|t| {
            let (g, _) = p1_gradients(heart.triangle_points(t));
            let tri = heart.triangles()[t];
            let mut out = [0.0; 2];
            for k in 0..3 {
                out[0] += n.values[tri[k]] * g[k][0];
                out[1] += n.values[tri[k]] * g[k][1];
            }
            out
        })
        .collect();
    let interp = |f: &ScalarField, t: usize, bary: [f64; 3]| {
        let tri = heart.triangles()[t];
        bary[0] * f.values[tri[0]] + bary[1] * f.values[tri[1]] + bary[2] * f.values[tri[2]]
    };
    let rhs_coef = -(se / si) * consts.chi * consts.c_m;
    let mut rhs = space.load(|t, bary, _| {
        let iion = consts.a[0] * grads[t][0] + consts.a[1] * grads[t][1] + consts.a0 * interp(&n, t, bary)
            + interp(&consts.b, t, bary);
        rhs_coef * iion - ionic * interp(&consts.b, t, bary)
    });
    if consts.b.max_abs() > 0.0 {
        let lap_b = space.load_against_laplacian(|t, bary, _| interp(&consts.b, t, bary));
        for (r, v) in rhs.iter_mut().zip(&lap_b) {
            *r -= ionic_lap * v;
        }
    }
    // Nitsche terms of the conormal condition, scaled with the leading part
    let nitsche = space.fourth_order_rhs(&ident, |_, _, _| 0.0, |p| along_edge(&flux, &p));
    for (r, v) in rhs.iter_mut().zip(&nitsche) {
        *r += lead * v;
    }
    let fixed = space.boundary_values(|p| along_edge(&trace, &p));
    let dofs: Vec<usize> = fixed.iter().map(|&(d, _)| d).collect();
    let matrix = space.with_identity_rows(&a, &dofs);
    for &(d, v) in &fixed {
        rhs[d] = v;
    }
    Ok(CardioOperator { leading_coefficient: lead, matrix, rhs, boundary_dofs: dofs })
}
