//! Acceptance suite: twelve checks, each measured against an oracle that does
//! not share the code path under test (closed forms, finite differences,
//! brute-force quadrature, refinement studies).

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cauchy::{CauchyData, CauchySolver};
use crate::elasticity::{elasticity_green_residual, kelvin_somigliana, symbol_check, LameParameters, LameSystem, VectorField2};
use crate::elliptic::assemble;
use crate::error::{Error, Result};
use crate::fem::{p1_gradients, P1Space};
use crate::field::{BoundaryField, ScalarField};
use crate::highorder::{solve_clamped, ClampedData, HighOrderSpace};
use crate::mesh::{build_disk_in_disk_mesh, build_disk_in_disk_mesh_rings, BoundaryTag, Point, Subdomain};
use crate::parabolic::{
    build_cable_operator, green_heat_residual, uniqueness_probe, CableCoefficients, CaloricGaussian, ConstantField,
    HeatKernel, HeatQuadrature,
};
use crate::quadrature::{gauss_legendre, triangle_rule};
use crate::spectral::{spectral_disk_oracle, IsotropicConductivities, ModeAmplitudes};
use crate::tensor::SpdTensor2;
use crate::transmission::{
    calibration_residual, cardio_fourth_order_operator, existence_condition, make_h20_bump, nullspace_generate,
    reconstruct_ui, shortcut_ui, supplement_solve, transmission_residuals, CardioConstants, Conductivities,
    TransmissionCoefficients, TransmissionSetup,
};

/// Number of acceptance criteria.
pub const NUM_CRITERIA: usize = 12;

const R_INNER: f64 = 1.0;
const R_OUTER: f64 = 2.0;

/// Direction of the comparison between `value` and `tolerance`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    /// Headline measurement; the detail string lists every sub-check.
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cmp = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        write!(
            f,
            "criterion {:>2} {:<34} {}  value {:.3e} {cmp} {:.1e}  ({:.1} s)  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.value,
            self.tolerance,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Seed of the random fields, pairs and sample points.
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 20240917 }
    }
}

pub fn criterion_name(id: usize) -> &'static str {
    match id {
        1 => "neumann compatibility gate",
        2 => "manufactured convergence",
        3 => "green identities",
        4 => "transmission null space",
        5 => "proportional-case consistency",
        6 => "existence condition",
        7 => "fourth-order supplement",
        8 => "cardiac operator",
        9 => "kelvin-somigliana and symbol",
        10 => "heat kernel and potentials",
        11 => "parabolic uniqueness witness",
        12 => "cauchy inverse recovery",
        _ => "unknown",
    }
}

/// Runs one criterion; solver failures are reported as a failed criterion.
pub fn run_criterion(id: usize, opts: &VerifyOptions) -> CriterionReport {
    let start = Instant::now();
    let outcome = match id {
        1 => neumann_gate(),
        2 => manufactured_convergence(),
        3 => green_identities(opts.seed),
        4 => null_space(),
        5 => proportional_case(),
        6 => existence(opts.seed),
        7 => supplement(),
        8 => cardio(),
        9 => kelvin(opts.seed),
        10 => heat(opts.seed),
        11 => uniqueness(),
        12 => cauchy(),
        _ => Err(Error::InvalidInput(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let name = criterion_name(id);
    match outcome {
        Ok(m) => CriterionReport {
            id,
            name,
            passed: m.passed,
            value: m.value,
            tolerance: m.tolerance,
            bound: m.bound,
            detail: m.detail,
            seconds,
        },
        Err(e) => CriterionReport {
            id,
            name,
            passed: false,
            value: f64::NAN,
            tolerance: f64::NAN,
            bound: Bound::AtMost,
            detail: format!("error: {e}"),
            seconds,
        },
    }
}

/// Runs every criterion in order.
pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionReport> {
    (1..=NUM_CRITERIA).map(|id| run_criterion(id, opts)).collect()
}

/// `criterion_id,status,value,tolerance` lines with a header.
pub fn report_csv(reports: &[CriterionReport]) -> String {
    let mut out = String::from("criterion_id,status,value,tolerance\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{:e},{:e}\n",
            r.id,
            if r.passed { "pass" } else { "fail" },
            r.value,
            r.tolerance
        ));
    }
    out
}

struct Measured {
    passed: bool,
    value: f64,
    tolerance: f64,
    bound: Bound,
    detail: String,
}

impl Measured {
    fn at_most(value: f64, tolerance: f64, extra: bool, detail: String) -> Self {
        Measured { passed: extra && value <= tolerance, value, tolerance, bound: Bound::AtMost, detail }
    }

    fn at_least(value: f64, tolerance: f64, extra: bool, detail: String) -> Self {
        Measured { passed: extra && value >= tolerance, value, tolerance, bound: Bound::AtLeast, detail }
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn aniso() -> SpdTensor2 {
    SpdTensor2 { m11: 1.5, m12: 0.3, m22: 0.8 }
}

/// `(Σ_T ∫_T |u_h − u|²)^{1/2}` with a degree-4 rule per triangle.
fn p1_l2_error(space: &P1Space, values: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    let rule = triangle_rule(4);
    let mut sum = 0.0;
    for (t, tri) in space.triangles().iter().enumerate() {
        let p = space.triangle_points(t);
        let (_, area) = p1_gradients(p);
        for &(xi, w) in &rule {
            let bary = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let uh = bary[0] * values[tri[0]] + bary[1] * values[tri[1]] + bary[2] * values[tri[2]];
            sum += 2.0 * area * w * (uh - exact(x)).powi(2);
        }
    }
    sum.sqrt()
}

fn neumann_gate() -> Result<Measured> {
    let mesh = build_disk_in_disk_mesh(R_INNER, R_OUTER, 0.1)?;
    let mut raised = true;
    let mut worst = 0.0f64;
    for sub in [Subdomain::Heart, Subdomain::Torso] {
        let sys = assemble(&mesh, aniso(), sub)?;
        let space = sys.space().clone();
        let g = ScalarField::zeros(&space);
        let ones = sub
            .boundary_tags()
            .iter()
            .map(|&t| BoundaryField::from_fn(&space, t, |_, _| 1.0))
            .collect::<Result<Vec<_>>>()?;
        raised &= matches!(sys.solve_neumann(&g, &ones), Err(Error::IncompatibleData { .. }));

        // non-constant data projected to zero mean over the whole boundary
        let raw = sub
            .boundary_tags()
            .iter()
            .map(|&t| BoundaryField::from_fn(&space, t, |x, _| 1.0 + 0.5 * x[0] + x[0] * x[1]))
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut perimeter = 0.0;
        for b in &raw {
            total += b.integral(&space)?;
            perimeter += space.boundary(b.tag)?.perimeter();
        }
        let projected: Vec<BoundaryField> =
            raw.iter().map(|b| BoundaryField::new(b.tag, b.values.iter().map(|v| v - total / perimeter).collect())).collect();
        let u = sys.solve_neumann(&g, &projected)?;
        let mut mean = 0.0;
        for &t in sub.boundary_tags() {
            mean += u.trace(&space, t)?.integral(&space)?;
        }
        mean /= perimeter;
        worst = worst.max(mean.abs() / u.max_abs().max(f64::MIN_POSITIVE));
    }
    Ok(Measured::at_most(
        worst,
        1e-10,
        raised,
        format!("constant data rejected on heart and torso: {raised}; |boundary mean|/scale {worst:.2e}"),
    ))
}

fn manufactured_convergence() -> Result<Measured> {
    let m = aniso();
    let (a, b, c) = (0.7, -0.4, 0.3);
    let exact = move |x: Point| a * x[0] * x[0] + b * x[0] * x[1] + c * x[1] * x[1] + 0.5 * x[0] - 0.2;
    let grad = move |x: Point| [2.0 * a * x[0] + b * x[1] + 0.5, b * x[0] + 2.0 * c * x[1]];
    // Δ_M u = −div M∇u is constant for a quadratic
    let source = -(2.0 * a * m.m11 + 2.0 * b * m.m12 + 2.0 * c * m.m22);

    let mut errors = [[0.0; 2]; 3];
    for (level, h) in [0.1, 0.05].into_iter().enumerate() {
        let mesh = build_disk_in_disk_mesh(R_INNER, R_OUTER, h)?;

        let sys = assemble(&mesh, m, Subdomain::Heart)?;
        let space = sys.space().clone();
        let g = ScalarField::constant(&space, source);
        let bc = BoundaryField::from_fn(&space, BoundaryTag::Inner, |x, _| exact(x))?;
        let u = sys.solve_dirichlet(&g, &[bc])?;
        errors[0][level] = p1_l2_error(&space, &u.values, exact);

        let flux = BoundaryField::from_fn(&space, BoundaryTag::Inner, |x, n| m.form(n, grad(x)))?;
        let defect: f64 = sys.load(&g, &[&flux])?.iter().sum();
        let perimeter = space.boundary(BoundaryTag::Inner)?.perimeter();
        let flux = BoundaryField::new(flux.tag, flux.values.iter().map(|v| v - defect / perimeter).collect());
        let u = sys.solve_neumann(&g, &[flux])?;
        let exact_mean = space.boundary(BoundaryTag::Inner)?.integrate(
            &ScalarField::interpolate(&space, exact).trace(&space, BoundaryTag::Inner)?.values,
        ) / perimeter;
        errors[1][level] = p1_l2_error(&space, &u.values, |x| exact(x) - exact_mean);

        let sys = assemble(&mesh, m, Subdomain::Torso)?;
        let space = sys.space().clone();
        let g = ScalarField::constant(&space, source);
        let dir = BoundaryField::from_fn(&space, BoundaryTag::Inner, |x, _| exact(x))?;
        let neu = BoundaryField::from_fn(&space, BoundaryTag::Outer, |x, n| m.form(n, grad(x)))?;
        let u = sys.solve_mixed(&g, &dir, &neu)?;
        errors[2][level] = p1_l2_error(&space, &u.values, exact);
    }
    let ratios: Vec<f64> = errors.iter().map(|e| e[0] / e[1]).collect();
    let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Measured::at_least(
        worst,
        3.0,
        true,
        format!(
            "L2 error ratios dirichlet {:.2} ({:.2e} -> {:.2e}), neumann {:.2} ({:.2e} -> {:.2e}), mixed {:.2} ({:.2e} -> {:.2e})",
            ratios[0], errors[0][0], errors[0][1], ratios[1], errors[1][0], errors[1][1], ratios[2], errors[2][0], errors[2][1]
        ),
    ))
}

fn green_identities(seed: u64) -> Result<Measured> {
    let mesh = build_disk_in_disk_mesh(R_INNER, R_OUTER, 0.1)?;
    let mut r = rng(seed, 3);
    let scalar = [assemble(&mesh, aniso(), Subdomain::Heart)?, assemble(&mesh, aniso(), Subdomain::Torso)?];
    let p = LameParameters::new(1.2, 0.7, 0.5)?;
    let elastic = [
        LameSystem::on_space(scalar[0].space().clone(), p)?,
        LameSystem::on_space(scalar[1].space().clone(), p)?,
    ];
    let mut worst_scalar = 0.0f64;
    for k in 0..100 {
        let sys = &scalar[k % 2];
        let n = sys.space().num_dofs();
        let u = ScalarField::new(sys.space().subdomain(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect());
        let v = ScalarField::new(sys.space().subdomain(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect());
        let g = sys.green_identity_residual(&u, &v)?;
        worst_scalar = worst_scalar.max(g.residual / g.scale.max(f64::MIN_POSITIVE));
    }
    let mut worst_elastic = 0.0f64;
    for k in 0..100 {
        let sys = &elastic[k % 2];
        let n = sys.space().num_dofs();
        let mut field = || {
            let flat: Vec<f64> = (0..2 * n).map(|_| r.random_range(-1.0..1.0)).collect();
            VectorField2::from_flat(sys.space().subdomain(), &flat)
        };
        let (u, v) = (field(), field());
        worst_elastic = worst_elastic.max(elasticity_green_residual(sys, &u, &v)?.relative());
    }
    Ok(Measured::at_most(
        worst_scalar.max(worst_elastic),
        1e-10,
        true,
        format!("100 random pairs each: elliptic {worst_scalar:.2e}, elastic (both tractions) {worst_elastic:.2e}"),
    ))
}

fn transmission_conductivities() -> Result<Conductivities> {
    Ok(Conductivities {
        m_i: SpdTensor2::new(1.5, 0.2, 1.0)?,
        m_e: SpdTensor2::new(1.0, -0.1, 0.8)?,
        m_b: SpdTensor2::isotropic(2.0)?,
    })
}

/// Coefficient sets with `α_i ≠ 0` used by the null-space check.
pub fn null_space_coefficient_sets() -> [TransmissionCoefficients; 3] {
    [
        TransmissionCoefficients::ecg(1.0, 0.5),
        TransmissionCoefficients { alpha_i: 2.0, alpha_e: 0.5, beta_e: 1.0, beta_i: 0.5, gamma: 1.0, c0: -0.3 },
        TransmissionCoefficients { alpha_i: 1.0, alpha_e: -0.7, beta_e: -1.0, beta_i: 0.3, gamma: 1.0, c0: 1.2 },
    ]
}

/// `(centre, radius, amplitude)` of the smooth bumps of the null-space check.
pub const NULL_SPACE_BUMPS: [(Point, f64, f64); 5] = [
    ([0.0, 0.0], 1.0, 1.0),
    ([0.0, 0.0], 1.0, -2.5),
    ([0.3, 0.2], 0.5, 1.0),
    ([-0.4, -0.1], 0.45, 2.0),
    ([0.1, -0.35], 0.6, -1.0),
];

fn null_space() -> Result<Measured> {
    let cond = transmission_conductivities()?;
    let hs = [0.1, 0.05];
    let setups = hs
        .iter()
        .map(|&h| TransmissionSetup::new(&build_disk_in_disk_mesh(R_INNER, R_OUTER, h)?, &cond))
        .collect::<Result<Vec<_>>>()?;
    let h0 = 0.7;
    let mut min_ratio = f64::INFINITY;
    let mut floors = 0;
    let mut calibration_ok = true;
    let mut worst_cal0 = 0.0f64;
    let mut min_cal_h0 = f64::INFINITY;
    for coeffs in null_space_coefficient_sets() {
        for &(center, radius, amp) in &NULL_SPACE_BUMPS {
            let mut levels = Vec::new();
            for setup in &setups {
                let u = make_h20_bump(setup.heart(), center, radius, amp)?;
                let data = CauchyData::zeros(setup.torso(), setup.sys_b.tensor())?;
                let triple = nullspace_generate(setup, &u, 0.0, &coeffs)?;
                let res = transmission_residuals(setup, &triple, &coeffs, &data)?;
                let norm = setup.sys_e.l2_norm(&u.values).max(setup.sys_i.l2_norm(&triple.u_i.values));

                let perimeter = setup.heart_perimeter();
                let scale = perimeter * (triple.u_i.max_abs() + coeffs.c0.abs() * u.max_abs());
                let cal0 = calibration_residual(setup.heart(), &triple.u_i, &triple.u_e, coeffs.c0)?;
                worst_cal0 = worst_cal0.max(cal0 / scale);
                calibration_ok &= cal0 <= 1e-8 * scale;
                let shifted = nullspace_generate(setup, &u, h0, &coeffs)?;
                let cal = calibration_residual(setup.heart(), &shifted.u_i, &shifted.u_e, coeffs.c0)?;
                min_cal_h0 = min_cal_h0.min(cal / (h0 * perimeter));
                calibration_ok &= cal > 0.1 * h0 * perimeter;
                levels.push((res, norm));
            }
            let (coarse, nc) = levels[0];
            let (fine, nf) = levels[1];
            for ((_, rc), (_, rf)) in coarse.named().iter().zip(fine.named().iter()) {
                // residuals at the roundoff floor on both levels are exact
                if *rc <= 1e-10 * nc && *rf <= 1e-10 * nf {
                    floors += 1;
                    continue;
                }
                min_ratio = min_ratio.min(rc / rf);
            }
        }
    }
    Ok(Measured::at_least(
        min_ratio,
        2.5,
        calibration_ok,
        format!(
            "15 bump/coefficient cases, h 0.1 -> 0.05: min residual ratio {min_ratio:.2} ({floors} residuals at roundoff); \
             calibration h0=0 worst {worst_cal0:.1e} of scale, h0={h0} min {min_cal_h0:.3} of |h0||boundary|"
        ),
    ))
}

fn proportional_case() -> Result<Measured> {
    let mesh = build_disk_in_disk_mesh(R_INNER, R_OUTER, 0.05)?;
    let gamma = 0.6;
    let sig = IsotropicConductivities { sigma_i: 1.3, sigma_e: 1.3 * gamma, sigma_b: 2.0 };
    let setup = TransmissionSetup::new(&mesh, &Conductivities::isotropic(sig.sigma_i, sig.sigma_e, sig.sigma_b)?)?;
    let zero_b = ScalarField::zeros(setup.torso());
    let amp = ModeAmplitudes { f0: 0.7, f1: -0.4, g: 1.5 };
    let coeffs = TransmissionCoefficients { alpha_i: 1.0, alpha_e: 0.7, beta_e: -1.0, beta_i: 0.3, gamma, c0: 0.4 };
    let mut agree = 0.0f64;
    for m in 1..=3 {
        let oracle = spectral_disk_oracle(m, &coeffs, sig, R_INNER, R_OUTER, amp)?;
        let t = oracle.triple(setup.heart(), setup.torso());
        let general = reconstruct_ui(&setup, &t.u_e, &t.u_b, &zero_b, &coeffs)?;
        let short = shortcut_ui(&setup, &t.u_e, &t.u_b, &zero_b, &coeffs)?;
        agree = agree.max(general.u_i.axpy(-1.0, &short.u_i).max_abs() / general.u_i.max_abs());
    }

    // ECG instance with a constant offset so the calibration constant is nonzero
    let ecg = TransmissionCoefficients::ecg(gamma, 0.4);
    let oracle = spectral_disk_oracle(2, &ecg, sig, R_INNER, R_OUTER, amp)?;
    let mut t = oracle.triple(setup.heart(), setup.torso());
    for v in t.u_b.values.iter_mut().chain(t.u_e.values.iter_mut()) {
        *v += 0.5;
    }
    let general = reconstruct_ui(&setup, &t.u_e, &t.u_b, &zero_b, &ecg)?;
    let short = shortcut_ui(&setup, &t.u_e, &t.u_b, &zero_b, &ecg)?;
    agree = agree.max(general.u_i.axpy(-1.0, &short.u_i).max_abs() / general.u_i.max_abs());
    // −c0 ∫u_b dσ / ∫dσ by a trapezoid sum along the mesh loop
    let local = setup.torso().local_index_map();
    let lp = mesh.boundary_loop(BoundaryTag::Inner)?;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..lp.len() {
        let (ga, gb) = (lp[k], lp[(k + 1) % lp.len()]);
        let len = crate::mesh::distance(mesh.vertices()[ga], mesh.vertices()[gb]);
        num += 0.5 * len * (t.u_b.values[local[&ga]] + t.u_b.values[local[&gb]]);
        den += len;
    }
    let constant = -ecg.c0 * num / den;
    let const_err = (general.h0 - constant).abs() / constant.abs();
    let cal = calibration_residual(setup.heart(), &general.u_i, &t.u_e, ecg.c0)?;
    Ok(Measured::at_most(
        agree,
        1e-8,
        const_err <= 1e-10,
        format!(
            "general vs shortcut max relative {agree:.2e} (modes 1-3 and ECG instance); calibration constant {constant:.6} \
             relative error {const_err:.1e} (<= 1e-10); calibration residual {cal:.1e}"
        ),
    ))
}

fn existence(seed: u64) -> Result<Measured> {
    let mesh = build_disk_in_disk_mesh(R_INNER, R_OUTER, 0.1)?;
    let torso = P1Space::new(&mesh, Subdomain::Torso)?;
    let mut r = rng(seed, 6);
    let field = |r: &mut ChaCha8Rng| ScalarField::new(Subdomain::Torso, (0..torso.num_dofs()).map(|_| r.random_range(-1.0..1.0)).collect());
    let (f, f2) = (field(&mut r), field(&mut r));
    let nb = torso.boundary(BoundaryTag::Outer)?.len();
    let bfield = |r: &mut ChaCha8Rng| BoundaryField::new(BoundaryTag::Outer, (0..nb).map(|_| r.random_range(-1.0..1.0)).collect());
    let (f1, f12) = (bfield(&mut r), bfield(&mut r));
    let (a, b) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));

    let sets = [
        TransmissionCoefficients { alpha_i: 1.0, alpha_e: 0.7, beta_e: -1.0, beta_i: 0.3, gamma: 1.0, c0: 0.0 },
        TransmissionCoefficients::ecg(1.0, 0.0),
        TransmissionCoefficients { alpha_i: 2.0, alpha_e: 0.5, beta_e: 1.0, beta_i: 0.5, gamma: 1.0, c0: 0.0 },
    ];
    let mut lin = 0.0f64;
    for c in &sets {
        let e1 = existence_condition(&torso, &f, &[f1.clone()], c)?;
        let e2 = existence_condition(&torso, &f2, &[f12.clone()], c)?;
        let comb = existence_condition(&torso, &f.scaled(a).axpy(b, &f2), &[f1.scaled(a).axpy(b, &f12)], c)?;
        lin = lin.max((comb - a * e1 - b * e2).abs() / (a * e1).abs().max((b * e2).abs()));
    }

    // ∫ f by a degree-2 rule on each triangle and ∫ f1 by the trapezoid rule
    let rule = triangle_rule(2);
    let mut total = 0.0;
    for (t, tri) in torso.triangles().iter().enumerate() {
        let (_, area) = p1_gradients(torso.triangle_points(t));
        for &(xi, w) in &rule {
            let bary = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
            total += 2.0 * area * w * (0..3).map(|k| bary[k] * f.values[tri[k]]).sum::<f64>();
        }
    }
    let part = torso.boundary(BoundaryTag::Outer)?;
    for k in 0..nb {
        total += 0.5 * part.lengths[k] * (f1.values[k] + f1.values[(k + 1) % nb]);
    }
    let mut prop = 0.0f64;
    for c in &sets {
        let e = existence_condition(&torso, &f, &[f1.clone()], c)?;
        let expect = (c.beta_e * c.alpha_e + c.alpha_i * c.beta_i) * total;
        prop = prop.max((e - expect).abs() / expect.abs());
    }

    let vanishing = [
        TransmissionCoefficients { alpha_i: 1.0, alpha_e: 2.0, beta_e: 0.5, beta_i: -1.0, gamma: 1.0, c0: 0.0 },
        TransmissionCoefficients { alpha_i: 1.0, alpha_e: 1.0, beta_e: -1.0, beta_i: 1.0, gamma: 1.0, c0: 0.0 },
    ];
    let mut vanish = 0.0f64;
    for c in &vanishing {
        vanish = vanish.max(existence_condition(&torso, &f, &[f1.clone()], c)?.abs());
    }
    let worst = lin.max(prop).max(vanish);
    Ok(Measured::at_most(
        worst,
        1e-12,
        true,
        format!("linearity {lin:.1e}, proportionality {prop:.1e}, vanishing prefactor value {vanish:.1e}"),
    ))
}

/// Maps coarse vertices to the coincident vertices of a refined nested mesh.
fn nested_vertex_map(coarse: &P1Space, fine: &P1Space) -> Result<Vec<usize>> {
    let key = |x: Point| ((x[0] * 1e9).round() as i64, (x[1] * 1e9).round() as i64);
    let index: HashMap<(i64, i64), usize> = fine.points().iter().enumerate().map(|(i, &x)| (key(x), i)).collect();
    coarse
        .points()
        .iter()
        .map(|&x| index.get(&key(x)).copied().ok_or_else(|| Error::InvalidGeometry(format!("vertex {x:?} is not nested"))))
        .collect()
}

/// `L u = div M∇u` and `L² u` for `u = sin(ax) sin(by)`.
struct TrigBiharmonic {
    m: SpdTensor2,
    a: f64,
    b: f64,
}

impl TrigBiharmonic {
    fn value(&self, x: Point) -> f64 {
        (self.a * x[0]).sin() * (self.b * x[1]).sin()
    }

    fn grad(&self, x: Point) -> [f64; 2] {
        [
            self.a * (self.a * x[0]).cos() * (self.b * x[1]).sin(),
            self.b * (self.a * x[0]).sin() * (self.b * x[1]).cos(),
        ]
    }

    fn source(&self, x: Point) -> f64 {
        let (a, b, m) = (self.a, self.b, self.m);
        let s = m.m11 * a * a + m.m22 * b * b;
        let c = (a * x[0]).cos() * (b * x[1]).cos();
        (s * s + 4.0 * m.m12 * m.m12 * a * a * b * b) * self.value(x) - 4.0 * s * m.m12 * a * b * c
    }
}

fn supplement() -> Result<Measured> {
    // biharmonic manufactured solution, anisotropic tensor
    let trig = TrigBiharmonic { m: SpdTensor2 { m11: 1.2, m12: 0.3, m22: 0.9 }, a: 1.3, b: 0.9 };
    let mut h1 = Vec::new();
    for rings in [10, 20] {
        let mesh = build_disk_in_disk_mesh_rings(R_INNER, R_OUTER, rings)?;
        let space = HighOrderSpace::new(Arc::new(P1Space::new(&mesh, Subdomain::Heart)?), 3)?;
        let data = ClampedData::from_functions(|x| trig.source(x), |x| trig.value(x), |x, n| trig.m.form(n, trig.grad(x)));
        let sol = solve_clamped(&space, &trig.m, &data)?;
        h1.push(space.h1_seminorm_error(&sol.coeffs, |x| trig.grad(x)));
    }
    let h1_ratio = h1[0] / h1[1];

    // spectral oracle with two-level extrapolation, and the supplemented system
    let sig = IsotropicConductivities { sigma_i: 1.3, sigma_e: 0.8, sigma_b: 2.0 };
    let coeffs = TransmissionCoefficients { alpha_i: 1.0, alpha_e: 0.5, beta_e: -1.0, beta_i: 0.5, gamma: 1.0, c0: 0.3 };
    let amp = ModeAmplitudes { f0: 0.7, f1: -0.4, g: 1.5 };
    let cond = Conductivities::isotropic(sig.sigma_i, sig.sigma_e, sig.sigma_b)?;
    let levels = [16, 32]
        .iter()
        .map(|&rings| {
            let mesh = build_disk_in_disk_mesh_rings(R_INNER, R_OUTER, rings)?;
            let setup = TransmissionSetup::new(&mesh, &cond)?;
            let space = HighOrderSpace::new(setup.heart().clone(), 3)?;
            Ok((setup, space))
        })
        .collect::<Result<Vec<_>>>()?;
    let map = nested_vertex_map(levels[0].0.heart(), levels[1].0.heart())?;
    let m_e = SpdTensor2::isotropic(sig.sigma_e)?;
    let mut extrapolated = 0.0f64;
    let mut multiplier = 0.0f64;
    let mut nonsingular = true;
    let mut dims = Vec::new();
    for m in 0..=2 {
        let oracle = spectral_disk_oracle(m, &coeffs, sig, R_INNER, R_OUTER, amp)?;
        let mut values = Vec::new();
        for (setup, space) in &levels {
            let data = ClampedData::from_functions(
                |x| oracle.source(x),
                |x| oracle.u_e(x),
                |x, n| oracle.conormal_u_e(x, n),
            );
            values.push(space.vertex_values(&solve_clamped(space, &m_e, &data)?.coeffs));

            let t = oracle.triple(setup.heart(), setup.torso());
            let g = ScalarField::interpolate(setup.heart(), |x| oracle.source(x));
            match supplement_solve(setup, space, &t.u_b, &ScalarField::zeros(setup.torso()), &g, &coeffs) {
                Ok(s) => {
                    multiplier = multiplier.max(s.multiplier.abs());
                    dims.push(s.dimension);
                }
                Err(_) => nonsingular = false,
            }
        }
        let heart = levels[0].0.heart();
        let scale = heart.points().iter().fold(0.0f64, |s, &x| s.max(oracle.u_e(x).abs()));
        for (i, &x) in heart.points().iter().enumerate() {
            let (vc, vf) = (values[0].values[i], values[1].values[map[i]]);
            let rich = vf + (vf - vc) / 15.0;
            extrapolated = extrapolated.max((rich - oracle.u_e(x)).abs() / scale);
        }
    }
    dims.sort_unstable();
    dims.dedup();
    Ok(Measured::at_most(
        extrapolated,
        1e-6,
        nonsingular && h1_ratio >= 1.8,
        format!(
            "supplemented systems solved (sizes {dims:?}): {nonsingular}, max |multiplier| {multiplier:.1e}; \
             biharmonic H1 error {:.2e} -> {:.2e} ratio {h1_ratio:.2} (>= 1.8); extrapolated oracle error {extrapolated:.2e} (modes 0-2)",
            h1[0], h1[1]
        ),
    ))
}

fn cardio() -> Result<Measured> {
    let (sigma_i, sigma_e) = (1.3, 0.8);
    let mesh = build_disk_in_disk_mesh_rings(R_INNER, R_OUTER, 8)?;
    let setup = TransmissionSetup::new(&mesh, &Conductivities::isotropic(sigma_i, sigma_e, 2.0)?)?;
    let space = HighOrderSpace::new(setup.heart().clone(), 3)?;
    let consts = CardioConstants {
        sigma_i,
        sigma_e,
        chi: 1.4,
        c_m: 0.9,
        eps_eps0: 0.05,
        a: [0.0, 0.0],
        a0: 0.0,
        b: ScalarField::zeros(setup.heart()),
    };
    let op = cardio_fourth_order_operator(
        &setup,
        &space,
        &consts,
        &ScalarField::zeros(setup.torso()),
        &ScalarField::zeros(setup.torso()),
        &TransmissionCoefficients::ecg(sigma_e / sigma_i, 0.0),
    )?;
    // εε₀ times half the harmonic mean of the conductivities
    let lead = consts.eps_eps0 / (1.0 / sigma_i + 1.0 / sigma_e);
    let lead_err = (op.leading_coefficient - lead).abs() / lead;

    // Q-assembly with M_e = σ_e I, rescaled to the identity-tensor form
    let q = space.fourth_order_matrix(&SpdTensor2::isotropic(sigma_e)?);
    let expected = q
        .scaled(lead / (sigma_e * sigma_e))
        .add_scaled(&space.stiffness(&SpdTensor2::identity()), consts.chi * consts.c_m * sigma_e);
    let expected = space.with_identity_rows(&expected, &op.boundary_dofs);
    let entry_err = op.matrix.add_scaled(&expected, -1.0).max_abs() / expected.max_abs();
    Ok(Measured::at_most(
        entry_err,
        1e-12,
        lead_err <= 1e-14,
        format!("leading coefficient relative error {lead_err:.1e} (<= 1e-14); entrywise relative difference {entry_err:.1e}"),
    ))
}

fn fd_second(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
}

fn fd_first(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

/// Fourth-order finite-difference Hessian `[f_xx, f_xy, f_yy]`.
fn fd_hessian(f: &dyn Fn(Point) -> f64, x: Point, h: f64) -> [f64; 3] {
    let fxx = fd_second(&|s| f([x[0] + s, x[1]]), h);
    let fyy = fd_second(&|s| f([x[0], x[1] + s]), h);
    let fxy = fd_first(&|s| fd_first(&|t| f([x[0] + s, x[1] + t]), h), h);
    [fxx, fxy, fyy]
}

fn kelvin(seed: u64) -> Result<Measured> {
    let mut r = rng(seed, 9);
    let mut annihilation = 0.0f64;
    for _ in 0..100 {
        let p = LameParameters::new(r.random_range(-0.5..3.0), r.random_range(0.5..2.0), 0.1)?;
        let rad = r.random_range(0.3..2.0);
        let th = r.random_range(0.0..std::f64::consts::TAU);
        let x = [rad * th.cos(), rad * th.sin()];
        let h = 5e-3 * rad;
        for j in 0..2 {
            let comp = |m: usize| move |y: Point| kelvin_somigliana(y, &p).map(|k| k[m][j]).unwrap_or(f64::NAN);
            let h0 = fd_hessian(&comp(0), x, h);
            let h1 = fd_hessian(&comp(1), x, h);
            let lap = [h0[0] + h0[2], h1[0] + h1[2]];
            let grad_div = [h0[0] + h1[1], h0[1] + h1[2]];
            let mut res = 0.0;
            let mut scale = 0.0;
            for m in 0..2 {
                res += (p.mu * lap[m] + (p.lambda + p.mu) * grad_div[m]).powi(2);
                scale += (p.mu * lap[m]).powi(2) + ((p.lambda + p.mu) * grad_div[m]).powi(2);
            }
            annihilation = annihilation.max((res / scale).sqrt());
        }
    }
    let mut symbol = 0.0f64;
    for _ in 0..100 {
        let p = LameParameters::new(r.random_range(-0.5..3.0), r.random_range(0.5..2.0), 0.1)?;
        let zeta = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let w = [
            Complex::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)),
            Complex::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)),
        ];
        symbol = symbol.max(symbol_check(&p, zeta, w).discrepancy());
    }
    let unit = LameParameters::new(1.0, 1.0, 1.0)?;
    let s = symbol_check(&unit, [1.0, 0.0], [Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]);
    let det_err = (s.det_direct - 3.0).abs().max((s.det_closed - 3.0).abs());
    Ok(Measured::at_most(
        annihilation,
        1e-6,
        symbol <= 1e-12 && det_err <= 1e-12,
        format!(
            "Lame annihilation (100 points) {annihilation:.1e}; symbol closed forms (100 samples) {symbol:.1e} (<= 1e-12); \
             det at lambda = mu = 1, zeta = (1,0): {:.15} (error {det_err:.1e})",
            s.det_direct
        ),
    ))
}

fn heat(seed: u64) -> Result<Measured> {
    let drift = CableCoefficients { a: [0.5, -0.3], a0: 0.4, mu_e: 1.5, ..CableCoefficients::heat() };
    let m = SpdTensor2 { m11: 1.3, m12: 0.2, m22: 0.8 };
    let k = HeatKernel::new(&drift, m)?;

    // mass: composite Gauss on a box around the drifted centre
    let gl = gauss_legendre(8);
    let mut mass_err = 0.0f64;
    for t in [0.01, 0.1, 1.0] {
        let half = 10.0 * (4.0 * k.kappa * t * m.eigenvalues().1).sqrt();
        let c = [k.a[0] * t, k.a[1] * t];
        let panels = 40;
        let w = 2.0 * half / panels as f64;
        let nodes: Vec<(f64, f64)> = (0..panels)
            .flat_map(|p| gl.iter().map(move |&(s, wt)| (-half + w * (p as f64 + s), w * wt)))
            .collect();
        let mut sum = 0.0;
        for &(x, wx) in &nodes {
            for &(y, wy) in &nodes {
                sum += wx * wy * k.value([c[0] + x, c[1] + y], t)?;
            }
        }
        mass_err = mass_err.max((sum * (k.a0 * t).exp() - 1.0).abs());
    }

    // 𝓛Ψ = ∂_tΨ − κ div M∇Ψ + a·∇Ψ + a₀Ψ by finite differences
    let mut r = rng(seed, 10);
    let mut annihilation = 0.0f64;
    for _ in 0..50 {
        let s = r.random_range(0.05..1.0);
        let width = (4.0 * k.kappa * s * m.eigenvalues().1).sqrt();
        let z = [k.a[0] * s + r.random_range(-1.5..1.5) * width, k.a[1] * s + r.random_range(-1.5..1.5) * width];
        let f = |y: Point| k.value(y, s).unwrap_or(f64::NAN);
        let hx = 1e-2 * width;
        let hess = fd_hessian(&f, z, hx);
        let gx = fd_first(&|d| f([z[0] + d, z[1]]), hx);
        let gy = fd_first(&|d| f([z[0], z[1] + d]), hx);
        let dt = fd_first(&|d| k.value(z, s + d).unwrap_or(f64::NAN), 1e-2 * s);
        let diffusion = k.kappa * (m.m11 * hess[0] + 2.0 * m.m12 * hess[1] + m.m22 * hess[2]);
        let transport = k.a[0] * gx + k.a[1] * gy;
        let reaction = k.a0 * f(z);
        let res = dt - diffusion + transport + reaction;
        let scale = dt.abs() + diffusion.abs() + transport.abs() + reaction.abs();
        annihilation = annihilation.max(res.abs() / scale);
    }

    // Green representation of caloric functions on the heart disk
    let mesh = build_disk_in_disk_mesh(R_INNER, R_OUTER, 0.05)?;
    let interior: Vec<Point> =
        (0..6).map(|j| [0.5 * (j as f64).cos(), 0.5 * (j as f64).sin()]).chain([[0.0, 0.0]]).collect();
    let exterior: Vec<Point> = (0..6).map(|j| [1.4 * (j as f64).cos(), 1.4 * (j as f64).sin()]).collect();
    let q = HeatQuadrature::default();
    let mut green = 0.0f64;
    let mut cases = 0;
    for (c, mt) in [(CableCoefficients::heat(), SpdTensor2::identity()), (drift, m)] {
        let op = build_cable_operator(&c, mt, &mesh)?;
        let kern = HeatKernel::new(&c, mt)?;
        for (center, t0, t) in [([0.3, -0.2], 0.05, 0.1), ([1.3, 0.2], 0.1, 0.3)] {
            let u = CaloricGaussian { kernel: kern, center, t0, amplitude: 1.0 };
            let g = green_heat_residual(&kern, op.space(), &u, t, &interior, &exterior, &q)?;
            green = green.max(g.interior_error).max(g.exterior_value);
            cases += 1;
        }
        let cst = ConstantField { value: 1.0, a0: c.a0 };
        let g = green_heat_residual(&kern, op.space(), &cst, 0.2, &interior, &exterior, &q)?;
        green = green.max(g.interior_error).max(g.exterior_value);
        cases += 1;
    }
    Ok(Measured::at_most(
        green,
        0.02,
        mass_err <= 1e-6 && annihilation <= 1e-6,
        format!(
            "mass defect {mass_err:.1e} (<= 1e-6, t = 0.01, 0.1, 1); annihilation {annihilation:.1e} (<= 1e-6, 50 points); \
             Green formula worst interior error / exterior leak {green:.1e} over {cases} caloric functions"
        ),
    ))
}

fn uniqueness() -> Result<Measured> {
    let mesh = build_disk_in_disk_mesh(R_INNER, R_OUTER, 0.1)?;
    let mut worst_gain = f64::INFINITY;
    let mut zero_ok = true;
    let mut quad = 0.0f64;
    let drift = CableCoefficients { a: [0.4, 0.1], a0: 0.2, ..CableCoefficients::heat() };
    for (c, m) in [(CableCoefficients::heat(), SpdTensor2::identity()), (drift, aniso())] {
        let op = build_cable_operator(&c, m, &mesh)?;
        let (dt, steps) = (0.002, 50);
        let zero = uniqueness_probe(&op, &ScalarField::zeros(op.space()), dt, steps)?;
        zero_ok &= zero.value == 0.0;
        for (center, radius) in [([0.0, 0.0], 0.8), ([0.2, 0.1], 0.5), ([-0.3, 0.0], 0.4)] {
            let probe = |amp: f64| -> Result<_> { uniqueness_probe(&op, &make_h20_bump(op.space(), center, radius, amp)?, dt, steps) };
            let unit = probe(1.0)?;
            let baseline = zero.value.max(unit.static_floor);
            worst_gain = worst_gain.min(unit.value / baseline);
            for amp in [0.1, 0.3] {
                let p = probe(amp)?;
                quad = quad.max((p.value / (amp * amp * unit.value) - 1.0).abs());
            }
        }
    }
    Ok(Measured::at_least(
        worst_gain,
        10.0,
        zero_ok && quad <= 0.01,
        format!(
            "zero data gives 0: {zero_ok}; min probe / baseline {worst_gain:.1} over 3 bumps x 2 operators; \
             deviation from amplitude-squared scaling over 0.1..1 {quad:.1e} (<= 1e-2)"
        ),
    ))
}

fn cauchy() -> Result<Measured> {
    let mesh = build_disk_in_disk_mesh(R_INNER, R_OUTER, 0.05)?;
    let sys = assemble(&mesh, SpdTensor2::isotropic(2.0)?, Subdomain::Torso)?;
    let torso = sys.space().clone();
    let solver = CauchySolver::new(&sys)?;
    let mut worst = 0.0f64;
    let harmonic: [(&str, fn(Point) -> f64); 2] = [("x1", |x| x[0]), ("x1^2 - x2^2", |x| x[0] * x[0] - x[1] * x[1])];
    let mut parts = Vec::new();
    for (name, u) in harmonic {
        let field = ScalarField::interpolate(&torso, u);
        let data = CauchyData::from_field(&sys, &field, &ScalarField::zeros(&torso))?;
        let sol = solver.solve(&data, 1e-8)?;
        let exact = field.trace(&torso, BoundaryTag::Inner)?;
        let err = sol.inner_trace.axpy(-1.0, &exact).l2_norm(&torso)? / exact.l2_norm(&torso)?;
        parts.push(format!("{name}: {err:.2e}"));
        worst = worst.max(err);
    }
    let zero = CauchyData::zeros(&torso, sys.tensor())?;
    let mut zero_max = 0.0f64;
    for lambda in [1e-2, 1e-4, 1e-6, 1e-8] {
        zero_max = zero_max.max(solver.solve(&zero, lambda)?.u_b.max_abs());
    }
    Ok(Measured::at_most(
        worst,
        0.05,
        zero_max == 0.0,
        format!("relative L2 trace error at lambda = 1e-8, h = 0.05: {}; zero data max |u_b| over sweep {zero_max:.1e}", parts.join(", ")),
    ))
}
