//! One function per subcommand. Each writes its artifacts into the output
//! directory and returns the checks it performed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bidomain::cauchy::{CauchyData, CauchySolver};
use bidomain::elasticity::{elastic_transmission_demo, make_vector_bump, ElasticSetup, LameParameters, VectorField2};
use bidomain::elliptic::assemble;
use bidomain::fem::P1Space;
use bidomain::highorder::HighOrderSpace;
use bidomain::parabolic::{
    build_cable_operator, evolve, green_heat_residual, uniqueness_probe, write_probe_csv, CaloricGaussian, HeatKernel,
    HeatQuadrature,
};
use bidomain::spectral::{spectral_disk_oracle, IsotropicConductivities, ModeAmplitudes};
use bidomain::transmission::*;
use bidomain::verify::{report_csv, run_criterion, VerifyOptions, NUM_CRITERIA};
use bidomain::{build_disk_in_disk_mesh, BoundaryField, BoundaryTag, Error, Mesh2D, Point, ScalarField, Subdomain};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error as ThisError;

use crate::config::{ConfigError, ScenarioConfig};

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

fn check(name: impl Into<String>, passed: bool) -> Check {
    Check { name: name.into(), passed }
}

pub struct Context {
    pub cfg: ScenarioConfig,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.path(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|source| CliError::Write { path: path.display().to_string(), source })
    }

    fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|source| CliError::Write { path: path.display().to_string(), source })
    }

    fn write_json(&self, name: &str, value: &Value) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("json values serialize");
        self.write_text(name, &(text + "\n"))
    }

    fn write_field(&self, name: &str, field: &ScalarField, space: &P1Space) -> CliResult<()> {
        let mut w = self.create(name)?;
        field.write_csv(space, &mut w)?;
        flush(w, &self.path(name))
    }

    fn write_vector_field(&self, name: &str, field: &VectorField2, space: &P1Space) -> CliResult<()> {
        let mut w = self.create(name)?;
        field.write_csv(space, &mut w)?;
        flush(w, &self.path(name))
    }

    fn mesh(&self) -> CliResult<Mesh2D> {
        let g = &self.cfg.geometry;
        Ok(build_disk_in_disk_mesh(g.r_inner, g.r_outer, g.h)?)
    }
}

fn flush(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

fn residual_json(r: &TransmissionResiduals) -> serde_json::Map<String, Value> {
    r.named().iter().map(|(k, v)| (k.to_string(), json!(v))).collect()
}

pub fn mesh(ctx: &Context) -> CliResult<Vec<Check>> {
    let mesh = ctx.mesh()?;
    let valid = mesh.validate();
    ctx.write_text("mesh.txt", &mesh.to_text())?;
    ctx.write_json(
        "mesh.json",
        &json!({
            "vertices": mesh.num_vertices(),
            "triangles": mesh.num_triangles(),
            "boundary_edges": mesh.boundary_edges().len(),
            "mesh_size": mesh.mesh_size(),
            "heart_area": mesh.subdomain_area(Subdomain::Heart),
            "torso_area": mesh.subdomain_area(Subdomain::Torso),
        }),
    )?;
    println!(
        "mesh: {} vertices, {} triangles, h = {:.4}",
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.mesh_size()
    );
    Ok(vec![check("mesh is conforming and consistently tagged", valid.is_ok())])
}

pub fn neumann_demo(ctx: &Context) -> CliResult<Vec<Check>> {
    let mesh = ctx.mesh()?;
    let m = ctx.cfg.conductivities()?.m_i;
    let sys = assemble(&mesh, m, Subdomain::Heart)?;
    let space = sys.space().clone();

    let ones = BoundaryField::from_fn(&space, BoundaryTag::Inner, |_, _| 1.0)?;
    let zero = ScalarField::zeros(&space);
    let gate = sys.solve_neumann(&zero, &[ones]);
    let rejected = matches!(gate, Err(Error::IncompatibleData { .. }));

    // u = x1² + x1 x2 + 0.5 x2 with its constant source and conormal data
    let exact = |x: Point| x[0] * x[0] + x[0] * x[1] + 0.5 * x[1];
    let grad = |x: Point| [2.0 * x[0] + x[1], x[0] + 0.5];
    let g = ScalarField::constant(&space, -(2.0 * m.m11 + 2.0 * m.m12));
    let flux = BoundaryField::from_fn(&space, BoundaryTag::Inner, |x, n| m.form(n, grad(x)))?;
    let part = space.boundary(BoundaryTag::Inner)?;
    let defect: f64 = sys.load(&g, &[&flux])?.iter().sum();
    let flux = BoundaryField::new(flux.tag, flux.values.iter().map(|v| v - defect / part.perimeter()).collect());
    let u = sys.solve_neumann(&g, &[flux])?;
    let mean = part.integrate(&u.trace(&space, BoundaryTag::Inner)?.values) / part.perimeter();

    let reference = ScalarField::interpolate(&space, exact);
    let ref_mean = part.integrate(&reference.trace(&space, BoundaryTag::Inner)?.values) / part.perimeter();
    let diff: Vec<f64> = u.values.iter().zip(&reference.values).map(|(a, b)| a - (b - ref_mean)).collect();
    let error = sys.l2_norm(&diff) / sys.l2_norm(&reference.values);

    ctx.write_field("neumann_solution.csv", &u, &space)?;
    ctx.write_json(
        "neumann.json",
        &json!({
            "constant_data_rejected": rejected,
            "boundary_mean": mean,
            "relative_l2_error": error,
        }),
    )?;
    println!("neumann: constant data rejected {rejected}; boundary mean {mean:.2e}; relative L2 error {error:.2e}");
    Ok(vec![
        check("incompatible data rejected", rejected),
        check("solution has zero boundary mean", mean.abs() <= 1e-10 * u.max_abs()),
        check("manufactured solution within 5%", error <= 0.05),
    ])
}

pub fn cauchy_sweep(ctx: &Context) -> CliResult<Vec<Check>> {
    let mesh = ctx.mesh()?;
    let m = ctx.cfg.conductivities()?.m_b;
    let sys = assemble(&mesh, m, Subdomain::Torso)?;
    let torso = sys.space().clone();
    // harmonic for Δ_M: the quadratic part has m11·a + 2 m12·b + m22·c = 0
    let u = ScalarField::interpolate(&torso, |x| m.m22 * x[0] * x[0] - m.m11 * x[1] * x[1] + x[0]);
    let data = CauchyData::from_field(&sys, &u, &ScalarField::zeros(&torso))?;
    let exact = u.trace(&torso, BoundaryTag::Inner)?;
    let solver = CauchySolver::new(&sys)?;

    let mut lambdas = ctx.cfg.cauchy.lambdas.clone();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let mut csv = String::from("lambda,misfit,recovery_error\n");
    let mut misfits = Vec::new();
    for &lambda in &lambdas {
        let s = solver.solve(&data, lambda)?;
        let err = s.inner_trace.axpy(-1.0, &exact).l2_norm(&torso)? / exact.l2_norm(&torso)?;
        csv.push_str(&format!("{lambda:e},{:e},{err:e}\n", s.misfit));
        println!("cauchy: lambda {lambda:.1e}  misfit {:.3e}  recovery error {err:.3e}", s.misfit);
        misfits.push(s.misfit);
    }
    ctx.write_text("cauchy_sweep.csv", &csv)?;
    let monotone = misfits.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
    Ok(vec![check("misfit does not grow as lambda decreases", monotone)])
}

pub fn nullspace_demo(ctx: &Context) -> CliResult<Vec<Check>> {
    let mesh = ctx.mesh()?;
    let setup = TransmissionSetup::new(&mesh, &ctx.cfg.conductivities()?)?;
    let coeffs = ctx.cfg.transmission();
    let b = &ctx.cfg.bump;
    let u = make_h20_bump(setup.heart(), b.center, b.radius, b.amplitude)?;
    let triple = nullspace_generate(&setup, &u, b.h0, &coeffs)?;
    let data = CauchyData::zeros(setup.torso(), setup.sys_b.tensor())?;
    let res = transmission_residuals(&setup, &triple, &coeffs, &data)?;
    let existence = existence_condition(setup.torso(), &data.f, &[data.f1.clone()], &coeffs)?;

    let perimeter = setup.heart_perimeter();
    let mut checks = vec![check("all residuals finite", res.named().iter().all(|(_, v)| v.is_finite()))];
    let mut summary = residual_json(&res);
    summary.insert("existence_condition".into(), json!(existence));
    if coeffs.alpha_i != 0.0 {
        let cal = calibration_residual(setup.heart(), &triple.u_i, &triple.u_e, coeffs.c0)?;
        let scale = perimeter * (triple.u_i.max_abs() + coeffs.c0.abs() * u.max_abs());
        let ok = if b.h0 == 0.0 { cal <= 1e-8 * scale } else { cal > 0.1 * b.h0.abs() * perimeter };
        summary.insert("calibration_residual".into(), json!(cal));
        checks.push(check("calibration holds exactly when h0 = 0", ok));
        println!("nullspace: calibration residual {cal:.3e} (h0 = {})", b.h0);
    }
    for (name, v) in res.named() {
        println!("nullspace: {name} = {v:.3e}");
    }
    ctx.write_field("u_i.csv", &triple.u_i, setup.heart())?;
    ctx.write_field("u_e.csv", &triple.u_e, setup.heart())?;
    ctx.write_field("u_b.csv", &triple.u_b, setup.torso())?;
    ctx.write_json("residuals.json", &Value::Object(summary))?;
    Ok(checks)
}

pub fn existence_check(ctx: &Context) -> CliResult<Vec<Check>> {
    let mesh = ctx.mesh()?;
    let torso = P1Space::new(&mesh, Subdomain::Torso)?;
    let coeffs = ctx.cfg.transmission();
    let e = &ctx.cfg.existence;
    let f = ScalarField::constant(&torso, e.source);
    let f1 = BoundaryField::from_fn(&torso, BoundaryTag::Outer, |_, _| e.outer_flux)?;
    let value = existence_condition(&torso, &f, &[f1], &coeffs)?;
    let prefactor = coeffs.existence_prefactor();
    let status = if prefactor == 0.0 {
        "identically satisfied"
    } else if value.abs() <= 1e-12 {
        "satisfied"
    } else {
        "violated"
    };
    println!("existence condition: value {value:e}, prefactor {prefactor}: {status}");
    ctx.write_json("existence.json", &json!({ "value": value, "prefactor": prefactor, "status": status }))?;
    Ok(vec![check("existence condition evaluated", value.is_finite())])
}

fn isotropic(ctx: &Context) -> CliResult<IsotropicConductivities> {
    let c = ctx.cfg.conductivities()?;
    let get = |m: bidomain::SpdTensor2, key: &str| {
        m.as_isotropic().ok_or_else(|| Error::InvalidInput(format!("{key} must be a scalar for this experiment")))
    };
    Ok(IsotropicConductivities {
        sigma_i: get(c.m_i, "conductivities.sigma_i")?,
        sigma_e: get(c.m_e, "conductivities.sigma_e")?,
        sigma_b: get(c.m_b, "conductivities.sigma_b")?,
    })
}

pub fn supplement_solve(ctx: &Context) -> CliResult<Vec<Check>> {
    let sig = isotropic(ctx)?;
    let mesh = ctx.mesh()?;
    let setup = TransmissionSetup::new(&mesh, &ctx.cfg.conductivities()?)?;
    let s = &ctx.cfg.supplement;
    let space = HighOrderSpace::new(setup.heart().clone(), s.degree)?;
    let coeffs = ctx.cfg.transmission();
    let g = &ctx.cfg.geometry;
    let amp = ModeAmplitudes { f0: s.f0, f1: s.f1, g: s.g };

    let mut csv = String::from("mode,dimension,multiplier,u_e_error,u_i_error\n");
    let mut checks = Vec::new();
    for &m in &s.modes {
        let oracle = match spectral_disk_oracle(m, &coeffs, sig, g.r_inner, g.r_outer, amp) {
            Ok(o) => o,
            Err(Error::IncompatibleData { .. }) => {
                println!("supplement: mode {m} has no solution for these coefficients, skipped");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let t = oracle.triple(setup.heart(), setup.torso());
        let source = ScalarField::interpolate(setup.heart(), |x| oracle.source(x));
        let sol = bidomain::transmission::supplement_solve(&setup, &space, &t.u_b, &ScalarField::zeros(setup.torso()), &source, &coeffs)?;
        let rel = |a: &ScalarField, b: &ScalarField| {
            let d = a.axpy(-1.0, b);
            setup.sys_i.l2_norm(&d.values) / setup.sys_i.l2_norm(&b.values).max(f64::MIN_POSITIVE)
        };
        let (ee, ei) = (rel(&sol.u_e, &t.u_e), rel(&sol.u_i, &t.u_i));
        csv.push_str(&format!("{m},{},{:e},{ee:e},{ei:e}\n", sol.dimension, sol.multiplier));
        println!(
            "supplement: mode {m}  dimension {}  multiplier {:.2e}  u_e error {ee:.2e}  u_i error {ei:.2e}",
            sol.dimension, sol.multiplier
        );
        ctx.write_field(&format!("supplement_mode{m}_u_e.csv"), &sol.u_e, setup.heart())?;
        ctx.write_field(&format!("supplement_mode{m}_u_i.csv"), &sol.u_i, setup.heart())?;
        checks.push(check(format!("mode {m}: multiplier vanishes"), sol.multiplier.abs() <= 1e-6));
        checks.push(check(format!("mode {m}: u_e within 1% of the oracle"), ee <= 1e-2));
    }
    ctx.write_text("supplement.csv", &csv)?;
    Ok(checks)
}

pub fn cardio_operator(ctx: &Context) -> CliResult<Vec<Check>> {
    let sig = isotropic(ctx)?;
    let mesh = ctx.mesh()?;
    let setup = TransmissionSetup::new(&mesh, &ctx.cfg.conductivities()?)?;
    let space = HighOrderSpace::new(setup.heart().clone(), ctx.cfg.supplement.degree)?;
    let c = ctx.cfg.cardio.clone().unwrap_or_default();
    let consts = CardioConstants {
        sigma_i: sig.sigma_i,
        sigma_e: sig.sigma_e,
        chi: c.chi,
        c_m: c.c_m,
        eps_eps0: c.eps_eps0,
        a: c.a,
        a0: c.a0,
        b: ScalarField::constant(setup.heart(), c.b),
    };
    let zeros = ScalarField::zeros(setup.torso());
    let op = cardio_fourth_order_operator(&setup, &space, &consts, &zeros, &zeros, &ctx.cfg.transmission())?;
    let expected = sig.sigma_i * sig.sigma_e * c.eps_eps0 / (sig.sigma_e + sig.sigma_i);
    let lead_err = (op.leading_coefficient - expected).abs() / expected;
    let coeffs = op.solve()?;
    let u = space.vertex_values(&coeffs);
    let finite = coeffs.iter().all(|v| v.is_finite());
    ctx.write_field("cardio_solution.csv", &u, setup.heart())?;
    ctx.write_json(
        "cardio.json",
        &json!({
            "leading_coefficient": op.leading_coefficient,
            "expected_leading_coefficient": expected,
            "dimension": op.matrix.nrows(),
            "nonzeros": op.matrix.nnz(),
            "boundary_dofs": op.boundary_dofs.len(),
            "solution_max_abs": u.max_abs(),
        }),
    )?;
    println!(
        "cardio: leading coefficient {:.6e} (expected {expected:.6e}); {} dofs, {} nonzeros",
        op.leading_coefficient,
        op.matrix.nrows(),
        op.matrix.nnz()
    );
    Ok(vec![check("leading coefficient", lead_err <= 1e-14), check("operator solve is finite", finite)])
}

pub fn elasticity_demo(ctx: &Context) -> CliResult<Vec<Check>> {
    let mesh = ctx.mesh()?;
    let e = ctx.cfg.elasticity.clone().unwrap_or_default();
    let outer = LameParameters::new(e.lambda, e.mu, e.m0)?;
    let body = LameParameters::new(e.body_lambda, e.body_mu, e.m0)?;
    let setup = ElasticSetup::new(&mesh, outer.scaled(e.inner_scale), outer, body)?;
    let b = &ctx.cfg.bump;
    let u = make_vector_bump(setup.heart(), b.center, b.radius, b.amplitude, e.direction)?;
    let coeffs = TransmissionCoefficients { alpha_i: 1.0, alpha_e: 1.0, beta_e: 1.0, beta_i: 0.0, gamma: 1.0, c0: 0.0 };
    let demo = elastic_transmission_demo(&setup, &coeffs, &u, [b.h0, b.h0])?;
    let r = demo.residuals;
    for (name, v) in r.named() {
        println!("elasticity: {name} = {v:.3e}");
    }
    ctx.write_vector_field("elastic_u_i.csv", &demo.triple.u_i, setup.heart())?;
    ctx.write_vector_field("elastic_u_e.csv", &demo.triple.u_e, setup.heart())?;
    ctx.write_vector_field("elastic_u_b.csv", &demo.triple.u_b, setup.torso())?;
    ctx.write_json("elasticity.json", &Value::Object(residual_json(&r)))?;
    let scale = u.max_abs().max(1.0);
    Ok(vec![
        check("heart equation holds", r.r7 <= 1e-9 * scale),
        check("body and outer equations hold", r.r8 == 0.0 && r.r12 == 0.0 && r.r6 == 0.0),
        check("displacement is continuous", r.r9 <= 1e-12 * scale),
    ])
}

pub fn parabolic_demo(ctx: &Context) -> CliResult<Vec<Check>> {
    let mesh = ctx.mesh()?;
    let cable = ctx.cfg.cable();
    let c = ctx.cfg.cable_coefficients();
    let m_e = ctx.cfg.conductivities()?.m_e;
    let op = build_cable_operator(&c, m_e, &mesh)?;
    let b = &ctx.cfg.bump;

    let w0 = make_h20_bump(op.space(), b.center, b.radius, b.amplitude)?;
    let traj = evolve(&op, &w0, cable.dt, cable.theta, cable.steps)?;
    let mut w = ctx.create("trajectory.csv")?;
    traj.write_csv(op.space(), &mut w)?;
    flush(w, &ctx.path("trajectory.csv"))?;

    let zero = uniqueness_probe(&op, &ScalarField::zeros(op.space()), cable.dt, cable.steps)?;
    let mut rows = Vec::new();
    let mut gain = f64::INFINITY;
    for &a in &cable.amplitudes {
        let bump = make_h20_bump(op.space(), b.center, b.radius, a)?;
        let p = uniqueness_probe(&op, &bump, cable.dt, cable.steps)?;
        if a != 0.0 {
            gain = gain.min(p.value / zero.value.max(p.static_floor).max(f64::MIN_POSITIVE));
        }
        rows.push((a, p.value));
    }
    let mut w = ctx.create("probe.csv")?;
    write_probe_csv(&rows, &mut w)?;
    flush(w, &ctx.path("probe.csv"))?;

    // Green representation of a caloric Gaussian on the heart disk
    let kernel = HeatKernel::new(&c, m_e)?;
    let r = ctx.cfg.geometry.r_inner;
    let interior: Vec<Point> =
        (0..6).map(|j| [0.5 * r * (j as f64).cos(), 0.5 * r * (j as f64).sin()]).chain([[0.0, 0.0]]).collect();
    let exterior: Vec<Point> = (0..6).map(|j| [1.4 * r * (j as f64).cos(), 1.4 * r * (j as f64).sin()]).collect();
    let u = CaloricGaussian { kernel, center: [0.3 * r, -0.2 * r], t0: 0.05, amplitude: 1.0 };
    let green = green_heat_residual(&kernel, op.space(), &u, 0.1, &interior, &exterior, &HeatQuadrature::default())?;

    ctx.write_json(
        "parabolic.json",
        &json!({
            "kappa": op.kappa(),
            "final_time": traj.final_time(),
            "zero_probe": zero.value,
            "min_probe_gain": gain,
            "green_interior_error": green.interior_error,
            "green_exterior_value": green.exterior_value,
        }),
    )?;
    println!(
        "parabolic: kappa {}; probe gain over baseline {gain:.1}; Green interior error {:.2e}, exterior {:.2e}",
        op.kappa(),
        green.interior_error,
        green.exterior_value
    );
    Ok(vec![
        check("zero data gives a zero probe", zero.value == 0.0),
        check("probe exceeds its baseline tenfold", gain >= 10.0),
        check("Green formula reproduces the caloric function", green.interior_error.max(green.exterior_value) <= 0.02),
    ])
}

pub fn verify(ctx: &Context, criteria: &[usize]) -> CliResult<Vec<Check>> {
    let ids: Vec<usize> = if criteria.is_empty() { (1..=NUM_CRITERIA).collect() } else { criteria.to_vec() };
    if let Some(bad) = ids.iter().find(|&&id| id == 0 || id > NUM_CRITERIA) {
        return Err(Error::InvalidInput(format!("no criterion {bad}; valid ids are 1..={NUM_CRITERIA}")).into());
    }
    let opts = VerifyOptions { seed: ctx.cfg.seed };
    let reports: Vec<_> = ids.par_iter().map(|&id| run_criterion(id, &opts)).collect();
    for r in &reports {
        println!("{r}");
    }
    ctx.write_text("verify_report.csv", &report_csv(&reports))?;
    Ok(reports.iter().map(|r| check(format!("criterion {}", r.id), r.passed)).collect())
}
