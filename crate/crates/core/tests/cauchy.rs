use bidomain::cauchy::*;
use bidomain::elliptic::assemble;
use bidomain::{build_disk_in_disk_mesh, BoundaryTag, Error, ScalarField, SpdTensor2, Subdomain};

#[test]
fn green_potential_reproduces_a_field_with_a_source() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.05).unwrap();
    let m = SpdTensor2::new(1.4, 0.3, 0.9).unwrap();
    let sys = assemble(&mesh, m, Subdomain::Torso).unwrap();
    let torso = sys.space();
    // u = x₁² has Δ_M u = −2 m11
    let u = ScalarField::interpolate(torso, |x| x[0] * x[0]);
    let f = ScalarField::constant(torso, -2.0 * m.m11);
    let (interior, exterior) = reproduction_samples(1.0, 2.0, 0.05);
    let r = reproduction_check(&sys, &u, &f, &FundamentalSolution::anisotropic(m).unwrap(), &interior, &exterior).unwrap();
    assert!(r.interior_error < 5e-3, "{r:?}");
    assert!(r.exterior_leak < 5e-3, "{r:?}");
}

#[test]
fn harmonic_reproduction_improves_with_refinement() {
    let mut errs = Vec::new();
    for h in [0.1, 0.05] {
        let mesh = build_disk_in_disk_mesh(1.0, 2.0, h).unwrap();
        let sys = assemble(&mesh, SpdTensor2::isotropic(2.0).unwrap(), Subdomain::Torso).unwrap();
        let u = ScalarField::interpolate(sys.space(), |x| x[0] * x[1] + 0.3 * x[1]);
        let f = ScalarField::zeros(sys.space());
        let (interior, exterior) = reproduction_samples(1.0, 2.0, 0.1);
        let r = reproduction_check(&sys, &u, &f, &FundamentalSolution::laplace2d(2.0).unwrap(), &interior, &exterior).unwrap();
        errs.push(r.interior_error.max(r.exterior_leak));
    }
    assert!(errs[1] < 2e-3, "{errs:?}");
    assert!(errs[0] > 2.0 * errs[1], "{errs:?}");
}

#[test]
fn fundamental_solution_is_harmonic_for_its_tensor() {
    let m = SpdTensor2::new(2.0, -0.5, 0.7).unwrap();
    let phi = FundamentalSolution::anisotropic(m).unwrap();
    let y = [0.2, -0.1];
    let h = 1e-3;
    for x in [[1.0, 0.4], [-0.6, 0.9], [0.3, -1.2]] {
        let f = |dx: f64, dy: f64| phi.value([x[0] + dx, x[1] + dy], y);
        let fxx = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
        let fyy = (f(0.0, h) - 2.0 * f(0.0, 0.0) + f(0.0, -h)) / (h * h);
        let fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        let l = m.m11 * fxx + 2.0 * m.m12 * fxy + m.m22 * fyy;
        assert!(l.abs() < 1e-5 * (fxx.abs() + fyy.abs()), "{l}");
    }
    let iso = FundamentalSolution::laplace2d(3.0).unwrap();
    let x = [1.5, 0.0];
    let expect = -(1.5f64 - 0.2).hypot(0.1).ln() / (2.0 * std::f64::consts::PI * 3.0);
    assert!((iso.value(x, y) - expect).abs() < 1e-14);
}

#[test]
fn regularization_trades_misfit_for_size() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.1).unwrap();
    let sys = assemble(&mesh, SpdTensor2::isotropic(1.0).unwrap(), Subdomain::Torso).unwrap();
    let u = ScalarField::interpolate(sys.space(), |x| x[0] * x[0] - x[1] * x[1] + x[1]);
    let data = CauchyData::from_field(&sys, &u, &ScalarField::zeros(sys.space())).unwrap();
    let solver = CauchySolver::new(&sys).unwrap();
    let mut last = (f64::INFINITY, 0.0);
    for lambda in [1e-1, 1e-3, 1e-5, 1e-7] {
        let s = solver.solve(&data, lambda).unwrap();
        let size = s.inner_trace.l2_norm(sys.space()).unwrap();
        assert!(s.misfit <= last.0 * (1.0 + 1e-12), "lambda {lambda}");
        assert!(size >= last.1 * (1.0 - 1e-12), "lambda {lambda}");
        last = (s.misfit, size);
    }
    assert!(last.0 < 1e-4);
}

#[test]
fn solver_checks_its_inputs() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.1).unwrap();
    let heart_sys = assemble(&mesh, SpdTensor2::identity(), Subdomain::Heart).unwrap();
    assert!(matches!(CauchySolver::new(&heart_sys), Err(Error::InvalidInput(_))));

    let sys = assemble(&mesh, SpdTensor2::identity(), Subdomain::Torso).unwrap();
    let data = CauchyData::zeros(sys.space(), SpdTensor2::identity()).unwrap();
    assert!(tikhonov_cauchy(&sys, &data, -1.0).is_err());
    let other = CauchyData::zeros(sys.space(), SpdTensor2::isotropic(2.0).unwrap()).unwrap();
    assert!(tikhonov_cauchy(&sys, &other, 1e-4).is_err());
}

#[test]
fn potential_refuses_points_on_the_data_boundary() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.1).unwrap();
    let sys = assemble(&mesh, SpdTensor2::identity(), Subdomain::Torso).unwrap();
    let data = CauchyData::zeros(sys.space(), SpdTensor2::identity()).unwrap();
    let phi = FundamentalSolution::laplace2d(1.0).unwrap();
    assert!(matches!(potential_F(sys.space(), [2.0, 0.0], &data, &phi), Err(Error::OnBoundary(_))));
    assert_eq!(potential_F(sys.space(), [1.5, 0.0], &data, &phi).unwrap(), 0.0);
    let part = sys.space().boundary(BoundaryTag::Outer).unwrap();
    assert_eq!(data.f0.values.len(), part.len());
}
