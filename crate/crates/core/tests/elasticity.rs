use bidomain::elasticity::*;
use bidomain::transmission::TransmissionCoefficients;
use bidomain::{build_disk_in_disk_mesh, BoundaryField, BoundaryTag, Error, Subdomain};

fn params(l: f64, mu: f64) -> LameParameters {
    LameParameters::new(l, mu, 0.1).unwrap()
}

/// `u = (sin x cos y, x y²)` with its Lamé source and natural traction.
struct Manufactured {
    p: LameParameters,
}

impl Manufactured {
    fn u(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0].sin() * x[1].cos(), x[0] * x[1] * x[1]]
    }

    fn source(&self, x: [f64; 2]) -> [f64; 2] {
        let (mu, lm) = (self.p.mu, self.p.lambda + self.p.mu);
        let (s, c) = (x[0].sin() * x[1].cos(), x[0].cos() * x[1].sin());
        [-(mu * (-2.0 * s) + lm * (-s + 2.0 * x[1])), -(mu * 2.0 * x[0] + lm * (-c + 2.0 * x[0]))]
    }

    fn traction(&self, x: [f64; 2], n: [f64; 2]) -> [f64; 2] {
        let (mu, lm) = (self.p.mu, self.p.lambda + self.p.mu);
        let g1 = [x[0].cos() * x[1].cos(), -x[0].sin() * x[1].sin()];
        let g2 = [x[1] * x[1], 2.0 * x[0] * x[1]];
        let div = g1[0] + g2[1];
        [mu * (n[0] * g1[0] + n[1] * g1[1]) + lm * n[0] * div, mu * (n[0] * g2[0] + n[1] * g2[1]) + lm * n[1] * div]
    }
}

#[test]
fn neumann_manufactured_solution_converges() {
    let case = Manufactured { p: params(1.7, 0.8) };
    let mut errors = Vec::new();
    for h in [0.1, 0.05] {
        let mesh = build_disk_in_disk_mesh(1.0, 2.0, h).unwrap();
        let sys = assemble_lame(&mesh, case.p, Subdomain::Heart).unwrap();
        let space = sys.space().clone();
        let f = VectorField2::interpolate(&space, |x| case.source(x));
        let mut load = sys.mass_apply(&f.flat());
        let part = space.boundary(BoundaryTag::Inner).unwrap();
        for c in 0..2 {
            let t = BoundaryField::from_fn(&space, BoundaryTag::Inner, |x, n| case.traction(x, n)[c]).unwrap();
            for (k, v) in part.mass.mul_vec(&t.values).iter().enumerate() {
                load[2 * part.vertices[k] + c] += v;
            }
        }
        // remove the quadrature defect of the compatibility condition
        let masses = sys.mass_apply(&vec![1.0; 2 * space.num_dofs()]);
        let area: f64 = masses.iter().step_by(2).sum();
        for c in 0..2 {
            let defect: f64 = load.iter().skip(c).step_by(2).sum();
            for (i, m) in masses.iter().skip(c).step_by(2).enumerate() {
                load[2 * i + c] -= defect * m / area;
            }
        }
        let uh = VectorField2::from_flat(Subdomain::Heart, &sys.solve_neumann_load(load, 1.0).unwrap());
        // exact field normalized like the solver: zero boundary mean per component
        let exact = VectorField2::interpolate(&space, |x| case.u(x));
        let trace = exact.trace(&space, BoundaryTag::Inner).unwrap();
        let (tx, ty) = trace.components();
        let mean = [part.integrate(&tx) / part.perimeter(), part.integrate(&ty) / part.perimeter()];
        let diff: Vec<f64> = uh
            .values
            .iter()
            .zip(&exact.values)
            .flat_map(|(a, b)| [a[0] - b[0] + mean[0], a[1] - b[1] + mean[1]])
            .collect();
        let e = bidomain::sparse::dot(&diff, &sys.mass_apply(&diff)).sqrt();
        errors.push(e);
    }
    assert!(errors[0] / errors[1] > 3.0, "{errors:?}");
    assert!(errors[1] < 5e-3, "{errors:?}");
}

#[test]
fn composite_with_proportional_materials() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.1).unwrap();
    let outer = params(1.2, 0.9);
    let setup = ElasticSetup::new(&mesh, outer.scaled(2.0), outer, params(0.5, 1.0)).unwrap();
    let coeffs = TransmissionCoefficients { alpha_i: 1.0, alpha_e: 1.0, beta_e: 1.0, beta_i: 0.0, gamma: 1.0, c0: 0.0 };
    let u = make_vector_bump(setup.heart(), [0.1, 0.0], 0.7, 1.0, [0.6, 0.8]).unwrap();
    let h0 = [0.25, -0.5];
    let demo = elastic_transmission_demo(&setup, &coeffs, &u, h0).unwrap();
    for (ui, ue) in demo.triple.u_i.values.iter().zip(&u.values) {
        for c in 0..2 {
            assert!((ui[c] - (h0[c] - 0.5 * ue[c])).abs() < 1e-10);
        }
    }
    let r = demo.residuals;
    assert!(r.r7 < 1e-9 && r.r8 == 0.0 && r.r9 < 1e-12 && r.r12 == 0.0 && r.r6 == 0.0, "{r:?}");
    // the inner traction of u_i = −u/2 with doubled moduli equals minus the outer one
    assert!((r.r11 - r.r10).abs() < 1e-8 * r.r10, "{r:?}");
}

#[test]
fn composite_refuses_other_coefficients_and_nonzero_traces() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.2).unwrap();
    let p = params(1.0, 1.0);
    let setup = ElasticSetup::new(&mesh, p, p, p).unwrap();
    let u = make_vector_bump(setup.heart(), [0.0, 0.0], 0.5, 1.0, [1.0, 0.0]).unwrap();
    let ecg = TransmissionCoefficients::ecg(1.0, 0.0);
    assert!(matches!(elastic_transmission_demo(&setup, &ecg, &u, [0.0; 2]), Err(Error::InvalidInput(_))));
    let ok = TransmissionCoefficients { beta_e: 1.0, ..ecg };
    let shifted = VectorField2 { subdomain: Subdomain::Heart, values: u.values.iter().map(|v| [v[0] + 1.0, v[1]]).collect() };
    assert!(matches!(elastic_transmission_demo(&setup, &ok, &shifted, [0.0; 2]), Err(Error::NotH20(_))));
}

#[test]
fn kelvin_matrix_is_symmetric_and_log_scaled() {
    let p = params(2.0, 0.5);
    for x in [[0.3, 0.1], [-1.0, 2.0], [0.05, -0.7]] {
        let k = kelvin_somigliana(x, &p).unwrap();
        assert!((k[0][1] - k[1][0]).abs() < 1e-15);
        // Φ(2x) − Φ(x) = −δ (λ+3μ) ln 2 / (4πμ(λ+2μ))
        let k2 = kelvin_somigliana([2.0 * x[0], 2.0 * x[1]], &p).unwrap();
        let shift = -(p.lambda + 3.0 * p.mu) * 2f64.ln() / (4.0 * std::f64::consts::PI * p.mu * (p.lambda + 2.0 * p.mu));
        for m in 0..2 {
            for j in 0..2 {
                let expect = if m == j { shift } else { 0.0 };
                assert!((k2[m][j] - k[m][j] - expect).abs() < 1e-14);
            }
        }
    }
    assert!(matches!(kelvin_somigliana([0.0, 0.0], &p), Err(Error::AtSingularity)));
    assert!(matches!(LameParameters::new(1.0, 0.05, 0.1), Err(Error::NotElliptic(_))));
}

#[test]
fn vector_field_csv_layout() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.5).unwrap();
    let sys = assemble_lame(&mesh, params(1.0, 1.0), Subdomain::Torso).unwrap();
    let u = VectorField2::interpolate(sys.space(), |x| [x[0], -x[1]]);
    let mut buf = Vec::new();
    u.write_csv(sys.space(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("vertex_index,x,y,ux,uy"));
    assert_eq!(text.lines().count(), 1 + sys.space().num_dofs());
}
