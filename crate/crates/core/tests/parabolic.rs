use std::f64::consts::PI;

use bidomain::elliptic::assemble;
use bidomain::parabolic::*;
use bidomain::transmission::make_h20_bump;
use bidomain::{build_disk_in_disk_mesh, BoundaryTag, Error, ScalarField, SpdTensor2, Subdomain};

/// First zero of J₀.
const J01: f64 = 2.404825557695773;

#[test]
fn ground_state_decays_at_the_bessel_rate() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.05).unwrap();
    let op = build_cable_operator(&CableCoefficients::heat(), SpdTensor2::identity(), &mesh).unwrap();
    let sys = assemble(&mesh, SpdTensor2::identity(), Subdomain::Heart).unwrap();
    let (_, phi) = sys.dirichlet_ground_state().unwrap();
    let w0 = ScalarField::new(Subdomain::Heart, phi);
    let (dt, n) = (0.002, 50);
    let traj = evolve(&op, &w0, dt, 0.5, n).unwrap();
    let l2 = |v: &[f64]| sys.l2_norm(v);
    let observed = l2(traj.slices.last().unwrap()) / l2(&traj.slices[0]);
    let expected = (-J01 * J01 * traj.final_time()).exp();
    assert!((observed / expected - 1.0).abs() < 0.02, "{observed} vs {expected}");
    assert!((traj.final_time() - 0.1).abs() < 1e-15);
}

#[test]
fn manufactured_solution_with_a_source() {
    // u = e^{−t}(1 − r²) solves ∂_t u − Δu = e^{−t}(3 + r²) with zero boundary data
    let mut errors = Vec::new();
    for h in [0.1, 0.05] {
        let mesh = build_disk_in_disk_mesh(1.0, 2.0, h).unwrap();
        let op = build_cable_operator(&CableCoefficients::heat(), SpdTensor2::identity(), &mesh).unwrap();
        let space = op.space().clone();
        let exact = |t: f64| ScalarField::interpolate(&space, |x| (-t).exp() * (1.0 - x[0] * x[0] - x[1] * x[1]));
        let source = |t: f64| ScalarField::interpolate(&space, |x| (-t).exp() * (3.0 + x[0] * x[0] + x[1] * x[1]));
        let dt = h * h;
        let n = (0.2 / dt).round() as usize;
        let stepper = op.stepper(dt, 0.5).unwrap();
        let mut w = exact(0.0).values;
        for v in space.boundary_vertices() {
            w[v] = 0.0;
        }
        for k in 0..n {
            let (g0, g1) = (source(k as f64 * dt), source((k + 1) as f64 * dt));
            w = stepper.step(&w, Some((&g0.values, &g1.values))).unwrap();
        }
        let e = exact(n as f64 * dt);
        let diff: Vec<f64> = w.iter().zip(&e.values).map(|(a, b)| a - b).collect();
        errors.push(op.system().l2_norm(&diff) / op.system().l2_norm(&e.values));
    }
    assert!(errors[1] < 5e-3, "{errors:?}");
    assert!(errors[0] / errors[1] > 3.0, "{errors:?}");
}

#[test]
fn stepper_refuses_steps_beyond_the_stability_bound() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.1).unwrap();
    let op = build_cable_operator(&CableCoefficients::heat(), SpdTensor2::identity(), &mesh).unwrap();
    let bound = op.stability_bound(0.0).unwrap();
    assert!(bound.is_finite() && bound > 0.0);
    assert!(matches!(op.stepper(2.0 * bound, 0.0), Err(Error::UnstableStep(_))));
    assert!(op.stability_bound(0.5).unwrap().is_infinite());
    assert!(op.stepper(10.0 * bound, 1.0).is_ok());
}

#[test]
fn initial_potential_of_one_tends_to_one() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.05).unwrap();
    let op = build_cable_operator(&CableCoefficients::heat(), SpdTensor2::identity(), &mesh).unwrap();
    let k = HeatKernel::new(&CableCoefficients::heat(), SpdTensor2::identity()).unwrap();
    let one = |_: [f64; 2], _: [f64; 2], _: f64| 1.0;
    let q = HeatQuadrature::default();
    for t in [1e-3, 1e-2] {
        let v = heat_potential(&k, op.space(), PotentialKind::Initial, &one, BoundaryTag::Inner, [0.2, -0.1], t, &q).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "t={t}: {v}");
    }
    // far from the support the potential is exponentially small
    let v = heat_potential(&k, op.space(), PotentialKind::Initial, &one, BoundaryTag::Inner, [1.8, 0.0], 1e-3, &q).unwrap();
    assert!(v.abs() < 1e-10);
}

/// `∫₀ᵗ ∫_disk Ψ(x − y, s) dy ds` for the pure heat kernel: the inner
/// integral along rays from `x` is `(1 − e^{−R(θ)²/4s}) / 2π`.
fn volume_potential_of_one(x: [f64; 2], t: f64) -> f64 {
    let mut total = 0.0;
    let (tn, sn) = (400, 64);
    for it in 0..tn {
        let th = 2.0 * PI * (it as f64 + 0.5) / tn as f64;
        let d = [th.cos(), th.sin()];
        let b = x[0] * d[0] + x[1] * d[1];
        let r = -b + (b * b + 1.0 - x[0] * x[0] - x[1] * x[1]).sqrt();
        // s = t σ², ds = 2tσ dσ, midpoint in σ
        let mut inner = 0.0;
        for is in 0..sn {
            let sigma = (is as f64 + 0.5) / sn as f64;
            let s = t * sigma * sigma;
            inner += (1.0 - (-r * r / (4.0 * s)).exp()) * 2.0 * t * sigma / sn as f64;
        }
        total += inner / tn as f64;
    }
    total
}

#[test]
fn volume_potential_of_one_matches_nested_quadrature() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.05).unwrap();
    let op = build_cable_operator(&CableCoefficients::heat(), SpdTensor2::identity(), &mesh).unwrap();
    let k = HeatKernel::new(&CableCoefficients::heat(), SpdTensor2::identity()).unwrap();
    let one = |_: [f64; 2], _: [f64; 2], _: f64| 1.0;
    for (x, t) in [([0.2, 0.1], 0.3), ([0.0, -0.6], 0.1)] {
        let v = heat_potential(&k, op.space(), PotentialKind::Volume, &one, BoundaryTag::Inner, x, t, &HeatQuadrature::default()).unwrap();
        let reference = volume_potential_of_one(x, t);
        assert!((v - reference).abs() < 0.01 * reference, "{x:?}: {v} vs {reference}");
    }
}

#[test]
fn drift_kernel_moves_with_the_flow() {
    let c = CableCoefficients { a: [1.0, -0.5], ..CableCoefficients::heat() };
    let k = HeatKernel::new(&c, SpdTensor2::identity()).unwrap();
    let s = 0.3;
    // the maximum of Ψ(·, s) sits at a·s
    let peak = k.value([0.3, -0.15], s).unwrap();
    for z in [[0.35, -0.15], [0.25, -0.15], [0.3, -0.1], [0.3, -0.2]] {
        assert!(k.value(z, s).unwrap() < peak);
    }
    let expect = 1.0 / (4.0 * PI * s);
    assert!((peak - expect).abs() < 1e-14);
    let g = k.gradient([0.3, -0.15], s).unwrap();
    assert!(g[0].abs() < 1e-14 && g[1].abs() < 1e-14);
}

#[test]
fn probe_output_and_trajectory_csv() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.2).unwrap();
    let op = build_cable_operator(&CableCoefficients::heat(), SpdTensor2::identity(), &mesh).unwrap();
    let w = make_h20_bump(op.space(), [0.0, 0.0], 0.8, 1.0).unwrap();
    let traj = evolve(&op, &w, 0.01, 1.0, 2).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(op.space(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,vertex_index,value\n"));
    assert_eq!(text.lines().count(), 1 + 3 * op.space().num_dofs());

    let mut buf = Vec::new();
    write_probe_csv(&[(0.5, 1.25), (1.0, 5.0)], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("amplitude,probe_value"));
    assert_eq!(text.lines().count(), 3);
}
