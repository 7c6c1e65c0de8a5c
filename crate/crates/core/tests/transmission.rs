use std::sync::Arc;

use bidomain::cauchy::CauchyData;
use bidomain::highorder::HighOrderSpace;
use bidomain::mesh::build_disk_in_disk_mesh_rings;
use bidomain::spectral::{spectral_disk_oracle, IsotropicConductivities, ModeAmplitudes};
use bidomain::transmission::*;
use bidomain::{build_disk_in_disk_mesh, BoundaryTag, Error, ScalarField, SpdTensor2};

const SIG: IsotropicConductivities = IsotropicConductivities { sigma_i: 1.3, sigma_e: 0.8, sigma_b: 2.0 };

fn aniso_setup(h: f64) -> TransmissionSetup {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, h).unwrap();
    let c = Conductivities {
        m_i: SpdTensor2::new(1.5, 0.2, 1.0).unwrap(),
        m_e: SpdTensor2::new(1.0, -0.1, 0.8).unwrap(),
        m_b: SpdTensor2::isotropic(2.0).unwrap(),
    };
    TransmissionSetup::new(&mesh, &c).unwrap()
}

fn iso_setup(mesh: &bidomain::Mesh2D, sig: IsotropicConductivities) -> TransmissionSetup {
    TransmissionSetup::new(mesh, &Conductivities::isotropic(sig.sigma_i, sig.sigma_e, sig.sigma_b).unwrap()).unwrap()
}

#[test]
fn null_space_triple_satisfies_the_exact_equations() {
    let setup = aniso_setup(0.05);
    let coeffs = TransmissionCoefficients { alpha_i: 2.0, alpha_e: 0.5, beta_e: 1.0, beta_i: 0.5, gamma: 1.0, c0: 0.0 };
    let u = make_h20_bump(setup.heart(), [0.2, -0.1], 0.6, 1.5).unwrap();
    let t = nullspace_generate(&setup, &u, 0.0, &coeffs).unwrap();
    let data = CauchyData::zeros(setup.torso(), setup.sys_b.tensor()).unwrap();
    let r = transmission_residuals(&setup, &t, &coeffs, &data).unwrap();
    let norm = setup.sys_e.l2_norm(&u.values);
    for v in [r.r7, r.r8, r.r9, r.r12, r.r6] {
        assert!(v <= 1e-10 * norm, "{r:?}");
    }
    // only the conormal residuals see the discretization, with B_i u_i = −(α_e/α_i) B_e u
    assert!((r.r11 - 0.25 * r.r10).abs() <= 1e-8 * r.r10, "{r:?}");
    assert!(r.r10 < 0.1 * norm);
}

#[test]
fn alpha_i_zero_puts_the_bump_in_u_i() {
    let setup = aniso_setup(0.1);
    let coeffs = TransmissionCoefficients { alpha_i: 0.0, alpha_e: 1.0, beta_e: 1.0, beta_i: 0.0, gamma: 1.0, c0: 0.0 };
    let u = make_h20_bump(setup.heart(), [0.0, 0.0], 0.7, 1.0).unwrap();
    let t = nullspace_generate(&setup, &u, 3.0, &coeffs).unwrap();
    assert_eq!(t.u_i, u);
    assert_eq!(t.u_e.max_abs(), 0.0);
    assert_eq!(t.u_b.max_abs(), 0.0);
}

#[test]
fn bumps_must_stay_inside_the_heart() {
    let setup = aniso_setup(0.1);
    assert!(matches!(make_h20_bump(setup.heart(), [0.5, 0.0], 0.7, 1.0), Err(Error::SupportNotInside)));
    assert!(matches!(make_h20_bump(setup.heart(), [0.0, 0.0], -1.0, 1.0), Err(Error::InvalidInput(_))));
}

#[test]
fn fields_with_a_conormal_trace_are_not_in_the_null_space() {
    let setup = aniso_setup(0.1);
    // vanishes on the circle but has a nonzero normal derivative there
    let u = ScalarField::interpolate(setup.heart(), |x| 1.0 - x[0] * x[0] - x[1] * x[1]);
    let mut u = u;
    for &v in &setup.heart().boundary(BoundaryTag::Inner).unwrap().vertices {
        u.values[v] = 0.0;
    }
    let err = nullspace_generate(&setup, &u, 0.0, &TransmissionCoefficients::ecg(1.0, 0.0));
    assert!(matches!(err, Err(Error::NotH20(_))));
}

#[test]
fn calibration_shift_appears_in_the_residual() {
    let setup = aniso_setup(0.1);
    let coeffs = TransmissionCoefficients::ecg(1.0, 0.5);
    let u = make_h20_bump(setup.heart(), [0.1, 0.1], 0.5, 1.0).unwrap();
    for h0 in [0.0, -0.4, 2.0] {
        let t = nullspace_generate(&setup, &u, h0, &coeffs).unwrap();
        let cal = calibration_residual(setup.heart(), &t.u_i, &t.u_e, coeffs.c0).unwrap();
        assert!((cal - h0.abs() * setup.heart_perimeter()).abs() < 1e-10, "h0={h0}: {cal}");
    }
}

#[test]
fn shortcut_agrees_with_the_general_path_for_any_gamma() {
    let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.1).unwrap();
    for gamma in [0.4, 2.5] {
        let sig = IsotropicConductivities { sigma_i: 1.1, sigma_e: 1.1 * gamma, sigma_b: 1.7 };
        let setup = iso_setup(&mesh, sig);
        let coeffs = TransmissionCoefficients { alpha_i: 1.5, alpha_e: 0.6, beta_e: -1.0, beta_i: 0.2, gamma, c0: -0.7 };
        let o = spectral_disk_oracle(3, &coeffs, sig, 1.0, 2.0, ModeAmplitudes { f0: 0.3, f1: 0.9, g: 0.0 }).unwrap();
        let t = o.triple(setup.heart(), setup.torso());
        let zero = ScalarField::zeros(setup.torso());
        let g = reconstruct_ui(&setup, &t.u_e, &t.u_b, &zero, &coeffs).unwrap();
        let s = shortcut_ui(&setup, &t.u_e, &t.u_b, &zero, &coeffs).unwrap();
        assert!(g.u_i.axpy(-1.0, &s.u_i).max_abs() <= 1e-10 * g.u_i.max_abs(), "gamma={gamma}");
        assert!(calibration_residual(setup.heart(), &s.u_i, &t.u_e, coeffs.c0).unwrap() < 1e-10);
    }
}

#[test]
fn shortcut_needs_proportional_tensors() {
    let setup = aniso_setup(0.1);
    let t = setup.zero_triple();
    let zero = ScalarField::zeros(setup.torso());
    let err = shortcut_ui(&setup, &t.u_e, &t.u_b, &zero, &TransmissionCoefficients::ecg(1.0, 0.0));
    assert!(matches!(err, Err(Error::InvalidInput(_))));
}

#[test]
fn general_path_approaches_the_oracle_potential() {
    let coeffs = TransmissionCoefficients { alpha_i: 1.0, alpha_e: 0.7, beta_e: -1.0, beta_i: 0.3, gamma: 1.0, c0: 0.4 };
    let mut errors = Vec::new();
    for h in [0.1, 0.05] {
        let setup = iso_setup(&build_disk_in_disk_mesh(1.0, 2.0, h).unwrap(), SIG);
        let o = spectral_disk_oracle(2, &coeffs, SIG, 1.0, 2.0, ModeAmplitudes { f0: 0.7, f1: -0.4, g: 0.0 }).unwrap();
        let t = o.triple(setup.heart(), setup.torso());
        let u = reconstruct_ui(&setup, &t.u_e, &t.u_b, &ScalarField::zeros(setup.torso()), &coeffs).unwrap();
        errors.push(u.u_i.axpy(-1.0, &t.u_i).max_abs() / t.u_i.max_abs());
    }
    assert!(errors[1] < 0.02, "{errors:?}");
    assert!(errors[0] / errors[1] > 2.0, "{errors:?}");
}

#[test]
fn alpha_i_zero_has_no_reconstruction() {
    let setup = aniso_setup(0.1);
    let t = setup.zero_triple();
    let coeffs = TransmissionCoefficients { alpha_i: 0.0, alpha_e: 1.0, beta_e: 1.0, beta_i: 0.0, gamma: 1.0, c0: 0.0 };
    let zero = ScalarField::zeros(setup.torso());
    assert!(matches!(reconstruct_ui(&setup, &t.u_e, &t.u_b, &zero, &coeffs), Err(Error::AlphaIZero)));
}

fn small_supplement_setup() -> (TransmissionSetup, HighOrderSpace) {
    let mesh = build_disk_in_disk_mesh_rings(1.0, 2.0, 8).unwrap();
    let setup = iso_setup(&mesh, SIG);
    let space = HighOrderSpace::new(setup.heart().clone(), 3).unwrap();
    (setup, space)
}

#[test]
fn supplement_matches_the_two_step_reconstruction() {
    let (setup, space) = small_supplement_setup();
    let coeffs = TransmissionCoefficients { alpha_i: 1.0, alpha_e: 0.7, beta_e: -1.0, beta_i: 0.3, gamma: 1.0, c0: 0.4 };
    let o = spectral_disk_oracle(2, &coeffs, SIG, 1.0, 2.0, ModeAmplitudes { f0: 0.7, f1: -0.4, g: 1.5 }).unwrap();
    let t = o.triple(setup.heart(), setup.torso());
    let g = ScalarField::interpolate(setup.heart(), |x| o.source(x));
    let zero = ScalarField::zeros(setup.torso());
    let s = supplement_solve(&setup, &space, &t.u_b, &zero, &g, &coeffs).unwrap();
    assert_eq!(s.dimension, space.num_dofs() + setup.heart().num_dofs() + 1);
    assert!(s.multiplier.abs() < 1e-8, "{}", s.multiplier);

    let ue = reconstruct_ue(&setup, &space, &t.u_b, &zero, &g, &coeffs).unwrap();
    assert!(ue.u_e.axpy(-1.0, &s.u_e).max_abs() < 1e-9);
    let ui = reconstruct_ui(&setup, &s.u_e, &t.u_b, &zero, &coeffs).unwrap();
    assert!(ui.u_i.axpy(-1.0, &s.u_i).max_abs() < 1e-8 * ui.u_i.max_abs());
    // coarse mesh, data through the discrete torso conormal
    let err = s.u_e.axpy(-1.0, &t.u_e).max_abs() / t.u_e.max_abs();
    assert!(err < 2e-2, "{err}");
}

#[test]
fn violated_existence_condition_shows_in_the_multiplier() {
    let (setup, space) = small_supplement_setup();
    let coeffs = TransmissionCoefficients::ecg(SIG.sigma_e / SIG.sigma_i, 0.0);
    // u_b = log r carries a net flux through the heart surface
    let u_b = ScalarField::interpolate(setup.torso(), |x| 0.5 * (x[0] * x[0] + x[1] * x[1]).ln());
    let zero = ScalarField::zeros(setup.torso());
    let g = ScalarField::zeros(setup.heart());
    let f1 = setup.torso_conormal(&u_b, &zero, BoundaryTag::Outer).unwrap();
    let e = existence_condition(setup.torso(), &zero, &[f1], &coeffs).unwrap();
    assert!(e.abs() > 1.0, "{e}");
    let s = supplement_solve(&setup, &space, &u_b, &zero, &g, &coeffs).unwrap();
    assert!(s.multiplier.abs() > 1e-3, "{}", s.multiplier);
}

#[test]
fn cardio_leading_coefficient_is_six_fifths() {
    let mesh = build_disk_in_disk_mesh_rings(1.0, 2.0, 6).unwrap();
    let setup = TransmissionSetup::new(&mesh, &Conductivities::isotropic(2.0, 3.0, 1.0).unwrap()).unwrap();
    let space = HighOrderSpace::new(setup.heart().clone(), 2).unwrap();
    let consts = CardioConstants {
        sigma_i: 2.0,
        sigma_e: 3.0,
        chi: 1.0,
        c_m: 1.0,
        eps_eps0: 1.0,
        a: [0.1, 0.0],
        a0: 0.5,
        b: ScalarField::constant(setup.heart(), 0.2),
    };
    let zero = ScalarField::zeros(setup.torso());
    let op = cardio_fourth_order_operator(&setup, &space, &consts, &zero, &zero, &TransmissionCoefficients::ecg(1.5, 0.0)).unwrap();
    assert!((op.leading_coefficient - 1.2).abs() < 1e-15);
    assert_eq!(op.matrix.nrows(), space.num_dofs());
    let u = op.solve().unwrap();
    assert!(u.iter().all(|v| v.is_finite()));
    for &d in &op.boundary_dofs {
        assert!(u[d].abs() < 1e-12);
    }

    let bad = CardioConstants { sigma_e: 2.5, ..consts.clone() };
    assert!(cardio_fourth_order_operator(&setup, &space, &bad, &zero, &zero, &TransmissionCoefficients::ecg(1.5, 0.0)).is_err());
    let negative = CardioConstants { chi: -1.0, ..consts };
    assert!(matches!(
        cardio_fourth_order_operator(&setup, &space, &negative, &zero, &zero, &TransmissionCoefficients::ecg(1.5, 0.0)),
        Err(Error::NotPositive(_))
    ));
}

#[test]
fn high_order_space_must_share_the_heart_space() {
    let (setup, _) = small_supplement_setup();
    let other = Arc::new(bidomain::fem::P1Space::new(&build_disk_in_disk_mesh_rings(1.0, 2.0, 8).unwrap(), bidomain::Subdomain::Heart).unwrap());
    let space = HighOrderSpace::new(other, 2).unwrap();
    let zero = ScalarField::zeros(setup.torso());
    let g = ScalarField::zeros(setup.heart());
    let err = supplement_solve(&setup, &space, &zero, &zero, &g, &TransmissionCoefficients::ecg(1.0, 0.0));
    assert!(matches!(err, Err(Error::InvalidInput(_))));
}
