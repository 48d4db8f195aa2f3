use std::sync::Arc;

use roughwall::cell::slip_matrix;
use roughwall::geometry::{ProfileKind, RoughnessProfile};
use roughwall::harness::{build_slip_field, ExperimentConfig};
use roughwall::macro_solver::*;
use roughwall::slip::SlipField;
use roughwall::Error;

fn riblet() -> RoughnessProfile<f64> {
    RoughnessProfile::cosine(0.05, 0.1)
}

fn slip_field() -> SlipField<f64> {
    let mut cfg = ExperimentConfig::default();
    cfg.cell.lateral = 32;
    cfg.cell.depth = 64;
    build_slip_field(&cfg, Some(4)).unwrap()
}

fn couette_h1(refine: usize) -> f64 {
    let mut spec = MacroProblemSpec::new(0.0, riblet(), Variant::Dirichlet);
    spec.resolution.smooth_theta_elems = 2;
    spec.resolution.smooth_radial_elems = 4 * refine;
    let sol = solve_macro(&spec, None).unwrap();
    let exact = CouetteField { mesh: sol.geometry.clone(), inner: 1.0, outer: 2.0, speed: 1.0 };
    error_norms(&sol, &exact, Region::Omega).unwrap().h1_semi
}

#[test]
fn zero_data_gives_zero_fields() {
    let slip = slip_field();
    for v in [Variant::Rough, Variant::Dirichlet, Variant::Navier, Variant::Corrector] {
        let mut spec = MacroProblemSpec::new(1.0 / 16.0, riblet(), v);
        spec.boundary.tangential = 0.0;
        let sol = solve_macro(&spec, Some(&slip)).unwrap();
        assert!(sol.fe.velocity.iter().all(|u| *u == 0.0), "{v}");
        let n = error_norms(&sol, &ZeroField(sol.geometry.clone()), Region::Omega).unwrap();
        assert_eq!(n.l2, 0.0);
        assert_eq!(n.w11, 0.0);
    }
}

#[test]
fn smooth_couette_is_second_order_in_energy() {
    let e: Vec<f64> = [1, 2, 4].iter().map(|f| couette_h1(*f)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() <= 0.8, "{e:?}");
    }
}

#[test]
fn couette_nodes_are_accurate() {
    let spec = MacroProblemSpec::new(0.0, riblet(), Variant::Dirichlet);
    let sol = solve_macro(&spec, None).unwrap();
    assert!(sol.couette_nodal_error(1.0) < 1e-4, "{}", sol.couette_nodal_error(1.0));
}

#[test]
fn rough_solve_is_discretely_divergence_free() {
    let sol = solve_macro(&MacroProblemSpec::new(1.0 / 32.0, riblet(), Variant::Rough), None).unwrap();
    assert!(sol.divergence_residual <= 1e-10, "{}", sol.divergence_residual);
}

#[test]
fn net_outer_flux_is_rejected() {
    let mut spec = MacroProblemSpec::new(1.0 / 16.0, riblet(), Variant::Rough);
    spec.boundary.normal = 0.1;
    assert!(matches!(solve_macro(&spec, None), Err(Error::Compatibility(_))));
}

#[test]
fn modulated_profile_needs_the_full_annulus() {
    let kind = ProfileKind::Cosine { offset: 0.05, amplitude: 0.1, wave: vec![1] };
    let profile = RoughnessProfile::with_modulation(kind, 0.35, 0.2).unwrap();
    let spec = MacroProblemSpec::new(1.0 / 16.0, profile, Variant::Rough);
    assert!(matches!(solve_macro(&spec, None), Err(Error::Incompatible(_))));
}

#[test]
fn navier_needs_a_slip_field() {
    let spec = MacroProblemSpec::new(1.0 / 16.0, riblet(), Variant::Navier);
    assert!(matches!(solve_macro(&spec, None), Err(Error::Incompatible(_))));
}

#[test]
fn positive_slip_coefficient_is_ill_posed() {
    let mut slip = slip_field();
    for s in &mut slip.samples {
        s.matrix[(0, 0)] = 0.1;
    }
    let spec = MacroProblemSpec::new(1.0 / 16.0, riblet(), Variant::Navier);
    assert!(matches!(solve_macro(&spec, Some(&slip)), Err(Error::IllPosed(_))));
}

#[test]
fn zero_slip_reduces_to_dirichlet() {
    let mut slip = slip_field();
    for s in &mut slip.samples {
        s.matrix[(0, 0)] = 0.0;
    }
    let spec = MacroProblemSpec::new(1.0 / 16.0, riblet(), Variant::Navier);
    let navier = solve_macro(&spec, Some(&slip)).unwrap();
    let dirichlet = solve_macro(&spec.with_variant(Variant::Dirichlet), None).unwrap();
    let d = error_norms(&navier, &dirichlet, Region::Omega).unwrap();
    assert!(d.h1_semi < 1e-10, "{d:?}");
}

#[test]
fn navier_slip_raises_the_wall_velocity() {
    let slip = slip_field();
    let spec = MacroProblemSpec::new(1.0 / 16.0, riblet(), Variant::Navier);
    let sol = solve_macro(&spec, Some(&slip)).unwrap();
    // Couette shear pushes fluid along Γ in the direction of the outer wall
    for n in &sol.fe.mesh.inner_nodes {
        assert!(sol.fe.nodal(*n)[1] > 0.0);
        assert!(sol.fe.nodal(*n)[0].abs() < 1e-12);
    }
}

#[test]
fn navier_solution_ignores_the_tangent_orientation() {
    let slip = slip_field();
    let mut flipped = slip.clone();
    for s in &mut flipped.samples {
        let t: Vec<f64> = s.tangent_frame[0].iter().map(|v| -v).collect();
        s.matrix = slip_matrix(&s.contributions[0].spec, &[t.clone()]).unwrap().matrix;
        s.tangent_frame[0] = t;
    }
    let spec = MacroProblemSpec::new(1.0 / 32.0, riblet(), Variant::Navier);
    let a = solve_macro(&spec, Some(&slip)).unwrap();
    let b = solve_macro(&spec, Some(&flipped)).unwrap();
    let scale = error_norms(&a, &ZeroField(a.geometry.clone()), Region::Omega).unwrap().l2;
    let d = error_norms(&a, &b, Region::Omega).unwrap().l2;
    assert!(d <= 1e-8 * scale, "{d} vs {scale}");
}

#[test]
fn corrector_improves_on_dirichlet() {
    let spec = MacroProblemSpec::new(1.0 / 32.0, riblet(), Variant::Rough);
    let rough = solve_macro(&spec, None).unwrap();
    let dirichlet = solve_macro(&spec.with_variant(Variant::Dirichlet), None).unwrap();
    let corrector = solve_macro(&spec.with_variant(Variant::Corrector), None).unwrap();
    let ed = error_norms(&rough, &dirichlet, Region::OmegaEps).unwrap();
    let ec = error_norms(&rough, &corrector, Region::OmegaEps).unwrap();
    assert!(ec.l2 < 0.2 * ed.l2, "{} vs {}", ec.l2, ed.l2);
    let bundle = corrector.correctors.as_ref().unwrap();
    assert!(bundle.slip < 0.0);
}

#[test]
fn oscillating_corrector_decays_away_from_gamma() {
    let spec = MacroProblemSpec::new(1.0 / 32.0, riblet(), Variant::Corrector);
    let sol = solve_macro(&spec, None).unwrap();
    let b = sol.correctors.as_ref().unwrap();
    // one roughness period of Γ spans the angle 2πε
    let peak = |r: f64| {
        (0..64)
            .map(|k| {
                let th = std::f64::consts::TAU * spec.eps * k as f64 / 64.0;
                let v = b.oscillating([r * th.cos(), r * th.sin()]);
                v[0].hypot(v[1])
            })
            .fold(0.0, f64::max)
    };
    let near = peak(1.0 + spec.eps / 4.0);
    assert!(near > 0.0);
    assert!(peak(1.5) < 1e-3 * near, "{} vs {near}", peak(1.5));
}

#[test]
fn error_norms_need_a_shared_layout() {
    let a = solve_macro(&MacroProblemSpec::new(1.0 / 16.0, riblet(), Variant::Rough), None).unwrap();
    let b = solve_macro(&MacroProblemSpec::new(1.0 / 32.0, riblet(), Variant::Rough), None).unwrap();
    assert!(error_norms(&a, &b, Region::Omega).is_err());
    let z = ZeroField(Arc::clone(&a.geometry));
    assert!(error_norms(&a, &z, Region::OmegaEps).is_ok());
}
