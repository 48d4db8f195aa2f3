use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use roughwall::cell::CellResolution;
use roughwall::geometry::{ChartKind, ProfileKind, RoughnessProfile, SurfacePatch};
use roughwall::slip::*;

fn plane_patch(id: usize, lo: f64, hi: f64) -> SurfacePatch<f64> {
    SurfacePatch::new(ChartKind::Plane, vec![lo, -1.0], vec![hi, 1.0], 0.1, id)
}

fn plane_curve(profile: RoughnessProfile<f64>) -> GammaCurve<f64> {
    GammaCurve::single(CoverPatch { patch: plane_patch(0, 0.0, 1.0), profile, s_lo: 0.0, s_hi: 1.0 }, false, vec![0.0])
}

fn cfg(samples: usize) -> SlipFieldConfig<f64> {
    SlipFieldConfig::new(samples, CellResolution::new(6, 32))
}

fn riblet() -> RoughnessProfile<f64> {
    RoughnessProfile::new(ProfileKind::Cosine { offset: 0.1, amplitude: 0.15, wave: vec![1, 0] }, 0.4).unwrap()
}

fn circle_curve(profile: RoughnessProfile<f64>) -> GammaCurve<f64> {
    let patch = SurfacePatch::new(ChartKind::Circle { radius: 1.0, period: 1.0, inward: true }, vec![0.0], vec![1.0], 0.1, 0);
    GammaCurve::single(CoverPatch { patch, profile, s_lo: 0.0, s_hi: 1.0 }, true, vec![])
}

#[test]
fn flat_field_is_constant() {
    let field = assemble_slip_field(&plane_curve(RoughnessProfile::constant(0.5)), &cfg(5)).unwrap();
    assert_eq!(field.cell_solves, 1);
    for s in [0.0, 0.13, 0.5, 0.99] {
        let m = field.matrix_at(s);
        assert_abs_diff_eq!(m[(0, 0)], -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(m[(1, 1)], -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(m[(0, 1)], 0.0, epsilon = 1e-9);
    }
    assert_abs_diff_eq!(negdef_scan(&field, 64).unwrap(), 0.5, epsilon = 1e-9);
    assert_eq!(rotate_frame_check(&field, &[0.0; 5]).unwrap(), 0.0);
    let d = rotate_frame_check(&field, &[std::f64::consts::PI / 7.0; 5]).unwrap();
    assert!(d <= 1e-8, "{d}");
}

#[test]
fn identical_overlapping_patches_blend_to_the_single_field() {
    let profile = riblet();
    let single = assemble_slip_field(&plane_curve(profile.clone()), &cfg(6)).unwrap();
    let curve = GammaCurve {
        patches: vec![
            CoverPatch { patch: plane_patch(0, -0.2, 1.2), profile: profile.clone(), s_lo: -0.2, s_hi: 0.7 },
            CoverPatch { patch: plane_patch(1, -0.2, 1.2), profile, s_lo: 0.3, s_hi: 1.2 },
        ],
        s_lo: 0.0,
        s_hi: 1.0,
        periodic: false,
        anchor: vec![0.0],
    };
    let blended = assemble_slip_field(&curve, &cfg(6)).unwrap();
    for s in [0.0, 0.4, 0.5, 0.77] {
        let w: f64 = curve.cutoffs(s).iter().sum();
        assert_abs_diff_eq!(w, 1.0, epsilon = 1e-14);
        let a = single.matrix_at(s);
        let b = blended.matrix_at(s);
        assert!(a.sub(&b).max_abs() < 1e-12);
    }
}

#[test]
fn riblet_field_is_anisotropic_but_frame_free() {
    let field = assemble_slip_field(&plane_curve(riblet()), &cfg(4)).unwrap();
    let m = &field.samples[0].matrix;
    assert!((m[(0, 0)] - m[(1, 1)]).abs() > 1e-3);
    assert!(negdef_scan(&field, 1024).unwrap() > 0.0);
    let d = rotate_frame_check(&field, &[std::f64::consts::FRAC_PI_4; 4]).unwrap();
    assert!(d <= 1e-6, "{d}");
}

#[test]
fn circle_field_is_rotationally_constant() {
    let field = assemble_slip_field(&circle_curve(RoughnessProfile::cosine(0.05, 0.1)), &SlipFieldConfig::new(12, CellResolution::new(32, 64))).unwrap();
    assert_eq!(field.cell_solves, 1);
    let c0 = field.samples[0].matrix[(0, 0)];
    assert!(c0 < 0.0);
    for s in [0.01, 0.3, 0.61, 0.95] {
        assert_abs_diff_eq!(field.matrix_at(s)[(0, 0)], c0, epsilon = 1e-10);
    }
    let text = field.to_json().unwrap();
    let back = SlipField::<f64>::from_json(&text).unwrap();
    assert_abs_diff_eq!(back.matrix_at(0.3)[(0, 0)], c0, epsilon = 1e-12);
    assert!(field.to_csv().lines().count() == 13);
}

#[test]
fn degenerate_profiles_shrink_the_margin() {
    let tiny = assemble_slip_field(&plane_curve(RoughnessProfile::constant(0.01)), &cfg(3)).unwrap();
    let m = negdef_scan(&tiny, 16).unwrap();
    assert!(m > 0.0 && m < 0.02, "{m}");
    assert!(assemble_slip_field(&plane_curve(RoughnessProfile::constant(0.0)), &cfg(3)).is_err());
}

fn modulated() -> GammaCurve<f64> {
    let p = RoughnessProfile::with_modulation(ProfileKind::Cosine { offset: 0.05, amplitude: 0.1, wave: vec![1] }, 0.4, 0.4).unwrap();
    circle_curve(p)
}

#[test]
fn queries_reproduce_samples_and_converge_with_spacing() {
    let curve = modulated();
    let queries = [0.05, 0.33, 0.61, 0.87];
    for order in [1usize, 3] {
        let fields: Vec<SlipField<f64>> = [8, 16, 32]
            .iter()
            .map(|n| {
                let mut c = SlipFieldConfig::new(*n, CellResolution::new(16, 32));
                c.interpolation_order = order;
                assemble_slip_field(&curve, &c).unwrap()
            })
            .collect();
        for smp in &fields[0].samples {
            assert_abs_diff_eq!(fields[0].matrix_at(smp.s)[(0, 0)], smp.matrix[(0, 0)], epsilon = 1e-12);
        }
        let change = |a: &SlipField<f64>, b: &SlipField<f64>| {
            queries.iter().map(|s| (a.matrix_at(*s)[(0, 0)] - b.matrix_at(*s)[(0, 0)]).abs()).fold(0.0, f64::max)
        };
        let ratio = change(&fields[0], &fields[1]) / change(&fields[1], &fields[2]);
        let expected = if order == 1 { 4.0 } else { 16.0 };
        assert!(ratio > 0.6 * expected, "order {order}: ratio {ratio}");
    }
}

#[test]
fn bad_configurations_are_rejected() {
    let curve = plane_curve(RoughnessProfile::constant(0.5));
    let mut c = cfg(1);
    assert!(assemble_slip_field(&curve, &c).is_err());
    c.samples = 4;
    c.interpolation_order = 2;
    assert!(assemble_slip_field(&curve, &c).is_err());
}

proptest! {
    #[test]
    fn cutoffs_form_a_partition_of_unity(s in 0.0f64..1.0, a in 0.3f64..0.7) {
        let profile = RoughnessProfile::constant(0.5);
        let curve = GammaCurve {
            patches: vec![
                CoverPatch { patch: plane_patch(0, -0.5, 1.5), profile: profile.clone(), s_lo: -0.5, s_hi: a + 0.2 },
                CoverPatch { patch: plane_patch(1, -0.5, 1.5), profile: profile.clone(), s_lo: a - 0.2, s_hi: 1.5 },
            ],
            s_lo: 0.0,
            s_hi: 1.0,
            periodic: false,
            anchor: vec![0.0],
        };
        let w = curve.cutoffs(s);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
    }
}
