use proptest::prelude::*;
use roughwall::divergence::*;
use roughwall::Error;

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect<f64> {
    Rect { x0, y0, x1, y1 }
}

fn integral(f: &[f64], mask: &[bool], h: f64) -> f64 {
    f.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| v * h * h).sum()
}

fn sin_source(lat: &Lattice<f64>, side: f64) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    (0..lat.cells())
        .map(|c| {
            let p = lat.center(c);
            (tau * p[0] / side).sin() * (tau * p[1] / side).sin()
        })
        .collect()
}

#[test]
fn zero_source_splits_into_zero_pieces() {
    let d = comb_decomposition(0.25, 0.25 / 6.0).unwrap();
    let f = vec![0.0; d.lattice.cells()];
    let s = split_source_star(&d, &f, 2.0).unwrap();
    assert!(s.pieces.iter().all(|p| p.iter().all(|v| *v == 0.0)));
}

#[test]
fn single_micro_piece_uses_the_overlap_average() {
    let h = 0.025;
    let lat = Lattice { nx: 40, ny: 48, h };
    let d = StarDecomposition::new(lat, vec![rect(0.0, 0.0, 1.0, 1.0), rect(0.4, 0.9, 0.6, 1.2)], DecompositionShape::Star)
        .unwrap();
    let (g0, g1) = (d.mask(0), d.mask(1));
    let f: Vec<f64> = (0..lat.cells())
        .map(|c| {
            if g1[c] {
                1.0
            } else if g0[c] {
                -0.06 / 0.98
            } else {
                0.0
            }
        })
        .collect();
    let s = split_source_star(&d, &f, 2.0).unwrap();
    // a_1 = ∫_{G_1} f / |G_1 ∩ G_0| = 0.06 / 0.02
    let a1 = 3.0;
    for c in 0..lat.cells() {
        let expect = if g1[c] && g0[c] { 1.0 - a1 } else if g1[c] { 1.0 } else { 0.0 };
        assert!((s.pieces[1][c] - expect).abs() < 1e-12, "cell {c}");
    }
    assert!(integral(&s.pieces[1], &g1, h).abs() < 1e-12);
    assert!(s.means.iter().all(|m| m.abs() < 1e-12));
}

#[test]
fn star_split_rejects_sources_with_mean() {
    let d = comb_decomposition(0.25, 0.25 / 6.0).unwrap();
    let mask = d.union_mask();
    let f: Vec<f64> = mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
    assert!(matches!(split_source_star(&d, &f, 2.0), Err(Error::Compatibility(_))));
}

#[test]
fn disjoint_pieces_are_rejected() {
    let lat = Lattice { nx: 20, ny: 30, h: 0.1 };
    let far = StarDecomposition::new(lat, vec![rect(0.0, 0.0, 1.0, 1.0), rect(0.4, 1.5, 0.6, 1.8)], DecompositionShape::Star);
    assert!(matches!(far, Err(Error::Decomposition(_))));
    let crossing = StarDecomposition::new(
        lat,
        vec![rect(0.0, 0.0, 1.0, 1.0), rect(0.3, 0.8, 0.6, 1.2), rect(0.5, 0.8, 0.8, 1.2)],
        DecompositionShape::Star,
    );
    assert!(matches!(crossing, Err(Error::Decomposition(_))));
}

#[test]
fn lone_macro_piece_keeps_the_source() {
    let lat = Lattice { nx: 16, ny: 16, h: 1.0 / 16.0 };
    let d = StarDecomposition::new(lat, vec![rect(0.0, 0.0, 1.0, 1.0)], DecompositionShape::Star).unwrap();
    let f = sin_source(&lat, 1.0);
    let s = split_source_star(&d, &f, 2.0).unwrap();
    assert_eq!(s.pieces.len(), 1);
    assert_eq!(s.pieces[0], f);
}

#[test]
fn one_piece_chain_is_the_identity() {
    let lat = Lattice { nx: 16, ny: 16, h: 1.0 / 16.0 };
    let d = StarDecomposition::new(lat, vec![rect(0.0, 0.0, 1.0, 1.0)], DecompositionShape::Chain).unwrap();
    let f = sin_source(&lat, 1.0);
    let s = split_source_chain(&d, &f, 2.0).unwrap();
    assert_eq!(s.pieces[0], f);
}

#[test]
fn two_piece_chain_matches_hand_coefficient() {
    let h = 0.05;
    let lat = Lattice { nx: 36, ny: 20, h };
    let d = StarDecomposition::new(lat, vec![rect(0.0, 0.0, 1.0, 1.0), rect(0.8, 0.0, 1.8, 1.0)], DecompositionShape::Chain)
        .unwrap();
    let f: Vec<f64> = (0..lat.cells()).map(|c| if lat.center(c)[0] < 0.9 { 1.0 } else { -1.0 }).collect();
    let s = split_source_chain(&d, &f, 2.0).unwrap();
    // a_1 = (0.9 − 0.1) / 0.2
    let a1 = 4.0;
    let (m1, m2) = (d.mask(0), d.mask(1));
    for c in 0..lat.cells() {
        let both = m1[c] && m2[c];
        let e1 = if both { f[c] - a1 } else if m1[c] { f[c] } else { 0.0 };
        let e2 = if both { a1 } else if m2[c] { f[c] } else { 0.0 };
        assert!((s.pieces[0][c] - e1).abs() < 1e-12);
        assert!((s.pieces[1][c] - e2).abs() < 1e-12);
    }
    assert!(integral(&s.pieces[0], &m1, h).abs() < 1e-12);
    assert!(integral(&s.pieces[1], &m2, h).abs() < 1e-12);
}

#[test]
fn three_piece_chain_telescopes() {
    let h = 0.05;
    let lat = Lattice { nx: 52, ny: 20, h };
    let d = StarDecomposition::new(
        lat,
        vec![rect(0.0, 0.0, 1.0, 1.0), rect(0.8, 0.0, 1.8, 1.0), rect(1.6, 0.0, 2.6, 1.0)],
        DecompositionShape::Chain,
    )
    .unwrap();
    let mask = d.union_mask();
    let mut f: Vec<f64> = (0..lat.cells())
        .map(|c| if mask[c] { (7.3 * c as f64).sin() + 0.3 * (1.1 * c as f64).cos() } else { 0.0 })
        .collect();
    let mean = integral(&f, &mask, h) / integral(&vec![1.0; f.len()], &mask, h);
    for c in 0..f.len() {
        if mask[c] {
            f[c] -= mean;
        }
    }
    let s = split_source_chain(&d, &f, 2.0).unwrap();
    for c in 0..f.len() {
        let sum: f64 = s.pieces.iter().map(|p| p[c]).sum();
        assert!((sum - f[c]).abs() < 1e-12);
    }
    for (k, p) in s.pieces.iter().enumerate() {
        let mk = d.mask(k);
        assert!(p.iter().zip(&mk).all(|(v, m)| *m || *v == 0.0));
        assert!(integral(p, &mk, h).abs() < 1e-12);
    }
}

#[test]
fn zero_source_gives_zero_velocity() {
    let lat = Lattice { nx: 8, ny: 8, h: 0.125 };
    let sol = divergence_solve(&lat, &vec![true; 64], &vec![0.0; 64]).unwrap();
    assert!(sol.velocity.iter().all(|v| *v == 0.0));
    assert_eq!(sol.ratio, 0.0);
}

#[test]
fn unit_square_ratio_converges() {
    let ratios: Vec<f64> = [32usize, 64]
        .iter()
        .map(|n| {
            let lat = Lattice { nx: *n, ny: *n, h: 1.0 / *n as f64 };
            let f = sin_source(&lat, 1.0);
            let sol = divergence_solve(&lat, &vec![true; n * n], &f).unwrap();
            assert!(sol.divergence_residual <= 1e-10, "residual {}", sol.divergence_residual);
            assert!(divergence_error(&lat, &vec![true; n * n], &sol.velocity, &f) <= 1e-10);
            sol.ratio
        })
        .collect();
    assert!(ratios[0].is_finite() && ratios[0] > 0.0);
    assert!((ratios[1] / ratios[0] - 1.0).abs() < 0.05, "{ratios:?}");
}

#[test]
fn ratio_is_scale_invariant() {
    let n = 32;
    let ratios: Vec<f64> = [1.0, 0.25, 1.0 / 16.0]
        .iter()
        .map(|s| {
            let lat = Lattice { nx: n, ny: n, h: s / n as f64 };
            divergence_solve(&lat, &vec![true; n * n], &sin_source(&lat, *s)).unwrap().ratio
        })
        .collect();
    for r in &ratios {
        assert!((r / ratios[0] - 1.0).abs() < 0.02, "{ratios:?}");
    }
}

#[test]
fn comb_shape_constant_is_three() {
    for eps in [0.25f64, 0.125] {
        let d = comb_decomposition(eps, eps / 6.0).unwrap();
        assert_eq!(d.pieces.len(), 1 + (0.5 / eps).round() as usize);
        assert!((d.shape_constant - 3.0).abs() < 1e-9, "{}", d.shape_constant);
        assert!(d.pieces.iter().all(|p| p.is_star_shaped(32)));
    }
}

#[test]
fn power_mean_constant_at_two() {
    assert_eq!(power_mean_constant(2.0), 2.0);
    assert_eq!(power_mean_constant(1.0), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_splits_are_exact(seed in any::<u64>()) {
        let d = comb_decomposition(0.125f64, 0.125 / 6.0).unwrap();
        let h = d.lattice.h;
        let f: Vec<f64> = random_source(&d, seed);
        let s = split_source_star(&d, &f, 2.0).unwrap();
        let scale: f64 = f.iter().map(|v| v.abs() * h * h).sum();
        let l = d.shape_constant;
        for c in 0..f.len() {
            let sum: f64 = s.pieces.iter().map(|p| p[c]).sum();
            prop_assert!((sum - f[c]).abs() <= 1e-13 * (1.0 + f[c].abs()));
        }
        for (k, p) in s.pieces.iter().enumerate() {
            let mk = d.mask(k);
            prop_assert!(p.iter().zip(&mk).all(|(v, m)| *m || *v == 0.0));
            prop_assert!(integral(p, &mk, h).abs() <= 1e-12 * scale.max(1.0));
            if k > 0 {
                let own: f64 = p.iter().map(|v| v * v * h * h).sum();
                let local: f64 = f.iter().zip(&mk).filter(|(_, m)| **m).map(|(v, _)| v * v * h * h).sum();
                prop_assert!(own <= power_mean_constant(2.0) * (1.0 + l) * local * (1.0 + 1e-12));
            }
        }
    }
}
