use nemqubit::junction::{
    diagonalize, diagonalize_levels, dds_matrix, oscillator_hamiltonian, BasisPolicy, DdsMethod,
    JunctionParams,
};

fn dev() -> JunctionParams {
    JunctionParams::reference_device()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn tabulated_level_ratios() {
    let p = dev();
    let cases = [
        (0.5, [0.500, 1.500, 2.499, 3.498]),
        (0.9, [0.500, 1.497, 2.492, 3.485]),
    ];
    for (s, want) in cases {
        let sp = diagonalize(&p, s, BasisPolicy::BelowBarrier).unwrap();
        let got = sp.scaled_energies();
        for m in 0..4 {
            assert!(close(got[m], want[m], 5e-4), "s={s} m={m}: {} vs {}", got[m], want[m]);
        }
    }
}

#[test]
fn tabulated_dipoles_at_high_bias() {
    let sp = diagonalize(&dev(), 0.9, BasisPolicy::BelowBarrier).unwrap();
    let x = &sp.dipole;
    assert!(close(x[(0, 1)], 3.46e-2, 5e-5), "{}", x[(0, 1)]);
    assert!(close(x[(0, 0)], 1.12, 5e-3), "{}", x[(0, 0)]);
    assert!(close(x[(0, 2)], -5.86e-4, 5e-7), "{}", x[(0, 2)]);
    // harmonic estimate ℓ/√2
    let harmonic = sp.length_scale / 2f64.sqrt();
    assert!(close(harmonic, 3.45e-2, 5e-5));
    assert!((x[(0, 1)] / harmonic - 1.0).abs() < 0.01);
}

#[test]
fn residual_and_monotonicity_over_bias_grid() {
    let p = dev();
    for i in 0..10 {
        let s = i as f64 / 10.0;
        let n = 96;
        let sp = diagonalize_levels(&p, s, BasisPolicy::Count(n), 8).unwrap();
        assert!(sp.energies.windows(2).all(|w| w[1] > w[0]), "s={s}");
        let h = oscillator_hamiltonian(&p, s, n).unwrap();
        for m in 0..8 {
            let v = sp.eigenvectors.column(m);
            let r = (&h * v - v * sp.energies[m]).norm();
            assert!(r < 1e-8 * sp.plasma_frequency, "s={s} m={m} r={r}");
        }
    }
}

#[test]
fn oscillator_strength_sum_rule() {
    let p = dev();
    for &s in &[0.2, 0.545, 0.9] {
        let sp = diagonalize(&p, s, BasisPolicy::BelowBarrier).unwrap();
        for m in 0..2 {
            let rel = sp.oscillator_sums[m] / p.ec() - 1.0;
            assert!(rel.abs() < 1e-5, "s={s} m={m} rel={rel}");
        }
    }
}

#[test]
fn nearly_harmonic_below_seventy_percent() {
    let p = dev();
    for i in 0..=7 {
        let s = i as f64 / 10.0;
        let sp = diagonalize_levels(&p, s, BasisPolicy::Count(64), 4).unwrap();
        for (m, e) in sp.scaled_energies().iter().enumerate() {
            assert!((e - (m as f64 + 0.5)).abs() < 5e-3, "s={s} m={m} e={e}");
        }
    }
}

#[test]
fn ground_moment_tracks_arcsin() {
    let p = dev();
    for i in 1..=9 {
        let s = i as f64 / 10.0;
        let sp = diagonalize_levels(&p, s, BasisPolicy::Count(64), 2).unwrap();
        assert!((sp.dipole[(0, 0)] / s.asin() - 1.0).abs() < 0.01, "s={s}");
    }
}

#[test]
fn rule_based_basis_matches_large_explicit_basis() {
    let p = dev();
    let a = diagonalize(&p, 0.9, BasisPolicy::BelowBarrier).unwrap();
    let b = diagonalize(&p, 0.9, BasisPolicy::Count(2 * a.basis_size)).unwrap();
    for m in 0..4 {
        assert!((a.energies[m] - b.energies[m]).abs() < 1e-6 * a.plasma_frequency);
    }
}

#[test]
fn finite_difference_and_spectral_dds_agree() {
    let p = dev();
    for &s in &[0.3, 0.6, 0.85] {
        let fd = dds_matrix(&p, s, DdsMethod::FiniteDifference, BasisPolicy::Count(64), 4).unwrap();
        let sp = dds_matrix(&p, s, DdsMethod::Spectral, BasisPolicy::Count(64), 4).unwrap();
        let scale = sp.amax();
        assert!((&fd - &sp).amax() < 1e-6 * scale, "s={s}\n{fd}\n{sp}");
    }
}

#[test]
fn harmonic_dds_first_band_matches_finite_difference() {
    let p = dev();
    for &s in &[0.1, 0.3, 0.5, 0.6] {
        let a = dds_matrix(&p, s, DdsMethod::AnalyticHarmonic, BasisPolicy::Count(64), 3).unwrap();
        let fd = dds_matrix(&p, s, DdsMethod::FiniteDifference, BasisPolicy::Count(64), 3).unwrap();
        for m in 0..3usize {
            for k in 0..3 {
                if m.abs_diff(k) == 1 {
                    let rel = (a[(m, k)] - fd[(m, k)]).abs() / fd[(m, k)].abs();
                    assert!(rel < 0.02, "s={s} ({m},{k}) rel={rel}");
                } else if m == k {
                    assert!(fd[(m, k)].abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn harmonic_dds_second_band_misses_anharmonic_mixing() {
    // The closed form keeps only the width change; the cubic term of the well
    // contributes at the same order to ⟨0|∂/∂s|2⟩ and flips its sign here.
    let p = dev();
    let a = dds_matrix(&p, 0.5, DdsMethod::AnalyticHarmonic, BasisPolicy::Count(64), 3).unwrap();
    let fd = dds_matrix(&p, 0.5, DdsMethod::FiniteDifference, BasisPolicy::Count(64), 3).unwrap();
    assert!(a[(0, 2)] < 0.0 && fd[(0, 2)] > 0.0);
}

#[test]
fn harmonic_first_band_value_at_half_bias() {
    let p = dev();
    let ell = p.length_scale(0.5).unwrap();
    let want = (0.5f64).sqrt() / (ell * 0.75f64.sqrt());
    let fd = dds_matrix(&p, 0.5, DdsMethod::FiniteDifference, BasisPolicy::Count(64), 2).unwrap();
    assert!((fd[(1, 0)] / want - 1.0).abs() < 0.02);
}
