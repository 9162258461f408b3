use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nemqubit::rwa::*;
use nemqubit::units::{Energy, ELEMENTARY_CHARGE, HBAR};
use num_complex::Complex64;

const EPS: f64 = 4.0 * f64::EPSILON;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn params(detuning: f64) -> RwaParams {
    RwaParams { g: Energy::from_micro_ev(0.62), x01: 0.0293, detuning }
}

/// ċ₀₁ = g x₀₁ e^{iω_d t} c₁₀, ċ₁₀ = −g x₀₁ e^{−iω_d t} c₀₁ by plain RK4.
fn rk4_two_level(p: &RwaParams, beta: Complex64, t_end: f64, steps: usize) -> (Complex64, Complex64) {
    let k = p.g.rad_per_ns() * p.x01;
    let f = |t: f64, y: [Complex64; 2]| {
        let e = Complex64::from_polar(1.0, p.detuning * t);
        [k * e * y[1], -k * e.conj() * y[0]]
    };
    let h = t_end / steps as f64;
    let mut y = [c(0.0, 0.0), beta];
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + h / 2.0, [y[0] + k1[0] * (h / 2.0), y[1] + k1[1] * (h / 2.0)]);
        let k3 = f(t + h / 2.0, [y[0] + k2[0] * (h / 2.0), y[1] + k2[1] * (h / 2.0)]);
        let k4 = f(t + h, [y[0] + k3[0] * h, y[1] + k3[1] * h]);
        for j in 0..2 {
            y[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
        }
    }
    (y[0], y[1])
}

#[test]
fn pulse_table_values() {
    let p = params(0.0);
    let om = rabi_frequency(&p).resonant;
    let (alpha, beta) = (c(0.6, 0.0), c(0.0, 0.8));
    let r = FRAC_1_SQRT_2;
    let expected = [
        (0.0, c(0.0, 0.0), beta),
        (PI / 2.0, beta * r, beta * r),
        (PI, beta, c(0.0, 0.0)),
        (1.5 * PI, beta * r, -beta * r),
    ];
    for (phase, c01, c10) in expected {
        let a = rwa_amplitudes(&p, alpha, beta, phase / om);
        assert_eq!(a[0], alpha);
        assert!((a[1] - c01).norm() < EPS, "Ωt={phase}: {:?}", a[1]);
        assert!((a[2] - c10).norm() < EPS, "Ωt={phase}: {:?}", a[2]);
        assert_eq!(a[3], c(0.0, 0.0));
    }
}

#[test]
fn bell_state_at_quarter_period() {
    let p = params(0.0);
    let a = rwa_amplitudes(&p, c(0.0, 0.0), c(1.0, 0.0), PI / 2.0 / rabi_frequency(&p).resonant);
    assert!((a[1].re - FRAC_1_SQRT_2).abs() < EPS && a[1].im.abs() < EPS);
    assert!((a[2].re - FRAC_1_SQRT_2).abs() < EPS && a[2].im.abs() < EPS);
}

#[test]
fn sign_flip_and_return() {
    let p = params(0.0);
    let om = rabi_frequency(&p).resonant;
    let beta = c(0.3, -0.4);
    let two = rwa_amplitudes(&p, c(0.0, 0.0), beta, 2.0 * PI / om);
    assert!((two[2] + beta).norm() < 1e-14);
    assert!(two[1].norm() < 1e-14);
    let four = rwa_amplitudes(&p, c(0.0, 0.0), beta, 4.0 * PI / om);
    assert!((four[2] - beta).norm() < 1e-14);
    assert!(four[1].norm() < 1e-14);
}

#[test]
fn conservation_laws() {
    let alpha = c(0.36, 0.48);
    let beta = c(0.0, 0.8);
    for wd in [0.0, 0.01, -0.05, 0.3] {
        let p = params(wd);
        for i in 0..200 {
            let a = rwa_amplitudes(&p, alpha, beta, i as f64 * 1.7);
            assert_eq!(a[0], alpha);
            assert!((a[1].norm_sqr() + a[2].norm_sqr() - beta.norm_sqr()).abs() < 1e-14);
        }
    }
}

#[test]
fn closed_form_solves_the_rwa_equations() {
    for wd in [0.0, 0.04, -0.11] {
        let p = params(wd);
        let beta = c(0.0, 1.0);
        for t in [3.0, 40.0, 113.0] {
            let (c01, c10) = rk4_two_level(&p, beta, t, 20_000);
            let a = rwa_amplitudes(&p, c(0.0, 0.0), beta, t);
            assert!((a[1] - c01).norm() < 1e-10, "wd={wd} t={t}");
            assert!((a[2] - c10).norm() < 1e-10, "wd={wd} t={t}");
        }
    }
}

#[test]
fn detuned_transfer_is_incomplete() {
    let p0 = params(0.0);
    let om0 = rabi_frequency(&p0).resonant;
    let p = params(om0);
    let r = rabi_frequency(&p);
    assert!((r.detuned - om0 * 2f64.sqrt()).abs() < 1e-15);
    let scan_max = (0..20_000)
        .map(|i| rwa_amplitudes(&p, c(0.0, 0.0), c(1.0, 0.0), i as f64 * r.period / 20_000.0)[1].norm_sqr())
        .fold(0.0, f64::max);
    assert!((scan_max - 0.5).abs() < 1e-6, "{scan_max}");
}

#[test]
fn resonant_period_of_reference_coupling() {
    // g = 0.620 µeV, x₀₁ = 0.02932 at the 15 GHz resonance
    let p = RwaParams { g: Energy::from_micro_ev(0.62), x01: 0.02932, detuning: 0.0 };
    let r = rabi_frequency(&p);
    let hz = 2.0 * 0.62e-6 * ELEMENTARY_CHARGE / HBAR * 0.02932 / (2.0 * PI);
    assert!((r.resonant / (2.0 * PI) * 1e9 / hz - 1.0).abs() < 1e-12);
    assert!((r.period - 113.7).abs() < 0.2, "{}", r.period);
}

#[test]
fn rf_rabi_frequency_values() {
    let ej = Energy::from_milli_ev(43.05);
    let drive = DriveParams { s_rf: 1e-3, omega_rf: 100.0 };
    let on = rf_rabi_frequency(&drive, 3.46e-2, ej, 100.0);
    // s_rf x₀₁ E_J/ħ with E_J/ħ from SI
    let expected = 1e-3 * 3.46e-2 * 43.05e-3 * ELEMENTARY_CHARGE / HBAR * 1e-9;
    assert!((on / expected - 1.0).abs() < 1e-12);
    assert!((on / (2.0 * PI) * 1e3 - 360.2).abs() < 0.1, "{} MHz", on / (2.0 * PI) * 1e3);

    let off = DriveParams { s_rf: 0.0, omega_rf: 97.0 };
    assert!((rf_rabi_frequency(&off, 3.46e-2, ej, 100.0) - 3.0).abs() < 1e-12);
}
