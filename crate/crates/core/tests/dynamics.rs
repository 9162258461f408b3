use std::f64::consts::PI;

use nemqubit::composite::*;
use nemqubit::dynamics::*;
use nemqubit::junction::JunctionParams;
use nemqubit::resonator::{Gate, ResonatorParams};
use nemqubit::rwa::{rabi_frequency, RwaParams};
use num_complex::Complex64;

struct Setup {
    system: CompositeSystem,
    s_star: f64,
    omega: f64,
}

fn setup() -> Setup {
    let j = JunctionParams::reference_device();
    let res = ResonatorParams::aln_15ghz();
    let system = CompositeSystem::single(j.clone(), &res, Gate::Full);
    let provider = DirectSpectrum::new(j.clone(), 4);
    let s_star = resonant_bias(&provider, &j, res.dilatational_frequency()).unwrap().exact;
    let x01 = provider.levels(s_star).unwrap().dipole[(0, 1)];
    let omega = rabi_frequency(&RwaParams { g: system.coupling.g[0][0], x01, detuning: 0.0 }).resonant;
    Setup { system, s_star, omega }
}

fn idx(sys: &CompositeSystem, m: usize, n: usize) -> usize {
    sys.basis.index(&[m], &[n])
}

fn superposition(dim: usize, ks: &[usize]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); dim];
    let a = 1.0 / (ks.len() as f64).sqrt();
    for (i, &k) in ks.iter().enumerate() {
        c[k] = Complex64::from_polar(a, 0.7 * i as f64);
    }
    c
}

/// 0.5 ns at 0.40, 1 ns ramp up, `hold` ns at s*, 1 ns ramp down.
fn ramp_schedule(s_star: f64, hold: f64) -> BiasSchedule {
    BiasSchedule::new(vec![vec![
        Segment::Hold { s: 0.4, duration: 0.5 },
        Segment::Trapezoid { from: 0.4, to: s_star, duration: 1.0 },
        Segment::Hold { s: s_star, duration: hold },
        Segment::Trapezoid { from: s_star, to: 0.4, duration: 1.0 },
    ]])
}

#[test]
fn uncoupled_occupations_are_constant() {
    let st = setup();
    let sys = st.system.clone().with_coupling(st.system.coupling.scaled(0.0));
    let c0 = superposition(16, &[idx(&sys, 0, 0), idx(&sys, 1, 0), idx(&sys, 0, 1)]);
    let tr = integrate(&sys, &BiasSchedule::constant(st.s_star, 5.0), &c0, &IntegratorConfig::default()).unwrap();
    for i in 0..tr.len() {
        for k in 0..16 {
            assert!((tr.occupation(i, k) - c0[k].norm_sqr()).abs() < 1e-12);
        }
    }
}

#[test]
fn matches_exact_propagation_at_resonance() {
    let st = setup();
    let c0 = superposition(16, &[idx(&st.system, 1, 0), idx(&st.system, 0, 1), idx(&st.system, 1, 1)]);
    let t = 10.0;
    let tr = integrate(&st.system, &BiasSchedule::constant(st.s_star, t), &c0, &IntegratorConfig::default()).unwrap();
    let exact = propagate_constant(&st.system, &[st.s_star], &c0, t).unwrap();
    for (a, b) in tr.final_amplitudes().iter().zip(&exact) {
        assert!((a - b).norm() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn hold_step_map_matches_stepping() {
    let st = setup();
    let sched = ramp_schedule(st.s_star, 2.0);
    let c0 = superposition(16, &[idx(&st.system, 1, 0), idx(&st.system, 0, 0)]);
    let cfg = IntegratorConfig::default().with_dt(2e-6);
    let fast = integrate(&st.system, &sched, &c0, &cfg).unwrap();
    let slow = integrate(&st.system, &sched, &c0, &IntegratorConfig { hold_step_map: false, ..cfg }).unwrap();
    assert_eq!(fast.times, slow.times);
    let mut worst: f64 = 0.0;
    for i in 0..fast.len() {
        for (a, b) in fast.sample(i).iter().zip(slow.sample(i)) {
            worst = worst.max((a - b).norm());
        }
    }
    // stepping multiplies by the same rounded phasor every step, so its phases
    // carry about n·eps of systematic rounding; the step map does not
    assert!(worst < 2e-9, "{worst:e}");
    for (a, b) in fast.phase_integrals.iter().zip(&slow.phase_integrals) {
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} {b}");
    }
}

#[test]
fn constant_propagator_identity_and_energy() {
    let st = setup();
    let p = ConstantPropagator::new(&st.system, &[st.s_star]).unwrap();
    let c0 = superposition(16, &[idx(&st.system, 1, 0), idx(&st.system, 0, 2), idx(&st.system, 2, 1)]);
    let same = p.propagate(&c0, 0.0);
    for (a, b) in same.iter().zip(&c0) {
        assert!((a - b).norm() < 1e-13);
    }
    let e0 = p.energy(&c0);
    for t in [0.3, 7.0, 55.0] {
        let b = p.schrodinger(&p.propagate(&c0, t), t);
        assert!(((p.energy(&b) - e0) / e0).abs() < 1e-10);
    }
}

#[test]
fn global_energy_offset_leaves_occupations_unchanged() {
    let st = setup();
    let sched = ramp_schedule(st.s_star, 1.5);
    let c0 = basis_state(16, idx(&st.system, 1, 0));
    let cfg = IntegratorConfig::default().with_dt(2e-6);
    let a = integrate(&st.system, &sched, &c0, &cfg).unwrap();
    let b = integrate(&st.system, &sched, &c0, &IntegratorConfig { energy_offset: 1234.5, ..cfg }).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        for k in 0..16 {
            worst = worst.max((a.occupation(i, k) - b.occupation(i, k)).abs());
        }
    }
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn nonadiabatic_terms_are_exercised() {
    let st = setup();
    let sched = ramp_schedule(st.s_star, 0.5);
    let c0 = basis_state(16, idx(&st.system, 1, 0));
    let cfg = IntegratorConfig::default().with_dt(2e-6);
    let on = integrate(&st.system, &sched, &c0, &cfg).unwrap();
    let off = integrate(&st.system, &sched, &c0, &IntegratorConfig { nonadiabatic: false, ..cfg }).unwrap();
    let diff = on.final_amplitudes().iter().zip(off.final_amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff > 1e-4, "{diff:e}");
}

#[test]
fn resonant_rabi_oscillation_follows_cos_squared() {
    let st = setup();
    let period = 2.0 * PI / st.omega;
    let c0 = basis_state(16, idx(&st.system, 1, 0));
    let tr = integrate(&st.system, &BiasSchedule::constant(st.s_star, period), &c0, &IntegratorConfig::default()).unwrap();
    let k = idx(&st.system, 1, 0);
    let worst = (0..tr.len())
        .map(|i| (tr.occupation(i, k) - (0.5 * st.omega * tr.times[i]).cos().powi(2)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "{worst}");
    assert!(tr.max_norm_drift < NORM_TOLERANCE);
}

#[test]
fn coarse_step_trips_norm_check() {
    let st = setup();
    let c0 = basis_state(16, idx(&st.system, 1, 0));
    let sched = ramp_schedule(st.s_star, 20.0);
    let err = integrate(&st.system, &sched, &c0, &IntegratorConfig::default().with_dt(2e-2)).unwrap_err();
    match err {
        DynamicsError::NormDrift { drift, tolerance, suggested_dt, dt, .. } => {
            assert!(drift > tolerance);
            assert!(suggested_dt < dt);
        }
        other => panic!("unexpected {other}"),
    }
    // one picosecond is still well inside the tolerance in this representation
    let ok = integrate(&st.system, &sched, &c0, &IntegratorConfig::default().with_dt(1e-3)).unwrap();
    assert!(ok.max_norm_drift < 1e-6);
}

#[test]
fn observed_order_is_four() {
    let st = setup();
    let it = Integrator::new(&st.system, &ramp_schedule(st.s_star, 3.0)).unwrap();
    let c0 = basis_state(16, idx(&st.system, 1, 0));
    // femtosecond steps put the differences at the rounding floor
    let steps = [4e-3, 2e-3, 1e-3, 5e-4];
    let rep = convergence_sweep(&it, &c0, &IntegratorConfig::default(), &steps).unwrap();
    assert!(!rep.non_monotone, "{rep:?}");
    for q in &rep.observed_orders {
        assert!((q - 4.0).abs() < 0.5, "{rep:?}");
    }
}

#[test]
fn csv_layout() {
    let st = setup();
    let c0 = basis_state(16, idx(&st.system, 1, 0));
    let tr = integrate(
        &st.system,
        &BiasSchedule::constant(st.s_star, 0.01),
        &c0,
        &IntegratorConfig { max_samples: 3, ..Default::default() },
    )
    .unwrap();
    assert_eq!(tr.len(), 3);
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..5], &["t_ns", "s_J1", "norm", "re_c_0_0", "im_c_0_0"]);
    assert_eq!(header[5], "p_0_0");
    assert_eq!(header.len(), 3 + 3 * 16);
    assert_eq!(lines.count(), 3);

    let mut again = Vec::new();
    tr.write_csv(&mut again).unwrap();
    assert_eq!(text.as_bytes(), &again[..]);
}

#[test]
fn rejects_bad_inputs() {
    let st = setup();
    let sched = BiasSchedule::constant(st.s_star, 1.0);
    let unnormalized = vec![Complex64::new(0.5, 0.0); 16];
    assert!(matches!(
        integrate(&st.system, &sched, &unnormalized, &IntegratorConfig::default()),
        Err(DynamicsError::InitialState(_))
    ));
    let c0 = basis_state(16, 0);
    assert!(matches!(
        integrate(&st.system, &BiasSchedule::constant(1.0, 1.0), &c0, &IntegratorConfig::default()),
        Err(DynamicsError::Schedule(_))
    ));
    assert!(matches!(
        integrate(&st.system, &sched, &c0, &IntegratorConfig::default().with_dt(-1.0)),
        Err(DynamicsError::Config(_))
    ));
}
