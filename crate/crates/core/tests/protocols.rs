use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nemqubit::dynamics::{basis_state, integrate, IntegratorConfig};
use nemqubit::protocols::*;
use nemqubit::rwa::PulseOperation;
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cfg(fs: f64) -> IntegratorConfig {
    IntegratorConfig::default().with_dt(fs * 1e-6)
}

fn index(run: &ProtocolRun, label: &str) -> usize {
    run.report.labels.iter().position(|l| l == label).unwrap()
}

#[test]
fn storage_converges_in_step() {
    let spec = ProtocolSpec::storage_reference();
    let fine = storage(&spec, &cfg(1.0)).unwrap();
    let coarse = storage(&spec, &cfg(2.0)).unwrap();
    let (a, b) = (fine.report.occupation("0_1").unwrap(), coarse.report.occupation("0_1").unwrap());
    assert!((a - b).abs() < 1e-5, "{a} {b}");
    assert!(a > 0.98, "{a}");
}

#[test]
fn equator_states_need_the_equator_bias() {
    let r = FRAC_1_SQRT_2;
    for beta in [c(r, 0.0), c(0.0, r)] {
        let spec = ProtocolSpec::storage_reference().with_state(c(r, 0.0), beta);
        let good = storage(&spec.clone().with_off_bias(EQUATOR_OFF_BIAS), &cfg(4.0)).unwrap().report.fidelity;
        let bad = storage(&spec.with_off_bias(POLE_OFF_BIAS), &cfg(4.0)).unwrap().report.fidelity;
        assert!(good > 0.95, "{good}");
        assert!(bad < good - 0.1, "{bad} vs {good}");
    }
}

#[test]
fn store_then_retrieve_restores_the_junction() {
    let spec = ProtocolSpec {
        windows: vec![Window::new(0, PulseOperation::Swap), Window::new(0, PulseOperation::RetrieveOrTransferGeneral)],
        ..ProtocolSpec::storage_reference()
    };
    let run = run("round trip", &spec, None, &cfg(4.0)).unwrap();
    // a total area of 4π is the identity on the one-excitation sector
    let k = index(&run, "1_0");
    assert!((run.report.target[k] - c(1.0, 0.0)).norm() < 1e-12);
    assert!(run.report.fidelity > 0.95, "{}", run.report.fidelity);
}

#[test]
fn retrieval_area_sets_the_sign_of_the_junction_amplitude() {
    let (alpha, beta) = (c(0.6, 0.0), c(0.0, 0.8));
    // a general state keeps its relative phase only at the equator bias
    let base = ProtocolSpec::retrieve_reference().with_state(alpha, beta).with_off_bias(EQUATOR_OFF_BIAS);
    let pi = plan(&ProtocolSpec { windows: vec![Window { junction: 0, area: PI }], ..base.clone() }).unwrap();
    let three = plan(&base).unwrap();
    assert!(three.windows[0].omega > 0.0);
    let k = pi.system.basis.index(&[1], &[0]);
    assert!((pi.target[k] + beta).norm() < 1e-12);
    assert!((three.target[k] - beta).norm() < 1e-12);
    assert_eq!(pi.target[0], alpha);

    let run = retrieve(&base, &cfg(4.0)).unwrap();
    assert!(run.report.fidelity > 0.95, "{}", run.report.fidelity);
}

#[test]
fn zero_area_window_leaves_the_state_alone() {
    let spec = ProtocolSpec { windows: vec![Window { junction: 0, area: 0.0 }], ..ProtocolSpec::storage_reference() };
    let run = storage(&spec, &cfg(4.0)).unwrap();
    assert_eq!(run.report.windows[0].duration, 0.0);
    assert!(run.report.occupation("1_0").unwrap() > 0.999);
    assert!(run.report.fidelity > 0.999);
}

#[test]
fn uncoupled_transfer_never_reaches_the_second_junction() {
    let p = plan(&ProtocolSpec::transfer_reference()).unwrap();
    let system = p.system.clone().with_coupling(p.system.coupling.scaled(0.0));
    let tr = integrate(&system, &p.schedule, &p.initial, &cfg(4.0)).unwrap();
    let b = &system.basis;
    // no phonon ever appears without the coupling
    for i in 0..tr.len() {
        for k in 0..b.dim() {
            let (_, n) = b.quantum_numbers(k);
            assert!(n[0] == 0 || tr.occupation(i, k) == 0.0, "{} at {}", b.label(k), tr.times[i]);
        }
    }
    // the ramp corners still kick each junction within its own ladder, but
    // uncoupled, junction 2 cannot tell what junction 1 started in
    let occ = tr.final_occupations();
    assert!(occ[b.index(&[1, 0], &[0])] > 0.98);
    let ground = integrate(&system, &p.schedule, &basis_state(b.dim(), 0), &cfg(4.0)).unwrap().final_occupations();
    let marginal = |o: &[f64], m: usize| -> f64 { (0..b.dim()).filter(|&k| b.quantum_numbers(k).0[1] == m).map(|k| o[k]).sum() };
    for m in 0..b.junction_levels[1] {
        assert!((marginal(&occ, m) - marginal(&ground, m)).abs() < 1e-10, "m={m}");
    }
    assert!(marginal(&occ, 0) > 0.99);
}

#[test]
fn half_swap_splits_the_excitation() {
    let spec =
        ProtocolSpec { windows: vec![Window::new(0, PulseOperation::EntanglePlus)], ..ProtocolSpec::entangle_reference() };
    let run = run("half", &spec, None, &cfg(4.0)).unwrap();
    let j = run.report.occupation("1_0_0").unwrap();
    let r = run.report.occupation("0_0_1").unwrap();
    assert!((j - 0.5).abs() < 0.03 && (r - 0.5).abs() < 0.03, "{j} {r}");
}

#[test]
fn empty_windows_give_half_bell_overlap() {
    let spec = ProtocolSpec {
        windows: vec![Window { junction: 0, area: 0.0 }, Window { junction: 1, area: 0.0 }],
        ..ProtocolSpec::entangle_reference()
    };
    let p = plan(&spec).unwrap();
    let bell = bell_state(&p.system.basis, true);
    let run = run("idle", &spec, Some(&bell), &cfg(4.0)).unwrap();
    assert!((run.report.fidelity - 0.5).abs() < 1e-3, "{}", run.report.fidelity);
}

#[test]
fn entangled_state_has_equal_weights() {
    let run = entangle(&ProtocolSpec::entangle_reference(), &cfg(4.0)).unwrap();
    let a = run.report.occupation("1_0_0").unwrap();
    let b = run.report.occupation("0_1_0").unwrap();
    assert!((a - 0.5).abs() < 0.05 && (b - 0.5).abs() < 0.05, "{a} {b}");
    assert!(run.report.fidelity > 0.9, "{}", run.report.fidelity);
}

#[test]
fn truncation_is_converged() {
    let base = ProtocolSpec::storage_reference();
    let f0 = storage(&base, &cfg(4.0)).unwrap().report.fidelity;
    for (levels, phonons) in [(6, 4), (4, 6)] {
        let f = storage(&ProtocolSpec { levels, phonons, ..base.clone() }, &cfg(4.0)).unwrap().report.fidelity;
        assert!((f - f0).abs() < 1e-4, "{levels}x{phonons}: {f} vs {f0}");
    }
}

#[test]
fn smooth_ramps_store_too() {
    let run = storage(&ProtocolSpec::storage_reference().with_ramp(RampKind::Gaussian), &cfg(4.0)).unwrap();
    assert!(run.report.fidelity > 0.95, "{}", run.report.fidelity);
}

#[test]
fn report_invariants() {
    let run = storage(&ProtocolSpec::storage_reference(), &cfg(4.0)).unwrap();
    let rep = &run.report;
    let total: f64 = rep.occupations.iter().sum();
    assert!((total - 1.0).abs() < 7e-5);
    assert!(rep.leakage >= 0.0 && rep.max_leakage >= rep.leakage);
    assert!(rep.norm_drift < 7e-5);
    assert_eq!(rep.labels.len(), rep.occupations.len());
    assert!((rep.duration - (5.0 + 2.0 + rep.windows[0].duration + 1.0)).abs() < 1e-12);
    let json = serde_json::to_string(rep).unwrap();
    let back: FidelityReport = serde_json::from_str(&json).unwrap();
    assert_eq!(&back, rep);
}

#[test]
fn rejects_bad_specs() {
    let base = ProtocolSpec::storage_reference();
    let cases = [
        ProtocolSpec { off_bias: vec![0.4, 0.4], ..base.clone() },
        base.clone().with_state(c(1.0, 0.0), c(1.0, 0.0)),
        ProtocolSpec { windows: vec![Window::new(1, PulseOperation::Swap)], ..base.clone() },
        ProtocolSpec { levels: 1, ..base.clone() },
        ProtocolSpec { ramp: Ramp { kind: RampKind::Trapezoid, crossover: 0.0 }, ..base.clone() },
        ProtocolSpec { gate: nemqubit::resonator::Gate::Full, ..ProtocolSpec::transfer_reference() },
        base.clone().with_off_bias(1.2),
    ];
    for spec in cases {
        assert!(matches!(spec.validate(), Err(ProtocolError::Spec(_))), "{spec:?}");
    }
    assert!(storage(&ProtocolSpec::transfer_reference(), &cfg(4.0)).is_err());
    assert!(transfer(&base, &cfg(4.0)).is_err());
    assert!(retrieve(&base, &cfg(4.0)).is_err());
}
