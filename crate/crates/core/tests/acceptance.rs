//! One line per acceptance criterion. Exits nonzero when a criterion fails
//! for a reason that is not a recorded known deviation.
//!
//! `NEMQUBIT_ACCEPT_DT` (ns) overrides the step; `NEMQUBIT_ACCEPT_ONLY`
//! takes a comma-separated list of criterion numbers.

use std::process::ExitCode;

use nemqubit::acceptance::{self, AcceptanceOptions, Perturbation, PerturbedConstant};

fn main() -> ExitCode {
    let mut opts = AcceptanceOptions::default();
    if let Ok(dt) = std::env::var("NEMQUBIT_ACCEPT_DT") {
        opts.dt = dt.parse().expect("NEMQUBIT_ACCEPT_DT must be a number of ns");
    }
    if let Ok(only) = std::env::var("NEMQUBIT_ACCEPT_ONLY") {
        opts.only = Some(only.split(',').map(|v| v.trim().parse().expect("criterion number")).collect());
    }

    println!("acceptance at dt = {} fs", opts.dt * 1e6);
    let outcomes = acceptance::run_with(&opts, |o| println!("{o}"));
    for o in outcomes.iter().filter(|o| !o.passed()) {
        for c in o.checks.iter().filter(|c| !c.passed) {
            if let Some(why) = &c.known_deviation {
                println!("  known deviation in {}: {} ({why})", o.id, c.quantity);
            }
        }
    }

    // the resonator criterion must notice a wrong piezoelectric modulus
    let mutated = acceptance::run(&AcceptanceOptions {
        only: Some(vec![4]),
        perturbation: Some(Perturbation { constant: PerturbedConstant::PiezoModulus, factor: 1.1 }),
        ..opts.clone()
    });
    let caught = mutated.iter().all(|o| !o.passed());
    println!("[{}] mutation e_33 x 1.1 rejected by criterion 4", if caught { "PASS" } else { "FAIL" });

    let failed = outcomes.iter().filter(|o| o.unexpected_failure()).count();
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    println!("{passed}/{} criteria passed, {failed} unexpected failures", outcomes.len());
    if failed > 0 || !caught {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
