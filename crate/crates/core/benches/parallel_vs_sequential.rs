//! Parallel against sequential execution of the two data-parallel paths:
//! the spectrum table behind every integration, and a batch of independent
//! protocol runs.

use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nemqubit::composite::{SpectrumTable, DYNAMICS_BASIS};
use nemqubit::dynamics::IntegratorConfig;
use nemqubit::junction::JunctionParams;
use nemqubit::par::{self, ExecMode};
use nemqubit::protocols::{run_batch, ProtocolKind, ProtocolSpec, Window};

const MODES: [(&str, ExecMode); 2] = [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)];

fn spectrum_table(c: &mut Criterion) {
    let p = JunctionParams::reference_device();
    let mut group = c.benchmark_group("spectrum_table");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, "0.38..0.56"), |b| {
            par::set_mode(mode);
            b.iter(|| SpectrumTable::build_with_step(&p, DYNAMICS_BASIS, 4, 0.38, 0.56, 1e-3).unwrap())
        });
    }
    group.finish();
}

fn protocol_batch(c: &mut Criterion) {
    // short windows of area pi/8 over a spread of idle biases
    let specs: Vec<ProtocolSpec> = (0..4)
        .map(|i| ProtocolSpec {
            lead_in: 0.5,
            tail: 0.5,
            windows: vec![Window { junction: 0, area: PI / 8.0 }],
            ..ProtocolSpec::storage_reference().with_off_bias(0.30 + 0.04 * i as f64)
        })
        .collect();
    let cfg = IntegratorConfig::default().with_dt(20e-6);
    let mut group = c.benchmark_group("protocol_batch");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, specs.len()), |b| {
            par::set_mode(mode);
            b.iter(|| {
                for r in run_batch(ProtocolKind::Storage, &specs, &cfg) {
                    r.unwrap();
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, spectrum_table, protocol_batch);
criterion_main!(benches);
