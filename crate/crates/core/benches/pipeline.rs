//! Sequential vs data-parallel runs of the main pipeline stages.
//!
//! "sequential" pins the pool to one worker; "parallel" uses the default
//! pool. Building with `--no-default-features` makes both sequential.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use palosi_core::batch::run_batch;
use palosi_core::io::write_recording;
use palosi_core::palosi::analyze_recording;
use palosi_core::par;
use palosi_core::report::QcConfig;
use palosi_core::signal::{validate_recording, QcThresholds, SpectralConfig};
use palosi_core::simkit::{scenario_preset, simulate, HeadModel, ScenarioTag};
use palosi_core::suite::{run_suite, SuiteConfig};

const MODES: [(&str, usize); 2] = [("sequential", 1), ("parallel", 0)];

fn recording_analysis(c: &mut Criterion) {
    let head = HeadModel::default();
    let sim = simulate(&scenario_preset(ScenarioTag::C).unwrap(), &head, 60.0, 250.0, 1).unwrap();
    let rec = validate_recording(sim.recording).unwrap();
    let cfg = SpectralConfig::default();
    let th = QcThresholds::default();
    let mut g = c.benchmark_group("analyze_recording");
    for (name, threads) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(threads, || black_box(analyze_recording(&rec, &cfg, &th).unwrap())))
        });
    }
    g.finish();
}

fn batch_qc(c: &mut Criterion) {
    let head = HeadModel::default();
    let dir = tempfile::tempdir().unwrap();
    let inputs: Vec<_> = (0..6)
        .map(|seed| {
            let sim = simulate(&scenario_preset(ScenarioTag::D).unwrap(), &head, 30.0, 250.0, seed).unwrap();
            write_recording(&sim.recording, &dir.path().join(format!("r{seed}.f64"))).unwrap()
        })
        .collect();
    let cfg = QcConfig::default();
    let th = QcThresholds::default();
    let mut g = c.benchmark_group("batch_qc");
    g.sample_size(10);
    for (name, threads) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(run_batch(&inputs, &cfg, &th, threads).unwrap()))
        });
    }
    g.finish();
}

fn degradation_suite(c: &mut Criterion) {
    let head = HeadModel::default();
    let cfg = SuiteConfig {
        n_datasets: 2,
        duration_s: 20.0,
        ..SuiteConfig::default()
    };
    let mut g = c.benchmark_group("degradation_suite");
    g.sample_size(10);
    for (name, threads) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(threads, || black_box(run_suite(&cfg, &head).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, recording_analysis, batch_qc, degradation_suite);
criterion_main!(benches);
