//! Sequential versus data-parallel execution of the three fan-out pipelines:
//! cluster boundary tracing (points), Monte Carlo flow replicas, and Loewner
//! hull tracing (rays). Both modes produce identical output; only wall time
//! differs. Built without the `parallel` feature, both rows run sequentially.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use ahl_core::cluster::{generate_event_log, trace_cluster_boundary_with, Cluster, ClusterTraceOptions, RateConvention};
use ahl_core::flow::{replicas, simulate_boundary_flow, Sampling};
use ahl_core::loewner::{trace_hull_with, DrivingMeasure, HullOptions};
use ahl_core::measures::{AngleMeasure, DiameterLaw};
use ahl_core::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn boundary_trace(c: &mut Criterion) {
    let nu = AngleMeasure::mfold(3).unwrap();
    let log = generate_event_log(&nu, &DiameterLaw::constant(0.05).unwrap(), 0.5, RateConvention::Deterministic, 1).unwrap();
    let cluster = Cluster::from_log(&log).unwrap();
    let mut group = c.benchmark_group("cluster_boundary");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = ClusterTraceOptions { exec, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| trace_cluster_boundary_with(black_box(&cluster), 2048, opts).unwrap())
        });
    }
    group.finish();
}

fn flow_replicas(c: &mut Criterion) {
    let nu = AngleMeasure::mfold(3).unwrap();
    let d = 0.02;
    let conv = RateConvention::capacity_rate(d).unwrap();
    let sigma = DiameterLaw::constant(d).unwrap();
    let starts: Vec<(f64, f64)> = (0..16).map(|k| (0.0, (k as f64 + 0.5) / 16.0)).collect();
    let mut group = c.benchmark_group("flow_replicas");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                replicas(16, exec, |r| {
                    let log = ahl_core::cluster::generate_replica(&nu, &sigma, 0.5, conv, 7, r).unwrap();
                    simulate_boundary_flow(&log, &starts, 0.5, Sampling::Grid { dt: 0.01 }).unwrap().finals()
                })
            })
        });
    }
    group.finish();
}

fn hull_rays(c: &mut Criterion) {
    let mu = DrivingMeasure::constant(AngleMeasure::mfold(3).unwrap());
    let mut group = c.benchmark_group("loewner_hull");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = HullOptions { exec, refine: false, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| trace_hull_with(black_box(&mu), 0.5, 256, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, boundary_trace, flow_replicas, hull_rays);
criterion_main!(benches);
