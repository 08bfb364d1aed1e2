//! Every fan-out pipeline gives bit-identical output in both execution modes.

use ahl_core::cluster::{generate_event_log, trace_cluster_boundary_with, Cluster, ClusterTraceOptions, RateConvention};
use ahl_core::flow::{replicas, simulate_boundary_flow, Sampling};
use ahl_core::loewner::{solve_map_many, trace_hull_with, DrivingMeasure, HullOptions, DEFAULT_STEP};
use ahl_core::measures::{AngleMeasure, DiameterLaw};
use ahl_core::{circle_point, Complex, Exec};

const MODES: [Exec; 2] = [Exec::Sequential, Exec::Parallel];

#[test]
fn cluster_boundary() {
    let log = generate_event_log(
        &AngleMeasure::mfold(3).unwrap(),
        &DiameterLaw::constant(0.05).unwrap(),
        0.4,
        RateConvention::Deterministic,
        1,
    )
    .unwrap();
    let cluster = Cluster::from_log(&log).unwrap();
    let [a, b] = MODES
        .map(|exec| trace_cluster_boundary_with(&cluster, 512, &ClusterTraceOptions { exec, ..Default::default() }).unwrap());
    assert_eq!(a, b);
}

#[test]
fn loewner_hull_and_points() {
    let mu = DrivingMeasure::constant(AngleMeasure::interval(0.5).unwrap());
    let [a, b] = MODES.map(|exec| trace_hull_with(&mu, 0.3, 64, &HullOptions { exec, ..Default::default() }).unwrap());
    assert_eq!(a, b);
    let zs: Vec<Complex> = (0..32).map(|k| circle_point(k as f64 / 32.0) * 1.5).collect();
    let [p, q] = MODES.map(|exec| solve_map_many(&mu, 0.3, &zs, DEFAULT_STEP, exec));
    assert_eq!(p, q);
}

#[test]
fn monte_carlo_replicas() {
    let nu = AngleMeasure::mfold(2).unwrap();
    let d = 0.05;
    let conv = RateConvention::capacity_rate(d).unwrap();
    let sigma = DiameterLaw::constant(d).unwrap();
    let [a, b] = MODES.map(|exec| {
        replicas(8, exec, |r| {
            let log = ahl_core::cluster::generate_replica(&nu, &sigma, 0.3, conv, 42, r).unwrap();
            simulate_boundary_flow(&log, &[(0.0, 0.1), (0.1, 0.6)], 0.3, Sampling::Grid { dt: 0.05 }).unwrap()
        })
    });
    assert_eq!(a, b);
    assert_ne!(a[0], a[1], "replicas draw from distinct streams");
}
