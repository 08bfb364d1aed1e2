//! Figure rendering: degenerate input and the resolution budget.

use std::time::Instant;

use ahl_core::cluster::{trace_cluster_boundary, Cluster, ClusterTraceOptions, EventLog, RateConvention};
use ahl_core::io::{render_boundaries_svg, SvgStyle};
use ahl_core::{circle_point, Complex};

#[test]
fn empty_cluster_draws_only_the_circle() {
    let log = EventLog::from_events(Vec::new(), RateConvention::Deterministic, 0, 0.0).unwrap();
    let boundary = trace_cluster_boundary(&Cluster::from_log(&log).unwrap(), 512).unwrap();
    assert!(boundary.vertices.iter().all(|z| (z.norm() - 1.0).abs() < 1e-2));
    let svg = render_boundaries_svg(&[&boundary.vertices], &[], &SvgStyle::default()).unwrap();
    assert_eq!(svg.matches("<path").count(), 1);
    assert!(render_boundaries_svg(&[&[]], &[], &SvgStyle::default()).is_none());
}

#[test]
fn twenty_five_thousand_particles_fit_the_budget() {
    // The tracer emits at most `max_points` vertices; draw that many around a
    // fingered outline together with one tip marker per particle.
    let n_vertices = ClusterTraceOptions::default().max_points;
    let fingers = 25_000;
    let outline: Vec<Complex> = (0..n_vertices)
        .map(|k| {
            let x = k as f64 / n_vertices as f64;
            circle_point(x) * (3.0 + 0.2 * (fingers as f64 * x * std::f64::consts::TAU).sin().abs())
        })
        .collect();
    let tips: Vec<Complex> = (0..fingers).map(|k| circle_point((k as f64 + 0.25) / fingers as f64) * 3.2).collect();
    let start = Instant::now();
    let svg = render_boundaries_svg(&[&outline], &tips, &SvgStyle::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "rendering took {elapsed} s");
    assert!(svg.len() < 20 << 20, "{} bytes", svg.len());
    assert_eq!(svg.matches("<path").count(), 1);
}
