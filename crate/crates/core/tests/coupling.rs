//! The boundary flow and the cluster built from the same event log describe
//! the same harmonic measure.
//!
//! The arc between two tracked points after `n` arrivals carries harmonic
//! measure `X_n(x_k) − X_n(x_{k−1})` according to the flow. Independently,
//! Brownian motion started uniformly on a circle enclosing the cluster hits
//! its boundary with the harmonic measure from infinity; walk-on-spheres
//! samples the hitting point on the traced boundary, and the hit is assigned
//! to the arc whose finger roots enclose it.

use rand::Rng as _;

use ahl_core::cluster::{
    eval_cluster_map, generate_event_log, trace_cluster_boundary_with, Cluster, ClusterTraceOptions, RateConvention,
};
use ahl_core::flow::{replicas, simulate_boundary_flow, Sampling};
use ahl_core::geometry::segment_distance;
use ahl_core::loewner::HullBoundary;
use ahl_core::measures::{AngleMeasure, DiameterLaw};
use ahl_core::rng::{stream, Purpose, StreamId};
use ahl_core::{circle_point, lcap_of_slit, Complex, Exec};

/// Distance below which a walk counts as having hit the boundary.
const HIT: f64 = 1e-5;

struct Walker<'a> {
    boundary: &'a HullBoundary,
    r_max: f64,
}

impl Walker<'_> {
    /// Distance to the polyline and the circle coordinate of the closest point.
    fn nearest(&self, z: Complex) -> (f64, f64) {
        let v = &self.boundary.vertices;
        let p = &self.boundary.params;
        let n = v.len();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..n {
            let j = (i + 1) % n;
            let dist = segment_distance(z, v[i], v[j]);
            if dist < best.0 {
                let ab = v[j] - v[i];
                let t = (((z - v[i]) * ab.conj()).re / ab.norm_sqr()).clamp(0.0, 1.0);
                let pj = if j == 0 { 1.0 } else { p[j] };
                best = (dist, p[i] + t * (pj - p[i]));
            }
        }
        best
    }

    /// Circle coordinate of the hitting point of a walk started at `z`.
    fn walk(&self, mut z: Complex, rng: &mut impl rand::Rng) -> f64 {
        let far = 2.0 * self.r_max;
        loop {
            let r = z.norm();
            if r > far {
                // return to the circle |z| = far with the exterior Poisson kernel,
                // which inversion turns into the interior one from far²/z̄
                let alpha = (far * far / z.conj()) / far;
                let u = circle_point(rng.gen::<f64>());
                z = far * (u + alpha) / (1.0 + alpha.conj() * u);
                continue;
            }
            let dist = if r > 1.5 * self.r_max {
                r - self.r_max
            } else {
                let (dist, param) = self.nearest(z);
                if dist < HIT {
                    return param;
                }
                dist
            };
            z += circle_point(rng.gen::<f64>()) * dist;
        }
    }
}

#[test]
fn flow_arcs_carry_the_harmonic_measure_of_the_cluster() {
    let d = 0.3;
    let lcap = lcap_of_slit(d).unwrap();
    let horizon = 20.5 * lcap;
    let log = generate_event_log(
        &AngleMeasure::Uniform,
        &DiameterLaw::constant(d).unwrap(),
        horizon,
        RateConvention::Deterministic,
        11,
    )
    .unwrap();
    assert_eq!(log.len(), 20);
    let starts: Vec<(f64, f64)> = (0..8).map(|k| (0.0, (k as f64 + 0.3) / 8.0)).collect();
    let flow = simulate_boundary_flow(&log, &starts, horizon, Sampling::EveryEvent).unwrap();
    let cluster = Cluster::from_log(&log).unwrap();

    // the tracked points are the preimages of the original boundary points
    for (tr, &(_, x)) in flow.trajectories.iter().zip(&starts) {
        let root = eval_cluster_map(&cluster, circle_point(tr.last_value().unwrap()) * (1.0 + 1e-12)).unwrap();
        assert!((root - circle_point(x)).norm() < 1e-6, "root {root} vs {}", circle_point(x));
    }

    let opts = ClusterTraceOptions { eps: 1e-4, max_points: 1 << 13, exec: Exec::Sequential, ..Default::default() };
    let boundary = trace_cluster_boundary_with(&cluster, 1024, &opts).unwrap();
    let walker = Walker { boundary: &boundary, r_max: boundary.max_radius() };

    let walks = 4000;
    let hits = replicas(walks, Exec::Parallel, |r| {
        let mut rng = stream(2024, StreamId::new(r, Purpose::Auxiliary));
        let start = circle_point(rng.gen::<f64>()) * (2.0 * walker.r_max);
        walker.walk(start, &mut rng)
    });

    let finals = flow.finals();
    let n = flow.order.len();
    for k in 0..n {
        let (cur, prev) = (flow.order[k], flow.order[(k + n - 1) % n]);
        let (a, b) = (finals[prev].rem_euclid(1.0), finals[cur].rem_euclid(1.0));
        let len = (b - a).rem_euclid(1.0);
        let count = hits.iter().filter(|&&p| (p - a).rem_euclid(1.0) < len).count();
        let estimate = count as f64 / walks as f64;
        let omega = *flow.omega[k].last().unwrap();
        let se = (omega * (1.0 - omega) / walks as f64).sqrt();
        assert!((estimate - omega).abs() <= 3.0 * se, "arc {k}: hitting estimate {estimate} vs ω = {omega} (SE {se})");
        assert!((omega - len).abs() < 1e-12);
    }
}
