//! AHL(ν) clusters: event logs, the composed exterior map
//! `Φ_n = f_1 ∘ f_2 ∘ … ∘ f_n`, boundary tracing and finger statistics.
//!
//! The event log is the single source of randomness: the cluster geometry and
//! the boundary flow are both built from the same log, so they can be compared
//! realization by realization.

use std::f64::consts::TAU;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::conformal::{circle_point, gamma_at_origin, lcap_of_slit, Complex, SlitParticle};
use crate::error::{domain, Error, Result};
use crate::loewner::HullBoundary;
use crate::measures::{particle_stats, AngleMeasure, DiameterLaw};
use crate::par::Exec;
use crate::rng::{stream, Purpose, StreamId};
use crate::stats;

/// How arrival times are assigned to particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateConvention {
    /// `T_k = lcap_1 + … + lcap_k`: one unit of capacity per unit of time.
    Deterministic,
    /// Arrivals of a Poisson process with the given rate.
    Poisson { rate: f64 },
}

impl RateConvention {
    /// Poisson arrivals at rate `lcap(P)⁻¹`, the drift-regime clock.
    pub fn capacity_rate(d: f64) -> Result<Self> {
        Ok(RateConvention::Poisson { rate: 1.0 / lcap_of_slit(d)? })
    }

    /// Poisson arrivals at rate `ρ(P)`, the coalescing-regime clock.
    pub fn rho_rate(d: f64) -> Result<Self> {
        Ok(RateConvention::Poisson { rate: particle_stats(&SlitParticle::new(d, 0.0)?).rho })
    }

    pub fn name(&self) -> String {
        match self {
            RateConvention::Deterministic => "deterministic".into(),
            RateConvention::Poisson { rate } => format!("poisson(rate={rate})"),
        }
    }
}

/// One particle arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    /// 1-based index.
    pub k: usize,
    pub t: f64,
    pub theta: f64,
    pub d: f64,
}

/// Ordered particle arrivals for one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub convention: RateConvention,
    pub master_seed: u64,
    pub replica: u64,
    pub horizon: f64,
    /// Capacity beyond the horizon absorbed by the last particle
    /// (variable diameters under the deterministic convention).
    pub overshoot: f64,
}

impl EventLog {
    /// Builds a log from given events, checking its invariants.
    pub fn from_events(events: Vec<Event>, convention: RateConvention, master_seed: u64, horizon: f64) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !(e.d > 0.0) || !e.d.is_finite() {
                return domain(format!("event {} has invalid diameter {}", e.k, e.d));
            }
            if !(0.0..1.0).contains(&e.theta) {
                return domain(format!("event {} has angle {} outside [0, 1)", e.k, e.theta));
            }
            if i > 0 && !(e.t > events[i - 1].t) {
                return domain(format!("event times must increase strictly (event {})", e.k));
            }
        }
        Ok(Self { events, convention, master_seed, replica: 0, horizon, overshoot: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// True when every particle has the same diameter.
    pub fn constant_diameter(&self) -> Option<f64> {
        let d = self.events.first()?.d;
        self.events.iter().all(|e| e.d == d).then_some(d)
    }

    /// The first `n` events.
    pub fn truncated(&self, n: usize) -> EventLog {
        let mut log = self.clone();
        log.events.truncate(n);
        log
    }

    /// Events with `t ≤ horizon`.
    pub fn until(&self, horizon: f64) -> EventLog {
        let n = self.events.partition_point(|e| e.t <= horizon);
        let mut log = self.truncated(n);
        log.horizon = horizon;
        log
    }
}

/// Draws the particle sequence of replica 0.
pub fn generate_event_log(
    nu: &AngleMeasure,
    sigma: &DiameterLaw,
    horizon: f64,
    convention: RateConvention,
    seed: u64,
) -> Result<EventLog> {
    generate_replica(nu, sigma, horizon, convention, seed, 0)
}

/// Draws the particle sequence of one replica. Angles, diameters and arrival
/// times use independent streams.
pub fn generate_replica(
    nu: &AngleMeasure,
    sigma: &DiameterLaw,
    horizon: f64,
    convention: RateConvention,
    seed: u64,
    replica: u64,
) -> Result<EventLog> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return domain(format!("horizon must be positive, got {horizon}"));
    }
    if !nu.has_density() {
        return Err(Error::UnsupportedMeasure("attachment angles need a law with a density".into()));
    }
    let mut angles = stream(seed, StreamId::new(replica, Purpose::Angles));
    let mut diameters = stream(seed, StreamId::new(replica, Purpose::Diameters));
    let mut arrivals = stream(seed, StreamId::new(replica, Purpose::Arrivals));
    let mut events = Vec::new();
    let mut overshoot = 0.0;
    match (convention, sigma) {
        (RateConvention::Deterministic, DiameterLaw::Constant(d)) => {
            let lcap = lcap_of_slit(*d)?;
            let n = (horizon / lcap).floor() as usize;
            events.reserve(n);
            for k in 1..=n {
                events.push(Event { k, t: k as f64 * lcap, theta: nu.sample(&mut angles), d: *d });
            }
        }
        (RateConvention::Deterministic, law) => {
            let mut t = 0.0;
            let mut k = 0;
            while t < horizon {
                let d = law.sample(&mut diameters);
                t += lcap_of_slit(d)?;
                k += 1;
                events.push(Event { k, t, theta: nu.sample(&mut angles), d });
            }
            overshoot = t - horizon;
        }
        (RateConvention::Poisson { rate }, law) => {
            if !(rate > 0.0) || !rate.is_finite() {
                return domain(format!("Poisson rate must be positive, got {rate}"));
            }
            let exp = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
            let mut t = 0.0;
            let mut k = 0;
            loop {
                t += exp.sample(&mut arrivals);
                if t > horizon {
                    break;
                }
                k += 1;
                let d = law.sample(&mut diameters);
                events.push(Event { k, t, theta: nu.sample(&mut angles), d });
            }
        }
    }
    Ok(EventLog { events, convention, master_seed: seed, replica, horizon, overshoot })
}

/// The particles of a log, composed in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub particles: Vec<SlitParticle>,
    pub total_lcap: f64,
}

impl Cluster {
    pub fn from_log(log: &EventLog) -> Result<Self> {
        let particles = log.events.iter().map(|e| SlitParticle::new(e.d, e.theta)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_particles(particles))
    }

    pub fn from_particles(particles: Vec<SlitParticle>) -> Self {
        let total_lcap = particles.iter().map(|p| p.lcap()).sum();
        Self { particles, total_lcap }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// `C(Φ_n) = Π e^{lcap_k}`, accumulated in arrival order.
    pub fn capacity(&self) -> f64 {
        self.particles.iter().fold(1.0, |acc, p| acc * p.capacity())
    }

    /// `|Φ_n(R)|/R` at `R = 10⁸`.
    pub fn measured_capacity(&self) -> f64 {
        let r = crate::loewner::CAPACITY_RADIUS;
        self.eval_unchecked(Complex::new(r, 0.0)).norm() / r
    }

    /// The cluster made of the first `n` particles.
    pub fn prefix(&self, n: usize) -> Cluster {
        Cluster::from_particles(self.particles[..n.min(self.len())].to_vec())
    }

    fn eval_unchecked(&self, z: Complex) -> Complex {
        // Φ_n = f_1 ∘ … ∘ f_n: the newest particle acts first
        self.particles.iter().rev().fold(z, |w, p| p.map_unchecked(w))
    }
}

/// `Φ_n(z)` for `|z| > 1`.
pub fn eval_cluster_map(c: &Cluster, z: Complex) -> Result<Complex> {
    if !(z.norm_sqr() > 1.0) {
        return domain(format!("cluster map needs |z| > 1, got |z| = {}", z.norm()));
    }
    let w = c.eval_unchecked(z);
    if w.re.is_finite() && w.im.is_finite() {
        Ok(w)
    } else {
        Err(Error::Internal(format!("cluster map produced a non-finite value at z = {z}")))
    }
}

/// Options for [`trace_cluster_boundary_with`].
#[derive(Debug, Clone, Copy)]
pub struct ClusterTraceOptions {
    pub eps: f64,
    /// Gaps longer than this multiple of the initial median spacing are bisected.
    pub refine_factor: f64,
    pub max_rounds: usize,
    pub max_points: usize,
    /// Insert the tips of the slits as marked vertices.
    pub mark_tips: bool,
    pub exec: Exec,
}

impl Default for ClusterTraceOptions {
    fn default() -> Self {
        Self { eps: 1e-3, refine_factor: 5.0, max_rounds: 12, max_points: 1 << 17, mark_tips: false, exec: Exec::default() }
    }
}

/// Image of `|z| = 1 + ε` under `Φ_n`, refined where fingers stretch the
/// parametrization.
pub fn trace_cluster_boundary(c: &Cluster, n_points: usize) -> Result<HullBoundary> {
    trace_cluster_boundary_with(c, n_points, &ClusterTraceOptions::default())
}

pub fn trace_cluster_boundary_with(c: &Cluster, n_points: usize, opts: &ClusterTraceOptions) -> Result<HullBoundary> {
    if n_points < 256 {
        return domain(format!("cluster boundary needs at least 256 points, got {n_points}"));
    }
    if !(opts.eps > 0.0) {
        return domain("boundary offset ε must be positive");
    }
    let radius = 1.0 + opts.eps;
    let image = |x: f64| c.eval_unchecked(circle_point(x) * radius);
    let mut params: Vec<f64> = (0..n_points).map(|k| k as f64 / n_points as f64).collect();
    let mut vertices = opts.exec.map(&params, |&x| image(x));
    let gaps = |v: &[Complex]| -> Vec<f64> { (0..v.len()).map(|i| (v[(i + 1) % v.len()] - v[i]).norm()).collect() };
    let threshold = opts.refine_factor * stats::median(&gaps(&vertices));
    for _ in 0..opts.max_rounds {
        let g = gaps(&vertices);
        let long: Vec<usize> = (0..g.len()).filter(|&i| g[i] > threshold).collect();
        if long.is_empty() || params.len() + long.len() > opts.max_points {
            break;
        }
        let mids: Vec<f64> = long
            .iter()
            .map(|&i| {
                let next = if i + 1 == params.len() { 1.0 } else { params[i + 1] };
                0.5 * (params[i] + next)
            })
            .collect();
        let new_vertices = opts.exec.map(&mids, |&x| image(x));
        let mut p2 = Vec::with_capacity(params.len() + mids.len());
        let mut v2 = Vec::with_capacity(params.len() + mids.len());
        let mut j = 0;
        for i in 0..params.len() {
            p2.push(params[i]);
            v2.push(vertices[i]);
            if j < long.len() && long[j] == i {
                p2.push(mids[j]);
                v2.push(new_vertices[j]);
                j += 1;
            }
        }
        params = p2;
        vertices = v2;
    }
    let mut marked = Vec::new();
    if opts.mark_tips && !c.is_empty() {
        let tips = tip_positions(c);
        let mut merged: Vec<(f64, Complex, bool)> = params.iter().zip(&vertices).map(|(&x, &v)| (x, v, false)).collect();
        merged.extend(tips.into_iter().map(|(x, w)| (x, w, true)));
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        params = merged.iter().map(|m| m.0).collect();
        vertices = merged.iter().map(|m| m.1).collect();
        marked = merged.iter().enumerate().filter(|(_, m)| m.2).map(|(i, _)| i).collect();
    }
    let ray_eps = vec![opts.eps; vertices.len()];
    Ok(HullBoundary { vertices, params, ray_eps, marked, eps: opts.eps, capacity: c.measured_capacity() })
}

/// Slit tips in the plane, with the circle position of each tip's preimage
/// under the final map. Costs `O(n²)` inverse circle actions.
fn tip_positions(c: &Cluster) -> Vec<(f64, Complex)> {
    let n = c.len();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let p = &c.particles[j];
        let tip = c.prefix(j).eval_unchecked(circle_point(p.theta()) * (1.0 + p.d()));
        let mut x = p.theta();
        for q in &c.particles[j + 1..] {
            x = q.theta() + gamma_at_origin(q.beta(), x - q.theta());
        }
        out.push((x.rem_euclid(1.0), tip));
    }
    out
}

/// A circular run of prominent histogram bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Mass-weighted circular mean of the run, in turns.
    pub centre: f64,
    pub mass: f64,
    pub first_bin: usize,
    pub bins: usize,
}

/// Radial boundary mass `Σ (|w| − 1)·|Δw|` binned by `arg w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerHistogram {
    pub mass: Vec<f64>,
    pub median: f64,
    /// Runs of bins with at least `2 × median` mass.
    pub modes: Vec<Mode>,
}

impl FingerHistogram {
    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn bin_centre(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.mass.len() as f64
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Fraction of the mass whose bin centre lies in the arc `[a, b]` (turns).
    pub fn fraction_in(&self, a: f64, b: f64) -> f64 {
        let len = (b - a).rem_euclid(1.0);
        let m: f64 = (0..self.bins()).filter(|&i| (self.bin_centre(i) - a).rem_euclid(1.0) <= len).map(|i| self.mass[i]).sum();
        m / self.total()
    }
}

/// Prominence threshold relative to the median bin.
pub const MODE_PROMINENCE: f64 = 2.0;

pub fn finger_histogram(boundary: &HullBoundary, bins: usize) -> Result<FingerHistogram> {
    if bins < 8 {
        return domain(format!("finger histogram needs at least 8 bins, got {bins}"));
    }
    let v = &boundary.vertices;
    let mut mass = vec![0.0; bins];
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let mid = 0.5 * (a + b);
        let x = (mid.arg() / TAU).rem_euclid(1.0);
        let bin = ((x * bins as f64) as usize).min(bins - 1);
        mass[bin] += (mid.norm() - 1.0).max(0.0) * (b - a).norm();
    }
    let median = stats::median(&mass);
    let prominent: Vec<bool> = mass.iter().map(|&m| m >= MODE_PROMINENCE * median && m > 0.0).collect();
    let modes = circular_runs(&prominent)
        .into_iter()
        .map(|(first, len)| {
            let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
            for j in 0..len {
                let i = (first + j) % bins;
                let angle = TAU * (i as f64 + 0.5) / bins as f64;
                sx += mass[i] * angle.cos();
                sy += mass[i] * angle.sin();
                total += mass[i];
            }
            Mode { centre: (sy.atan2(sx) / TAU).rem_euclid(1.0), mass: total, first_bin: first, bins: len }
        })
        .collect();
    Ok(FingerHistogram { mass, median, modes })
}

/// Maximal circular runs of `true`, as `(first index, length)`.
fn circular_runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let n = flags.len();
    if flags.iter().all(|&f| f) {
        return vec![(0, n)];
    }
    let start = (0..n).find(|&i| !flags[i]).unwrap();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        let idx = (start + i) % n;
        if flags[idx] {
            let first = idx;
            let mut len = 0;
            while i < n && flags[(start + i) % n] {
                len += 1;
                i += 1;
            }
            runs.push((first, len));
        } else {
            i += 1;
        }
    }
    runs
}

/// Circular distance between positions in turns.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}
