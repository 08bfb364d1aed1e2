//! The boundary flow of a cluster and its limits.
//!
//! Tracking a boundary point through the arrivals gives the harmonic-measure
//! coordinate `X_t(x)`: at an event `(T_k, θ_k, d_k)` every tracked point moves
//! by `x ← θ_k + γ_{P(d_k)}(x − θ_k)`. With rate `lcap⁻¹` the flow converges to
//! the ODE `φ̇ = b(φ)`; its rescaled error `Z = (lcap·ρ)^{1/2}(X − φ)` converges
//! to the linear SDE `dZ = √h(φ) dB + b'(φ) Z dt`. With rate `ρ` and uniform
//! attachment the flow converges to coalescing Brownian motions.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cluster::EventLog;
use crate::conformal::{gamma_at_origin, SlitParticle};
use crate::error::{domain, Error, Result};
use crate::loewner::solve_circle_ode;
use crate::measures::{particle_stats, AngleMeasure, Drift};
use crate::par::Exec;
use crate::quad::{self, Tolerance};
use crate::rng::{stream, Purpose, Rng, StreamId};
use crate::trajectory::Trajectory;

pub use crate::measures::correlation_b;

/// When a simulated path is recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// After every event that moves the point.
    EveryEvent,
    /// At `s + j·dt` (right-continuous values) and at the horizon.
    Grid { dt: f64 },
}

/// Paths of a set of tracked points, with the harmonic measures of the arcs
/// between consecutive points when all paths share their start and samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub trajectories: Vec<Trajectory>,
    pub omega_times: Vec<f64>,
    /// `omega[k][i]`: arc from the `(k−1)`-th to the `k`-th point in cyclic
    /// order at `omega_times[i]`; arc 0 closes the circle.
    pub omega: Vec<Vec<f64>>,
    /// Indices of the trajectories in cyclic order of their starts.
    pub order: Vec<usize>,
}

impl FlowResult {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        let (order, omega_times, omega) = segment_measures(&trajectories);
        Self { trajectories, omega_times, omega, order }
    }

    /// Final lifted positions.
    pub fn finals(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.last_value().unwrap_or(f64::NAN)).collect()
    }
}

fn segment_measures(trajs: &[Trajectory]) -> (Vec<usize>, Vec<f64>, Vec<Vec<f64>>) {
    let mut order: Vec<usize> = (0..trajs.len()).collect();
    order.sort_by(|&a, &b| trajs[a].start.rem_euclid(1.0).total_cmp(&trajs[b].start.rem_euclid(1.0)));
    let comparable = !trajs.is_empty()
        && trajs.iter().all(|t| t.start_time == trajs[0].start_time && t.times == trajs[0].times && !t.is_empty());
    if !comparable {
        return (order, Vec::new(), Vec::new());
    }
    // lift the starts into one period following the cyclic order
    let base = trajs[order[0]].start.rem_euclid(1.0);
    let shift: Vec<f64> = order
        .iter()
        .map(|&i| {
            let s = trajs[i].start;
            base + (s - base).rem_euclid(1.0) - s
        })
        .collect();
    let n = order.len();
    let times = trajs[0].times.clone();
    let omega = (0..n)
        .map(|k| {
            let (cur, prev) = (order[k], order[(k + n - 1) % n]);
            let wrap = if k == 0 { 1.0 } else { 0.0 };
            (0..times.len())
                .map(|i| {
                    let a = trajs[cur].values[i] + shift[k];
                    let b = trajs[prev].values[i] + shift[(k + n - 1) % n];
                    if n == 1 {
                        1.0
                    } else {
                        a + wrap - b
                    }
                })
                .collect()
        })
        .collect();
    (order, times, omega)
}

/// Applies the arrivals of `log` up to `horizon` to the tracked starts `(s, x)`.
pub fn simulate_boundary_flow(log: &EventLog, starts: &[(f64, f64)], horizon: f64, sampling: Sampling) -> Result<FlowResult> {
    if starts.iter().any(|(s, x)| !s.is_finite() || !x.is_finite()) {
        return domain("start points must be finite");
    }
    if horizon > log.horizon * (1.0 + 1e-12) {
        return domain(format!("horizon {horizon} exceeds the event log horizon {}", log.horizon));
    }
    if let Sampling::Grid { dt } = sampling {
        if !(dt > 0.0) {
            return domain("sampling step must be positive");
        }
    }
    let k = starts.len();
    let mut trajs: Vec<Trajectory> =
        starts.iter().map(|&(s, x)| if s <= horizon { Trajectory::new(s, x) } else { Trajectory::empty(s, x) }).collect();
    let mut pos: Vec<f64> = starts.iter().map(|p| p.1).collect();
    let mut next_grid: Vec<usize> = vec![1; k];
    let grid_time = |i: usize, j: usize, dt: f64| starts[i].0 + j as f64 * dt;

    // cyclic order is checked among points sharing the common start time
    let common_start = starts.iter().all(|p| p.0 == starts.first().map_or(0.0, |q| q.0));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| starts[a].1.total_cmp(&starts[b].1));
    let span_ok = k < 2 || starts[order[k - 1]].1 - starts[order[0]].1 < 1.0;
    let check_order = common_start && span_ok && k > 1;

    let mut beta_cache = (f64::NAN, 0.0);
    for e in &log.events {
        if e.t > horizon {
            break;
        }
        if let Sampling::Grid { dt } = sampling {
            for i in 0..k {
                while grid_time(i, next_grid[i], dt) < e.t && grid_time(i, next_grid[i], dt) <= horizon {
                    let g = grid_time(i, next_grid[i], dt);
                    if g > starts[i].0 {
                        trajs[i].push(g, pos[i]);
                    }
                    next_grid[i] += 1;
                }
            }
        }
        if e.d != beta_cache.0 {
            beta_cache = (e.d, SlitParticle::new(e.d, 0.0)?.beta());
        }
        let beta = beta_cache.1;
        for i in 0..k {
            if e.t > starts[i].0 {
                pos[i] = e.theta + gamma_at_origin(beta, pos[i] - e.theta);
                if sampling == Sampling::EveryEvent {
                    trajs[i].push(e.t, pos[i]);
                }
            }
        }
        if check_order {
            for w in order.windows(2) {
                if pos[w[1]] < pos[w[0]] {
                    return Err(Error::Internal(format!("cyclic order broken at event {}", e.k)));
                }
            }
            if pos[order[k - 1]] > pos[order[0]] + 1.0 {
                return Err(Error::Internal(format!("cyclic order broken at event {}", e.k)));
            }
        }
    }
    for i in 0..k {
        if starts[i].0 > horizon {
            continue;
        }
        if let Sampling::Grid { dt } = sampling {
            while grid_time(i, next_grid[i], dt) <= horizon * (1.0 + 1e-14) {
                trajs[i].push(grid_time(i, next_grid[i], dt).min(horizon), pos[i]);
                next_grid[i] += 1;
            }
        }
        if trajs[i].times.last().is_none_or(|&t| t < horizon) {
            trajs[i].push(horizon, pos[i]);
        }
    }
    Ok(FlowResult::new(trajs))
}

/// Deterministic limit `φ̇ = b(φ)` from each start.
pub fn ode_reference_flow(nu: &AngleMeasure, c0: f64, starts: &[(f64, f64)], horizon: f64, step: f64) -> Result<FlowResult> {
    let drift = Drift::new(nu.clone(), c0)?;
    let b = |x: f64| drift.value(x);
    let trajs = starts
        .iter()
        .map(|&(s, x)| if s > horizon { Ok(Trajectory::empty(s, x)) } else { solve_circle_ode(&b, x, s, horizon, step) })
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowResult::new(trajs))
}

/// The limit ODE together with the variational factor `ψ̇ = −b'(φ)ψ` and the
/// variance `V̇ = ψ² h(φ)`, on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPath {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn limit_path(drift: &Drift, start: (f64, f64), horizon: f64, step: f64) -> Result<LimitPath> {
    let (s, x0) = start;
    if !(horizon >= s) {
        return domain(format!("horizon {horizon} precedes the start time {s}"));
    }
    if !(step > 0.0) {
        return domain("integration step must be positive");
    }
    let nu = drift.measure();
    let field = |y: [f64; 3]| -> [f64; 3] {
        let b = drift.value(y[0]);
        let b = if b.is_nan() { 0.0 } else { b.clamp(-1e3, 1e3) };
        let db = drift.derivative(y[0]);
        let db = if db.is_finite() { db } else { 0.0 };
        [b, -db * y[1], y[1] * y[1] * nu.density(y[0])]
    };
    let axpy = |y: [f64; 3], h: f64, k: [f64; 3]| [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]];
    let mut out = LimitPath { times: vec![s], phi: vec![x0], psi: vec![1.0], variance: vec![0.0] };
    let mut y = [x0, 1.0, 0.0];
    let mut now = s;
    let n = ((horizon - s) / step - 1e-9).ceil().max(0.0) as usize;
    for k in 1..=n {
        let target = if k == n { horizon } else { s + k as f64 * step };
        while now < target {
            let k1 = field(y);
            let h = (target - now).min(0.1 / k1[0].abs().max(1e-300));
            let k2 = field(axpy(y, 0.5 * h, k1));
            let k3 = field(axpy(y, 0.5 * h, k2));
            let k4 = field(axpy(y, h, k3));
            for j in 0..3 {
                y[j] += h * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0;
            }
            now = if h == target - now { target } else { now + h };
        }
        out.times.push(now);
        out.phi.push(y[0]);
        out.psi.push(y[1]);
        out.variance.push(y[2]);
    }
    Ok(out)
}

/// Rescaled fluctuations of one tracked point about the limit ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationResult {
    /// `Z^P_t = (lcap·ρ)^{1/2}(X_t − φ_t)`.
    pub z_path: Trajectory,
    pub psi: Trajectory,
    /// `∫_s^t ψ_u² h(φ_u) du`.
    pub variance_profile: Trajectory,
    pub x_path: Trajectory,
    pub phi_path: Trajectory,
    /// `(lcap·ρ)^{1/2}`.
    pub scale: f64,
}

/// `Z^P` along the flow driven by `log`, with `ψ` and the limit variance.
pub fn fluctuation_paths(
    log: &EventLog,
    nu: &AngleMeasure,
    c0: f64,
    start: (f64, f64),
    horizon: f64,
    step: f64,
) -> Result<FluctuationResult> {
    let d = match log.constant_diameter() {
        Some(d) => d,
        None if log.is_empty() => return domain("fluctuations need a non-empty event log"),
        None => return Err(Error::UnsupportedMeasure("fluctuation scaling needs a constant-diameter log".into())),
    };
    let stats = particle_stats(&SlitParticle::new(d, 0.0)?);
    let scale = (stats.lcap * stats.rho).sqrt();
    let drift = Drift::new(nu.clone(), c0)?;
    let lp = limit_path(&drift, start, horizon, step)?;
    let x = simulate_boundary_flow(log, &[start], horizon, Sampling::Grid { dt: step })?.trajectories.remove(0);
    let mut z_path = Trajectory::empty(start.0, 0.0);
    let mut psi = Trajectory::empty(start.0, 1.0);
    let mut variance_profile = Trajectory::empty(start.0, 0.0);
    let mut phi_path = Trajectory::empty(start.0, start.1);
    for (i, &t) in lp.times.iter().enumerate() {
        let xv = x.value_before(t).unwrap_or(start.1);
        z_path.push(t, if i == 0 { 0.0 } else { scale * (xv - lp.phi[i]) });
        psi.push(t, lp.psi[i]);
        variance_profile.push(t, lp.variance[i]);
        phi_path.push(t, lp.phi[i]);
    }
    Ok(FluctuationResult { z_path, psi, variance_profile, x_path: x, phi_path, scale })
}

/// Euler–Maruyama sampler of `dZ = √h(φ) dB + b'(φ) Z dt`, `Z_s = 0`, along a
/// precomputed limit path.
#[derive(Debug, Clone)]
pub struct LimitSde {
    pub path: LimitPath,
    sqrt_h: Vec<f64>,
    db: Vec<f64>,
}

impl LimitSde {
    pub fn new(nu: &AngleMeasure, c0: f64, start: (f64, f64), horizon: f64, step: f64) -> Result<Self> {
        let drift = Drift::new(nu.clone(), c0)?;
        let path = limit_path(&drift, start, horizon, step)?;
        let sqrt_h = path.phi.iter().map(|&p| nu.density(p).sqrt()).collect();
        let db = path
            .phi
            .iter()
            .map(|&p| {
                let v = drift.derivative(p);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { path, sqrt_h, db })
    }

    /// `∫ ψ² h` over the whole path.
    pub fn variance_integral(&self) -> f64 {
        *self.path.variance.last().unwrap()
    }

    pub fn psi_end(&self) -> f64 {
        *self.path.psi.last().unwrap()
    }

    /// One sample path.
    pub fn sample(&self, rng: &mut Rng) -> Trajectory {
        let t = &self.path.times;
        let mut out = Trajectory::new(t[0], 0.0);
        let mut z = 0.0;
        for (i, &ti) in t.iter().enumerate().skip(1) {
            z = self.step(z, i, rng);
            out.push(ti, z);
        }
        out
    }

    /// `Z` at the horizon, without storing the path.
    pub fn sample_end(&self, rng: &mut Rng) -> f64 {
        (1..self.path.times.len()).fold(0.0, |z, i| self.step(z, i, rng))
    }

    #[inline]
    fn step(&self, z: f64, i: usize, rng: &mut Rng) -> f64 {
        let dt = self.path.times[i] - self.path.times[i - 1];
        let g: f64 = rng.sample(StandardNormal);
        z + self.db[i - 1] * z * dt + self.sqrt_h[i - 1] * dt.sqrt() * g
    }
}

/// One path of the limit SDE from the Gaussian stream of replica 0.
pub fn simulate_limit_sde(
    nu: &AngleMeasure,
    c0: f64,
    start: (f64, f64),
    horizon: f64,
    seed: u64,
    step: f64,
) -> Result<Trajectory> {
    let sde = LimitSde::new(nu, c0, start, horizon, step)?;
    let mut rng = stream(seed, StreamId::new(0, Purpose::Gaussian));
    Ok(sde.sample(&mut rng))
}

/// Coalescing Brownian motions on the circle started at time 0, replica 0.
pub fn coalescing_bm(starts: &[f64], horizon: f64, seed: u64, step: f64) -> Result<FlowResult> {
    coalescing_bm_replica(starts, horizon, seed, 0, step)
}

/// Independent Brownian increments until two neighbouring lifted paths cross
/// within a step; from then on the pair moves with one shared increment.
pub fn coalescing_bm_replica(starts: &[f64], horizon: f64, seed: u64, replica: u64, step: f64) -> Result<FlowResult> {
    if !(step > 0.0) || !(horizon >= 0.0) {
        return domain("coalescing flow needs a positive step and a non-negative horizon");
    }
    let n = starts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| starts[a].rem_euclid(1.0).total_cmp(&starts[b].rem_euclid(1.0)));
    for w in order.windows(2) {
        if (starts[w[1]].rem_euclid(1.0) - starts[w[0]].rem_euclid(1.0)).abs() < 1e-12 {
            return domain("coalescing flow needs distinct starts");
        }
    }
    // lifted values in cyclic order within one period
    let base = starts.get(order[0]).map_or(0.0, |s| s.rem_euclid(1.0));
    let lift: Vec<f64> = order.iter().map(|&i| base + (starts[i] - base).rem_euclid(1.0) - starts[i]).collect();
    let mut x: Vec<f64> = order.iter().zip(&lift).map(|(&i, l)| starts[i] + l).collect();
    // group[i]: representative of the coalesced block containing sorted point i
    let mut group: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, StreamId::new(replica, Purpose::Gaussian));
    let steps = ((horizon / step) - 1e-9).ceil().max(0.0) as usize;
    let record_every = (steps / 1000).max(1);
    let mut trajs: Vec<Trajectory> = starts.iter().map(|&s| Trajectory::new(0.0, s)).collect();
    let mut noise = vec![0.0; n];
    let mut t = 0.0;
    for k in 1..=steps {
        let h = if k == steps { horizon - t } else { step };
        let sd = h.sqrt();
        for i in 0..n {
            if group[i] == i {
                noise[i] = sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        for i in 0..n {
            x[i] += noise[group[i]];
        }
        t = if k == steps { horizon } else { t + h };
        // merge neighbours whose paths crossed
        if n > 1 {
            for i in 0..n {
                let j = (i + 1) % n;
                if group[i] == group[j] {
                    continue;
                }
                let gap = if j == 0 { x[0] + 1.0 - x[i] } else { x[j] - x[i] };
                if gap > 0.0 {
                    continue;
                }
                let (keep, gone) = (group[i], group[j]);
                // move the block after i onto x[i], one period down past the wrap
                let mut val = x[i];
                let mut m = i;
                loop {
                    if m + 1 == n {
                        val -= 1.0;
                    }
                    m = (m + 1) % n;
                    if group[m] != gone {
                        break;
                    }
                    x[m] = val;
                    group[m] = keep;
                }
            }
        }
        if k % record_every == 0 || k == steps {
            for (si, &i) in order.iter().enumerate() {
                trajs[i].push(t, x[si] - lift[si]);
            }
        }
    }
    Ok(FlowResult::new(trajs))
}

/// `sup |a − b|` over tracked points and the union of their sample times, with
/// linear interpolation between samples.
pub fn flow_distance(a: &FlowResult, b: &FlowResult) -> Result<f64> {
    if a.trajectories.len() != b.trajectories.len() {
        return domain("flows track different numbers of points");
    }
    let mut sup: f64 = 0.0;
    for (p, q) in a.trajectories.iter().zip(&b.trajectories) {
        if p.start_time != q.start_time || (p.start - q.start).abs() > 1e-12 {
            return domain("flows track different start points");
        }
        for &t in p.times.iter().chain(&q.times) {
            if let (Some(u), Some(v)) = (p.value_at(t), q.value_at(t)) {
                sup = sup.max((u - v).abs());
            }
        }
    }
    Ok(sup)
}

/// Uniform attachment at rate `ρ(P)` simulated by splitting each tracked
/// point's arrivals: those within `window` of the point are applied exactly,
/// the remaining many tiny displacements are replaced by a Gaussian with the
/// same mean and variance on a sub-grid of step `far_step`.
#[derive(Debug, Clone)]
pub struct WindowedUniformFlow {
    pub d: f64,
    pub rho: f64,
    pub window: f64,
    pub far_step: f64,
    beta: f64,
    near: Poisson<f64>,
    far_mean_rate: f64,
    far_sd_rate: f64,
}

impl WindowedUniformFlow {
    pub fn new(d: f64, window: f64, far_step: f64) -> Result<Self> {
        if !(window > 0.0 && window < 0.5) || !(far_step > 0.0) {
            return domain("window must lie in (0, 1/2) and the sub-grid step must be positive");
        }
        let p = SlitParticle::new(d, 0.0)?;
        let stats = particle_stats(&p);
        let rho = stats.rho;
        let far = |g: &dyn Fn(f64) -> f64| {
            let tol = Tolerance::rel(1e-10).with_abs(1e-300);
            let f = |u: f64| g(p.gamma_tilde(u));
            let pts: Vec<f64> =
                [window, 3.0 * window, 10.0 * window, 0.5].into_iter().filter(|&v| v >= window && v <= 0.5).collect();
            let right = quad::integrate_with_breaks(f, &pts, tol).value;
            let neg: Vec<f64> = pts.iter().rev().map(|v| -v).collect();
            let left = quad::integrate_with_breaks(f, &neg, tol).value;
            left + right
        };
        let far_second = far(&|g| g * g);
        let far_mean = far(&|g| g);
        let near_mean = 2.0 * window * rho * far_step;
        let near = Poisson::new(near_mean).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(Self {
            d,
            rho,
            window,
            far_step,
            beta: p.beta(),
            near,
            far_mean_rate: rho * far_mean,
            far_sd_rate: (rho * far_second).sqrt(),
        })
    }

    /// Fraction of the per-unit-time variance carried by the Gaussian part
    /// (the total is 1 by the definition of `ρ`).
    pub fn far_fraction(&self) -> f64 {
        self.far_sd_rate * self.far_sd_rate
    }

    /// Advances one point by a sub-grid step of length `h ≤ far_step`.
    pub fn advance(&self, x: &mut f64, h: f64, arrivals: &mut Rng, gauss: &mut Rng) {
        let count = if h == self.far_step {
            self.near.sample(arrivals) as u64
        } else {
            Poisson::new(2.0 * self.window * self.rho * h).map(|p| p.sample(arrivals) as u64).unwrap_or(0)
        };
        for _ in 0..count {
            let theta = *x + self.window * (2.0 * arrivals.gen::<f64>() - 1.0);
            *x = theta + gamma_at_origin(self.beta, *x - theta);
        }
        let g: f64 = gauss.sample(StandardNormal);
        *x += self.far_mean_rate * h + self.far_sd_rate * h.sqrt() * g;
    }

    /// Independent paths of the tracked points, sampled every `sample_dt`
    /// (a multiple of the sub-grid step).
    pub fn simulate(&self, starts: &[f64], horizon: f64, sample_dt: f64, seed: u64, replica: u64) -> Result<FlowResult> {
        let every = ((sample_dt / self.far_step).round() as usize).max(1);
        let steps = ((horizon / self.far_step) - 1e-9).ceil().max(0.0) as usize;
        let mut trajs = Vec::with_capacity(starts.len());
        for (i, &x0) in starts.iter().enumerate() {
            let sub = replica * 1024 + i as u64;
            let mut arrivals = stream(seed, StreamId::new(sub, Purpose::Arrivals));
            let mut gauss = stream(seed, StreamId::new(sub, Purpose::Gaussian));
            let mut tr = Trajectory::new(0.0, x0);
            let mut x = x0;
            let mut t = 0.0;
            for k in 1..=steps {
                let h = if k == steps { horizon - t } else { self.far_step };
                self.advance(&mut x, h, &mut arrivals, &mut gauss);
                t = if k == steps { horizon } else { t + h };
                if k % every == 0 || k == steps {
                    tr.push(t, x);
                }
            }
            trajs.push(tr);
        }
        Ok(FlowResult::new(trajs))
    }
}

/// Monte Carlo replicas of a per-replica computation, merged in replica order.
pub fn replicas<R: Send>(n: usize, exec: Exec, f: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
    exec.map_range(n, |r| f(r as u64))
}
