//! The Loewner–Kufarev equation `∂_t f_t(z) = z f_t'(z) ∫ (z+ζ)/(z−ζ) dμ_t(ζ)`
//! driven by a family of circle probability measures.
//!
//! `f_T` is evaluated pointwise along characteristics: the backward flow
//! `ḣ_s = h_s ∫ (h_s+ζ)/(h_s−ζ) dμ_{T−s}(ζ)`, `h_0 = z`, gives `f_T(z) = h_T`.
//! The real part of the kernel is positive outside the disk, so `|h_s|`
//! increases along the flow and points are only lost to round-off.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conformal::{circle_point, Complex};
use crate::error::{domain, Error, Result};
use crate::geometry;
use crate::measures::{AngleMeasure, Drift};
use crate::par::Exec;
use crate::quad::{self, Tolerance};
use crate::trajectory::Trajectory;

/// Default integration step of the backward flow and the circle ODE.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Smallest step the backward flow may take near the support of the driver.
pub const MIN_STEP: f64 = 1e-8;
/// Radius at which the derivative at infinity is measured.
pub const CAPACITY_RADIUS: f64 = 1e8;

/// Time-dependent driver `μ_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum DrivingMeasure {
    /// `μ_t ≡ ν`.
    Constant(AngleMeasure),
    /// `μ_t = δ_{e^{2πiθ_k}}` on `[T_{k−1}, T_k)`; `times` starts at 0 and has
    /// one more entry than `angles`.
    PiecewisePointMass { times: Vec<f64>, angles: Vec<f64> },
}

/// Driver frozen at one instant.
#[derive(Debug, Clone, Copy)]
enum Slice<'a> {
    Density(&'a AngleMeasure),
    Atom(Complex),
}

impl DrivingMeasure {
    pub fn constant(nu: AngleMeasure) -> Self {
        DrivingMeasure::Constant(nu)
    }

    pub fn piecewise_point_mass(times: Vec<f64>, angles: Vec<f64>) -> Result<Self> {
        if times.len() != angles.len() + 1 {
            return domain("piecewise driver needs one more switch time than angles");
        }
        if times[0] != 0.0 {
            return domain("piecewise driver must start at time 0");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("piecewise driver times must be strictly increasing");
        }
        Ok(DrivingMeasure::PiecewisePointMass { times, angles: angles.into_iter().map(|a| a.rem_euclid(1.0)).collect() })
    }

    /// Driver of a particle sequence: particle `k` contributes the atom at
    /// `angles[k]` for a time equal to its capacity `lcaps[k]`.
    pub fn from_particles(lcaps: &[f64], angles: &[f64]) -> Result<Self> {
        let mut times = Vec::with_capacity(lcaps.len() + 1);
        let mut t = 0.0;
        times.push(t);
        for &c in lcaps {
            t += c;
            times.push(t);
        }
        Self::piecewise_point_mass(times, angles.to_vec())
    }

    /// Total time covered by a piecewise driver; `None` for a constant driver.
    pub fn horizon(&self) -> Option<f64> {
        match self {
            DrivingMeasure::Constant(_) => None,
            DrivingMeasure::PiecewisePointMass { times, .. } => times.last().copied(),
        }
    }

    fn slice_at(&self, t: f64) -> Slice<'_> {
        match self {
            DrivingMeasure::Constant(nu) => match nu {
                AngleMeasure::PointMass { at } => Slice::Atom(circle_point(*at)),
                nu => Slice::Density(nu),
            },
            DrivingMeasure::PiecewisePointMass { times, angles } => {
                let k = times.partition_point(|&s| s <= t).clamp(1, angles.len()) - 1;
                Slice::Atom(circle_point(angles[k]))
            }
        }
    }

    /// Maximal intervals `[a, b)` of forward time on which the driver is constant.
    fn pieces(&self, horizon: f64) -> Vec<(f64, f64)> {
        match self {
            DrivingMeasure::Constant(_) => vec![(0.0, horizon)],
            DrivingMeasure::PiecewisePointMass { times, .. } => {
                let mut v = Vec::new();
                for w in times.windows(2) {
                    if w[0] >= horizon {
                        break;
                    }
                    v.push((w[0], w[1].min(horizon)));
                }
                v
            }
        }
    }
}

/// `∫ (z+ζ)/(z−ζ) dμ_t(ζ)` for `|z| > 1`.
pub fn herglotz_integral(mu: &DrivingMeasure, t: f64, z: Complex) -> Result<Complex> {
    if !(z.norm() > 1.0) {
        return domain(format!("the kernel integral needs |z| > 1, got |z| = {}", z.norm()));
    }
    Ok(kernel(mu.slice_at(t), z))
}

fn kernel(slice: Slice<'_>, z: Complex) -> Complex {
    match slice {
        Slice::Atom(xi) => (z + xi) / (z - xi),
        Slice::Density(nu) => match nu {
            AngleMeasure::Uniform => Complex::new(1.0, 0.0),
            AngleMeasure::MFold { m } => Complex::new(1.0, 0.0) - z.powi(-(*m as i32)),
            AngleMeasure::Interval { eta, smoothing: None } => {
                let one = Complex::new(1.0, 0.0);
                let a = (one - circle_point(*eta) / z).ln();
                let b = (one - one / z).ln();
                one + Complex::new(0.0, 1.0 / (PI * eta)) * (a - b)
            }
            nu => herglotz_quadrature(nu, z),
        },
    }
}

/// Quadrature evaluation of the kernel integral against a density, refined
/// around `arg z` where the Poisson kernel peaks.
pub fn herglotz_quadrature(nu: &AngleMeasure, z: Complex) -> Complex {
    let r = z.norm();
    let centre = (z.arg() / TAU).rem_euclid(1.0);
    let mut breaks = vec![0.0, 1.0];
    for k in [0.0, 1.0, 4.0, 16.0] {
        for s in [-1.0, 1.0] {
            breaks.push((centre + s * k * (r - 1.0)).rem_euclid(1.0));
        }
    }
    breaks.extend(nu.singular_points().into_iter().map(|e| e.rem_euclid(1.0)));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integrand = |y: f64| {
        let zeta = circle_point(y);
        (z + zeta) / (z - zeta) * nu.density(y)
    };
    let tol = Tolerance::abs(1e-11);
    let re = quad::integrate_with_breaks(|y| integrand(y).re, &breaks, tol).value;
    let im = quad::integrate_with_breaks(|y| integrand(y).im, &breaks, tol).value;
    Complex::new(re, im)
}

/// Classical RK4 on `u' = u·K(u)` for backward time `duration`, starting at
/// backward time `s0`. The step is shortened so that one step moves `u` by at
/// most a tenth of its distance to the support of the driver.
fn backward_piece(slice: Slice<'_>, u0: Complex, duration: f64, step: f64, s0: f64) -> Result<Complex> {
    let field = |u: Complex| u * kernel(slice, u);
    let dist = |u: Complex| match slice {
        Slice::Atom(xi) => (u - xi).norm(),
        Slice::Density(_) => u.norm() - 1.0,
    };
    let mut u = u0;
    let mut elapsed = 0.0;
    while elapsed < duration {
        let k1 = field(u);
        let speed = k1.norm() / u.norm().max(1.0);
        let cap = if speed > 0.0 { 0.1 * dist(u) / speed } else { step };
        let h = step.min(cap.max(MIN_STEP)).min(duration - elapsed);
        let k2 = field(u + k1 * (0.5 * h));
        let k3 = field(u + k2 * (0.5 * h));
        let k4 = field(u + k3 * h);
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        elapsed += h;
        if !(u.norm() > 1.0 + 1e-12) || !u.re.is_finite() || !u.im.is_finite() {
            return Err(Error::Absorbed { time: s0 + elapsed });
        }
    }
    Ok(u)
}

/// `f_T(z)` by the backward flow. An absorbed point reports the backward time
/// at which it reached the unit circle.
pub fn solve_map_at_point(mu: &DrivingMeasure, horizon: f64, z: Complex, step: f64) -> Result<Complex> {
    if !(z.norm() > 1.0) {
        return domain(format!("f_T is defined for |z| > 1, got |z| = {}", z.norm()));
    }
    if !(step > 0.0) {
        return domain("integration step must be positive");
    }
    if !(horizon >= 0.0) {
        return domain("time must be non-negative");
    }
    if let Some(h) = mu.horizon() {
        if horizon > h * (1.0 + 1e-12) {
            return domain(format!("driver covers [0, {h}], asked for time {horizon}"));
        }
    }
    let mut u = z;
    let mut s = 0.0;
    // the backward flow reads the driver from time T downwards
    for (a, b) in mu.pieces(horizon).into_iter().rev() {
        u = backward_piece(mu.slice_at(a), u, b - a, step, s)?;
        s += b - a;
    }
    Ok(u)
}

/// `f_T` at many points, in parallel when `exec` allows.
pub fn solve_map_many(mu: &DrivingMeasure, horizon: f64, zs: &[Complex], step: f64, exec: Exec) -> Vec<Result<Complex>> {
    exec.map(zs, |z| solve_map_at_point(mu, horizon, *z, step))
}

/// Exact `f_T` for the m-fold driver: `(e^{mT}(z^m − 1) + 1)^{1/m}`, with the
/// root continued along `t ∈ [0, T]` from `f_0 = z`.
pub fn mfold_exact(m: u32, horizon: f64, z: Complex) -> Complex {
    let mf = m as f64;
    let zm = z.powi(m as i32);
    let one = Complex::new(1.0, 0.0);
    let steps = 256 + (1024.0 * mf * horizon).ceil() as usize;
    let mut prev = z;
    for k in 1..=steps {
        let t = horizon * k as f64 / steps as f64;
        let w = (zm - one) * (mf * t).exp() + one;
        let root = w.powf(1.0 / mf);
        prev = (0..m)
            .map(|j| root * circle_point(j as f64 / mf))
            .min_by(|a, b| (a - prev).norm().total_cmp(&(b - prev).norm()))
            .unwrap();
    }
    prev
}

/// Options for [`trace_hull_with`].
#[derive(Debug, Clone, Copy)]
pub struct HullOptions {
    /// Offset of the traced circle `|z| = 1 + ε`.
    pub eps: f64,
    pub step: f64,
    /// Halve ε until the polyline moves by less than `refine_tol`.
    pub refine: bool,
    pub refine_tol: f64,
    /// Number of ε-doublings allowed for a ray absorbed by round-off.
    pub retries: u32,
    pub exec: Exec,
}

impl Default for HullOptions {
    fn default() -> Self {
        Self { eps: 1e-3, step: DEFAULT_STEP, refine: false, refine_tol: 1e-4, retries: 3, exec: Exec::default() }
    }
}

/// Closed polyline approximating the boundary of a hull or cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullBoundary {
    pub vertices: Vec<Complex64>,
    /// Preimage angle (turns) of each vertex on `|z| = 1 + ε`.
    pub params: Vec<f64>,
    /// Offset per vertex (larger than `eps` for re-traced rays).
    pub ray_eps: Vec<f64>,
    /// Indices of marked vertices (slit tips of a cluster).
    pub marked: Vec<usize>,
    pub eps: f64,
    /// Measured derivative at infinity.
    pub capacity: f64,
}

impl HullBoundary {
    /// The circle `|z| = radius` sampled at `n` points.
    pub fn circle(radius: f64, n: usize) -> Self {
        let params: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        Self {
            vertices: params.iter().map(|&x| circle_point(x) * radius).collect(),
            ray_eps: vec![radius - 1.0; n],
            params,
            marked: Vec::new(),
            eps: radius - 1.0,
            capacity: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, p: Complex) -> bool {
        geometry::contains(&self.vertices, p)
    }

    pub fn winding_about_origin(&self) -> i32 {
        geometry::winding_number(&self.vertices, Complex::new(0.0, 0.0))
    }

    /// True when this boundary lies strictly inside `outer`.
    pub fn inside(&self, outer: &HullBoundary) -> bool {
        geometry::polygon_inside(&self.vertices, &outer.vertices)
    }

    /// Nesting up to the chord resolution of `outer` (its median edge length).
    pub fn inside_up_to_resolution(&self, outer: &HullBoundary) -> bool {
        geometry::inside_up_to(&self.vertices, &outer.vertices, geometry::median_edge(&outer.vertices))
    }

    pub fn max_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Image of `|z| = 1 + ε` under `f_T` at `n_rays` equally spaced angles.
pub fn trace_hull(mu: &DrivingMeasure, horizon: f64, n_rays: usize) -> Result<HullBoundary> {
    trace_hull_with(mu, horizon, n_rays, &HullOptions::default())
}

pub fn trace_hull_with(mu: &DrivingMeasure, horizon: f64, n_rays: usize, opts: &HullOptions) -> Result<HullBoundary> {
    if n_rays < 16 {
        return domain(format!("hull tracing needs at least 16 rays, got {n_rays}"));
    }
    if !(opts.eps > 0.0) {
        return domain("hull offset ε must be positive");
    }
    let mut hull = trace_once(mu, horizon, n_rays, opts.eps, opts)?;
    if opts.refine {
        let mut eps = opts.eps;
        for _ in 0..6 {
            eps *= 0.5;
            let finer = trace_once(mu, horizon, n_rays, eps, opts)?;
            let moved = hull.vertices.iter().zip(&finer.vertices).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            hull = finer;
            if moved < opts.refine_tol {
                break;
            }
        }
    }
    Ok(hull)
}

fn trace_once(mu: &DrivingMeasure, horizon: f64, n_rays: usize, eps: f64, opts: &HullOptions) -> Result<HullBoundary> {
    let rays = opts.exec.map_range(n_rays, |k| {
        let x = k as f64 / n_rays as f64;
        let mut e = eps;
        let mut last = Error::Internal("no attempt".into());
        for _ in 0..=opts.retries {
            match solve_map_at_point(mu, horizon, circle_point(x) * (1.0 + e), opts.step) {
                Ok(w) => return Ok((w, e)),
                Err(err @ Error::Absorbed { .. }) => {
                    last = err;
                    e *= 2.0;
                }
                Err(err) => return Err(err),
            }
        }
        Err(last)
    });
    let mut vertices = Vec::with_capacity(n_rays);
    let mut ray_eps = Vec::with_capacity(n_rays);
    for r in rays {
        let (w, e) = r?;
        vertices.push(w);
        ray_eps.push(e);
    }
    let far = solve_map_at_point(mu, horizon, Complex::new(CAPACITY_RADIUS, 0.0), opts.step)?;
    Ok(HullBoundary {
        vertices,
        params: (0..n_rays).map(|k| k as f64 / n_rays as f64).collect(),
        ray_eps,
        marked: Vec::new(),
        eps,
        capacity: far.norm() / CAPACITY_RADIUS,
    })
}

/// Lifted solution of `φ̇ = b(φ)` from `(s, x0)` to time `t` by fixed-step RK4.
/// Where `|b|` is large (logarithmic poles of the interval drift) the step is
/// capped at `0.1/|b|`.
pub fn solve_circle_ode(b: &dyn Fn(f64) -> f64, x0: f64, s: f64, t: f64, step: f64) -> Result<Trajectory> {
    if !(t >= s) {
        return domain(format!("end time {t} precedes start time {s}"));
    }
    if !(step > 0.0) {
        return domain("integration step must be positive");
    }
    let f = |x: f64| {
        let v = b(x);
        if v.is_nan() {
            0.0
        } else {
            v.clamp(-1e3, 1e3)
        }
    };
    let mut path = Trajectory::new(s, x0);
    let mut x = x0;
    let mut now = s;
    let n = ((t - s) / step - 1e-9).ceil().max(0.0) as usize;
    for k in 1..=n {
        let target = if k == n { t } else { s + k as f64 * step };
        while now < target {
            let k1 = f(x);
            let h = (target - now).min(0.1 / k1.abs().max(1e-300));
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            now = if h == target - now { target } else { now + h };
        }
        path.push(now, x);
    }
    Ok(path)
}

/// Stability of a zero of the drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: f64,
    pub slope: f64,
    pub stability: Stability,
}

/// Grid on which sign changes of the drift are searched for.
pub const EQUILIBRIUM_GRID: usize = 4096;

/// Zeros of the drift, tagged stable (`b' < 0`) or unstable (`b' > 0`).
pub fn equilibria(drift: &Drift) -> Result<Vec<Equilibrium>> {
    if drift.is_degenerate() {
        return Err(Error::DegenerateDrift);
    }
    equilibria_of(|x| drift.value(x), |x| drift.derivative(x))
}

/// Sign-change roots of a periodic `b` on a 4096-point grid, bisected to 1e−10.
/// Sign changes across poles are rejected by requiring `b` to be small at the
/// refined root.
pub fn equilibria_of(b: impl Fn(f64) -> f64, db: impl Fn(f64) -> f64) -> Result<Vec<Equilibrium>> {
    let n = EQUILIBRIUM_GRID;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| b(x)).collect();
    let scale = vals.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale < 1e-14 {
        return Err(Error::DegenerateDrift);
    }
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..n {
        let (x0, v0) = (xs[i], vals[i]);
        let v1 = vals[(i + 1) % n];
        if v0 == 0.0 {
            roots.push(x0);
            continue;
        }
        if v1 == 0.0 || !(v0 * v1 < 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (x0, x0 + 1.0 / n as f64);
        let neg_lo = v0 < 0.0;
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            let vm = b(mid);
            if (vm < 0.0) == neg_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        if b(r).abs() < 1e-6 * scale.max(1.0) {
            roots.push(r.rem_euclid(1.0));
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-8);
    Ok(roots
        .into_iter()
        .map(|x| {
            let slope = db(x);
            let stability = if slope < 0.0 { Stability::Stable } else { Stability::Unstable };
            Equilibrium { x, slope, stability }
        })
        .collect())
}
