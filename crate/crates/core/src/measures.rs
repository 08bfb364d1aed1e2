//! Attachment-angle laws `ν`, diameter laws `σ`, and the particle statistics
//! that enter the drift of the boundary flow.
//!
//! Densities are with respect to Lebesgue measure on turns and are extended
//! periodically. The principal-value Hilbert transform is always evaluated in
//! the regularized form
//! `H(x) = (1/2π) ∫_0^{1/2} cot(πz) (h(x-z) - h(x+z)) dz`,
//! whose integrand is bounded for differentiable `h`.

use std::f64::consts::{PI, TAU};

use rand::Rng as _;

use crate::conformal::{lcap_of_slit, SlitParticle};
use crate::error::{domain, Error, Result};
use crate::quad::{self, Tolerance};
use crate::rng::Rng;

/// Grid size used for tabulated densities.
pub const TABULATED_GRID: usize = 1024;

/// Step of the centered differences used where no closed-form derivative exists.
pub const FD_STEP: f64 = 1e-5;

/// Attachment law on the circle.
#[derive(Debug, Clone, PartialEq)]
pub enum AngleMeasure {
    Uniform,
    /// Uniform on `[0, η]`; optionally convolved with a C² bump of the given width.
    Interval {
        eta: f64,
        smoothing: Option<f64>,
    },
    /// Density `2 sin²(mπx)`.
    MFold {
        m: u32,
    },
    Tabulated(TabulatedDensity),
    /// Atom at a fixed angle. Only meaningful as a Loewner driver.
    PointMass {
        at: f64,
    },
}

impl AngleMeasure {
    pub fn interval(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return domain(format!("interval length must lie in (0, 1], got {eta}"));
        }
        Ok(AngleMeasure::Interval { eta, smoothing: None })
    }

    /// Interval law smoothed by a C² bump of width `width`.
    pub fn smoothed_interval(eta: f64, width: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return domain(format!("smoothed interval length must lie in (0, 1), got {eta}"));
        }
        if !(width > 0.0 && width < eta.min(1.0 - eta)) {
            return domain(format!("smoothing width {width} must be positive and below min(η, 1-η)"));
        }
        Ok(AngleMeasure::Interval { eta, smoothing: Some(width) })
    }

    pub fn mfold(m: u32) -> Result<Self> {
        if m == 0 {
            return domain("m-fold symmetry needs m ≥ 1");
        }
        Ok(AngleMeasure::MFold { m })
    }

    pub fn point_mass(at: f64) -> Self {
        AngleMeasure::PointMass { at: at.rem_euclid(1.0) }
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, AngleMeasure::PointMass { .. })
    }

    /// Density `h_ν(x mod 1)`. Point masses have none and report `+∞` at the atom.
    pub fn density(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        match self {
            AngleMeasure::Uniform => 1.0,
            AngleMeasure::Interval { eta, smoothing: None } => {
                if x <= *eta {
                    1.0 / eta
                } else {
                    0.0
                }
            }
            AngleMeasure::Interval { eta, smoothing: Some(w) } => smooth_box(x, *eta, *w) / eta,
            AngleMeasure::MFold { m } => 2.0 * (*m as f64 * PI * x).sin().powi(2),
            AngleMeasure::Tabulated(t) => t.eval(x),
            AngleMeasure::PointMass { at } => {
                if x == *at {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// `h_ν'(x)`; zero away from the edges for the sharp interval law.
    pub fn density_derivative(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        match self {
            AngleMeasure::Uniform | AngleMeasure::PointMass { .. } => 0.0,
            AngleMeasure::Interval { smoothing: None, .. } => 0.0,
            AngleMeasure::Interval { eta, smoothing: Some(w) } => smooth_box_derivative(x, *eta, *w) / eta,
            AngleMeasure::MFold { m } => {
                let m = *m as f64;
                TAU * m * (TAU * m * x).sin()
            }
            AngleMeasure::Tabulated(t) => t.derivative(x),
        }
    }

    /// Cumulative distribution on `[0, 1)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            AngleMeasure::Uniform => x,
            AngleMeasure::Interval { eta, smoothing: None } => (x / eta).min(1.0),
            AngleMeasure::Interval { eta, smoothing: Some(w) } => smooth_box_cdf(x, *eta, *w) / eta,
            AngleMeasure::MFold { m } => {
                let m = *m as f64;
                x - (TAU * m * x).sin() / (TAU * m)
            }
            AngleMeasure::Tabulated(t) => t.cdf(x),
            AngleMeasure::PointMass { at } => {
                if x >= *at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse of [`cdf`](Self::cdf) for `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let x = match self {
            AngleMeasure::Uniform => u,
            AngleMeasure::Interval { eta, smoothing: None } => eta * u,
            AngleMeasure::Interval { .. } => invert_monotone(|x| self.cdf(x), |x| self.density(x), u, 0.0, 1.0),
            AngleMeasure::MFold { m } => mfold_quantile(*m, u),
            AngleMeasure::Tabulated(t) => t.quantile(u),
            AngleMeasure::PointMass { at } => *at,
        };
        if x >= 1.0 {
            0.0
        } else {
            x
        }
    }

    /// Draws one angle in `[0, 1)` by inversion.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        self.quantile(rng.gen::<f64>())
    }

    /// Principal-value Hilbert transform `H[ν](x)`.
    pub fn hilbert_transform(&self, x: f64) -> Result<f64> {
        match self {
            AngleMeasure::Uniform => Ok(0.0),
            AngleMeasure::MFold { m } => Ok(-(TAU * *m as f64 * x).sin() / TAU),
            AngleMeasure::Interval { eta, smoothing: None } => Ok(interval_hilbert(*eta, x)),
            AngleMeasure::PointMass { .. } => {
                Err(Error::UnsupportedMeasure("the principal-value transform of a point mass does not exist".into()))
            }
            _ => self.hilbert_transform_quadrature(x),
        }
    }

    /// Regularized-integral evaluation of `H[ν](x)`, for any law with a density.
    pub fn hilbert_transform_quadrature(&self, x: f64) -> Result<f64> {
        if !self.has_density() {
            return Err(Error::UnsupportedMeasure("point mass".into()));
        }
        let x = x.rem_euclid(1.0);
        let f = |z: f64| {
            if z == 0.0 {
                return 2.0 * -self.density_derivative(x) / PI;
            }
            (self.density(x - z) - self.density(x + z)) / (PI * z).tan()
        };
        let mut breaks = vec![0.0, 0.5];
        for e in self.singular_points() {
            // z with x - z ≡ e or x + z ≡ e (mod 1)
            for z in [x - e, e - x] {
                let z = z.rem_euclid(1.0);
                for c in [z, 1.0 - z] {
                    if c > 0.0 && c < 0.5 {
                        breaks.push(c);
                    }
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let r = quad::integrate_with_breaks(f, &breaks, Tolerance::abs(1e-11).with_rel(1e-12));
        Ok(r.value / TAU)
    }

    /// Points where the density is not smooth (edges, and both ends of a smoothing ramp).
    pub fn singular_points(&self) -> Vec<f64> {
        match self {
            AngleMeasure::Interval { eta, smoothing: None } => vec![0.0, *eta],
            AngleMeasure::Interval { eta, smoothing: Some(w) } => {
                let h = 0.5 * w;
                vec![(-h).rem_euclid(1.0), h, eta - h, eta + h]
            }
            AngleMeasure::PointMass { at } => vec![*at],
            _ => Vec::new(),
        }
    }
}

/// `(1/(2π²η)) log|sin(πx) / sin(π(x-η))|`.
fn interval_hilbert(eta: f64, x: f64) -> f64 {
    let num = (PI * x).sin().abs();
    let den = (PI * (x - eta)).sin().abs();
    (num / den).ln() / (2.0 * PI * PI * eta)
}

/// Septic smoothstep: the CDF of the bump `140 t³ (1-t)³` on `[0, 1]`.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
}

fn smoothstep_integral(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(5) * (7.0 + t * (-14.0 + t * (10.0 - 2.5 * t)))
}

fn bump(t: f64) -> f64 {
    if (0.0..=1.0).contains(&t) {
        140.0 * (t * (1.0 - t)).powi(3)
    } else {
        0.0
    }
}

// Indicator of [0, η] convolved with a bump of width w, periodized.
fn smooth_box(x: f64, eta: f64, w: f64) -> f64 {
    let k = |y: f64| smoothstep((y + 0.5 * w) / w);
    (-1..=1).map(|n| k(x + n as f64) - k(x + n as f64 - eta)).sum()
}

fn smooth_box_derivative(x: f64, eta: f64, w: f64) -> f64 {
    let k = |y: f64| bump((y + 0.5 * w) / w) / w;
    (-1..=1).map(|n| k(x + n as f64) - k(x + n as f64 - eta)).sum()
}

fn smooth_box_cdf(x: f64, eta: f64, w: f64) -> f64 {
    let g = |y: f64| {
        if y <= -0.5 * w {
            0.0
        } else if y >= 0.5 * w {
            y
        } else {
            w * smoothstep_integral((y + 0.5 * w) / w)
        }
    };
    (-1..=1)
        .map(|n| {
            let n = n as f64;
            g(x + n) - g(n) - g(x + n - eta) + g(n - eta)
        })
        .sum()
}

/// Safeguarded Newton iteration for `cdf(x) = u` on a bracket.
fn invert_monotone(cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, u: f64, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = cdf(x) - u;
        if f.abs() < 1e-16 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo < 1e-15 {
            break;
        }
        let p = pdf(x);
        let newton = x - f / p;
        x = if p > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    x
}

/// Solves `x - sin(2πmx)/(2πm) = u`. On each cell `[k/m, (k+1)/m)` this is
/// Kepler's equation `φ - sin φ = c` in `φ = 2πm(x - k/m)`.
fn mfold_quantile(m: u32, u: f64) -> f64 {
    let mf = m as f64;
    let k = (u * mf).floor().min(mf - 1.0);
    let c = TAU * (u * mf - k);
    // φ - sin φ is odd about π; solve on [0, π] and reflect
    let (target, reflect) = if c > PI { (TAU - c, true) } else { (c, false) };
    let guess = (6.0 * target).cbrt().min(PI);
    let phi = invert_monotone(|p| p - p.sin(), |p| 1.0 - p.cos(), target, 0.0, PI.max(guess));
    let phi = if reflect { TAU - phi } else { phi };
    (k + phi / TAU) / mf
}

/// Periodic density sampled on a uniform grid and interpolated by a periodic
/// cubic spline (C²).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    values: Vec<f64>,
    second: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TabulatedDensity {
    /// Builds the interpolant from samples at `i/N`, `i = 0..N`. The samples are
    /// resampled to [`TABULATED_GRID`] points when `N` differs and normalized to
    /// unit mass.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 8 {
            return domain("a tabulated density needs at least 8 samples");
        }
        if samples.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return domain("tabulated density samples must be finite and non-negative");
        }
        let values = if samples.len() == TABULATED_GRID {
            samples.to_vec()
        } else {
            let coarse = Self::build(samples.to_vec());
            (0..TABULATED_GRID).map(|i| coarse.eval(i as f64 / TABULATED_GRID as f64)).collect()
        };
        let n = values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() / n;
        if !(mass > 0.0) {
            return domain("tabulated density has zero mass");
        }
        let t = Self::build(values.iter().map(|v| v / mass).collect());
        t.validate()?;
        Ok(t)
    }

    /// Parses `(x, h)` pairs on a uniform grid `x_i = i/N`.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let n = pairs.len();
        for (i, (x, _)) in pairs.iter().enumerate() {
            if (x - i as f64 / n as f64).abs() > 1e-9 {
                return domain(format!("tabulated grid must be x_i = i/{n}; row {i} has x = {x}"));
            }
        }
        let samples: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        Self::from_samples(&samples)
    }

    pub fn from_fn(f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples: Vec<f64> = (0..TABULATED_GRID).map(|i| f(i as f64 / TABULATED_GRID as f64)).collect();
        Self::from_samples(&samples)
    }

    fn build(values: Vec<f64>) -> Self {
        let n = values.len();
        let h = 1.0 / n as f64;
        let rhs: Vec<f64> =
            (0..n).map(|i| 6.0 * (values[(i + 1) % n] - 2.0 * values[i] + values[(i + n - 1) % n]) / (h * h)).collect();
        let second = solve_cyclic(1.0, 4.0, 1.0, &rhs);
        let mut t = Self { values, second, cumulative: Vec::new() };
        let mut acc = 0.0;
        t.cumulative.push(0.0);
        for i in 0..n {
            acc += t.cell_integral(i, 1.0);
            t.cumulative.push(acc);
        }
        t
    }

    fn validate(&self) -> Result<()> {
        let n = self.values.len();
        for i in 0..n {
            for j in 0..8 {
                let x = (i as f64 + j as f64 / 8.0) / n as f64;
                if self.eval(x) < -1e-12 {
                    return domain(format!("cubic interpolant of the density is negative near x = {x:.6}"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        let s = x.rem_euclid(1.0) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        (i, s - i as f64, h)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, t, h) = self.locate(x);
        let n = self.values.len();
        let (y0, y1) = (self.values[i], self.values[(i + 1) % n]);
        let (m0, m1) = (self.second[i], self.second[(i + 1) % n]);
        let u = 1.0 - t;
        u * y0 + t * y1 + h * h / 6.0 * ((u * u * u - u) * m0 + (t * t * t - t) * m1)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (i, t, h) = self.locate(x);
        let n = self.values.len();
        let (y0, y1) = (self.values[i], self.values[(i + 1) % n]);
        let (m0, m1) = (self.second[i], self.second[(i + 1) % n]);
        let u = 1.0 - t;
        (y1 - y0) / h + h / 6.0 * (-(3.0 * u * u - 1.0) * m0 + (3.0 * t * t - 1.0) * m1)
    }

    fn cell_integral(&self, i: usize, t: f64) -> f64 {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        let (y0, y1) = (self.values[i], self.values[(i + 1) % n]);
        let (m0, m1) = (self.second[i], self.second[(i + 1) % n]);
        let u = 1.0 - t;
        h * (y0 * (t - 0.5 * t * t)
            + y1 * 0.5 * t * t
            + h * h / 6.0 * (m0 * (-0.25 * u.powi(4) + 0.5 * u * u - 0.25) + m1 * (0.25 * t.powi(4) - 0.5 * t * t)))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 1.0;
        }
        let (i, t, _) = self.locate(x.max(0.0));
        self.cumulative[i] + self.cell_integral(i, t)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.values.len();
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&u)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        let h = 1.0 / n as f64;
        let lo = i as f64 * h;
        invert_monotone(|x| self.cdf(x), |x| self.eval(x).max(0.0), u, lo, lo + h)
    }
}

/// Solves the cyclic tridiagonal system with constant bands by Sherman–Morrison.
fn solve_cyclic(a: f64, b: f64, c: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let thomas = |diag0: f64, diag_last: f64, r: &[f64]| -> Vec<f64> {
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let diag = |i: usize| {
            if i == 0 {
                diag0
            } else if i == n - 1 {
                diag_last
            } else {
                b
            }
        };
        cp[0] = c / diag(0);
        dp[0] = r[0] / diag(0);
        for i in 1..n {
            let m = diag(i) - a * cp[i - 1];
            cp[i] = c / m;
            dp[i] = (r[i] - a * dp[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        x
    };
    let gamma = -b;
    let y = thomas(b - gamma, b - a * c / gamma, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c;
    let z = thomas(b - gamma, b - a * c / gamma, &u);
    let factor = (y[0] + a * y[n - 1] / gamma) / (1.0 + z[0] + a * z[n - 1] / gamma);
    y.iter().zip(&z).map(|(yi, zi)| yi - factor * zi).collect()
}

/// The limiting drift `b(x) = c0 h_ν(x) + H[ν](x)` of the boundary flow.
#[derive(Debug, Clone)]
pub struct Drift {
    nu: AngleMeasure,
    c0: f64,
}

impl Drift {
    pub fn new(nu: AngleMeasure, c0: f64) -> Result<Self> {
        if !nu.has_density() {
            return Err(Error::UnsupportedMeasure("the drift needs a law with a density".into()));
        }
        Ok(Self { nu, c0 })
    }

    pub fn measure(&self) -> &AngleMeasure {
        &self.nu
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn value(&self, x: f64) -> f64 {
        let h = if self.c0 == 0.0 { 0.0 } else { self.c0 * self.nu.density(x) };
        h + self.nu.hilbert_transform(x).unwrap_or(f64::NAN)
    }

    /// `b'(x)`: analytic for the closed-form laws, centered differences otherwise.
    pub fn derivative(&self, x: f64) -> f64 {
        let c0_term = self.c0 * self.nu.density_derivative(x);
        match &self.nu {
            AngleMeasure::Uniform => c0_term,
            AngleMeasure::MFold { m } => {
                let m = *m as f64;
                c0_term - m * (TAU * m * x).cos()
            }
            AngleMeasure::Interval { eta, smoothing: None } => {
                let cot = |y: f64| 1.0 / (PI * y).tan();
                (cot(x) - cot(x - eta)) / (TAU * eta)
            }
            _ => (self.value(x + FD_STEP) - self.value(x - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    /// True when `b` vanishes identically (uniform law with `c0 = 0`).
    pub fn is_degenerate(&self) -> bool {
        self.nu == AngleMeasure::Uniform && self.c0 == 0.0
    }
}

/// `b(x)` as a free function.
pub fn drift_b(nu: &AngleMeasure, c0: f64, x: f64) -> Result<f64> {
    Ok(c0 * nu.density(x) + nu.hilbert_transform(x)?)
}

fn displacement_breaks(d: f64) -> Vec<f64> {
    let mut v = vec![-0.5, 0.0, 0.5];
    for k in [1.0, 3.0, 10.0] {
        if k * d < 0.5 {
            v.push(k * d);
            v.push(-k * d);
        }
    }
    v.sort_by(f64::total_cmp);
    v
}

/// Convolution `β_ν(x) = ∫_0^1 γ̃_P(x - z) h_ν(z) dz` of the particle
/// displacement with the attachment density.
pub fn beta_nu(nu: &AngleMeasure, p: &SlitParticle, x: f64) -> f64 {
    let origin = SlitParticle::new(p.d(), 0.0).expect("valid particle");
    if let AngleMeasure::PointMass { at } = nu {
        return origin.gamma_tilde(x - at);
    }
    // substitute u = x - z; γ̃ jumps at u = 0 and varies on the scale d around it
    let mut breaks = displacement_breaks(p.d());
    for e in nu.singular_points() {
        let u = x - e;
        breaks.push(u - u.round());
    }
    breaks.sort_by(f64::total_cmp);
    let f = |u: f64| origin.gamma_tilde(u) * nu.density(x - u);
    let scale = origin.max_displacement();
    quad::integrate_with_breaks(f, &breaks, Tolerance::rel(1e-8).with_abs(1e-13 * scale)).value
}

/// Moments of the displacement of one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleStats {
    pub d: f64,
    pub lcap: f64,
    /// `ρ(P)`, defined by `ρ ∫ γ̃² = 1`.
    pub rho: f64,
    /// `∫ γ̃`.
    pub mean_shift: f64,
    /// `∫ γ̃²`.
    pub second_moment: f64,
    /// `lcap⁻¹ ∫ γ̃`.
    pub c0_hat: f64,
}

/// Integrates `g(γ̃(u))` over one period with the displacement breakpoints.
pub fn displacement_integral(d: f64, g: impl Fn(f64) -> f64) -> f64 {
    let p = SlitParticle::new(d, 0.0).expect("valid particle");
    let f = |u: f64| g(p.gamma_tilde(u));
    let breaks = displacement_breaks(d);
    let split = breaks.iter().position(|&b| b == 0.0).unwrap();
    let tol = Tolerance::rel(1e-12).with_abs(1e-300);
    let left = quad::integrate_with_breaks(f, &breaks[..=split], tol).value;
    let right = quad::integrate_with_breaks(f, &breaks[split..], tol).value;
    left + right
}

pub fn particle_stats(p: &SlitParticle) -> ParticleStats {
    let d = p.d();
    let second_moment = displacement_integral(d, |g| g * g);
    let mean_shift = displacement_integral(d, |g| g);
    ParticleStats { d, lcap: p.lcap(), rho: 1.0 / second_moment, mean_shift, second_moment, c0_hat: mean_shift / p.lcap() }
}

/// Law of the particle diameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DiameterLaw {
    Constant(f64),
    Tabulated { atoms: Vec<f64>, weights: Vec<f64> },
}

impl DiameterLaw {
    pub fn constant(d: f64) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return domain(format!("diameter must be positive, got {d}"));
        }
        Ok(DiameterLaw::Constant(d))
    }

    pub fn tabulated(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return domain("diameter law needs matching, non-empty atoms and weights");
        }
        if atoms.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return domain("diameter atoms must be positive and finite");
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return domain("diameter weights must be non-negative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return domain(format!("diameter weights must sum to 1, got {total}"));
        }
        Ok(DiameterLaw::Tabulated { atoms, weights })
    }

    /// `(d_i, p_i)` pairs.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            DiameterLaw::Constant(d) => vec![(*d, 1.0)],
            DiameterLaw::Tabulated { atoms, weights } => atoms.iter().copied().zip(weights.iter().copied()).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            DiameterLaw::Constant(_) => true,
            DiameterLaw::Tabulated { atoms, .. } => atoms.iter().all(|a| *a == atoms[0]),
        }
    }

    /// `σ₃ = E[d³]`.
    pub fn third_moment(&self) -> f64 {
        self.atoms().iter().map(|(d, p)| p * d.powi(3)).sum()
    }

    pub fn mean_lcap(&self) -> f64 {
        self.atoms().iter().map(|(d, p)| p * lcap_of_slit(*d).unwrap_or(f64::NAN)).sum()
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            DiameterLaw::Constant(d) => *d,
            DiameterLaw::Tabulated { atoms, weights } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().unwrap()
            }
        }
    }
}

/// `ρ(σ)`, defined by `ρ(σ) Σ_i p_i ∫ γ̃_{P(d_i)}² = 1`.
pub fn rho_sigma(law: &DiameterLaw) -> Result<f64> {
    let atoms = law.atoms();
    if atoms.is_empty() {
        return domain("empty diameter law");
    }
    let s: f64 = atoms.iter().map(|(d, p)| p * displacement_integral(*d, |g| g * g)).sum();
    Ok(1.0 / s)
}

/// Spatial correlation of the jumps at two points,
/// `ρ ∫ γ̃(x - z) γ̃(x' - z) h_ν(z) dz`.
pub fn correlation_b(nu: &AngleMeasure, p: &SlitParticle, x: f64, x2: f64) -> f64 {
    let stats = particle_stats(p);
    let origin = SlitParticle::new(p.d(), 0.0).expect("valid particle");
    let mut breaks = vec![0.0, 1.0];
    for c in [x, x2] {
        for k in [0.0, 1.0, -1.0, 3.0, -3.0, 10.0, -10.0] {
            breaks.push((c + k * p.d()).rem_euclid(1.0));
        }
    }
    for e in nu.singular_points() {
        breaks.push(e.rem_euclid(1.0));
    }
    breaks.sort_by(f64::total_cmp);
    let f = |z: f64| origin.gamma_tilde(x - z) * origin.gamma_tilde(x2 - z) * nu.density(z);
    let tol = Tolerance::rel(1e-9).with_abs(1e-16 * stats.second_moment);
    stats.rho * quad::integrate_with_breaks(f, &breaks, tol).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose, StreamId};
    use crate::stats;

    fn all_density_laws() -> Vec<AngleMeasure> {
        vec![
            AngleMeasure::Uniform,
            AngleMeasure::interval(0.5).unwrap(),
            AngleMeasure::interval(0.25).unwrap(),
            AngleMeasure::smoothed_interval(0.3, 1e-3).unwrap(),
            AngleMeasure::mfold(1).unwrap(),
            AngleMeasure::mfold(3).unwrap(),
            AngleMeasure::Tabulated(
                TabulatedDensity::from_fn(|x| 1.0 + 0.5 * (TAU * x).cos() + 0.2 * (3.0 * TAU * x).sin()).unwrap(),
            ),
        ]
    }

    #[test]
    fn density_examples() {
        assert_eq!(AngleMeasure::Uniform.density(0.37), 1.0);
        assert!((AngleMeasure::mfold(3).unwrap().density(1.0 / 12.0) - 1.0).abs() < 1e-14);
        let i = AngleMeasure::interval(0.5).unwrap();
        assert_eq!(i.density(0.25), 2.0);
        assert_eq!(i.density(0.75), 0.0);
        assert_eq!(i.density(1.25), 2.0);
    }

    #[test]
    fn densities_are_normalized() {
        for nu in all_density_laws() {
            let mut breaks: Vec<f64> = nu.singular_points().into_iter().filter(|e| *e > 0.0 && *e < 1.0).collect();
            breaks.push(0.0);
            breaks.push(1.0);
            breaks.sort_by(f64::total_cmp);
            let total: f64 = breaks.windows(2).map(|w| quad::gauss_legendre(|x| nu.density(x), w[0], w[1], 2048)).sum();
            assert!((total - 1.0).abs() < 1e-10, "{nu:?}: {total}");
            assert!((nu.cdf(1.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for nu in all_density_laws() {
            for k in 0..100 {
                let u = (k as f64 + 0.5) / 100.0;
                let x = nu.quantile(u);
                assert!((0.0..1.0).contains(&x));
                assert!((nu.cdf(x) - u).abs() < 1e-10, "{nu:?} u={u} x={x} F={}", nu.cdf(x));
            }
        }
    }

    #[test]
    fn uniform_sampler_passes_ks() {
        let mut rng = stream(11, StreamId::new(0, Purpose::Angles));
        let xs: Vec<f64> = (0..100_000).map(|_| AngleMeasure::Uniform.sample(&mut rng)).collect();
        assert!(stats::ks_statistic(&xs, |x| x) < stats::ks_critical_1pct(xs.len()));
    }

    #[test]
    fn interval_sampler_support() {
        let nu = AngleMeasure::interval(0.3).unwrap();
        let mut rng = stream(12, StreamId::new(0, Purpose::Angles));
        assert!((0..10_000).all(|_| (0.0..=0.3).contains(&nu.sample(&mut rng))));
    }

    #[test]
    fn mfold_sampler_moment() {
        // ∫ cos(2πmx) 2 sin²(mπx) dx = -1/2
        for m in [1, 3] {
            let nu = AngleMeasure::mfold(m).unwrap();
            let mut rng = stream(13, StreamId::new(m as u64, Purpose::Angles));
            let xs: Vec<f64> = (0..100_000).map(|_| (TAU * m as f64 * nu.sample(&mut rng)).cos()).collect();
            let (mean, se) = (stats::mean(&xs), stats::std_error(&xs));
            assert!((mean + 0.5).abs() < 3.0 * se, "m={m}: {mean} ± {se}");
        }
    }

    #[test]
    fn hilbert_closed_forms() {
        assert_eq!(AngleMeasure::Uniform.hilbert_transform(0.3).unwrap(), 0.0);
        let m1 = AngleMeasure::mfold(1).unwrap();
        assert!((m1.hilbert_transform(0.25).unwrap() + 1.0 / TAU).abs() < 1e-15);
        let i = AngleMeasure::interval(0.5).unwrap();
        assert!(i.hilbert_transform(0.75).unwrap().abs() < 1e-15);
        for k in 1..50 {
            let x = k as f64 / 50.0 + 0.003;
            let closed = (PI * x).tan().abs().ln() / (PI * PI);
            assert!((i.hilbert_transform(x).unwrap() - closed).abs() < 1e-12);
        }
        assert!(matches!(AngleMeasure::point_mass(0.0).hilbert_transform(0.3), Err(Error::UnsupportedMeasure(_))));
    }

    #[test]
    fn quadrature_path_matches_mfold_closed_form() {
        for m in 1..=3 {
            let nu = AngleMeasure::mfold(m).unwrap();
            let tab = AngleMeasure::Tabulated(TabulatedDensity::from_fn(|x| nu.density(x)).unwrap());
            for k in 0..256 {
                let x = k as f64 / 256.0;
                let exact = -(TAU * m as f64 * x).sin() / TAU;
                let q = tab.hilbert_transform(x).unwrap();
                assert!((q - exact).abs() < 1e-6, "m={m} x={x}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn quadrature_path_matches_interval_closed_form() {
        let nu = AngleMeasure::interval(0.25).unwrap();
        for k in 0..40 {
            let x = 0.013 + k as f64 / 40.0;
            let q = nu.hilbert_transform_quadrature(x).unwrap();
            let c = nu.hilbert_transform(x).unwrap();
            assert!((q - c).abs() < 1e-8, "x={x}: {q} vs {c}");
        }
    }

    /// Independent oracle: symmetric excision of (x-ε, x+ε) from the raw kernel.
    fn excised_hilbert(nu: &AngleMeasure, x: f64, eps: f64) -> f64 {
        let f = |y: f64| nu.density(y) / (PI * (x - y)).tan();
        let a = quad::integrate(f, x + eps, x + 0.5, Tolerance::abs(1e-12)).value;
        let b = quad::integrate(f, x - 0.5, x - eps, Tolerance::abs(1e-12)).value;
        (a + b) / TAU
    }

    #[test]
    fn regularized_matches_excision_oracle() {
        let tab = AngleMeasure::Tabulated(TabulatedDensity::from_fn(|x| 1.0 + 0.8 * (TAU * x).sin() * (TAU * x).cos()).unwrap());
        for &x in &[0.1, 0.37, 0.8] {
            let oracle = excised_hilbert(&tab, x, 1e-6);
            let reg = tab.hilbert_transform(x).unwrap();
            assert!((oracle - reg).abs() < 1e-6, "x={x}: {oracle} vs {reg}");
        }
    }

    #[test]
    fn hilbert_transform_has_zero_mean() {
        for nu in all_density_laws() {
            let mean = if matches!(nu, AngleMeasure::Interval { .. }) {
                // (near-)logarithmic singularities at the edges
                let sing: Vec<f64> = nu.singular_points();
                let mut b = vec![0.0, 1.0];
                b.extend(sing.iter().filter(|e| **e > 0.0 && **e < 1.0));
                b.sort_by(f64::total_cmp);
                quad::integrate_with_breaks(|x| nu.hilbert_transform(x).unwrap(), &b, Tolerance::abs(1e-11)).value
            } else {
                quad::gauss_legendre(|x| nu.hilbert_transform(x).unwrap(), 0.0, 1.0, 64)
            };
            assert!(mean.abs() < 1e-8, "{nu:?}: {mean}");
        }
    }

    #[test]
    fn drift_derivative_matches_differences() {
        let laws = [
            AngleMeasure::Uniform,
            AngleMeasure::mfold(1).unwrap(),
            AngleMeasure::mfold(3).unwrap(),
            AngleMeasure::interval(0.5).unwrap(),
        ];
        for nu in laws {
            for c0 in [0.0, 0.7] {
                let b = Drift::new(nu.clone(), c0).unwrap();
                for k in 0..64 {
                    let x = 0.05 + k as f64 * 0.9 / 64.0;
                    if nu.singular_points().iter().any(|e| (x - e).abs() < 0.02) {
                        continue;
                    }
                    let fd = (b.value(x + FD_STEP) - b.value(x - FD_STEP)) / (2.0 * FD_STEP);
                    assert!((fd - b.derivative(x)).abs() < 1e-4, "{nu:?} x={x}");
                }
            }
        }
    }

    #[test]
    fn drift_examples() {
        let m = AngleMeasure::mfold(2).unwrap();
        let b = Drift::new(m.clone(), 0.0).unwrap();
        assert!(b.value(0.0).abs() < 1e-15);
        assert!((b.derivative(0.0) + 2.0).abs() < 1e-12);
        assert_eq!(drift_b(&m, 0.0, 0.3).unwrap(), m.hilbert_transform(0.3).unwrap());
        assert!(Drift::new(AngleMeasure::Uniform, 0.0).unwrap().is_degenerate());
        assert!(Drift::new(AngleMeasure::point_mass(0.2), 0.0).is_err());
    }

    #[test]
    fn tabulated_validation() {
        assert!(TabulatedDensity::from_samples(&[1.0; 4]).is_err());
        let mut spiky = vec![0.0; 64];
        spiky[10] = 50.0;
        assert!(TabulatedDensity::from_samples(&spiky).is_err(), "overshoot below zero must be rejected");
        let pairs: Vec<(f64, f64)> = (0..16).map(|i| (i as f64 / 16.0, 2.0)).collect();
        let t = TabulatedDensity::from_pairs(&pairs).unwrap();
        assert_eq!(t.len(), TABULATED_GRID);
        assert!((t.eval(0.33) - 1.0).abs() < 1e-12);
        let bad: Vec<(f64, f64)> = (0..16).map(|i| (i as f64 / 17.0, 2.0)).collect();
        assert!(TabulatedDensity::from_pairs(&bad).is_err());
    }

    #[test]
    fn particle_stats_examples() {
        for &d in &[0.01, 0.02, 0.1] {
            let s = particle_stats(&SlitParticle::new(d, 0.0).unwrap());
            assert!(s.c0_hat.abs() <= 1e-6, "d={d}: {}", s.c0_hat);
            assert!((s.rho * s.second_moment - 1.0).abs() < 1e-12);
        }
        let r1 = particle_stats(&SlitParticle::new(0.01, 0.0).unwrap()).rho * 1e-6;
        let r2 = particle_stats(&SlitParticle::new(0.02, 0.0).unwrap()).rho * 8e-6;
        assert!((0.5..=2.0).contains(&(r2 / r1)));
        let lc = lcap_of_slit(0.005).unwrap() / 0.005f64.powi(2);
        assert!((lc - 0.25).abs() < 0.01 * 0.25);
    }

    #[test]
    fn second_moment_matches_brute_force() {
        // oracle: midpoint rule on a 2·10⁶ grid
        let d = 0.05;
        let p = SlitParticle::new(d, 0.0).unwrap();
        let n = 2_000_000;
        let brute: f64 = (0..n)
            .map(|i| {
                let u = -0.5 + (i as f64 + 0.5) / n as f64;
                p.gamma_tilde(u).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let s = particle_stats(&p);
        assert!((s.second_moment - brute).abs() < 1e-6 * brute, "{} vs {brute}", s.second_moment);
    }

    #[test]
    fn rho_sigma_examples() {
        let d = 0.02;
        let rho = particle_stats(&SlitParticle::new(d, 0.0).unwrap()).rho;
        assert_eq!(rho_sigma(&DiameterLaw::constant(d).unwrap()).unwrap(), rho);
        let two = DiameterLaw::tabulated(vec![d, d], vec![0.5, 0.5]).unwrap();
        assert!((rho_sigma(&two).unwrap() - rho).abs() < 1e-9 * rho);
        let prod = |d: f64| {
            let law = DiameterLaw::constant(d).unwrap();
            rho_sigma(&law).unwrap() * law.third_moment()
        };
        let ratio = prod(0.02) / prod(0.01);
        assert!((0.25..=4.0).contains(&ratio));
        assert!(DiameterLaw::tabulated(vec![], vec![]).is_err());
        assert!(DiameterLaw::tabulated(vec![0.1, 0.2], vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn beta_nu_examples() {
        let p = SlitParticle::new(0.02, 0.0).unwrap();
        let s = particle_stats(&p);
        for &x in &[0.1, 0.5, 0.77] {
            assert!((beta_nu(&AngleMeasure::Uniform, &p, x) - s.mean_shift).abs() < 1e-13);
        }
        let m1 = AngleMeasure::mfold(1).unwrap();
        for &x in &[0.1, 0.3, 0.45] {
            let a = beta_nu(&m1, &p, x);
            let b = beta_nu(&m1, &p, -x);
            assert!((a + b).abs() < 1e-8 * a.abs().max(1e-12), "x={x}: {a} {b}");
        }
    }

    #[test]
    fn beta_nu_matches_brute_force() {
        let p = SlitParticle::new(0.05, 0.0).unwrap();
        let nu = AngleMeasure::mfold(3).unwrap();
        let x = 0.21;
        let n = 1_000_000;
        let brute: f64 = (0..n)
            .map(|i| {
                let z = (i as f64 + 0.5) / n as f64;
                p.gamma_tilde(x - z) * nu.density(z)
            })
            .sum::<f64>()
            / n as f64;
        let q = beta_nu(&nu, &p, x);
        assert!((q - brute).abs() < 1e-5 * brute.abs(), "{q} vs {brute}");
    }

    #[test]
    fn drift_limit_improves_with_smaller_particles() {
        let nu = AngleMeasure::mfold(3).unwrap();
        let b = Drift::new(nu.clone(), 0.0).unwrap();
        let sup_err = |d: f64| {
            let p = SlitParticle::new(d, 0.0).unwrap();
            (0..64)
                .map(|k| {
                    let x = k as f64 / 64.0;
                    (beta_nu(&nu, &p, x) / p.lcap() - b.value(x)).abs()
                })
                .fold(0.0, f64::max)
        };
        let errs = [sup_err(0.08), sup_err(0.04), sup_err(0.02)];
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn correlation_examples() {
        let p = SlitParticle::new(0.01, 0.0).unwrap();
        let u = AngleMeasure::Uniform;
        assert!((correlation_b(&u, &p, 0.3, 0.3) - 1.0).abs() < 1e-7);
        let far = correlation_b(&u, &p, 0.1, 0.6);
        assert!(far.abs() <= 0.01f64.powf(0.25));
        for k in 0..20 {
            let x2 = 0.3 + k as f64 * 0.013;
            assert!(correlation_b(&u, &p, 0.3, x2).abs() <= 1.0 + 1e-9);
        }
    }
}
