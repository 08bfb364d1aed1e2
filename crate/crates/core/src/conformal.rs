//! Single-particle slit maps.
//!
//! The slit map `f` sends the exterior disk onto the exterior disk minus the
//! radial segment `[1, 1+d]`. It is realized exactly as the chain
//! `J⁻¹ ∘ A⁻¹ ∘ J`, where `J(z) = (z + 1/z)/2` flattens the exterior disk onto
//! the plane minus `[-1, 1]`, and the affine map `A(u) = (2u + 1 - b)/(1 + b)`
//! sends `[-1, b]` onto `[-1, 1]` with `b = J(1 + d)`.
//!
//! Angles and circle positions are in turns: the circle point at position `x`
//! is `e^{2πix}`.

use std::f64::consts::{PI, SQRT_2, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub type Complex = Complex64;

/// Logarithmic capacity of the radial slit of length `d`.
///
/// Inverts the slit-length formula: `e^t = (2+d)²/(4(1+d)) = 1 + d²/(4(1+d))`.
pub fn lcap_of_slit(d: f64) -> Result<f64> {
    if !(d >= 0.0) || !d.is_finite() {
        return domain(format!("slit length must be a finite non-negative number, got {d}"));
    }
    Ok((d * d / (4.0 * (1.0 + d))).ln_1p())
}

/// Slit length grown by the constant point-mass driver in time `t`:
/// `d(t) = 2e^t (1 + √(1 - e^{-t})) - 2`.
pub fn slit_of_lcap(t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("capacity must be a finite non-negative number, got {t}"));
    }
    let one_minus_exp = -(-t).exp_m1();
    Ok(2.0 * t.exp_m1() + 2.0 * t.exp() * one_minus_exp.sqrt())
}

/// `e^{2πix}`.
#[inline]
pub fn circle_point(x: f64) -> Complex {
    Complex::from_polar(1.0, TAU * x)
}

/// Lifted boundary action of the inverse slit map attached at angle 0.
///
/// `beta = b - 1 = d²/(2(1+d))`. On `(0, 1)` the value comes from
/// `cos(2πγ) = A(cos 2πx)` written in half-angle form, which avoids the
/// cancellation of `arccos` near `±1`. At integers the convention `γ(n) = n` holds.
#[inline]
pub fn gamma_at_origin(beta: f64, x: f64) -> f64 {
    let n = x.round();
    let u = x - n;
    if u == 0.0 {
        return n;
    }
    let (s, c) = (PI * u).sin_cos();
    let half = (beta + 2.0 * s * s).sqrt().atan2(SQRT_2 * c.abs()) / PI;
    n + half.copysign(u)
}

/// Exterior branch of `J⁻¹`: the root of `w + 1/w = 2v` with modulus at least one.
#[inline]
fn joukowski_inv(v: Complex) -> (Complex, Complex) {
    let s = ((v - 1.0) * (v + 1.0)).sqrt();
    let (r1, r2) = (v + s, v - s);
    if r1.norm_sqr() >= r2.norm_sqr() {
        (r1, r2)
    } else {
        (r2, r1)
    }
}

#[inline]
fn joukowski(z: Complex) -> Complex {
    0.5 * (z + z.inv())
}

/// One radial slit particle of length `d` attached at angle `theta` (turns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitParticle {
    d: f64,
    theta: f64,
    lcap: f64,
    b: f64,
}

impl SlitParticle {
    pub fn new(d: f64, theta: f64) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return domain(format!("particle diameter must be positive and finite, got {d}"));
        }
        if !theta.is_finite() {
            return domain("attachment angle must be finite");
        }
        let theta = theta.rem_euclid(1.0);
        // rem_euclid can round up to exactly 1.0 for tiny negative inputs
        let theta = if theta >= 1.0 { 0.0 } else { theta };
        Ok(Self { d, theta, lcap: lcap_of_slit(d)?, b: 1.0 + beta_of(d) })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lcap(&self) -> f64 {
        self.lcap
    }

    /// Derivative at infinity, `e^{lcap}`.
    pub fn capacity(&self) -> f64 {
        0.5 * (1.0 + self.b)
    }

    /// The Joukowski parameter `b = ((1+d) + 1/(1+d))/2`.
    pub fn joukowski_b(&self) -> f64 {
        self.b
    }

    /// `b - 1`, computed without cancellation.
    pub fn beta(&self) -> f64 {
        beta_of(self.d)
    }

    pub fn rotated(&self, theta: f64) -> Result<Self> {
        Self::new(self.d, theta)
    }

    fn rotation(&self) -> Complex {
        circle_point(self.theta)
    }

    fn map_at_origin(&self, z: Complex) -> Complex {
        let v = 0.5 * ((1.0 + self.b) * joukowski(z) - 1.0 + self.b);
        joukowski_inv(v).0
    }

    /// `f^θ(z) = e^{2πiθ} f(e^{-2πiθ} z)` for `|z| > 1`.
    pub fn map(&self, z: Complex) -> Result<Complex> {
        if !(z.norm_sqr() > 1.0) {
            return domain(format!("slit map needs |z| > 1, got |z| = {}", z.norm()));
        }
        let rot = self.rotation();
        let w = rot * self.map_at_origin(z * rot.conj());
        if w.re.is_finite() && w.im.is_finite() {
            Ok(w)
        } else {
            Err(Error::Internal(format!("slit map produced a non-finite value at z = {z}")))
        }
    }

    /// Map applied without argument checks; the caller guarantees `|z| > 1`.
    #[inline]
    pub(crate) fn map_unchecked(&self, z: Complex) -> Complex {
        let rot = self.rotation();
        rot * self.map_at_origin(z * rot.conj())
    }

    /// Boundary value of `f^θ` at the circle point `e^{2πix}`.
    ///
    /// The two arcs adjacent to the attachment point land on the two sides of
    /// the slit; `x = θ` lands on the tip `(1+d) e^{2πiθ}`.
    pub fn boundary_point(&self, x: f64) -> Complex {
        let u = x - self.theta;
        let c = (TAU * u).cos();
        let v = 0.5 * ((1.0 + self.b) * c - 1.0 + self.b);
        let w0 = if v >= 1.0 {
            Complex::new(v + ((v - 1.0) * (v + 1.0)).sqrt(), 0.0)
        } else {
            let angle = v.clamp(-1.0, 1.0).acos();
            let sign = if (TAU * u).sin() < 0.0 { -1.0 } else { 1.0 };
            Complex::from_polar(1.0, sign * angle)
        };
        self.rotation() * w0
    }

    /// `g^θ(w)`, the inverse map, for `w` outside the open unit disk.
    ///
    /// Points on the closed slit and on the unit circle are boundary limits; the
    /// branch is then chosen on the side of the real axis (after rotation) that
    /// `w` lies on, with the slit itself assigned to its upper side.
    pub fn inverse(&self, w: Complex) -> Result<Complex> {
        const BOUNDARY_TOL: f64 = 1e-12;
        if !(w.norm() >= 1.0 - BOUNDARY_TOL) {
            return domain(format!("inverse slit map needs |w| ≥ 1, got |w| = {}", w.norm()));
        }
        let rot = self.rotation();
        let w0 = w * rot.conj();
        let u = (2.0 * joukowski(w0) + 1.0 - self.b) / (1.0 + self.b);
        let (outer, inner) = joukowski_inv(u);
        let z0 = if outer.norm() - inner.norm() > BOUNDARY_TOL || (w0.im >= 0.0) == (outer.im >= 0.0) { outer } else { inner };
        let z = rot * z0;
        if z.re.is_finite() && z.im.is_finite() {
            Ok(z)
        } else {
            Err(Error::Internal(format!("inverse slit map produced a non-finite value at w = {w}")))
        }
    }

    /// Lifted circle action `γ_P` of the inverse map: `g(e^{2πix}) = e^{2πiγ(x)}`.
    #[inline]
    pub fn gamma(&self, x: f64) -> f64 {
        self.theta + gamma_at_origin(self.beta(), x - self.theta)
    }

    /// Displacement `γ_P(x) - x`; 1-periodic.
    #[inline]
    pub fn gamma_tilde(&self, x: f64) -> f64 {
        self.gamma(x) - x
    }

    /// `sup |γ̃|`, attained as the one-sided limit at the attachment point.
    pub fn max_displacement(&self) -> f64 {
        let beta = self.beta();
        beta.sqrt().atan2(SQRT_2) / PI
    }
}

#[inline]
fn beta_of(d: f64) -> f64 {
    d * d / (2.0 * (1.0 + d))
}
