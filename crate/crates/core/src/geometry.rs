//! Closed-polyline utilities for hull and cluster boundaries.

use crate::conformal::Complex;

/// Winding number of the closed polyline `poly` about `p`.
pub fn winding_number(poly: &[Complex], p: Complex) -> i32 {
    let n = poly.len();
    let mut w = 0;
    for i in 0..n {
        let a = poly[i] - p;
        let b = poly[(i + 1) % n] - p;
        let cross = a.re * b.im - a.im * b.re;
        if a.im <= 0.0 {
            if b.im > 0.0 && cross > 0.0 {
                w += 1;
            }
        } else if b.im <= 0.0 && cross < 0.0 {
            w -= 1;
        }
    }
    w
}

pub fn contains(poly: &[Complex], p: Complex) -> bool {
    winding_number(poly, p) != 0
}

fn orient(a: Complex, b: Complex, c: Complex) -> f64 {
    (b - a).re * (c - a).im - (b - a).im * (c - a).re
}

/// Proper intersection of the segments `[a, b]` and `[c, d]`.
pub fn segments_cross(a: Complex, b: Complex, c: Complex, d: Complex) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// True when the closed polyline `inner` lies strictly inside `outer`.
pub fn polygon_inside(inner: &[Complex], outer: &[Complex]) -> bool {
    if !inner.iter().all(|p| contains(outer, *p)) {
        return false;
    }
    let (n, m) = (inner.len(), outer.len());
    for i in 0..n {
        let (a, b) = (inner[i], inner[(i + 1) % n]);
        for j in 0..m {
            if segments_cross(a, b, outer[j], outer[(j + 1) % m]) {
                return false;
            }
        }
    }
    true
}

/// True when every vertex of `inner` is inside `outer` or within `tol` of it.
/// Level curves that nearly coincide can cross at the chord resolution, so
/// nesting of traced boundaries is checked up to that resolution.
pub fn inside_up_to(inner: &[Complex], outer: &[Complex], tol: f64) -> bool {
    let m = outer.len();
    inner.iter().all(|&p| contains(outer, p) || (0..m).any(|j| segment_distance(p, outer[j], outer[(j + 1) % m]) <= tol))
}

/// Median edge length of the closed polyline.
pub fn median_edge(poly: &[Complex]) -> f64 {
    let n = poly.len();
    let mut e: Vec<f64> = (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).collect();
    e.sort_by(f64::total_cmp);
    if n == 0 {
        0.0
    } else {
        e[n / 2]
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: Complex, a: Complex, b: Complex) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Symmetric Hausdorff distance between two vertex sets.
pub fn hausdorff(a: &[Complex], b: &[Complex]) -> f64 {
    let one_sided = |x: &[Complex], y: &[Complex]| {
        x.iter().map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Length of the closed polyline.
pub fn perimeter(poly: &[Complex]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::circle_point;

    fn circle(r: f64, n: usize) -> Vec<Complex> {
        (0..n).map(|k| circle_point(k as f64 / n as f64) * r).collect()
    }

    #[test]
    fn circle_winding() {
        let c = circle(2.0, 64);
        assert_eq!(winding_number(&c, Complex::new(0.0, 0.0)), 1);
        assert_eq!(winding_number(&c, Complex::new(0.5, 1.0)), 1);
        assert_eq!(winding_number(&c, Complex::new(3.0, 0.0)), 0);
        let rev: Vec<Complex> = c.iter().rev().copied().collect();
        assert_eq!(winding_number(&rev, Complex::new(0.0, 0.0)), -1);
    }

    #[test]
    fn nested_circles() {
        assert!(polygon_inside(&circle(1.0, 50), &circle(1.5, 70)));
        assert!(!polygon_inside(&circle(1.5, 50), &circle(1.0, 70)));
        let mut bumped = circle(1.0, 50);
        bumped[3] *= 2.0;
        assert!(!polygon_inside(&bumped, &circle(1.5, 70)));
    }

    #[test]
    fn distances() {
        let a = Complex::new(0.0, 0.0);
        let b = Complex::new(2.0, 0.0);
        assert_eq!(segment_distance(Complex::new(1.0, 1.0), a, b), 1.0);
        assert_eq!(segment_distance(Complex::new(3.0, 0.0), a, b), 1.0);
        assert_eq!(hausdorff(&[a], &[a, b]), 2.0);
        assert!((perimeter(&circle(1.0, 4096)) - std::f64::consts::TAU).abs() < 1e-5);
    }
}
