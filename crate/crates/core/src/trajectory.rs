//! Sampled paths on the lifted circle.

use serde::{Deserialize, Serialize};

/// Path `t ↦ value` started at `(start_time, start)`, stored as ordered samples.
/// Values are lifted to `ℝ`, so a path that winds once gains one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_time: f64,
    pub start: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    /// A path holding only its initial sample.
    pub fn new(start_time: f64, start: f64) -> Self {
        Self { start_time, start, times: vec![start_time], values: vec![start] }
    }

    /// A path with no samples, used for starts beyond the horizon.
    pub fn empty(start_time: f64, start: f64) -> Self {
        Self { start_time, start, times: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, t: f64, value: f64) {
        debug_assert!(self.times.last().is_none_or(|&last| t >= last));
        self.times.push(t);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_value(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Linear interpolation between samples, constant beyond either end.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 {
            return None;
        }
        if t <= self.times[0] {
            return Some(self.values[0]);
        }
        if t >= self.times[n - 1] {
            return Some(self.values[n - 1]);
        }
        // last index with times[i] <= t
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        if t1 == t0 {
            return Some(self.values[i + 1]);
        }
        let w = (t - t0) / (t1 - t0);
        Some(self.values[i] + w * (self.values[i + 1] - self.values[i]))
    }

    /// Right-continuous value: the last sample at or before `t`.
    pub fn value_before(&self, t: f64) -> Option<f64> {
        if self.times.is_empty() {
            return None;
        }
        let i = self.times.partition_point(|&s| s <= t);
        Some(self.values[i.saturating_sub(1)])
    }

    /// Keeps at most one sample per grid time `start_time + k·dt`, using the
    /// right-continuous value. Used to thin event-resolution paths.
    pub fn resample(&self, grid: &[f64]) -> Trajectory {
        let mut out = Trajectory::empty(self.start_time, self.start);
        for &t in grid {
            if let Some(v) = self.value_before(t) {
                out.push(t, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation() {
        let mut p = Trajectory::new(0.0, 1.0);
        p.push(1.0, 3.0);
        p.push(2.0, 3.0);
        assert_eq!(p.value_at(-1.0), Some(1.0));
        assert_eq!(p.value_at(0.5), Some(2.0));
        assert_eq!(p.value_at(5.0), Some(3.0));
        assert_eq!(p.value_before(0.99), Some(1.0));
        assert_eq!(p.value_before(1.0), Some(3.0));
        assert_eq!(Trajectory::empty(0.0, 0.0).value_at(0.0), None);
        let r = p.resample(&[0.0, 0.5, 1.5]);
        assert_eq!(r.values, vec![1.0, 1.0, 3.0]);
    }
}
