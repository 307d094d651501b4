//! Small vector helpers and the time-state point type.

use serde::{Deserialize, Serialize};

/// A point of the time-augmented state space (t, x) in R x R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub t: f64,
    pub x: Vec<f64>,
}

impl Point {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
}

/// Distance in (t, x)-space between (ta, a) and (tb, b).
pub fn dist_tx(ta: f64, a: &[f64], tb: f64, b: &[f64]) -> f64 {
    (dist_sq(a, b) + (ta - tb) * (ta - tb)).sqrt()
}

/// a + s * b, componentwise.
pub fn axpy(a: &[f64], s: f64, b: &[f64], out: &mut [f64]) {
    for i in 0..a.len() {
        out[i] = a[i] + s * b[i];
    }
}

/// Extended-real addition: anything plus an infinity is that infinity.
pub fn add_ext(a: f64, b: f64) -> f64 {
    if a.is_infinite() {
        a
    } else if b.is_infinite() {
        b
    } else {
        a + b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_addition_absorbs_infinity() {
        assert_eq!(add_ext(1.0, f64::INFINITY), f64::INFINITY);
        assert_eq!(add_ext(f64::INFINITY, -3.0), f64::INFINITY);
        assert_eq!(add_ext(2.0, 3.0), 5.0);
    }

    #[test]
    fn tx_distance() {
        assert!((dist_tx(0.0, &[3.0], 4.0, &[0.0]) - 5.0).abs() < 1e-15);
    }
}
