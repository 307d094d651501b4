//! Control sets and piecewise-constant open-loop controls.

use crate::error::{HjbError, Result};

/// A control set U in R^q, accessed through deterministic sampling.
///
/// The sampler produces a lattice of `n` points covering U; declared extreme
/// points are always included in every sample (they realize the infimum for
/// Hamiltonians affine in the control).
#[derive(Clone)]
pub struct ControlSetSpec {
    pub dimension: usize,
    /// Componentwise bounds of the lattice box.
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
    pub extreme_points: Vec<Vec<f64>>,
}

impl ControlSetSpec {
    /// An interval box [lows, highs] with optional explicit extreme points.
    pub fn interval_box(lows: Vec<f64>, highs: Vec<f64>, extreme_points: Vec<Vec<f64>>) -> Self {
        assert_eq!(lows.len(), highs.len());
        Self {
            dimension: lows.len(),
            lows,
            highs,
            extreme_points,
        }
    }

    /// Scalar interval [lo, hi] with both endpoints as extreme points.
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::interval_box(vec![lo], vec![hi], vec![vec![lo], vec![hi]])
    }

    /// Deterministic lattice of about `n` points plus all extreme points.
    ///
    /// For q = 1 this is `n` equally spaced values; in higher dimension the
    /// per-axis resolution is n^(1/q) rounded up.
    pub fn sample(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = self.extreme_points.clone();
        if n == 0 {
            return out;
        }
        let q = self.dimension;
        let per_axis = if q == 1 {
            n.max(1)
        } else {
            (n as f64).powf(1.0 / q as f64).ceil() as usize
        }
        .max(1);
        let mut idx = vec![0usize; q];
        loop {
            let point: Vec<f64> = (0..q)
                .map(|a| {
                    if per_axis == 1 {
                        0.5 * (self.lows[a] + self.highs[a])
                    } else {
                        self.lows[a]
                            + (self.highs[a] - self.lows[a]) * idx[a] as f64
                                / (per_axis - 1) as f64
                    }
                })
                .collect();
            if !out.contains(&point) {
                out.push(point);
            }
            // mixed-radix increment
            let mut axis = 0;
            loop {
                if axis == q {
                    return out;
                }
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lows.iter().zip(&self.highs))
            .all(|(&c, (&lo, &hi))| c >= lo - 1e-12 && c <= hi + 1e-12)
    }

    /// Nearest sampled point of U to `u` (Euclidean), used for L^p projection.
    pub fn project(&self, u: &[f64], n: usize) -> Vec<f64> {
        let samples = self.sample(n);
        samples
            .into_iter()
            .min_by(|a, b| {
                crate::geom::dist_sq(a, u)
                    .partial_cmp(&crate::geom::dist_sq(b, u))
                    .unwrap()
            })
            .expect("control sample set is never empty")
    }
}

/// Left-continuous step function of time into the control set.
///
/// `values[i]` is active on the half-open interval (breakpoints[i],
/// breakpoints[i+1]]; evaluation at a breakpoint returns the value of the
/// interval ending there.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantControl {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewiseConstantControl {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(HjbError::Precondition(
                "a control needs at least two breakpoints".into(),
            ));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(HjbError::Precondition(format!(
                "{} values for {} breakpoints",
                values.len(),
                breakpoints.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HjbError::Precondition(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(HjbError::Precondition(
                "all control values must share one dimension".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn constant(t0: f64, tf: f64, value: Vec<f64>) -> Self {
        Self::new(vec![t0, tf], vec![value]).expect("two increasing breakpoints")
    }

    /// Equal-length pieces over [t0, tf] with the given per-piece values.
    pub fn equal_pieces(t0: f64, tf: f64, values: Vec<Vec<f64>>) -> Self {
        let m = values.len();
        let bps = (0..=m)
            .map(|i| t0 + (tf - t0) * i as f64 / m as f64)
            .collect();
        Self::new(bps, values).expect("valid equal pieces")
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values[0].len()
    }

    /// Left-continuous evaluation on (t0, tm].
    pub fn eval(&self, t: f64) -> Result<&[f64]> {
        let lo = self.start();
        let hi = self.end();
        if t <= lo || t > hi {
            return Err(HjbError::ControlOutOfDomain { t, lo, hi });
        }
        // first breakpoint >= t; the value left of it is active
        let i = self.breakpoints.partition_point(|&b| b < t);
        Ok(&self.values[i - 1])
    }

    /// Inserts a breakpoint without changing any evaluation.
    pub fn refined(&self, t: f64) -> Self {
        if t <= self.start() || t >= self.end() || self.breakpoints.contains(&t) {
            return self.clone();
        }
        let i = self.breakpoints.partition_point(|&b| b < t);
        let mut bps = self.breakpoints.clone();
        let mut vals = self.values.clone();
        bps.insert(i, t);
        vals.insert(i - 1, vals[i - 1].clone());
        Self {
            breakpoints: bps,
            values: vals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm_control() -> PiecewiseConstantControl {
        PiecewiseConstantControl::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![-1.0]]).unwrap()
    }

    #[test]
    fn left_continuous_at_breakpoint() {
        let c = pm_control();
        assert_eq!(c.eval(1.0).unwrap(), &[1.0]);
    }

    #[test]
    fn interior_of_second_interval() {
        let c = pm_control();
        assert_eq!(c.eval(1.5).unwrap(), &[-1.0]);
    }

    #[test]
    fn outside_domain_is_an_error() {
        let c = pm_control();
        assert!(matches!(
            c.eval(2.5),
            Err(HjbError::ControlOutOfDomain { .. })
        ));
        assert!(c.eval(0.0).is_err());
    }

    #[test]
    fn lattice_contains_extremes_and_stays_inside() {
        let u = ControlSetSpec::interval(-1.0, 1.0);
        let s = u.sample(5);
        assert!(s.contains(&vec![-1.0]));
        assert!(s.contains(&vec![1.0]));
        assert!(s.iter().all(|p| u.contains(p)));
    }

    #[test]
    fn refinement_preserves_evaluations() {
        let c = pm_control();
        let r = c.refined(0.37);
        for &t in &[0.1, 0.37, 0.5, 1.0, 1.7, 2.0] {
            assert_eq!(c.eval(t).unwrap(), r.eval(t).unwrap());
        }
    }
}
