//! Set descriptions for targets, domains and verification windows.
//!
//! A `SetSpec` carries three callables: a membership test, a nonnegative
//! *gauge* that vanishes exactly on the set (a distance-like function, not
//! necessarily the Euclidean distance), and a sampler yielding points of the
//! set (targets) or of its boundary (domains). Hit detection and dynamic
//! programming clamp against the gauge, so a per-branch gauge (e.g. vertical
//! distance to a graph) is preferable to a true metric distance when the set
//! oscillates at sub-grid scales.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geom::Point;

pub type MembershipFn = Arc<dyn Fn(f64, &[f64]) -> bool + Send + Sync>;
pub type GaugeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut ChaCha8Rng, usize) -> Vec<Point> + Send + Sync>;

/// Default absolute tolerance identifying gauge zero with membership.
pub const DIST_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct SetSpec {
    pub membership: MembershipFn,
    pub gauge: GaugeFn,
    /// Points of the set (targets) or of its boundary (domains).
    pub sampler: Option<SamplerFn>,
}

impl SetSpec {
    /// Membership derived from the gauge: member iff gauge <= dist_tol.
    pub fn from_gauge(gauge: GaugeFn, sampler: Option<SamplerFn>) -> Self {
        let g = gauge.clone();
        Self {
            membership: Arc::new(move |t, x| g(t, x) <= DIST_TOL),
            gauge,
            sampler,
        }
    }

    /// The whole space: gauge identically zero, no boundary to sample.
    pub fn everything() -> Self {
        Self {
            membership: Arc::new(|_, _| true),
            gauge: Arc::new(|_, _| 0.0),
            sampler: None,
        }
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        (self.membership)(t, x)
    }

    pub fn gauge_at(&self, t: f64, x: &[f64]) -> f64 {
        (self.gauge)(t, x)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, count: usize) -> Vec<Point> {
        match &self.sampler {
            Some(s) => s(rng, count),
            None => Vec::new(),
        }
    }
}

/// Uniform sampler over a time range crossed with a state box.
pub fn box_sampler(t_range: (f64, f64), x_ranges: Vec<(f64, f64)>) -> SamplerFn {
    Arc::new(move |rng, count| {
        (0..count)
            .map(|_| {
                let t = rng.gen_range(t_range.0..=t_range.1);
                let x = x_ranges
                    .iter()
                    .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                    .collect();
                Point::new(t, x)
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gauge_membership_consistency() {
        let set = SetSpec::from_gauge(
            Arc::new(|_t, x: &[f64]| (x[0].abs() - 1.0).max(0.0)),
            Some(Arc::new(|rng: &mut ChaCha8Rng, n| {
                (0..n)
                    .map(|_| Point::new(0.0, vec![rng.gen_range(-1.0..=1.0)]))
                    .collect()
            })),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in set.sample(&mut rng, 50) {
            assert!(set.contains(p.t, &p.x));
            assert!(set.gauge_at(p.t, &p.x) <= DIST_TOL);
        }
        assert!(!set.contains(0.0, &[1.5]));
        assert!((set.gauge_at(0.0, &[1.5]) - 0.5).abs() < 1e-15);
    }
}
