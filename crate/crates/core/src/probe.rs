//! Sampled probing of the standing growth and continuity assumptions on the
//! dynamics and the running cost. Probing reports observed worst ratios; it
//! never proves an assumption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HjbError, Result};
use crate::geom::{self, Point};
use crate::problem::ControlProblem;

#[derive(Debug, Clone)]
pub struct ProbeRecord {
    pub assumption: String,
    /// Empirically fitted constant (worst observed ratio).
    pub constant: f64,
    pub worst_point: Point,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub records: Vec<ProbeRecord>,
    /// (|x - y|, |f(t,x,u) - f(t,y,u)|) pairs sampling the modulus of
    /// continuity in the state.
    pub modulus_samples: Vec<(f64, f64)>,
    pub samples_used: usize,
}

impl ProbeReport {
    pub fn constant(&self, assumption: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.assumption == assumption)
            .map(|r| r.constant)
    }
}

/// Samples (t, x, y, u) tuples over the region and reports the observed
/// growth constant of |f|, the state Lipschitz and one-sided ratios, and
/// the growth constant of |L|, all against 1 + |u|^p.
pub fn assumption_probe(
    problem: &ControlProblem,
    sample_budget: usize,
    t_range: (f64, f64),
    x_ranges: &[(f64, f64)],
    seed: u64,
) -> Result<ProbeReport> {
    if sample_budget == 0 {
        return Err(HjbError::Precondition("sample budget must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let controls = problem.control_set.sample(5);
    let p = problem.control_norm_exponent;

    let mut growth: (f64, Point) = (0.0, Point::new(t_range.0, vec![0.0; problem.dim]));
    let mut lipschitz: (f64, Point) = (0.0, growth.1.clone());
    let mut one_sided: (f64, Point) = (f64::NEG_INFINITY, growth.1.clone());
    let mut cost_growth: (f64, Point) = (0.0, growth.1.clone());
    let mut modulus = Vec::new();

    let mut fx = vec![0.0; problem.dim];
    let mut fy = vec![0.0; problem.dim];
    for i in 0..sample_budget {
        let t = rng.gen_range(t_range.0..=t_range.1);
        let x: Vec<f64> = x_ranges
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect();
        let y: Vec<f64> = x_ranges
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect();
        let u = &controls[i % controls.len()];
        let weight = 1.0 + u.iter().map(|c| c.abs()).sum::<f64>().powf(p);

        problem.eval_dynamics(t, &x, u, &mut fx);
        problem.eval_dynamics(t, &y, u, &mut fy);
        let l = problem.eval_running_cost(t, &x, u);
        if fx.iter().any(|c| !c.is_finite()) || !l.is_finite() {
            return Err(HjbError::EvalFailure {
                t,
                x,
                what: "dynamics or running cost returned a non-finite value".into(),
            });
        }

        let g = geom::norm(&fx) / weight;
        if g > growth.0 {
            growth = (g, Point::new(t, x.clone()));
        }
        let dxy = geom::dist(&x, &y);
        if dxy > 1e-12 {
            let df = geom::dist(&fx, &fy);
            let ratio = df / dxy;
            if ratio > lipschitz.0 {
                lipschitz = (ratio, Point::new(t, x.clone()));
            }
            let dot: f64 = fx
                .iter()
                .zip(&fy)
                .zip(x.iter().zip(&y))
                .map(|((a, b), (c, d))| (a - b) * (c - d))
                .sum();
            let os = dot / (dxy * dxy);
            if os > one_sided.0 {
                one_sided = (os, Point::new(t, x.clone()));
            }
            if modulus.len() < 256 {
                modulus.push((dxy, df));
            }
        }
        let cg = l.abs() / weight;
        if cg > cost_growth.0 {
            cost_growth = (cg, Point::new(t, x.clone()));
        }
    }

    Ok(ProbeReport {
        records: vec![
            ProbeRecord {
                assumption: "dynamics-growth".into(),
                constant: growth.0,
                worst_point: growth.1,
                detail: "sup |f| / (1 + |u|^p)".into(),
            },
            ProbeRecord {
                assumption: "dynamics-lipschitz".into(),
                constant: lipschitz.0,
                worst_point: lipschitz.1,
                detail: "sup |f(t,x,u) - f(t,y,u)| / |x - y|".into(),
            },
            ProbeRecord {
                assumption: "dynamics-one-sided".into(),
                constant: if one_sided.0.is_finite() {
                    one_sided.0
                } else {
                    0.0
                },
                worst_point: one_sided.1,
                detail: "sup (f(x) - f(y)).(x - y) / |x - y|^2".into(),
            },
            ProbeRecord {
                assumption: "cost-growth".into(),
                constant: cost_growth.0,
                worst_point: cost_growth.1,
                detail: "sup |L| / (1 + |u|^p)".into(),
            },
        ],
        modulus_samples: modulus,
        samples_used: sample_budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    #[test]
    fn oscillator_growth_is_bounded_on_window() {
        let entry = gallery::oscillator();
        let report =
            assumption_probe(&entry.problem, 10_000, (0.0, 1.0), &[(-3.0, 3.0), (-3.0, 3.0)], 1)
                .unwrap();
        let g = report.constant("dynamics-growth").unwrap();
        assert!(g.is_finite() && g > 0.0 && g < 10.0);
    }

    #[test]
    fn constant_data_probes_exactly() {
        let entry = gallery::sin_one_over_x();
        let report =
            assumption_probe(&entry.problem, 5_000, (-2.0, 2.0), &[(-1.0, 1.0)], 2).unwrap();
        assert_eq!(report.constant("dynamics-lipschitz").unwrap(), 0.0);
        assert_eq!(report.constant("dynamics-growth").unwrap(), 0.0);
        // |L| / (1 + |u|) peaks at u = 0
        assert!((report.constant("cost-growth").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_cost_constant_on_box() {
        let entry = gallery::fuller();
        let report =
            assumption_probe(&entry.problem, 20_000, (0.0, 1.0), &[(-2.0, 2.0), (-2.0, 2.0)], 3)
                .unwrap();
        let c = report.constant("cost-growth").unwrap();
        assert!(c <= 4.0 + 1e-9 && c > 3.5, "fitted constant {c}");
    }

    #[test]
    fn non_finite_dynamics_reports_the_point() {
        use crate::control::ControlSetSpec;
        use crate::problem::finite_problem_on_all_space;
        use crate::set::SetSpec;
        use std::sync::Arc;
        let problem = finite_problem_on_all_space(
            1,
            Arc::new(|_t, x: &[f64], _u: &[f64], out: &mut [f64]| {
                out[0] = if x[0] > 0.0 { f64::NAN } else { 0.0 }
            }),
            Arc::new(|_, _: &[f64], _: &[f64]| 1.0),
            Arc::new(|_, _: &[f64]| 0.0),
            SetSpec::from_gauge(Arc::new(|_, x: &[f64]| x[0].abs()), None),
            ControlSetSpec::interval(-1.0, 1.0),
        );
        let err = assumption_probe(&problem, 2_000, (0.0, 1.0), &[(-1.0, 1.0)], 4).unwrap_err();
        assert!(matches!(err, HjbError::EvalFailure { .. }));
    }
}
