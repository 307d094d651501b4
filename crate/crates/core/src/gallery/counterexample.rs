//! Scalar integrator with a quartic running cost that dips negative outside
//! the verification strip: every hypothesis except cost positivity holds
//! for a negative-constant candidate, yet the true value is unbounded
//! below, so the comparison genuinely fails.

use std::sync::Arc;

use rand::Rng;

use crate::candidate::CandidateValueFunction;
use crate::control::ControlSetSpec;
use crate::geom::Point;
use crate::grid::GridSpec;
use crate::problem::{ControlProblem, HorizonMode};
use crate::rectifiable::RectifiableSet;
use crate::report::{TheoremMode, Tolerances, Verdict};
use crate::set::SetSpec;
use crate::verify::{HypothesisCheckSpec, LoiterPlan};

use super::{CompareConfig, DpKind, ExpectedVerdicts, GalleryEntry};

/// u^2 + x^4 - 6x^3 + 7x^2; negative for x between 3 - sqrt(2) and
/// 3 + sqrt(2) when u = 0.
pub fn running_cost(x: f64, u: f64) -> f64 {
    u * u + x * x * (x * x - 6.0 * x + 7.0)
}

fn problem() -> ControlProblem {
    let target = SetSpec::from_gauge(
        Arc::new(|_t, x: &[f64]| x[0].abs()),
        Some(Arc::new(|rng: &mut rand_chacha::ChaCha8Rng, count| {
            (0..count)
                .map(|_| Point::new(rng.gen_range(0.0..=300.0), vec![0.0]))
                .collect()
        })),
    );
    // Q is the open strip |x| < 1; its boundary sampler feeds hypothesis iii
    let strip = SetSpec {
        membership: Arc::new(|_t, x: &[f64]| x[0].abs() < 1.0),
        gauge: Arc::new(|_t, x: &[f64]| (x[0].abs() - 1.0).max(0.0)),
        sampler: Some(Arc::new(|rng: &mut rand_chacha::ChaCha8Rng, count| {
            (0..count)
                .map(|_| {
                    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    Point::new(rng.gen_range(0.0..=1.0), vec![side])
                })
                .collect()
        })),
    };
    ControlProblem {
        dim: 1,
        dynamics: Arc::new(|_t, _x: &[f64], u: &[f64], out: &mut [f64]| out[0] = u[0]),
        running_cost: Arc::new(|_t, x: &[f64], u: &[f64]| running_cost(x[0], u[0])),
        final_cost: Arc::new(|_t, _x: &[f64]| 0.0),
        target,
        domain: SetSpec::everything(),
        verification_domain: strip,
        q_is_omega: false,
        control_set: ControlSetSpec::interval(-1.0, 1.0),
        control_norm_exponent: 1.0,
        horizon_mode: HorizonMode::Finite,
        target_neighborhood: None,
    }
}

pub fn entry() -> GalleryEntry {
    let problem = problem();
    let candidate = CandidateValueFunction::new(
        Arc::new(|_t, _x: &[f64]| -1.0),
        Some(Arc::new(|_t, x: &[f64]| (0.0, vec![0.0; x.len()]))),
        RectifiableSet::empty(),
    );

    let mesh = 1.0 / 64.0;
    let grid = GridSpec::with_mesh((0.0, 1.0), &[(-6.0, 6.0)], mesh);
    let tolerances = Tolerances {
        hjb_tol: 1e-6,
        target_tol: 1e-6,
        boundary_tol: 1e-6,
        ndj_tol: 1e-3,
        liminf_tol: 1e-2,
        exclusion_radius: 2.0 * mesh,
    };
    let mut check = HypothesisCheckSpec::new(TheoremMode::Teo1, grid, tolerances);
    check.control_samples = 3;

    GalleryEntry {
        name: "counterexample_L",
        problem,
        candidate,
        synthesis: None,
        expected_verdict: ExpectedVerdicts {
            theorem: TheoremMode::Teo1,
            items: vec![
                ("i", Verdict::Pass),
                ("ii", Verdict::Pass),
                ("iii", Verdict::Pass),
                ("iv", Verdict::Pass),
                ("v", Verdict::Fail),
            ],
        },
        notes: "negative-constant candidate passing everything except running-cost positivity, \
                which fails off the strip; loitering where the cost is negative drives the true \
                value below any bound, so no comparison certificate can exist",
        default_check: check,
        compare_slack: 1e-6,
        starts: vec![(0.0, vec![0.5])],
        loiter: Some(LoiterPlan {
            t0: 0.0,
            x0: vec![0.5],
            pre: vec![(2.0, vec![1.0])], // drift from 0.5 up to 2.5
            dwell_value: vec![0.0],
            post: vec![(3.0, vec![-1.0])], // return through the target
        }),
        horizons: Vec::new(),
        probes: Vec::new(),
        default_step: 1e-3,
        compare: CompareConfig {
            brute_pieces: 2,
            brute_samples: 3,
            brute_span: 2.0,
            hit_radius: 1e-6,
            dp: DpKind::TimeGrid,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_pins() {
        assert!((running_cost(2.5, 0.0) + 10.9375).abs() < 1e-12);
        assert!((running_cost(0.5, 0.0) - 1.0625).abs() < 1e-12);
        // positive throughout the strip
        for i in 0..=200 {
            let x = -1.0 + 2.0 * i as f64 / 200.0;
            assert!(running_cost(x, 0.0) >= 0.0, "negative at {x}");
        }
    }

    #[test]
    fn loiter_plan_costs_scale_with_dwell() {
        use crate::verify::divergence_probe;
        let e = entry();
        let rows = divergence_probe(
            &e.problem,
            e.loiter.as_ref().unwrap(),
            &[0.0, 10.0, 50.0],
            1e-3,
            1e-6,
        )
        .unwrap();
        // each extra dwell second adds the quartic's value at 2.5
        let per_second = (rows[2].1 - rows[1].1) / 40.0;
        assert!(
            (per_second + 10.9375).abs() < 1e-6,
            "per-second cost {per_second}"
        );
        assert!(rows[2].1 < rows[1].1 && rows[1].1 < rows[0].1);
    }
}
