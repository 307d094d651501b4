//! Infinite-horizon instance: controlled exponential decay toward the zero
//! state. The cost of any driving control that actually empties the state
//! is x0^2/2, independent of the control, and W(t, x) = x^2/2 meets every
//! hypothesis of the infinite-horizon comparison.

use std::sync::Arc;

use rand::Rng;

use crate::candidate::CandidateValueFunction;
use crate::control::{ControlSetSpec, PiecewiseConstantControl};
use crate::geom::Point;
use crate::grid::GridSpec;
use crate::problem::{ControlProblem, HorizonMode};
use crate::rectifiable::RectifiableSet;
use crate::report::{TheoremMode, Tolerances, Verdict};
use crate::set::SetSpec;
use crate::verify::{HypothesisCheckSpec, ProbeControl};

use super::{CompareConfig, DpKind, ExpectedVerdicts, GalleryEntry};

pub const NEIGHBORHOOD_RADIUS: f64 = 0.5;
const T_END: f64 = 40.0;

fn problem() -> ControlProblem {
    let target = SetSpec::from_gauge(
        Arc::new(|t: f64, x: &[f64]| x[0].abs().max((-t).max(0.0))),
        Some(Arc::new(|rng: &mut rand_chacha::ChaCha8Rng, count| {
            (0..count)
                .map(|_| Point::new(rng.gen_range(0.0..=60.0), vec![0.0]))
                .collect()
        })),
    );
    let neighborhood = SetSpec {
        membership: Arc::new(|_t, x: &[f64]| x[0].abs() < NEIGHBORHOOD_RADIUS),
        gauge: Arc::new(|_t, x: &[f64]| (x[0].abs() - NEIGHBORHOOD_RADIUS).max(0.0)),
        sampler: Some(Arc::new(|rng: &mut rand_chacha::ChaCha8Rng, count| {
            (0..count)
                .map(|_| {
                    Point::new(
                        rng.gen_range(0.0..=45.0),
                        vec![rng.gen_range(-0.49..=0.49)],
                    )
                })
                .collect()
        })),
    };
    ControlProblem {
        dim: 1,
        dynamics: Arc::new(|_t, x: &[f64], u: &[f64], out: &mut [f64]| out[0] = -u[0] * x[0]),
        running_cost: Arc::new(|_t, x: &[f64], u: &[f64]| u[0] * x[0] * x[0]),
        final_cost: Arc::new(|_t, x: &[f64]| 0.5 * x[0] * x[0]),
        target,
        domain: SetSpec::everything(),
        verification_domain: SetSpec::everything(),
        q_is_omega: true,
        control_set: ControlSetSpec::interval_box(vec![0.0], vec![1.0], vec![vec![0.0], vec![1.0]]),
        control_norm_exponent: 1.0,
        horizon_mode: HorizonMode::Infinite,
        target_neighborhood: Some(neighborhood),
    }
}

pub fn entry() -> GalleryEntry {
    let problem = problem();
    let candidate = CandidateValueFunction::new(
        Arc::new(|_t, x: &[f64]| 0.5 * x[0] * x[0]),
        Some(Arc::new(|_t, x: &[f64]| (0.0, vec![x[0]]))),
        RectifiableSet::empty(),
    );

    let mesh = 1.0 / 64.0;
    let grid = GridSpec {
        t: crate::grid::Axis::from_range(0.0, T_END, 5.0),
        space: vec![crate::grid::Axis::from_range(-1.0, 1.0, mesh)],
    };
    let tolerances = Tolerances {
        hjb_tol: 1e-9,
        target_tol: 1e-9,
        boundary_tol: 1e-6,
        ndj_tol: 1e-3,
        liminf_tol: 1e-2,
        exclusion_radius: 2.0 * mesh,
    };
    let mut check = HypothesisCheckSpec::new(TheoremMode::Teo2, grid, tolerances);
    check.control_samples = 3;

    // three distinct driving controls, all emptying the state
    let probes = vec![
        ProbeControl {
            t0: 0.0,
            x0: vec![0.4],
            control: PiecewiseConstantControl::constant(0.0, T_END, vec![1.0]),
        },
        ProbeControl {
            t0: 0.0,
            x0: vec![0.2],
            control: PiecewiseConstantControl::constant(0.0, T_END, vec![0.6]),
        },
        ProbeControl {
            t0: 0.0,
            x0: vec![0.1],
            control: PiecewiseConstantControl::equal_pieces(
                0.0,
                T_END,
                (0..8)
                    .map(|i| vec![if i % 2 == 0 { 1.0 } else { 0.3 }])
                    .collect(),
            ),
        },
    ];

    GalleryEntry {
        name: "infinite_decay",
        problem,
        candidate,
        synthesis: None,
        expected_verdict: ExpectedVerdicts {
            theorem: TheoremMode::Teo2,
            items: vec![
                ("i", Verdict::Pass),
                ("ii", Verdict::Pass),
                ("iii", Verdict::Skipped),
                ("iv", Verdict::Pass),
                ("v", Verdict::Skipped),
                ("star", Verdict::Pass),
                ("tail", Verdict::Pass),
            ],
        },
        notes: "quadratic candidate for controlled decay; the cost integral telescopes to \
                x0^2/2 for every control that empties the state, so the infinite-horizon \
                checks and the tail comparison are expected to pass exactly",
        default_check: check,
        compare_slack: 1e-4,
        starts: vec![(0.0, vec![0.1]), (0.0, vec![0.2]), (0.0, vec![0.4])],
        loiter: None,
        horizons: vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
        probes,
        default_step: 0.01,
        compare: CompareConfig {
            brute_pieces: 2,
            brute_samples: 3,
            brute_span: 40.0,
            hit_radius: 1e-2,
            dp: DpKind::None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::integrate_with_cost;

    #[test]
    fn cost_telescopes_to_half_square() {
        // oracle: cost = (x0^2 - x(T)^2) / 2 for any driving control
        let e = entry();
        for probe in &e.probes {
            let (traj, costs) = integrate_with_cost(
                &e.problem,
                &probe.control,
                probe.t0,
                &probe.x0,
                T_END,
                0.01,
            )
            .unwrap();
            let xt = traj.final_state()[0];
            let oracle = 0.5 * (probe.x0[0] * probe.x0[0] - xt * xt);
            let got = *costs.last().unwrap();
            assert!(
                (got - oracle).abs() < 1e-10,
                "cost {got} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn candidate_matches_final_cost_on_neighborhood() {
        let e = entry();
        let s1 = e.problem.target_neighborhood.as_ref().unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for p in s1.sample(&mut rng, 100) {
            let w = e.candidate.eval(p.t, &p.x);
            let psi = e.problem.eval_final_cost(p.t, &p.x);
            assert_eq!(w, psi);
        }
    }
}
