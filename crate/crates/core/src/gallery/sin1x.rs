//! Waiting problem with zero dynamics and an oscillating graph target: the
//! value function is discontinuous, lower semicontinuous, and known in
//! closed form, with exceptional set {x = 0} union {t = 1} union the graph
//! t = sin(1/x).

use std::sync::Arc;

use rand::Rng;

use crate::candidate::CandidateValueFunction;
use crate::control::ControlSetSpec;
use crate::geom::Point;
use crate::grid::GridSpec;
use crate::problem::finite_problem_on_all_space;
use crate::rectifiable::{ManifoldPiece, RectifiableSet};
use crate::report::{TheoremMode, Tolerances, Verdict};
use crate::set::SetSpec;
use crate::verify::HypothesisCheckSpec;

use super::{CompareConfig, DpKind, ExpectedVerdicts, GalleryEntry};

/// Graph pieces are truncated at this |x|; closer to zero the {x = 0} piece
/// dominates every exclusion tube at default meshes.
pub const GRAPH_X_MIN: f64 = 1.0 / (40.0 * std::f64::consts::PI);

const WINDOW_T: (f64, f64) = (-2.0, 2.0);
const WINDOW_X: (f64, f64) = (-1.0, 1.0);

/// Closed-form candidate (the five-case value of the waiting problem).
pub fn value(t: f64, x: f64) -> f64 {
    if x != 0.0 {
        let s = (1.0 / x).sin();
        if t <= s {
            s - t
        } else if t < 1.0 {
            1.0 - t
        } else {
            0.0
        }
    } else if t <= -1.0 {
        -1.0 - t
    } else if t < 1.0 {
        0.0
    } else {
        0.0
    }
}

fn gradient(t: f64, x: f64) -> (f64, f64) {
    if x != 0.0 {
        let s = (1.0 / x).sin();
        if t <= s {
            (-1.0, -(1.0 / x).cos() / (x * x))
        } else if t < 1.0 {
            (-1.0, 0.0)
        } else {
            (0.0, 0.0)
        }
    } else if t <= -1.0 {
        (-1.0, 0.0)
    } else {
        (0.0, 0.0)
    }
}

fn target() -> SetSpec {
    let gauge = Arc::new(|t: f64, x: &[f64]| {
        let x = x[0];
        let graph = if x != 0.0 {
            (t - (1.0 / x).sin()).abs()
        } else {
            f64::INFINITY
        };
        let segment = x.abs().max((-1.0 - t).max(t - 1.0).max(0.0));
        let slab = (1.0 - t).max(0.0);
        graph.min(segment).min(slab)
    });
    let sampler = Arc::new(|rng: &mut rand_chacha::ChaCha8Rng, count: usize| {
        (0..count)
            .map(|_| match rng.gen_range(0..3u8) {
                0 => {
                    let mag = rng.gen_range(0.004..=1.3);
                    let x = if rng.gen_bool(0.5) { mag } else { -mag };
                    Point::new((1.0 / x).sin(), vec![x])
                }
                1 => Point::new(rng.gen_range(-1.0..=1.0), vec![0.0]),
                _ => Point::new(rng.gen_range(1.0..=2.5), vec![rng.gen_range(-1.3..=1.3)]),
            })
            .collect()
    });
    SetSpec::from_gauge(gauge, Some(sampler))
}

pub fn exceptional_set() -> RectifiableSet {
    let mut pieces = vec![
        // the x = 0 plane
        ManifoldPiece::full(
            vec![(-2.5, 2.5)],
            2,
            Arc::new(|p: &[f64]| vec![p[0], 0.0]),
            Some(Arc::new(|_: &[f64], _: &[f64]| 1.0)),
        ),
        // the t = 1 plane
        ManifoldPiece::full(
            vec![(-1.3, 1.3)],
            2,
            Arc::new(|p: &[f64]| vec![1.0, p[0]]),
            Some(Arc::new(|_: &[f64], _: &[f64]| 1.0)),
        ),
    ];
    // graph branches, truncated near the accumulation at x = 0
    pieces.push(ManifoldPiece::full(
        vec![(GRAPH_X_MIN, 1.3)],
        2,
        Arc::new(|p: &[f64]| vec![(1.0 / p[0]).sin(), p[0]]),
        Some(Arc::new(|lo: &[f64], _: &[f64]| {
            (1.0 + 1.0 / lo[0].powi(4)).sqrt()
        })),
    ));
    pieces.push(ManifoldPiece::full(
        vec![(-1.3, -GRAPH_X_MIN)],
        2,
        Arc::new(|p: &[f64]| vec![(1.0 / p[0]).sin(), p[0]]),
        Some(Arc::new(|_: &[f64], hi: &[f64]| {
            (1.0 + 1.0 / hi[0].powi(4)).sqrt()
        })),
    ));
    RectifiableSet::new(pieces)
}

pub fn entry() -> GalleryEntry {
    let problem = finite_problem_on_all_space(
        1,
        Arc::new(|_t, _x: &[f64], _u: &[f64], out: &mut [f64]| out[0] = 0.0),
        Arc::new(|_t, _x: &[f64], _u: &[f64]| 1.0),
        Arc::new(|_t, _x: &[f64]| 0.0),
        target(),
        ControlSetSpec::interval(-1.0, 1.0),
    );

    let candidate = CandidateValueFunction::new(
        Arc::new(|t, x: &[f64]| value(t, x[0])),
        Some(Arc::new(|t, x: &[f64]| {
            let (ws, wx) = gradient(t, x[0]);
            (ws, vec![wx])
        })),
        exceptional_set(),
    );

    let mesh = 1.0 / 256.0;
    let grid = GridSpec::with_mesh(WINDOW_T, &[WINDOW_X], mesh);
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
    check.budgets.ess_samples = 2000;
    check.budgets.ess_quantile = 0.0;
    check.budgets.refine_level = candidate
        .exceptional_set
        .level_for_mesh(tolerances.exclusion_radius / 4.0);

    GalleryEntry {
        name: "sin1x",
        problem,
        candidate,
        synthesis: None,
        expected_verdict: ExpectedVerdicts {
            theorem: TheoremMode::Teo1,
            items: vec![
                ("i", Verdict::Pass),
                ("ii", Verdict::Pass),
                ("iii", Verdict::Skipped),
                ("iv", Verdict::Pass),
                ("v", Verdict::Skipped),
            ],
        },
        notes: "discontinuous closed-form candidate; every finite-horizon check is expected to \
                pass, with the boundary and positivity hypotheses dropped since the window is \
                the whole domain",
        default_check: check,
        compare_slack: 1e-6,
        starts: vec![
            (0.0, vec![2.0 / std::f64::consts::PI]),
            (-2.0, vec![0.5]),
            (2.0, vec![5.0]),
            (-3.0, vec![0.0]),
        ],
        loiter: None,
        horizons: Vec::new(),
        probes: Vec::new(),
        default_step: 4.0 / 2000.0,
        compare: CompareConfig {
            brute_pieces: 2,
            brute_samples: 2,
            brute_span: 4.0,
            hit_radius: 1e-8,
            dp: DpKind::TimeGrid,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_pins() {
        assert!((value(0.0, 2.0 / PI) - 1.0).abs() < 1e-12);
        assert_eq!(value(2.0, 5.0), 0.0);
        assert!((value(-3.0, 0.0) - 2.0).abs() < 1e-12);
        // region boundaries
        assert_eq!(value(1.0, 0.3), 0.0);
        assert!((value(-1.0, 0.0) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn target_gauge_vanishes_on_samples() {
        use rand::SeedableRng;
        let e = entry();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for p in e.problem.target.sample(&mut rng, 200) {
            assert!(e.problem.target.gauge_at(p.t, &p.x) <= 1e-9);
        }
    }

    #[test]
    fn candidate_vanishes_on_target() {
        use rand::SeedableRng;
        let e = entry();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for p in e.problem.target.sample(&mut rng, 200) {
            let w = e.candidate.eval(p.t, &p.x);
            assert!(w.abs() <= 1e-9, "W({}, {:?}) = {w}", p.t, p.x);
        }
    }
}
