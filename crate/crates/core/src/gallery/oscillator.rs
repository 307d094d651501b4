//! Forced linear oscillator driven to the origin in minimum time. The
//! optimal control is bang-bang; switches happen on a chain of unit
//! semicircles along the x1 axis, and the candidate value is tabulated by
//! closed-loop integration of that feedback.

use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::candidate::CandidateValueFunction;
use crate::control::ControlSetSpec;
use crate::geom::Point;
use crate::grid::{Axis, GridSpec, ValueGrid};
use crate::problem::finite_problem_on_all_space;
use crate::rectifiable::{ManifoldPiece, RectifiableSet};
use crate::report::{TheoremMode, Tolerances, Verdict};
use crate::set::SetSpec;
use crate::value::{tabulate_synthesis, FeedbackFn, SynthesisOptions};
use crate::verify::HypothesisCheckSpec;

use super::{CompareConfig, DpKind, ExpectedVerdicts, GalleryEntry};

const T_WINDOW: (f64, f64) = (0.0, 4.0 * std::f64::consts::PI);
const X_WINDOW: (f64, f64) = (-4.0, 4.0);
const TABLE_HALF: f64 = 4.5;
pub const TABLE_MESH: f64 = 1.0 / 64.0;

/// Height of the switching locus over x1: chained unit semicircles centered
/// at odd integers, below the axis for x1 > 0 and above it for x1 < 0.
pub fn switching_height(x1: f64) -> f64 {
    if x1 == 0.0 {
        return 0.0;
    }
    let m = x1.abs();
    let k = (m / 2.0).floor();
    let center = 2.0 * k + 1.0;
    let d = m - center;
    let h = (1.0 - d * d).max(0.0).sqrt();
    if x1 > 0.0 {
        -h
    } else {
        h
    }
}

/// Bang-bang feedback: +1 strictly below the locus, -1 strictly above; on
/// the locus the sign follows the half-plane the arc belongs to.
pub fn feedback(x: &[f64]) -> f64 {
    let s = switching_height(x[0]);
    if x[1] < s {
        1.0
    } else if x[1] > s {
        -1.0
    } else if x[0] >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn problem() -> crate::problem::ControlProblem {
    let target = SetSpec::from_gauge(
        Arc::new(|_t, x: &[f64]| (x[0] * x[0] + x[1] * x[1]).sqrt()),
        Some(Arc::new(|rng: &mut rand_chacha::ChaCha8Rng, count| {
            (0..count)
                .map(|_| Point::new(rng.gen_range(0.0..=13.0), vec![0.0, 0.0]))
                .collect()
        })),
    );
    finite_problem_on_all_space(
        2,
        Arc::new(|_t, x: &[f64], u: &[f64], out: &mut [f64]| {
            out[0] = x[1];
            out[1] = -x[0] + u[0];
        }),
        Arc::new(|_t, _x: &[f64], _u: &[f64]| 1.0),
        Arc::new(|_t, _x: &[f64]| 0.0),
        target,
        ControlSetSpec::interval(-1.0, 1.0),
    )
}

fn synthesis() -> FeedbackFn {
    Arc::new(|_t, x: &[f64]| vec![feedback(x)])
}

static TABLE: OnceLock<Arc<ValueGrid>> = OnceLock::new();

fn table() -> &'static Arc<ValueGrid> {
    TABLE.get_or_init(|| {
        let problem = problem();
        let fb = synthesis();
        let axis = Axis::from_range(-TABLE_HALF, TABLE_HALF, TABLE_MESH);
        let mut opts = SynthesisOptions::new(2e-3, 1e-3);
        opts.projection_samples = 8;
        Arc::new(tabulate_synthesis(
            &problem,
            &fb,
            vec![axis, axis],
            0.0,
            &opts,
        ))
    })
}

/// Switching semicircles and terminal arcs inside the window, swept over
/// the time axis.
pub fn exceptional_set() -> RectifiableSet {
    use std::f64::consts::PI;
    let t_range = (T_WINDOW.0 - 1.0, T_WINDOW.1 + 1.0);
    let mut pieces = Vec::new();
    for &center in &[1.0f64, 3.0, 5.0] {
        // lower semicircles on the positive side
        pieces.push(ManifoldPiece::time_invariant(
            vec![(PI, 2.0 * PI)],
            2,
            t_range,
            Arc::new(move |p: &[f64]| vec![center + p[0].cos(), p[0].sin()]),
            Some(Arc::new(|_: &[f64], _: &[f64]| 1.0)),
        ));
        // mirrored upper semicircles on the negative side
        pieces.push(ManifoldPiece::time_invariant(
            vec![(0.0, PI)],
            2,
            t_range,
            Arc::new(move |p: &[f64]| vec![-center + p[0].cos(), p[0].sin()]),
            Some(Arc::new(|_: &[f64], _: &[f64]| 1.0)),
        ));
    }
    RectifiableSet::new(pieces)
}

pub fn entry() -> GalleryEntry {
    let problem = problem();
    let exc = exceptional_set();

    let candidate = CandidateValueFunction {
        value: Arc::new(|_t, x: &[f64]| table().interp_layer(0, x)),
        gradient: None,
        exceptional_set: Arc::new(exc),
        h_grad: TABLE_MESH,
    };

    let grid = GridSpec {
        t: Axis::from_range(T_WINDOW.0, T_WINDOW.1, 2.0 * std::f64::consts::PI),
        space: vec![
            Axis::from_range(X_WINDOW.0, X_WINDOW.1, TABLE_MESH),
            Axis::from_range(X_WINDOW.0, X_WINDOW.1, TABLE_MESH),
        ],
    };
    let tolerances = Tolerances {
        hjb_tol: 1e-2,
        target_tol: 1e-3,
        boundary_tol: 1e-6,
        ndj_tol: 1e-2,
        liminf_tol: 1e-2,
        exclusion_radius: 2.0 * TABLE_MESH,
    };
    let mut check = HypothesisCheckSpec::new(TheoremMode::Teo1, grid, tolerances);
    check.control_samples = 2;
    check.budgets.ess_quantile = 0.0;
    check.budgets.ess_samples = 256;
    check.budgets.ess_points = 24;
    check.budgets.ndj_starts = 4;
    check.budgets.refine_level = candidate
        .exceptional_set
        .level_for_mesh(tolerances.exclusion_radius / 4.0);

    GalleryEntry {
        name: "oscillator",
        problem,
        candidate,
        synthesis: Some(synthesis()),
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
        notes: "bang-bang minimum-time synthesis; candidate tabulated from the closed loop is \
                continuous but loses local Lipschitz regularity across the switching arcs; all \
                finite-horizon checks expected to pass at the tabulation resolution",
        default_check: check,
        compare_slack: 5e-2,
        starts: vec![
            (0.0, vec![2.0, 0.0]),
            (0.0, vec![0.0, 0.0]),
            (0.0, vec![3.0, 1.0]),
            (0.0, vec![-1.5, 2.0]),
        ],
        loiter: None,
        horizons: Vec::new(),
        probes: Vec::new(),
        default_step: 2e-3,
        compare: CompareConfig {
            brute_pieces: 3,
            brute_samples: 2,
            brute_span: 14.0,
            hit_radius: 0.05,
            dp: DpKind::Stationary,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locus_geometry() {
        // top of the first lower semicircle
        assert!((switching_height(1.0) + 1.0).abs() < 1e-12);
        // junctions on the axis
        assert_eq!(switching_height(2.0), 0.0);
        assert_eq!(switching_height(4.0), 0.0);
        // mirror symmetry
        assert_eq!(switching_height(-1.0), 1.0);
        assert_eq!(switching_height(0.0), 0.0);
    }

    #[test]
    fn feedback_signs() {
        assert_eq!(feedback(&[0.0, -2.0]), 1.0); // deep below the locus
        assert_eq!(feedback(&[0.0, 2.0]), -1.0); // above
        assert_eq!(feedback(&[2.0, 0.0]), 1.0); // junction rides the +1 arc
        assert_eq!(feedback(&[1.0, -1.0]), 1.0); // on the terminal arc
        assert_eq!(feedback(&[-1.0, 1.0]), -1.0);
    }
}
