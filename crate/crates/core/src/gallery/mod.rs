//! Built-in problems with candidate value functions, exceptional sets,
//! syntheses and expected check outcomes.

mod counterexample;
mod decay;
mod fuller;
mod oscillator;
mod sin1x;

pub use fuller::{fuller_scan, FullerScan};
pub use oscillator::switching_height;

use crate::candidate::CandidateValueFunction;
use crate::problem::ControlProblem;
use crate::report::{TheoremMode, Verdict};
use crate::value::FeedbackFn;
use crate::verify::{HypothesisCheckSpec, LoiterPlan, ProbeControl};

/// Expected per-hypothesis outcomes of the default check.
#[derive(Debug, Clone)]
pub struct ExpectedVerdicts {
    pub theorem: TheoremMode,
    pub items: Vec<(&'static str, Verdict)>,
}

/// Which dynamic-programming estimator suits the entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpKind {
    None,
    /// Finite-horizon backward induction on the entry window.
    TimeGrid,
    /// Stationary value iteration (autonomous problems).
    Stationary,
}

/// How candidate-vs-estimate comparisons are run for this entry.
#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub brute_pieces: usize,
    pub brute_samples: usize,
    /// Search duration past the start time.
    pub brute_span: f64,
    pub hit_radius: f64,
    pub dp: DpKind,
}

pub struct GalleryEntry {
    pub name: &'static str,
    pub problem: ControlProblem,
    pub candidate: CandidateValueFunction,
    pub synthesis: Option<FeedbackFn>,
    pub expected_verdict: ExpectedVerdicts,
    /// What the entry is built to demonstrate (mirrors expected_verdict).
    pub notes: &'static str,
    pub default_check: HypothesisCheckSpec,
    /// Declared slack for candidate-vs-estimate comparisons.
    pub compare_slack: f64,
    /// Representative start points (t0, x0).
    pub starts: Vec<(f64, Vec<f64>)>,
    /// Divergence-probe plan, for entries whose value is unbounded below.
    pub loiter: Option<LoiterPlan>,
    /// Truncation horizons (infinite-horizon entries).
    pub horizons: Vec<f64>,
    /// Probe trajectories approaching the target (infinite-horizon entries).
    pub probes: Vec<ProbeControl>,
    pub default_step: f64,
    pub compare: CompareConfig,
}

pub fn oscillator() -> GalleryEntry {
    oscillator::entry()
}

pub fn sin_one_over_x() -> GalleryEntry {
    sin1x::entry()
}

pub fn fuller() -> GalleryEntry {
    fuller::entry()
}

pub fn counterexample_running_cost() -> GalleryEntry {
    counterexample::entry()
}

pub fn infinite_decay() -> GalleryEntry {
    decay::entry()
}

pub const NAMES: [&str; 5] = [
    "oscillator",
    "sin1x",
    "fuller",
    "counterexample_L",
    "infinite_decay",
];

pub fn by_name(name: &str) -> Option<GalleryEntry> {
    match name {
        "oscillator" => Some(oscillator()),
        "sin1x" => Some(sin_one_over_x()),
        "fuller" => Some(fuller()),
        "counterexample_L" => Some(counterexample_running_cost()),
        "infinite_decay" => Some(infinite_decay()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_names_resolve() {
        for n in NAMES {
            assert!(by_name(n).is_some(), "{n} missing");
        }
        assert!(by_name("nosuch").is_none());
    }
}
