//! Numerical auditing toolkit for verification-style comparisons between
//! candidate value functions and the true value of Bolza optimal-control
//! problems.
//!
//! A candidate W is checked against the hypotheses that make W <= V hold
//! (an HJB inequality off a declared exceptional set, weak continuity
//! probes, target and boundary comparisons), while V itself is estimated
//! independently by exhaustive control search, semi-Lagrangian dynamic
//! programming, and closed-loop synthesis evaluation. All checks are grid
//! or sample based: a pass means no violation was found at the stated
//! resolution.

pub mod candidate;
pub mod config;
pub mod control;
pub mod envelope;
pub mod error;
pub mod fit;
pub mod gallery;
pub mod geom;
pub mod grid;
pub mod integrate;
pub mod probe;
pub mod problem;
pub mod rectifiable;
pub mod report;
pub mod set;
pub mod trajectory;
pub mod value;
pub mod verify;

pub use candidate::CandidateValueFunction;
pub use control::{ControlSetSpec, PiecewiseConstantControl};
pub use error::{HjbError, Result};
pub use geom::Point;
pub use grid::{Axis, GridSpec, ValueGrid};
pub use problem::{ControlProblem, HorizonMode};
pub use rectifiable::{ManifoldPiece, RectifiableSet};
pub use report::{TheoremMode, Tolerances, VerificationReport, Verdict};
pub use set::SetSpec;
pub use trajectory::Trajectory;
pub use verify::HypothesisCheckSpec;
