//! Verification reports: per-hypothesis verdicts with witnesses, serialized
//! as JSON for the CLI.

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::grid::GridSpec;

/// Which verification statement a run audits. The wire names `teo1`,
/// `teo2` and `eps` are part of the CLI contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremMode {
    /// Finite-horizon comparison W <= V.
    #[serde(rename = "teo1")]
    Teo1,
    /// Infinite-horizon comparison with target approach at t -> infinity.
    #[serde(rename = "teo2")]
    Teo2,
    /// Relaxed hypotheses certifying W <= V + eps (1 + ||g||_1).
    #[serde(rename = "eps")]
    Eps,
}

impl TheoremMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremMode::Teo1 => "teo1",
            TheoremMode::Teo2 => "teo2",
            TheoremMode::Eps => "eps",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "teo1" => Some(TheoremMode::Teo1),
            "teo2" => Some(TheoremMode::Teo2),
            "eps" => Some(TheoremMode::Eps),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

/// Numeric thresholds used by a check run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    pub hjb_tol: f64,
    pub target_tol: f64,
    pub boundary_tol: f64,
    pub ndj_tol: f64,
    pub liminf_tol: f64,
    pub exclusion_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub id: String,
    pub verdict: Verdict,
    /// Largest observed violation (negative values mean comfortable margin).
    pub worst_violation: f64,
    pub witness: Option<Point>,
    pub points_checked: usize,
    pub points_excluded: usize,
    /// Resolution-qualified summary; grid checks refute, they never prove.
    pub statement: String,
}

impl HypothesisRecord {
    pub fn skipped(id: &str, why: &str) -> Self {
        Self {
            id: id.into(),
            verdict: Verdict::Skipped,
            worst_violation: 0.0,
            witness: None,
            points_checked: 0,
            points_excluded: 0,
            statement: why.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportGlobal {
    pub tolerances: Tolerances,
    pub grid: GridSpec,
    pub seed: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpsInfo {
    pub eps: f64,
    pub g_l1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub theorem: TheoremMode,
    pub problem: String,
    pub hypotheses: Vec<HypothesisRecord>,
    pub conclusion: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<EpsInfo>,
    pub global: ReportGlobal,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.conclusion == Verdict::Pass
    }

    pub fn hypothesis(&self, id: &str) -> Option<&HypothesisRecord> {
        self.hypotheses.iter().find(|h| h.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_wire_names() {
        assert_eq!(TheoremMode::Teo1.as_str(), "teo1");
        assert_eq!(TheoremMode::parse("eps"), Some(TheoremMode::Eps));
        assert_eq!(TheoremMode::parse("nosuch"), None);
        let json = serde_json::to_string(&TheoremMode::Teo2).unwrap();
        assert_eq!(json, "\"teo2\"");
    }
}
