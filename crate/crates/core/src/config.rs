//! Numeric defaults and TOML run configuration.
//!
//! Gallery problems are loadable by name with parameter overrides; every
//! CLI flag has a config-file mirror, with flags winning on conflict.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HjbError, Result};

/// One table of every numeric default, printable by `--print-defaults`.
#[derive(Debug, Clone, Serialize)]
pub struct Defaults {
    pub dist_tol: f64,
    pub grad_tol: f64,
    pub h_grad: f64,
    pub hjb_tol: f64,
    pub target_tol: f64,
    pub boundary_tol: f64,
    pub ndj_tol: f64,
    pub liminf_tol: f64,
    pub control_samples: usize,
    pub rk4_steps_per_span: usize,
    pub brute_max_pieces: usize,
    pub brute_max_total: u128,
    pub synthesis_cutoff: f64,
    pub ess_quantile: f64,
    pub seed: u64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            dist_tol: 1e-9,
            grad_tol: 1e-4,
            h_grad: 1e-5,
            hjb_tol: 1e-6,
            target_tol: 1e-6,
            boundary_tol: 1e-6,
            ndj_tol: 1e-3,
            liminf_tol: 1e-2,
            control_samples: 3,
            rk4_steps_per_span: 2000,
            brute_max_pieces: 6,
            brute_max_total: 200_000,
            synthesis_cutoff: 1e-4,
            ess_quantile: 0.05,
            seed: 42,
        }
    }
}

impl Defaults {
    pub fn table(&self) -> String {
        let mut s = String::from("default            value\n");
        let rows = [
            ("dist_tol", format!("{:e}", self.dist_tol)),
            ("grad_tol", format!("{:e}", self.grad_tol)),
            ("h_grad", format!("{:e} x local scale", self.h_grad)),
            ("hjb_tol", format!("{:e}", self.hjb_tol)),
            ("target_tol", format!("{:e}", self.target_tol)),
            ("boundary_tol", format!("{:e}", self.boundary_tol)),
            ("ndj_tol", format!("{:e}", self.ndj_tol)),
            ("liminf_tol", format!("{:e}", self.liminf_tol)),
            ("control_samples", self.control_samples.to_string()),
            (
                "rk4_steps_per_span",
                self.rk4_steps_per_span.to_string(),
            ),
            ("brute_max_pieces", self.brute_max_pieces.to_string()),
            ("brute_max_total", self.brute_max_total.to_string()),
            ("synthesis_cutoff", format!("{:e}", self.synthesis_cutoff)),
            ("ess_quantile", self.ess_quantile.to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in rows {
            s.push_str(&format!("{k:<19}{v}\n"));
        }
        s
    }
}

/// TOML mirror of the CLI flags.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub theorem: Option<String>,
    pub eps: Option<f64>,
    pub g_l1: Option<f64>,
    /// [t_min, t_max, x1_min, x1_max, ...]
    pub grid: Option<Vec<f64>>,
    pub mesh: Option<f64>,
    pub tol_hjb: Option<f64>,
    pub tol_target: Option<f64>,
    pub dist_tol: Option<f64>,
    pub grad_tol: Option<f64>,
    pub h_grad: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| HjbError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = r#"
            problem = "sin1x"
            theorem = "teo1"
            mesh = 0.0078125
            grid = [-2.0, 2.0, -1.0, 1.0]
            tol_hjb = 1e-6
            seed = 7
        "#;
        let cfg: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.problem.as_deref(), Some("sin1x"));
        assert_eq!(cfg.grid.as_deref(), Some(&[-2.0, 2.0, -1.0, 1.0][..]));
        assert_eq!(cfg.seed, Some(7));
    }

    #[test]
    fn defaults_table_mentions_every_knob() {
        let t = Defaults::default().table();
        for key in ["dist_tol", "hjb_tol", "ess_quantile", "seed"] {
            assert!(t.contains(key), "missing {key}");
        }
    }
}
