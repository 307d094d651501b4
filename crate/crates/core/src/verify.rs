//! Numerical audits of the verification-theorem hypotheses: the HJB
//! inequality off the exceptional set, target and boundary comparisons,
//! weak-continuity probes, crossing statistics and dynamic-programming
//! residuals.
//!
//! Every check is refutation-only: a pass means "no violation found at this
//! resolution", never a proof.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::candidate::CandidateValueFunction;
use crate::control::PiecewiseConstantControl;
use crate::error::{HjbError, Result};
use crate::geom::{self, Point};
use crate::grid::GridSpec;
use crate::integrate::{cost_until, first_target_hit, integrate_with_cost};
use crate::problem::{ControlProblem, HorizonMode};
use crate::rectifiable::RectifiableSet;
use crate::report::{
    EpsInfo, HypothesisRecord, ReportGlobal, TheoremMode, Tolerances, VerificationReport, Verdict,
};
use crate::set::SetSpec;
use crate::trajectory::Trajectory;

/// How the boundary level-set hypothesis is audited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// |W - sup W| small at sampled boundary points.
    StrictLevelSet,
    /// Relaxed form: along approach sequences from inside, the liminf stays
    /// above sup W.
    ApproachLiminf,
}

/// Relaxation data for the epsilon-approximate mode: the HJB inequality is
/// required only down to -eps g(s), the target comparison up to +eps, and
/// the running cost down to -eps g(s).
#[derive(Clone)]
pub struct EpsMode {
    pub eps: f64,
    pub g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub g_l1: f64,
}

impl EpsMode {
    pub fn constant_g(eps: f64, g_l1: f64) -> Self {
        Self {
            eps,
            g: Arc::new(|_| 1.0),
            g_l1,
        }
    }
}

#[derive(Clone)]
pub struct CheckBudgets {
    pub target_samples: usize,
    pub boundary_samples: usize,
    /// Constant controls along which the no-downward-jump probe runs.
    pub ndj_controls: usize,
    pub ndj_starts: usize,
    /// Backward offsets as fractions of the time extent.
    pub ndj_offsets: Vec<f64>,
    pub ess_points: usize,
    /// Annulus radii as fractions of the space extent, decreasing.
    pub ess_annuli: Vec<f64>,
    pub ess_samples: usize,
    /// Quantile order of the essential-liminf surrogate; 0 takes the sample
    /// minimum, which already ignores null sets almost surely.
    pub ess_quantile: f64,
    /// Refinement level for exceptional-set distance queries.
    pub refine_level: u32,
}

impl Default for CheckBudgets {
    fn default() -> Self {
        Self {
            target_samples: 256,
            boundary_samples: 128,
            ndj_controls: 2,
            ndj_starts: 6,
            ndj_offsets: vec![1e-2, 1e-3, 1e-4],
            ess_points: 48,
            ess_annuli: vec![0.04, 0.02, 0.01, 0.005],
            ess_samples: 512,
            ess_quantile: 0.05,
            refine_level: 2,
        }
    }
}

#[derive(Clone)]
pub struct HypothesisCheckSpec {
    pub theorem: TheoremMode,
    pub grid: GridSpec,
    pub tolerances: Tolerances,
    pub control_samples: usize,
    pub eps_mode: Option<EpsMode>,
    pub boundary_mode: BoundaryMode,
    pub budgets: CheckBudgets,
}

impl HypothesisCheckSpec {
    pub fn new(theorem: TheoremMode, grid: GridSpec, tolerances: Tolerances) -> Self {
        Self {
            theorem,
            grid,
            tolerances,
            control_samples: 3,
            eps_mode: None,
            boundary_mode: BoundaryMode::StrictLevelSet,
            budgets: CheckBudgets::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        if t.hjb_tol <= 0.0
            || t.target_tol <= 0.0
            || t.boundary_tol <= 0.0
            || t.ndj_tol <= 0.0
            || t.liminf_tol <= 0.0
        {
            return Err(HjbError::Precondition("tolerances must be positive".into()));
        }
        if t.exclusion_radius < self.grid.space_mesh() {
            return Err(HjbError::Precondition(format!(
                "exclusion radius {} below grid mesh {}",
                t.exclusion_radius,
                self.grid.space_mesh()
            )));
        }
        if self.theorem == TheoremMode::Eps && self.eps_mode.is_none() {
            return Err(HjbError::ModeMismatch {
                expected: "eps parameters".into(),
                found: "none".into(),
            });
        }
        Ok(())
    }

    fn eps_at(&self, t: f64) -> f64 {
        match &self.eps_mode {
            Some(m) => m.eps * (m.g)(t),
            None => 0.0,
        }
    }

    fn eps_flat(&self) -> f64 {
        self.eps_mode.as_ref().map_or(0.0, |m| m.eps)
    }
}

/// One evaluated grid residual, exportable as CSV for plotting.
#[derive(Debug, Clone)]
pub struct ResidualSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub residual: f64,
}

pub fn write_residual_csv<W: std::io::Write>(
    samples: &[ResidualSample],
    mut w: W,
) -> Result<()> {
    if samples.is_empty() {
        writeln!(w, "t,residual")?;
        return Ok(());
    }
    write!(w, "t")?;
    for i in 1..=samples[0].x.len() {
        write!(w, ",x{i}")?;
    }
    writeln!(w, ",residual")?;
    for s in samples {
        write!(w, "{}", s.t)?;
        for c in &s.x {
            write!(w, ",{c}")?;
        }
        writeln!(w, ",{}", s.residual)?;
    }
    Ok(())
}

/// Outcome of a pointwise HJB residual query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualPoint {
    /// The point lies within the exclusion radius of the exceptional set.
    Excluded,
    /// W is +infinity here; the inequality holds vacuously.
    VacuousInfinite,
    Value(f64),
}

/// W_s + min over sampled controls of [W_y . f + L] at one point.
pub fn hjb_residual(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    control_samples: usize,
    exclusion_radius: f64,
    refine_level: u32,
) -> ResidualPoint {
    if w
        .exceptional_set
        .within(t, x, exclusion_radius, refine_level)
    {
        return ResidualPoint::Excluded;
    }
    let controls = problem.control_set.sample(control_samples);
    raw_hjb_residual(w, problem, t, x, &controls)
}

fn raw_hjb_residual(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    controls: &[Vec<f64>],
) -> ResidualPoint {
    if w.eval(t, x).is_infinite() {
        return ResidualPoint::VacuousInfinite;
    }
    let (ws, wy) = w.gradient_at(t, x);
    let mut fx = vec![0.0; problem.dim];
    let mut best = f64::INFINITY;
    for u in controls {
        problem.eval_dynamics(t, x, u, &mut fx);
        let ham: f64 = wy.iter().zip(&fx).map(|(a, b)| a * b).sum::<f64>()
            + problem.eval_running_cost(t, x, u);
        best = best.min(ham);
    }
    ResidualPoint::Value(ws + best)
}

// ---------------------------------------------------------------------------
// weak-continuity probes

/// Worst no-downward-jump violation along a trajectory: the max over sample
/// times of min over backward offsets h of W(t-h, g(t-h)) - W(t, g(t)).
/// Positive values witness a downward jump in forward time.
pub fn check_ndj(
    w: &CandidateValueFunction,
    traj: &Trajectory,
    h_list: &[f64],
    restrict: Option<&SetSpec>,
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let max_h = h_list.iter().cloned().fold(0.0f64, f64::max);
    for (i, &t) in traj.times.iter().enumerate() {
        if t - max_h < traj.start_time() {
            continue;
        }
        let x = &traj.states[i];
        if let Some(set) = restrict {
            if !set.contains(t, x) {
                continue;
            }
        }
        let here = w.eval(t, x);
        if here.is_infinite() {
            continue;
        }
        let mut back_min = f64::INFINITY;
        for &h in h_list {
            let tb = t - h;
            let xb = traj.state_at(tb);
            if let Some(set) = restrict {
                if !set.contains(tb, &xb) {
                    continue;
                }
            }
            back_min = back_min.min(w.eval(tb, &xb) - here);
        }
        if back_min.is_finite() {
            worst = worst.max(back_min);
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct EssOutcome {
    /// Essential-liminf surrogate: min over annuli of the per-annulus
    /// quantile of sampled W values.
    pub proxy: f64,
    pub w_value: f64,
    /// proxy - W; positive beyond tolerance refutes the hypothesis.
    pub violation: f64,
    /// Fraction of candidate samples inside W's domain.
    pub coverage: f64,
}

/// Samples shrinking annuli around x in the space slice at time t and
/// compares the quantile proxy with W(t, x).
pub fn check_ess_liminf(
    w: &CandidateValueFunction,
    t: f64,
    x: &[f64],
    annuli: &[f64],
    samples_per_annulus: usize,
    quantile: f64,
    rng: &mut ChaCha8Rng,
    domain: Option<&SetSpec>,
) -> EssOutcome {
    let n = x.len();
    let mut proxy = f64::INFINITY;
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    for &r in annuli {
        let mut vals = Vec::with_capacity(samples_per_annulus);
        let mut guard = 0;
        while vals.len() < samples_per_annulus && guard < 50 * samples_per_annulus {
            guard += 1;
            attempts += 1;
            let y: Vec<f64> = (0..n)
                .map(|i| x[i] + rng.gen_range(-r..=r))
                .collect();
            let d = geom::dist(&y, x);
            if d > r || d <= 0.5 * r {
                continue;
            }
            if let Some(set) = domain {
                if !set.contains(t, &y) {
                    continue;
                }
            }
            accepted += 1;
            vals.push(w.eval(t, &y));
        }
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = ((quantile * (vals.len() - 1) as f64).floor() as usize).min(vals.len() - 1);
        proxy = proxy.min(vals[k]);
    }
    let w_value = w.eval(t, x);
    EssOutcome {
        proxy,
        w_value,
        violation: if proxy.is_finite() && w_value.is_finite() {
            proxy - w_value
        } else if proxy.is_infinite() && w_value.is_finite() {
            f64::INFINITY
        } else {
            0.0
        },
        coverage: if attempts == 0 {
            1.0
        } else {
            accepted as f64 / attempts as f64
        },
    }
}

/// Worst decrease of phi(t) = W(t, x(t)) + integral of L along the
/// trajectory of the given control; positive values witness a breach of the
/// monotonicity the comparison argument needs. Checked only while the
/// trajectory stays in the verification window.
pub fn check_monotone_cost(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    control: &PiecewiseConstantControl,
    t0: f64,
    x0: &[f64],
    tf: f64,
    step: f64,
) -> Result<f64> {
    let (traj, costs) = integrate_with_cost(problem, control, t0, x0, tf, step)?;
    let mut prev: Option<f64> = None;
    let mut worst = 0.0f64;
    for (i, &t) in traj.times.iter().enumerate() {
        let x = &traj.states[i];
        if !problem.verification_domain.contains(t, x) {
            break;
        }
        let wv = w.eval(t, x);
        if wv.is_infinite() {
            prev = None;
            continue;
        }
        let phi = wv + costs[i];
        if let Some(p) = prev {
            worst = worst.max(p - phi);
        }
        prev = Some(phi);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// the finite-horizon hypothesis suite

struct GridScan {
    sup_w: f64,
    residuals: Vec<ResidualSample>,
    hjb_record: HypothesisRecord,
}

fn scan_grid_hjb(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    controls: &[Vec<f64>],
) -> GridScan {
    let grid = &spec.grid;
    let nspace = grid.space_point_count();
    let total = grid.point_count();
    let rho = spec.tolerances.exclusion_radius;
    let refine = spec.budgets.refine_level;

    #[derive(Clone)]
    enum P {
        Outside,
        Excluded,
        Vacuous(f64),
        Sample(f64, f64), // residual, violation
    }

    let pts: Vec<P> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let ti = flat / nspace;
            let si = flat % nspace;
            let t = grid.t.at(ti);
            let x = grid.space_point(si);
            if !problem.verification_domain.contains(t, &x) {
                return P::Outside;
            }
            if w.exceptional_set.within(t, &x, rho, refine) {
                return P::Excluded;
            }
            match raw_hjb_residual(w, problem, t, &x, controls) {
                ResidualPoint::VacuousInfinite => P::Vacuous(t),
                ResidualPoint::Value(r) => P::Sample(r, -r - spec.eps_at(t)),
                ResidualPoint::Excluded => P::Excluded,
            }
        })
        .collect();

    let mut sup_w = f64::NEG_INFINITY;
    // the boundary-hypothesis sup runs over the same grid restricted to Q
    for flat in 0..total {
        if matches!(pts[flat], P::Outside) {
            continue;
        }
        let ti = flat / nspace;
        let si = flat % nspace;
        let v = w.eval(grid.t.at(ti), &grid.space_point(si));
        if v.is_finite() {
            sup_w = sup_w.max(v);
        }
    }

    let mut residuals = Vec::new();
    let mut checked = 0usize;
    let mut excluded = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for (flat, p) in pts.iter().enumerate() {
        let ti = flat / nspace;
        let si = flat % nspace;
        match p {
            P::Outside => {}
            P::Excluded => excluded += 1,
            P::Vacuous(_) => checked += 1,
            P::Sample(r, v) => {
                checked += 1;
                residuals.push(ResidualSample {
                    t: grid.t.at(ti),
                    x: grid.space_point(si),
                    residual: *r,
                });
                if *v > worst {
                    worst = *v;
                    witness = Some(Point::new(grid.t.at(ti), grid.space_point(si)));
                }
            }
        }
    }
    let worst = if worst.is_finite() { worst } else { 0.0 };
    let pass = worst <= spec.tolerances.hjb_tol;
    let statement = if pass {
        format!(
            "no violation found at grid mesh {:.3e} ({checked} points checked, {excluded} excluded near A)",
            grid.space_mesh()
        )
    } else {
        format!("violation witnessed: residual margin {worst:.6e}")
    };
    GridScan {
        sup_w,
        residuals,
        hjb_record: HypothesisRecord {
            id: "iv".into(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            worst_violation: worst,
            witness,
            points_checked: checked,
            points_excluded: excluded,
            statement,
        },
    }
}

fn target_record(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    set: &SetSpec,
    rng: &mut ChaCha8Rng,
) -> HypothesisRecord {
    let pts = set.sample(rng, spec.budgets.target_samples);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut checked = 0;
    for p in &pts {
        let wv = w.eval(p.t, &p.x);
        if wv.is_infinite() {
            continue;
        }
        checked += 1;
        let v = wv - problem.eval_final_cost(p.t, &p.x) - spec.eps_flat();
        if v > worst {
            worst = v;
            witness = Some(p.clone());
        }
    }
    let worst = if worst.is_finite() { worst } else { 0.0 };
    let pass = worst <= spec.tolerances.target_tol;
    HypothesisRecord {
        id: "ii".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        worst_violation: worst,
        witness,
        points_checked: checked,
        points_excluded: 0,
        statement: if pass {
            format!("W <= final cost within {:.1e} on {checked} sampled target points", spec.tolerances.target_tol)
        } else {
            "violation witnessed on the target".into()
        },
    }
}

fn boundary_record(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    sup_w: f64,
    rng: &mut ChaCha8Rng,
) -> HypothesisRecord {
    let pts = problem
        .verification_domain
        .sample(rng, spec.budgets.boundary_samples);
    if pts.is_empty() {
        return HypothesisRecord::skipped("iii", "no boundary sampler available");
    }
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for p in &pts {
        let v = match spec.boundary_mode {
            BoundaryMode::StrictLevelSet => (w.eval(p.t, &p.x) - sup_w).abs(),
            BoundaryMode::ApproachLiminf => {
                // approach the boundary point along a sampled inward direction
                let dir = inward_direction(problem, p, rng);
                match dir {
                    Some(d) => {
                        let mut min_along = f64::INFINITY;
                        for k in 1..=6 {
                            let s = 0.5f64.powi(k);
                            let y: Vec<f64> =
                                p.x.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                            if problem.verification_domain.contains(p.t, &y) {
                                min_along = min_along.min(w.eval(p.t, &y));
                            }
                        }
                        sup_w - min_along
                    }
                    None => continue,
                }
            }
        };
        if v > worst {
            worst = v;
            witness = Some(p.clone());
        }
    }
    let worst = if worst.is_finite() { worst } else { 0.0 };
    let pass = worst <= spec.tolerances.boundary_tol;
    HypothesisRecord {
        id: "iii".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        worst_violation: worst,
        witness,
        points_checked: pts.len(),
        points_excluded: 0,
        statement: match spec.boundary_mode {
            BoundaryMode::StrictLevelSet => {
                format!("boundary is a level set of W within {:.1e} (window-limited)", spec.tolerances.boundary_tol)
            }
            BoundaryMode::ApproachLiminf => {
                "approach-sequence liminf stays above sup W (resolution-limited)".into()
            }
        },
    }
}

fn inward_direction(
    problem: &ControlProblem,
    p: &Point,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    let n = p.x.len();
    for _ in 0..32 {
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let nd = geom::norm(&d);
        if nd == 0.0 {
            continue;
        }
        let d: Vec<f64> = d.iter().map(|c| c / nd).collect();
        let probe: Vec<f64> = p.x.iter().zip(&d).map(|(a, b)| a + 1e-3 * b).collect();
        if problem.verification_domain.contains(p.t, &probe) {
            return Some(d);
        }
    }
    None
}

fn positivity_record(
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    controls: &[Vec<f64>],
) -> HypothesisRecord {
    let grid = &spec.grid;
    let nspace = grid.space_point_count();
    let total = grid.point_count();
    let rows: Vec<(f64, usize)> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let ti = flat / nspace;
            let si = flat % nspace;
            let t = grid.t.at(ti);
            let x = grid.space_point(si);
            if !problem.domain.contains(t, &x) {
                return (f64::NEG_INFINITY, flat);
            }
            let mut worst = f64::NEG_INFINITY;
            for u in controls {
                let l = problem.eval_running_cost(t, &x, u);
                worst = worst.max(-l - spec.eps_at(t));
            }
            (worst, flat)
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0usize;
    let mut checked = 0usize;
    for (v, flat) in rows {
        if v.is_finite() {
            checked += 1;
            if v > worst {
                worst = v;
                at = flat;
            }
        }
    }
    let pass = worst <= spec.tolerances.hjb_tol;
    let witness = Some(Point::new(
        grid.t.at(at / nspace),
        grid.space_point(at % nspace),
    ));
    HypothesisRecord {
        id: "v".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        worst_violation: worst,
        witness: if checked > 0 { witness } else { None },
        points_checked: checked,
        points_excluded: 0,
        statement: if pass {
            "running cost nonnegative on the sampled window".into()
        } else {
            "negative running cost witnessed".into()
        },
    }
}

fn ndj_ess_record(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    controls: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> HypothesisRecord {
    let grid = &spec.grid;
    let t_extent = grid.t.max() - grid.t.min;
    let space_extent = grid
        .space
        .iter()
        .map(|a| a.max() - a.min)
        .fold(0.0f64, f64::max);
    let h_list: Vec<f64> = spec
        .budgets
        .ndj_offsets
        .iter()
        .map(|f| f * t_extent.max(1e-9))
        .collect();

    // random in-window starts inside Q
    let sample_start = |rng: &mut ChaCha8Rng| -> Option<(f64, Vec<f64>)> {
        for _ in 0..200 {
            let t = grid.t.min + rng.gen_range(0.0..=0.5) * t_extent;
            let x: Vec<f64> = grid
                .space
                .iter()
                .map(|a| rng.gen_range(a.min..=a.max()))
                .collect();
            if problem.verification_domain.contains(t, &x) {
                return Some((t, x));
            }
        }
        None
    };

    let mut ndj_worst = f64::NEG_INFINITY;
    let mut ndj_witness = None;
    let mut trajectories = 0usize;
    let n_controls = spec.budgets.ndj_controls.min(controls.len()).max(1);
    for u in controls.iter().take(n_controls) {
        for _ in 0..spec.budgets.ndj_starts {
            let Some((t0, x0)) = sample_start(rng) else {
                continue;
            };
            let tf = t0 + 0.5 * t_extent;
            let control = PiecewiseConstantControl::constant(t0, tf, u.clone());
            let step = t_extent / 2000.0;
            let Ok((traj, _)) =
                integrate_with_cost(problem, &control, t0, &x0, tf, step)
            else {
                continue;
            };
            trajectories += 1;
            let v = check_ndj(w, &traj, &h_list, Some(&problem.verification_domain));
            if v > ndj_worst {
                ndj_worst = v;
                ndj_witness = Some(Point::new(t0, x0));
            }
        }
    }

    let annuli: Vec<f64> = spec
        .budgets
        .ess_annuli
        .iter()
        .map(|f| f * space_extent.max(1e-9))
        .collect();
    let mut ess_worst = f64::NEG_INFINITY;
    let mut ess_witness = None;
    let mut ess_points = 0usize;
    for _ in 0..spec.budgets.ess_points {
        let Some((t, x)) = sample_start(rng) else {
            continue;
        };
        if w.eval(t, &x).is_infinite() {
            continue;
        }
        ess_points += 1;
        let out = check_ess_liminf(
            w,
            t,
            &x,
            &annuli,
            spec.budgets.ess_samples,
            spec.budgets.ess_quantile,
            rng,
            Some(&problem.verification_domain),
        );
        if out.violation > ess_worst {
            ess_worst = out.violation;
            ess_witness = Some(Point::new(t, x));
        }
    }

    let ndj_pass = !ndj_worst.is_finite() || ndj_worst <= spec.tolerances.ndj_tol;
    let ess_pass = !ess_worst.is_finite() || ess_worst <= spec.tolerances.liminf_tol;
    let pass = ndj_pass && ess_pass;
    let worst = ndj_worst.max(ess_worst);
    HypothesisRecord {
        id: "i".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        worst_violation: if worst.is_finite() { worst } else { 0.0 },
        witness: if !ndj_pass { ndj_witness } else if !ess_pass { ess_witness } else { None },
        points_checked: trajectories + ess_points,
        points_excluded: 0,
        statement: format!(
            "no-downward-jump worst {:.3e} over {} trajectories; ess-liminf worst {:.3e} over {} points",
            if ndj_worst.is_finite() { ndj_worst } else { 0.0 },
            trajectories,
            if ess_worst.is_finite() { ess_worst } else { 0.0 },
            ess_points
        ),
    }
}

fn conclude(hypotheses: &[HypothesisRecord]) -> Verdict {
    if hypotheses
        .iter()
        .all(|h| h.verdict != Verdict::Fail)
    {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Audits every hypothesis of the finite-horizon verification statement
/// (or its epsilon relaxation) on the spec's grid window.
pub fn check_hypotheses(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    seed: u64,
    problem_name: &str,
) -> Result<VerificationReport> {
    check_hypotheses_with_residuals(w, problem, spec, seed, problem_name).map(|(r, _)| r)
}

/// Like [`check_hypotheses`] but also returns the evaluated HJB residual
/// field for export.
pub fn check_hypotheses_with_residuals(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    seed: u64,
    problem_name: &str,
) -> Result<(VerificationReport, Vec<ResidualSample>)> {
    spec.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let controls = problem.control_set.sample(spec.control_samples);

    let scan = scan_grid_hjb(w, problem, spec, &controls);
    let rec_i = ndj_ess_record(w, problem, spec, &controls, &mut rng);
    let rec_ii = target_record(w, problem, spec, &problem.target, &mut rng);
    let (rec_iii, rec_v) = if problem.q_is_omega {
        (
            HypothesisRecord::skipped("iii", "Q equals the whole domain; boundary condition dropped"),
            HypothesisRecord::skipped("v", "Q equals the whole domain; cost positivity dropped"),
        )
    } else {
        (
            boundary_record(w, problem, spec, scan.sup_w, &mut rng),
            positivity_record(problem, spec, &controls),
        )
    };

    let hypotheses = vec![rec_i, rec_ii, rec_iii, scan.hjb_record, rec_v];
    let conclusion = conclude(&hypotheses);
    let report = VerificationReport {
        theorem: spec.theorem,
        problem: problem_name.to_string(),
        hypotheses,
        conclusion,
        eps: spec.eps_mode.as_ref().map(|m| EpsInfo {
            eps: m.eps,
            g_l1: m.g_l1,
        }),
        global: ReportGlobal {
            tolerances: spec.tolerances,
            grid: spec.grid.clone(),
            seed,
            wall_ms: started.elapsed().as_millis() as u64,
        },
    };
    Ok((report, scan.residuals))
}

// ---------------------------------------------------------------------------
// epsilon-approximate certificate

#[derive(Debug, Clone)]
pub struct CorollaryCertificate {
    pub certified: bool,
    /// eps (1 + ||g||_1); meaningful only when certified.
    pub bound: f64,
    pub text: String,
}

/// Turns a passed epsilon-mode report into the explicit comparison bound
/// W <= V + eps (1 + ||g||_1).
pub fn corollary_eps_bound(
    report: &VerificationReport,
    eps: f64,
    g_l1: f64,
) -> Result<CorollaryCertificate> {
    if report.theorem != TheoremMode::Eps {
        return Err(HjbError::ModeMismatch {
            expected: "eps".into(),
            found: report.theorem.as_str().into(),
        });
    }
    match &report.eps {
        Some(info) if (info.eps - eps).abs() <= 1e-12 * (1.0 + eps.abs()) => {}
        _ => {
            return Err(HjbError::ModeMismatch {
                expected: format!("report produced with eps={eps}"),
                found: "different eps".into(),
            })
        }
    }
    let bound = eps * (1.0 + g_l1);
    if report.passed() {
        Ok(CorollaryCertificate {
            certified: true,
            bound,
            text: format!(
                "relaxed hypotheses hold at the checked resolution; W <= V + {bound:.6} on the window"
            ),
        })
    } else {
        Ok(CorollaryCertificate {
            certified: false,
            bound,
            text: "no certificate: at least one relaxed hypothesis failed".into(),
        })
    }
}

// ---------------------------------------------------------------------------
// infinite horizon

#[derive(Clone)]
pub struct ProbeControl {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub control: PiecewiseConstantControl,
}

/// Audits the infinite-horizon hypotheses by horizon truncation: the
/// finite-window checks plus the structural late-target property, the
/// comparison on the target neighborhood, and the tail comparison
/// W(T_j, x(T_j)) <= psi(T_j, x(T_j)) along probe trajectories.
#[allow(clippy::too_many_arguments)]
pub fn check_infinite_horizon(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    horizons: &[f64],
    probes: &[ProbeControl],
    step: f64,
    seed: u64,
    problem_name: &str,
) -> Result<VerificationReport> {
    check_infinite_horizon_with_residuals(
        w, problem, spec, horizons, probes, step, seed, problem_name,
    )
    .map(|(r, _)| r)
}

/// Like [`check_infinite_horizon`] but also returns the HJB residual field.
#[allow(clippy::too_many_arguments)]
pub fn check_infinite_horizon_with_residuals(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    spec: &HypothesisCheckSpec,
    horizons: &[f64],
    probes: &[ProbeControl],
    step: f64,
    seed: u64,
    problem_name: &str,
) -> Result<(VerificationReport, Vec<ResidualSample>)> {
    spec.validate()?;
    if problem.horizon_mode != HorizonMode::Infinite {
        return Err(HjbError::Precondition(
            "problem is not in infinite-horizon mode".into(),
        ));
    }
    let neighborhood = problem.target_neighborhood.as_ref().ok_or_else(|| {
        HjbError::Precondition("infinite mode requires a target neighborhood".into())
    })?;
    if horizons.len() < 2 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HjbError::Precondition(
            "horizons must be increasing, at least two".into(),
        ));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let controls = problem.control_set.sample(spec.control_samples);

    let scan = scan_grid_hjb(w, problem, spec, &controls);
    let rec_i = ndj_ess_record(w, problem, spec, &controls, &mut rng);
    // comparison with the final cost happens on the target neighborhood
    let mut rec_ii = target_record(w, problem, spec, neighborhood, &mut rng);
    rec_ii.statement = format!("W <= final cost on {} sampled neighborhood points", rec_ii.points_checked);
    let (rec_iii, rec_v) = if problem.q_is_omega {
        (
            HypothesisRecord::skipped("iii", "Q equals the whole domain; boundary condition dropped"),
            HypothesisRecord::skipped("v", "Q equals the whole domain; cost positivity dropped"),
        )
    } else {
        (
            boundary_record(w, problem, spec, scan.sup_w, &mut rng),
            positivity_record(problem, spec, &controls),
        )
    };

    // structural property: the target contains arbitrarily late points
    let star = {
        let pts = problem.target.sample(&mut rng, spec.budgets.target_samples);
        let latest = pts.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max);
        let needed = spec.grid.t.max() - 0.05 * (spec.grid.t.max() - spec.grid.t.min);
        let pass = latest >= needed;
        HypothesisRecord {
            id: "star".into(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            worst_violation: needed - latest,
            witness: None,
            points_checked: pts.len(),
            points_excluded: 0,
            statement: format!("latest sampled target time {latest:.3} (window end {:.3})", spec.grid.t.max()),
        }
    };

    // tail comparison along probe trajectories
    let mut tail_worst = f64::NEG_INFINITY;
    let mut tail_witness = None;
    let mut inconclusive = 0usize;
    let t_end = *horizons.last().unwrap();
    let j0 = horizons.len() / 2;
    for probe in probes {
        let (traj, _) = integrate_with_cost(
            problem,
            &probe.control,
            probe.t0,
            &probe.x0,
            t_end,
            step,
        )?;
        // the probe must actually approach the target over the last half
        let half = probe.t0 + 0.5 * (t_end - probe.t0);
        let d_half = problem.target.gauge_at(half, &traj.state_at(half));
        let d_end = problem
            .target
            .gauge_at(traj.end_time(), traj.final_state());
        if d_end > d_half + spec.tolerances.ndj_tol {
            inconclusive += 1;
            continue;
        }
        let mut w_tail = f64::NEG_INFINITY;
        let mut psi_tail = f64::NEG_INFINITY;
        for &tj in &horizons[j0..] {
            let x = traj.state_at(tj);
            if !neighborhood.contains(tj, &x) {
                inconclusive += 1;
                continue;
            }
            w_tail = w_tail.max(w.eval(tj, &x));
            psi_tail = psi_tail.max(problem.eval_final_cost(tj, &x));
        }
        if w_tail.is_finite() && psi_tail.is_finite() {
            let v = w_tail - psi_tail;
            if v > tail_worst {
                tail_worst = v;
                tail_witness = Some(Point::new(probe.t0, probe.x0.clone()));
            }
        }
    }
    let tail_pass = !tail_worst.is_finite() || tail_worst <= spec.tolerances.ndj_tol;
    let tail = HypothesisRecord {
        id: "tail".into(),
        verdict: if tail_pass { Verdict::Pass } else { Verdict::Fail },
        worst_violation: if tail_worst.is_finite() { tail_worst } else { 0.0 },
        witness: tail_witness,
        points_checked: probes.len(),
        points_excluded: inconclusive,
        statement: format!(
            "tail comparison over horizons j >= {j0}; {inconclusive} probe readings inconclusive"
        ),
    };

    let hypotheses = vec![rec_i, rec_ii, rec_iii, scan.hjb_record, rec_v, star, tail];
    let conclusion = conclude(&hypotheses);
    Ok((
        VerificationReport {
            theorem: TheoremMode::Teo2,
            problem: problem_name.to_string(),
            hypotheses,
            conclusion,
            eps: None,
            global: ReportGlobal {
                tolerances: spec.tolerances,
                grid: spec.grid.clone(),
                seed,
                wall_ms: started.elapsed().as_millis() as u64,
            },
        },
        scan.residuals,
    ))
}

// ---------------------------------------------------------------------------
// crossing statistic, DPP residual, divergence probe

/// Monte-Carlo surrogate for the crossing lemma: the expected fraction of
/// time a constant-control trajectory spends within delta of the
/// exceptional set, per delta. Transversal crossings make the fraction
/// linear in delta.
#[allow(clippy::too_many_arguments)]
pub fn crossing_tube_statistic(
    a: &RectifiableSet,
    problem: &ControlProblem,
    omega: &[f64],
    start_box: &[(f64, f64)],
    t_window: (f64, f64),
    deltas: &[f64],
    trials: usize,
    step: f64,
    refine: u32,
    seed: u64,
) -> Vec<(f64, f64)> {
    let starts: Vec<Vec<f64>> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..trials)
            .map(|_| {
                start_box
                    .iter()
                    .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                    .collect()
            })
            .collect()
    };
    let per_trial: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|x0| {
            let control =
                PiecewiseConstantControl::constant(t_window.0, t_window.1, omega.to_vec());
            let Ok((traj, _)) = integrate_with_cost(
                problem,
                &control,
                t_window.0,
                x0,
                t_window.1,
                step,
            ) else {
                return vec![0.0; deltas.len()];
            };
            let dists: Vec<f64> = traj
                .times
                .iter()
                .zip(&traj.states)
                .map(|(&t, x)| a.distance(t, x, refine).lower)
                .collect();
            deltas
                .iter()
                .map(|&d| {
                    let hits = dists.iter().filter(|&&v| v <= d).count();
                    hits as f64 / dists.len() as f64
                })
                .collect()
        })
        .collect();
    deltas
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let mean = per_trial.iter().map(|row| row[k]).sum::<f64>() / trials.max(1) as f64;
            (d, mean)
        })
        .collect()
}

/// W(t0, x0) minus the best searched value of [cost integral to T1 plus
/// W(T1, x(T1))]. Near zero certifies dynamic-programming behavior at the
/// search resolution; controls hitting the target before T1 are dropped.
#[allow(clippy::too_many_arguments)]
pub fn dpp_residual(
    w: &CandidateValueFunction,
    problem: &ControlProblem,
    t0: f64,
    x0: &[f64],
    t1: f64,
    pieces: usize,
    control_samples: usize,
    step: f64,
    hit_radius: f64,
) -> Result<f64> {
    if t1 <= t0 {
        return Err(HjbError::Precondition("T1 must exceed t0".into()));
    }
    let samples = problem.control_set.sample(control_samples);
    let total = samples.len().pow(pieces as u32);
    let mut best = f64::INFINITY;
    let mut any_valid = false;
    for mut c in 0..total {
        let values: Vec<Vec<f64>> = (0..pieces)
            .map(|_| {
                let v = samples[c % samples.len()].clone();
                c /= samples.len();
                v
            })
            .collect();
        let control = PiecewiseConstantControl::equal_pieces(t0, t1, values);
        let Ok((traj, costs)) = integrate_with_cost(problem, &control, t0, x0, t1, step) else {
            continue;
        };
        if traj.domain_exit.is_some() {
            continue;
        }
        if first_target_hit(&problem.target, &traj, hit_radius).is_some() {
            continue; // hits the target before T1
        }
        any_valid = true;
        let run = cost_until(problem, &traj, &costs, t1)?;
        let score = run + w.eval(t1, traj.final_state());
        best = best.min(score);
    }
    if !any_valid {
        return Err(HjbError::AllControlsHitEarly { t1 });
    }
    Ok(w.eval(t0, x0) - best)
}

/// A control plan that travels into a region, loiters there for a variable
/// dwell, then returns toward the target.
#[derive(Clone)]
pub struct LoiterPlan {
    pub t0: f64,
    pub x0: Vec<f64>,
    /// (duration, control value) segments before the dwell.
    pub pre: Vec<(f64, Vec<f64>)>,
    pub dwell_value: Vec<f64>,
    /// Segments after the dwell; must eventually reach the target.
    pub post: Vec<(f64, Vec<f64>)>,
}

/// Accumulated Bolza cost of the loiter plan for each dwell duration. A
/// cost sequence decreasing without bound certifies that no finite lower
/// bound on the value exists along this family.
pub fn divergence_probe(
    problem: &ControlProblem,
    plan: &LoiterPlan,
    dwells: &[f64],
    step: f64,
    hit_radius: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::with_capacity(dwells.len());
    for &d in dwells {
        let mut bps = vec![plan.t0];
        let mut values = Vec::new();
        let mut t = plan.t0;
        for (len, v) in &plan.pre {
            t += len;
            bps.push(t);
            values.push(v.clone());
        }
        if d > 0.0 {
            t += d;
            bps.push(t);
            values.push(plan.dwell_value.clone());
        }
        for (len, v) in &plan.post {
            t += len;
            bps.push(t);
            values.push(v.clone());
        }
        let control = PiecewiseConstantControl::new(bps, values)?;
        let (traj, costs) =
            integrate_with_cost(problem, &control, plan.t0, &plan.x0, t, step)?;
        let hit = first_target_hit(&problem.target, &traj, hit_radius).ok_or_else(|| {
            HjbError::Precondition(format!("loiter plan with dwell {d} never reaches the target"))
        })?;
        let run = cost_until(problem, &traj, &costs, hit.time)?;
        rows.push((d, run + problem.eval_final_cost(hit.time, &hit.state)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use std::f64::consts::PI;

    #[test]
    fn residual_vanishes_on_closed_form_region() {
        let entry = gallery::sin_one_over_x();
        let r = hjb_residual(
            &entry.candidate,
            &entry.problem,
            0.0,
            &[2.0 / PI],
            3,
            1e-3,
            2,
        );
        match r {
            ResidualPoint::Value(v) => assert!(v.abs() < 1e-9, "residual {v}"),
            other => panic!("expected a residual value, got {other:?}"),
        }
    }

    #[test]
    fn residual_of_constant_w_is_min_running_cost() {
        let entry = gallery::counterexample_running_cost();
        // inside Q at x = 0.5 the quartic is positive
        let r = hjb_residual(&entry.candidate, &entry.problem, 0.0, &[0.5], 21, 1e-3, 2);
        let expected = 0.5f64.powi(4) - 6.0 * 0.5f64.powi(3) + 7.0 * 0.5f64.powi(2);
        match r {
            ResidualPoint::Value(v) => {
                assert!((v - expected).abs() < 1e-12, "residual {v} vs {expected}")
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!((expected - 1.0625).abs() < 1e-12);
    }

    #[test]
    fn ndj_flags_a_constructed_downward_jump() {
        let entry = gallery::sin_one_over_x();
        let w_bad = CandidateValueFunction::new(
            Arc::new(|t, _x: &[f64]| if t < 1.0 { 1.0 } else { 0.0 }),
            None,
            RectifiableSet::empty(),
        );
        let control = PiecewiseConstantControl::constant(0.0, 2.0, vec![0.0]);
        let (traj, _) =
            integrate_with_cost(&entry.problem, &control, 0.0, &[0.2], 2.0, 0.001).unwrap();
        let h = [1e-2, 1e-3, 1e-4];
        let v_bad = check_ndj(&w_bad, &traj, &h, None);
        assert!((v_bad - 1.0).abs() < 1e-9, "violation {v_bad}");
        // the genuine candidate stays clean along the same trajectory
        let v_good = check_ndj(&entry.candidate, &traj, &h, None);
        assert!(v_good <= 1e-3, "violation {v_good}");
    }

    #[test]
    fn ess_liminf_flags_isolated_low_point() {
        let w_bad = CandidateValueFunction::new(
            Arc::new(|_t, x: &[f64]| if x[0] == 0.0 { 0.0 } else { 1.0 }),
            None,
            RectifiableSet::empty(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = check_ess_liminf(&w_bad, 0.0, &[0.0], &[0.1, 0.05], 64, 0.05, &mut rng, None);
        assert!((out.violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ess_liminf_accepts_oscillatory_target_boundary() {
        // at (t, x) = (0.5, 0) the candidate is 0 while nearby values come
        // arbitrarily close to 0 from above on positive measure
        let entry = gallery::sin_one_over_x();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let out = check_ess_liminf(
            &entry.candidate,
            0.5,
            &[0.0],
            &[0.08, 0.04, 0.02],
            2000,
            0.0,
            &mut rng,
            None,
        );
        assert!(out.w_value == 0.0);
        assert!(out.violation <= 1e-2, "violation {}", out.violation);
    }

    #[test]
    fn monotone_cost_is_flat_for_value_function() {
        let entry = gallery::sin_one_over_x();
        let control = PiecewiseConstantControl::constant(-1.5, 2.0, vec![0.4]);
        let worst = check_monotone_cost(
            &entry.candidate,
            &entry.problem,
            &control,
            -1.5,
            &[0.37],
            2.0,
            0.002,
        )
        .unwrap();
        assert!(worst <= 1e-8, "worst decrease {worst}");
    }

    #[test]
    fn dpp_residual_on_closed_form() {
        let entry = gallery::sin_one_over_x();
        let r = dpp_residual(
            &entry.candidate,
            &entry.problem,
            0.0,
            &[2.0 / PI],
            0.5,
            2,
            2,
            0.005,
            1e-8,
        )
        .unwrap();
        assert!(r.abs() < 1e-9, "residual {r}");
    }

    #[test]
    fn dpp_residual_of_zero_w_is_negative_elapsed_time() {
        let entry = gallery::sin_one_over_x();
        let w0 = CandidateValueFunction::new(
            Arc::new(|_, _: &[f64]| 0.0),
            Some(Arc::new(|_, x: &[f64]| (0.0, vec![0.0; x.len()]))),
            RectifiableSet::empty(),
        );
        let r = dpp_residual(&w0, &entry.problem, 0.0, &[2.0 / PI], 0.5, 1, 2, 0.005, 1e-8)
            .unwrap();
        assert!((r + 0.5).abs() < 1e-10, "residual {r}");
    }

    #[test]
    fn all_controls_hitting_early_is_an_error() {
        let entry = gallery::sin_one_over_x();
        // from t0 = 1.5 every point is already in the target
        let err = dpp_residual(
            &entry.candidate,
            &entry.problem,
            1.5,
            &[0.3],
            2.0,
            1,
            2,
            0.005,
            1e-8,
        )
        .unwrap_err();
        assert!(matches!(err, HjbError::AllControlsHitEarly { .. }));
    }

    #[test]
    fn crossing_fraction_is_exact_for_a_time_slice() {
        let entry = gallery::sin_one_over_x();
        let a = RectifiableSet::new(vec![crate::rectifiable::ManifoldPiece::full(
            vec![(-2.0, 2.0)],
            2,
            Arc::new(|p: &[f64]| vec![1.0, p[0]]),
            Some(Arc::new(|_: &[f64], _: &[f64]| 1.0)),
        )]);
        let rows = crossing_tube_statistic(
            &a,
            &entry.problem,
            &[0.0],
            &[(-1.0, 1.0)],
            (0.0, 2.0),
            &[0.2, 0.1, 0.05],
            40,
            0.001,
            3,
            9,
        );
        for (delta, frac) in rows {
            assert!(
                (frac - delta).abs() < 5e-3,
                "delta {delta}: fraction {frac}"
            );
        }
    }

    #[test]
    fn corollary_requires_eps_mode() {
        let entry = gallery::sin_one_over_x();
        let mut spec = entry.default_check.clone();
        spec.theorem = TheoremMode::Teo1;
        spec.grid = GridSpec::with_mesh((-1.0, 1.0), &[(-0.5, 0.5)], 1.0 / 32.0);
        spec.tolerances.exclusion_radius = 2.0 / 32.0;
        let report =
            check_hypotheses(&entry.candidate, &entry.problem, &spec, 7, "sin1x").unwrap();
        let err = corollary_eps_bound(&report, 0.01, 1.0).unwrap_err();
        assert!(matches!(err, HjbError::ModeMismatch { .. }));
    }
}
