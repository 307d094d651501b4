//! Independent estimation of the true value function: exhaustive control
//! search, semi-Lagrangian dynamic programming, and closed-loop evaluation
//! of feedback syntheses.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::control::PiecewiseConstantControl;
use crate::error::{HjbError, Result};
use crate::geom::{self, add_ext};
use crate::grid::{Axis, GridSpec, ValueGrid};
use crate::integrate::{cost_until, first_target_hit, integrate_with_cost};
use crate::problem::ControlProblem;
use crate::set::DIST_TOL;

pub type FeedbackFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

// ---------------------------------------------------------------------------
// exhaustive piecewise-constant search

#[derive(Clone)]
pub struct BruteForceOptions {
    /// Number of equal-length control pieces.
    pub pieces: usize,
    /// Absolute end time T of the search window [t0, T].
    pub horizon: f64,
    /// Lattice size passed to the control-set sampler.
    pub control_samples: usize,
    pub step: f64,
    /// Capture radius on the target gauge; the default keeps exact-hit
    /// semantics for problems whose trajectories genuinely reach the target.
    pub hit_radius: f64,
    pub max_pieces: usize,
    pub max_total: u128,
}

impl BruteForceOptions {
    pub fn new(pieces: usize, horizon: f64, control_samples: usize, step: f64) -> Self {
        Self {
            pieces,
            horizon,
            control_samples,
            step,
            hit_radius: 10.0 * DIST_TOL,
            max_pieces: 6,
            max_total: 200_000,
        }
    }

    pub fn with_hit_radius(mut self, r: f64) -> Self {
        self.hit_radius = r;
        self
    }
}

#[derive(Debug, Clone)]
pub struct BruteForceValue {
    /// Minimum over all hitting controls; +infinity when none hits.
    pub value: f64,
    pub best_control: Option<PiecewiseConstantControl>,
    pub hit_time: Option<f64>,
    pub controls_searched: usize,
}

/// Exhaustively enumerates piecewise-constant controls with equal-length
/// pieces and lattice values, scoring each by running cost up to its first
/// target hit plus the final cost there.
pub fn brute_force_value(
    problem: &ControlProblem,
    t0: f64,
    x0: &[f64],
    opts: &BruteForceOptions,
) -> Result<BruteForceValue> {
    let samples = problem.control_set.sample(opts.control_samples);
    let base = samples.len() as u128;
    let total = base.checked_pow(opts.pieces as u32).unwrap_or(u128::MAX);
    if opts.pieces > opts.max_pieces || total > opts.max_total {
        return Err(HjbError::SearchTooLarge {
            pieces: opts.pieces,
            samples: samples.len(),
            total,
            max_pieces: opts.max_pieces,
            max_total: opts.max_total,
        });
    }
    if opts.horizon <= t0 {
        return Err(HjbError::Precondition("horizon must exceed t0".into()));
    }

    let combos: Vec<Vec<usize>> = (0..total as usize)
        .map(|mut c| {
            (0..opts.pieces)
                .map(|_| {
                    let d = c % samples.len();
                    c /= samples.len();
                    d
                })
                .collect()
        })
        .collect();

    let scored: Vec<Option<(f64, f64, usize)>> = combos
        .par_iter()
        .enumerate()
        .map(|(ci, combo)| {
            let values: Vec<Vec<f64>> = combo.iter().map(|&i| samples[i].clone()).collect();
            let control = PiecewiseConstantControl::equal_pieces(t0, opts.horizon, values);
            let (traj, costs) =
                match integrate_with_cost(problem, &control, t0, x0, opts.horizon, opts.step) {
                    Ok(r) => r,
                    Err(_) => return None,
                };
            let hit = first_target_hit(&problem.target, &traj, opts.hit_radius)?;
            let run = cost_until(problem, &traj, &costs, hit.time).ok()?;
            let score = run + problem.eval_final_cost(hit.time, &hit.state);
            Some((score, hit.time, ci))
        })
        .collect();

    let mut best: Option<(f64, f64, usize)> = None;
    for s in scored.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some(b) => s.0 < b.0,
        };
        if better {
            best = Some(s);
        }
    }
    Ok(match best {
        Some((value, hit_time, ci)) => {
            let values: Vec<Vec<f64>> = combos[ci].iter().map(|&i| samples[i].clone()).collect();
            BruteForceValue {
                value,
                best_control: Some(PiecewiseConstantControl::equal_pieces(
                    t0,
                    opts.horizon,
                    values,
                )),
                hit_time: Some(hit_time),
                controls_searched: total as usize,
            }
        }
        None => BruteForceValue {
            value: f64::INFINITY,
            best_control: None,
            hit_time: None,
            controls_searched: total as usize,
        },
    })
}

// ---------------------------------------------------------------------------
// semi-Lagrangian dynamic programming

#[derive(Clone)]
pub struct DpOptions {
    pub control_samples: usize,
    /// Gauge pad under which a grid point counts as on-target and is clamped
    /// to the final cost. Default: half the time step.
    pub target_pad: Option<f64>,
    pub keep_policy: bool,
}

impl DpOptions {
    pub fn new(control_samples: usize) -> Self {
        Self {
            control_samples,
            target_pad: None,
            keep_policy: false,
        }
    }
}

fn dp_point(
    problem: &ControlProblem,
    controls: &[Vec<f64>],
    next: impl Fn(&[f64]) -> f64,
    in_box: impl Fn(&[f64]) -> bool,
    t: f64,
    x: &[f64],
    dt: f64,
    fx: &mut [f64],
    xn: &mut [f64],
) -> (f64, u16, u64) {
    let mut best = f64::INFINITY;
    let mut best_i = 0u16;
    let mut losses = 0u64;
    for (i, u) in controls.iter().enumerate() {
        problem.eval_dynamics(t, x, u, fx);
        for a in 0..x.len() {
            xn[a] = x[a] + dt * fx[a];
        }
        let v = if in_box(xn) {
            add_ext(dt * problem.eval_running_cost(t, x, u), next(xn))
        } else {
            losses += 1;
            f64::INFINITY
        };
        if v < best {
            best = v;
            best_i = i as u16;
        }
    }
    (best, best_i, losses)
}

/// Finite-horizon backward induction on a (t, x) grid. The last layer takes
/// the final cost on the target (within the pad) and +infinity elsewhere;
/// earlier layers apply one explicit-Euler semi-Lagrangian step with
/// multilinear interpolation, then clamp on-target points to the final cost.
pub fn dp_value_grid(
    problem: &ControlProblem,
    spec: GridSpec,
    opts: &DpOptions,
) -> Result<ValueGrid> {
    if spec.t.count < 2 {
        return Err(HjbError::Precondition(
            "dp needs at least two time layers".into(),
        ));
    }
    let dt = spec.t.step;
    let pad = opts.target_pad.unwrap_or(0.5 * dt);
    let controls = problem.control_set.sample(opts.control_samples);
    let nspace = spec.space_point_count();
    let mut grid = ValueGrid::new(spec, f64::INFINITY);
    if opts.keep_policy {
        grid.policy = Some(vec![0; grid.values.len()]);
    }

    // terminal layer
    let t_last = grid.spec.t.max();
    let last_ti = grid.spec.t.count - 1;
    let terminal: Vec<f64> = (0..nspace)
        .into_par_iter()
        .map(|si| {
            let x = grid.spec.space_point(si);
            if problem.target.gauge_at(t_last, &x) <= pad {
                problem.eval_final_cost(t_last, &x)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let base = grid.index(last_ti, 0);
    grid.values[base..base + nspace].copy_from_slice(&terminal);

    let mut total_losses = 0u64;
    for ti in (0..last_ti).rev() {
        let t = grid.spec.t.at(ti);
        let layer: Vec<(f64, u16, u64)> = (0..nspace)
            .into_par_iter()
            .map_init(
                || (vec![0.0; problem.dim], vec![0.0; problem.dim]),
                |(fx, xn), si| {
                    let x = grid.spec.space_point(si);
                    if problem.target.gauge_at(t, &x) <= pad {
                        return (problem.eval_final_cost(t, &x), 0u16, 0u64);
                    }
                    dp_point(
                        problem,
                        &controls,
                        |y| grid.interp_layer(ti + 1, y),
                        |y| grid.space_contains(y),
                        t,
                        &x,
                        dt,
                        fx,
                        xn,
                    )
                },
            )
            .collect();
        let base = grid.index(ti, 0);
        for (si, (v, pi, losses)) in layer.into_iter().enumerate() {
            grid.values[base + si] = v;
            if let Some(p) = &mut grid.policy {
                p[base + si] = pi;
            }
            total_losses += losses;
        }
    }
    grid.boundary_losses = total_losses;
    Ok(grid)
}

/// Recomputes one backward step at an interior grid point from the stored
/// next layer; used by the self-consistency checks.
pub fn dp_recompute_point(
    problem: &ControlProblem,
    grid: &ValueGrid,
    opts: &DpOptions,
    ti: usize,
    si: usize,
) -> f64 {
    let dt = grid.spec.t.step;
    let pad = opts.target_pad.unwrap_or(0.5 * dt);
    let controls = problem.control_set.sample(opts.control_samples);
    let t = grid.spec.t.at(ti);
    let x = grid.spec.space_point(si);
    if problem.target.gauge_at(t, &x) <= pad {
        return problem.eval_final_cost(t, &x);
    }
    let mut fx = vec![0.0; problem.dim];
    let mut xn = vec![0.0; problem.dim];
    dp_point(
        problem,
        &controls,
        |y| grid.interp_layer(ti + 1, y),
        |y| grid.space_contains(y),
        t,
        &x,
        dt,
        &mut fx,
        &mut xn,
    )
    .0
}

#[derive(Clone)]
pub struct ValueIterationOptions {
    pub dt: f64,
    pub control_samples: usize,
    /// Default: one space mesh.
    pub target_pad: Option<f64>,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Time plugged into autonomous dynamics and costs.
    pub t_eval: f64,
}

impl ValueIterationOptions {
    pub fn new(dt: f64, control_samples: usize) -> Self {
        Self {
            dt,
            control_samples,
            target_pad: None,
            tol: 1e-9,
            max_sweeps: 50_000,
            t_eval: 0.0,
        }
    }
}

/// Stationary value iteration for autonomous problems:
/// V(x) = min over sampled controls of [dt L(x, u) + V(x + dt f(x, u))],
/// iterated to a fixed point, with on-target points clamped to the final
/// cost. Returns a single-layer grid.
pub fn value_iteration_grid(
    problem: &ControlProblem,
    space: Vec<Axis>,
    opts: &ValueIterationOptions,
) -> Result<(ValueGrid, usize)> {
    let spec = GridSpec {
        t: Axis::single(opts.t_eval),
        space,
    };
    let pad = opts.target_pad.unwrap_or(spec.space_mesh());
    let controls = problem.control_set.sample(opts.control_samples);
    let nspace = spec.space_point_count();
    let t = opts.t_eval;
    let mut grid = ValueGrid::new(spec, f64::INFINITY);

    // seed on-target points
    let seed: Vec<f64> = (0..nspace)
        .into_par_iter()
        .map(|si| {
            let x = grid.spec.space_point(si);
            if problem.target.gauge_at(t, &x) <= pad {
                problem.eval_final_cost(t, &x)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    grid.values.copy_from_slice(&seed);

    let mut sweeps = 0;
    for sweep in 0..opts.max_sweeps {
        sweeps = sweep + 1;
        let next: Vec<f64> = (0..nspace)
            .into_par_iter()
            .map_init(
                || (vec![0.0; problem.dim], vec![0.0; problem.dim]),
                |(fx, xn), si| {
                    let x = grid.spec.space_point(si);
                    if problem.target.gauge_at(t, &x) <= pad {
                        return problem.eval_final_cost(t, &x);
                    }
                    dp_point(
                        problem,
                        &controls,
                        |y| grid.interp_layer(0, y),
                        |y| grid.space_contains(y),
                        t,
                        &x,
                        opts.dt,
                        fx,
                        xn,
                    )
                    .0
                },
            )
            .collect();
        let mut delta = 0.0f64;
        for (old, new) in grid.values.iter().zip(&next) {
            let d = if old.is_infinite() && new.is_infinite() {
                0.0
            } else {
                (old - new).abs()
            };
            delta = delta.max(d);
        }
        grid.values.copy_from_slice(&next);
        if delta < opts.tol {
            break;
        }
    }
    Ok((grid, sweeps))
}

// ---------------------------------------------------------------------------
// closed-loop synthesis evaluation

#[derive(Clone)]
pub struct SynthesisOptions {
    pub step: f64,
    /// Termination radius on the target gauge.
    pub cutoff: f64,
    pub max_steps: usize,
    /// Target points sampled when projecting the final cost.
    pub projection_samples: usize,
    pub seed: u64,
    /// Also report the cost accumulated between cutoff and cutoff/2.
    pub estimate_tail: bool,
}

impl SynthesisOptions {
    pub fn new(step: f64, cutoff: f64) -> Self {
        Self {
            step,
            cutoff,
            max_steps: 400_000,
            projection_samples: 256,
            seed: 0,
            estimate_tail: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisValue {
    /// Accumulated running cost plus final cost; +infinity if the loop never
    /// approached the target within the step budget.
    pub value: f64,
    pub converged: bool,
    pub duration: f64,
    pub switch_times: Vec<f64>,
    pub final_time: f64,
    pub final_state: Vec<f64>,
    /// Extra cost observed continuing from cutoff to cutoff/2.
    pub tail_estimate: Option<f64>,
}

struct LoopState {
    t: f64,
    aug: Vec<f64>,
}

/// Integrates the closed loop x' = f(t, x, feedback(t, x)), holding the
/// feedback constant within each step. Feedback switches and the cutoff
/// crossing are located by bisection inside the step, so the reported value
/// is a smooth function of the start point wherever the synthesis is.
pub fn value_from_synthesis(
    problem: &ControlProblem,
    feedback: &FeedbackFn,
    t0: f64,
    x0: &[f64],
    opts: &SynthesisOptions,
) -> SynthesisValue {
    let n = problem.dim;
    let mut scratch_k = vec![0.0; n + 1];
    let mut scratch = RkScratch::new(n + 1);
    let _ = &mut scratch_k;

    let mut st = LoopState {
        t: t0,
        aug: {
            let mut a = vec![0.0; n + 1];
            a[..n].copy_from_slice(x0);
            a
        },
    };
    let mut switch_times = Vec::new();
    let mut crossed = false;
    let mut tail: Option<f64> = None;
    let mut value_at_cutoff = 0.0;
    let mut cutoff_state: Option<(f64, Vec<f64>)> = None;

    let changed = |a: &[f64], b: &[f64]| -> bool {
        a.iter().zip(b).any(|(p, q)| (p - q).abs() > 1e-9)
    };

    let mut steps = 0usize;
    while steps < opts.max_steps {
        steps += 1;
        let gauge = problem.target.gauge_at(st.t, &st.aug[..n]);
        let active_cutoff = if crossed { 0.5 * opts.cutoff } else { opts.cutoff };
        if gauge <= active_cutoff {
            if !crossed {
                crossed = true;
                value_at_cutoff = st.aug[n];
                cutoff_state = Some((st.t, st.aug[..n].to_vec()));
                if !opts.estimate_tail {
                    break;
                }
            } else {
                tail = Some(st.aug[n] - value_at_cutoff);
                break;
            }
        }
        if !problem.domain.contains(st.t, &st.aug[..n]) {
            break;
        }
        let u = feedback(st.t, &st.aug[..n]);
        let mut next = st.aug.clone();
        rk4_aug(problem, st.t, &mut next, &u, opts.step, &mut scratch);
        if next.iter().any(|c| !c.is_finite()) {
            break;
        }

        let u_next = feedback(st.t + opts.step, &next[..n]);
        let target_next = problem.target.gauge_at(st.t + opts.step, &next[..n]);
        let switching = changed(&u, &u_next);
        let hitting = target_next <= active_cutoff;

        if switching || hitting {
            // earliest event fraction in (0, 1]
            let event = |lam: f64, probe: &mut Vec<f64>| -> bool {
                probe.copy_from_slice(&st.aug);
                rk4_aug(problem, st.t, probe, &u, opts.step * lam, &mut scratch);
                let tt = st.t + opts.step * lam;
                changed(&u, &feedback(tt, &probe[..n]))
                    || problem.target.gauge_at(tt, &probe[..n]) <= active_cutoff
            };
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            let mut probe = st.aug.clone();
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if event(mid, &mut probe) {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-9 {
                    break;
                }
            }
            let lam = hi.max(1e-3);
            probe.copy_from_slice(&st.aug);
            rk4_aug(problem, st.t, &mut probe, &u, opts.step * lam, &mut scratch);
            st.t += opts.step * lam;
            st.aug.copy_from_slice(&probe);
            if switching && changed(&u, &feedback(st.t, &st.aug[..n])) {
                switch_times.push(st.t);
            }
        } else {
            st.t += opts.step;
            st.aug.copy_from_slice(&next);
        }
    }

    match cutoff_state {
        Some((tc, xc)) => {
            let psi = project_final_cost(problem, tc, &xc, opts);
            SynthesisValue {
                value: value_at_cutoff + psi,
                converged: true,
                duration: tc - t0,
                switch_times,
                final_time: tc,
                final_state: xc,
                tail_estimate: tail,
            }
        }
        None => SynthesisValue {
            value: f64::INFINITY,
            converged: false,
            duration: st.t - t0,
            switch_times,
            final_time: st.t,
            final_state: st.aug[..n].to_vec(),
            tail_estimate: None,
        },
    }
}

/// Final cost at the sampled target point nearest to (t, x).
fn project_final_cost(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    opts: &SynthesisOptions,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pts = problem.target.sample(&mut rng, opts.projection_samples);
    let nearest = pts
        .iter()
        .min_by(|a, b| {
            geom::dist_tx(a.t, &a.x, t, x)
                .partial_cmp(&geom::dist_tx(b.t, &b.x, t, x))
                .unwrap()
        })
        .cloned();
    match nearest {
        Some(p) => problem.eval_final_cost(p.t, &p.x),
        None => problem.eval_final_cost(t, x),
    }
}

struct RkScratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl RkScratch {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn rk4_aug(
    problem: &ControlProblem,
    t: f64,
    aug: &mut [f64],
    u: &[f64],
    h: f64,
    s: &mut RkScratch,
) {
    let n = problem.dim;
    let eval = |t: f64, y: &[f64], out: &mut [f64]| {
        problem.eval_dynamics(t, &y[..n], u, &mut out[..n]);
        out[n] = problem.eval_running_cost(t, &y[..n], u);
    };
    eval(t, aug, &mut s.k1);
    geom::axpy(aug, 0.5 * h, &s.k1, &mut s.tmp);
    eval(t + 0.5 * h, &s.tmp, &mut s.k2);
    geom::axpy(aug, 0.5 * h, &s.k2, &mut s.tmp);
    eval(t + 0.5 * h, &s.tmp, &mut s.k3);
    geom::axpy(aug, h, &s.k3, &mut s.tmp);
    eval(t + h, &s.tmp, &mut s.k4);
    for i in 0..=n {
        aug[i] += h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

/// Tabulates a time-independent candidate by running the synthesis from
/// every point of a state grid. Points where the loop does not converge are
/// marked +infinity.
pub fn tabulate_synthesis(
    problem: &ControlProblem,
    feedback: &FeedbackFn,
    space: Vec<Axis>,
    t_eval: f64,
    opts: &SynthesisOptions,
) -> ValueGrid {
    let spec = GridSpec {
        t: Axis::single(t_eval),
        space,
    };
    let nspace = spec.space_point_count();
    let values: Vec<f64> = (0..nspace)
        .into_par_iter()
        .map(|si| {
            let x = spec.space_point(si);
            value_from_synthesis(problem, feedback, t_eval, &x, opts).value
        })
        .collect();
    let mut grid = ValueGrid::new(spec, 0.0);
    grid.values = values;
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use std::f64::consts::PI;

    #[test]
    fn waiting_problem_value_is_exact() {
        // zero dynamics, unit running cost: the value from (0, 2/pi) is the
        // time to the first target contact, which is 1
        let entry = gallery::sin_one_over_x();
        let opts = BruteForceOptions::new(2, 3.0, 3, 0.01);
        let r = brute_force_value(&entry.problem, 0.0, &[2.0 / PI], &opts).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "value {}", r.value);
    }

    #[test]
    fn start_on_target_scores_final_cost() {
        let entry = gallery::sin_one_over_x();
        let opts = BruteForceOptions::new(1, 2.0, 2, 0.01);
        // t = 1.5 >= 1 is inside the target for any x
        let r = brute_force_value(&entry.problem, 1.5, &[0.3], &opts).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.hit_time, Some(1.5));
    }

    #[test]
    fn oscillator_brute_force_finds_minimum_time() {
        let entry = gallery::oscillator();
        let opts = BruteForceOptions::new(3, 4.0, 2, 4.0 / 2000.0).with_hit_radius(1e-7);
        let r = brute_force_value(&entry.problem, 0.0, &[2.0, 0.0], &opts).unwrap();
        assert!((r.value - PI).abs() < 2e-2, "value {}", r.value);
    }

    #[test]
    fn search_guard_refuses_oversized_enumerations() {
        let entry = gallery::oscillator();
        let opts = BruteForceOptions::new(9, 4.0, 5, 0.01);
        let err = brute_force_value(&entry.problem, 0.0, &[2.0, 0.0], &opts).unwrap_err();
        assert!(matches!(err, HjbError::SearchTooLarge { .. }));
    }

    #[test]
    fn terminal_layer_carries_final_cost() {
        let entry = gallery::sin_one_over_x();
        let spec = GridSpec::with_mesh((1.5, 2.0), &[(-0.5, 0.5)], 1.0 / 16.0);
        let grid = dp_value_grid(&entry.problem, spec, &DpOptions::new(2)).unwrap();
        let last = grid.spec.t.count - 1;
        for si in 0..grid.spec.space_point_count() {
            assert_eq!(grid.values[grid.index(last, si)], 0.0);
        }
    }

    #[test]
    fn synthesis_from_target_is_free() {
        let entry = gallery::oscillator();
        let fb = entry.synthesis.clone().unwrap();
        let opts = SynthesisOptions::new(1e-3, 1e-4);
        let v = value_from_synthesis(&entry.problem, &fb, 0.0, &[0.0, 0.0], &opts);
        assert!(v.converged);
        assert!(v.value < 1e-3);
    }

    #[test]
    fn oscillator_synthesis_time_matches_closed_form() {
        let entry = gallery::oscillator();
        let fb = entry.synthesis.clone().unwrap();
        let opts = SynthesisOptions::new(1e-3, 1e-4);
        let v = value_from_synthesis(&entry.problem, &fb, 0.0, &[2.0, 0.0], &opts);
        assert!(v.converged);
        assert!((v.value - PI).abs() < 1e-2, "value {}", v.value);
    }
}
