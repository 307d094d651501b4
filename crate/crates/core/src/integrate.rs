//! Fixed-step RK4 trajectory integration under piecewise-constant controls,
//! target-hit detection, control approximation and perturbation probes.
//!
//! Steps are aligned to control breakpoints, so the control is constant
//! inside every step and the classical order-4 accuracy holds. The running
//! cost is accumulated as an augmented state component, which keeps value
//! and trajectory errors of matched order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::control::{ControlSetSpec, PiecewiseConstantControl};
use crate::error::{HjbError, Result};
use crate::geom;
use crate::problem::ControlProblem;
use crate::set::SetSpec;
use crate::trajectory::Trajectory;

/// Default number of steps covering an integration span.
pub const DEFAULT_STEPS: usize = 2000;

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
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

/// One RK4 step of the cost-augmented system; `x` has n state components
/// followed by the running cost.
fn rk4_step(
    problem: &ControlProblem,
    t: f64,
    x: &mut [f64],
    u: &[f64],
    h: f64,
    s: &mut Rk4Scratch,
) {
    let n = problem.dim;
    let eval = |t: f64, y: &[f64], out: &mut [f64]| {
        problem.eval_dynamics(t, &y[..n], u, &mut out[..n]);
        out[n] = problem.eval_running_cost(t, &y[..n], u);
    };
    eval(t, x, &mut s.k1);
    geom::axpy(x, 0.5 * h, &s.k1, &mut s.tmp);
    eval(t + 0.5 * h, &s.tmp, &mut s.k2);
    geom::axpy(x, 0.5 * h, &s.k2, &mut s.tmp);
    eval(t + 0.5 * h, &s.tmp, &mut s.k3);
    geom::axpy(x, h, &s.k3, &mut s.tmp);
    eval(t + h, &s.tmp, &mut s.k4);
    for i in 0..=n {
        x[i] += h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

/// Integrates the controlled system from (t0, x0) up to tf, sampling every
/// step. Stops early with a domain-exit mark when the state leaves Omega;
/// the crossing time is refined by bisection.
pub fn integrate(
    problem: &ControlProblem,
    control: &PiecewiseConstantControl,
    t0: f64,
    x0: &[f64],
    tf: f64,
    step: f64,
) -> Result<Trajectory> {
    integrate_with_cost(problem, control, t0, x0, tf, step).map(|(tr, _)| tr)
}

/// Like [`integrate`] but also returns the cumulative running-cost integral
/// at every sample time.
pub fn integrate_with_cost(
    problem: &ControlProblem,
    control: &PiecewiseConstantControl,
    t0: f64,
    x0: &[f64],
    tf: f64,
    step: f64,
) -> Result<(Trajectory, Vec<f64>)> {
    if tf <= t0 {
        return Err(HjbError::Precondition(format!(
            "tf={tf} must exceed t0={t0}"
        )));
    }
    if step <= 0.0 {
        return Err(HjbError::Precondition("step must be positive".into()));
    }
    if !problem.domain.contains(t0, x0) {
        return Err(HjbError::Precondition(format!(
            "start ({t0}, {x0:?}) is outside the domain"
        )));
    }
    let n = problem.dim;
    let mut scratch = Rk4Scratch::new(n + 1);
    let mut aug = vec![0.0; n + 1];
    aug[..n].copy_from_slice(x0);

    let mut times = vec![t0];
    let mut states = vec![x0.to_vec()];
    let mut costs = vec![0.0];
    let mut domain_exit = None;

    // segment boundaries: control breakpoints clipped to [t0, tf]
    let mut bounds: Vec<f64> = vec![t0];
    for &b in control.breakpoints() {
        if b > t0 && b < tf {
            bounds.push(b);
        }
    }
    bounds.push(tf);

    'segments: for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let u = control.eval(0.5 * (a + b))?.to_vec();
        let count = ((b - a) / step).ceil().max(1.0) as usize;
        let h = (b - a) / count as f64;
        for k in 0..count {
            let t = a + h * k as f64;
            let before = aug.clone();
            rk4_step(problem, t, &mut aug, &u, h, &mut scratch);
            let t_next = if k + 1 == count { b } else { t + h };
            if aug.iter().any(|c| !c.is_finite()) {
                return Err(HjbError::Blowup { last_time: t });
            }
            if !problem.domain.contains(t_next, &aug[..n]) {
                // bisect the step fraction to locate the crossing
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                let mut probe = before.clone();
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    probe.copy_from_slice(&before);
                    rk4_step(problem, t, &mut probe, &u, h * mid, &mut scratch);
                    if problem.domain.contains(t + h * mid, &probe[..n]) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if h * (hi - lo) < 1e-13 * (1.0 + t.abs()) {
                        break;
                    }
                }
                probe.copy_from_slice(&before);
                rk4_step(problem, t, &mut probe, &u, h * lo, &mut scratch);
                let t_exit = t + h * lo;
                times.push(t_exit);
                states.push(probe[..n].to_vec());
                costs.push(probe[n]);
                domain_exit = Some(t_exit);
                break 'segments;
            }
            times.push(t_next);
            states.push(aug[..n].to_vec());
            costs.push(aug[n]);
        }
    }

    Ok((
        Trajectory {
            times,
            states,
            control: control.clone(),
            domain_exit,
        },
        costs,
    ))
}

/// A detected first entry of the trajectory into a target set.
#[derive(Debug, Clone)]
pub struct TargetHit {
    pub time: f64,
    pub state: Vec<f64>,
    /// Index of the first sample at or after the hit.
    pub sample_index: usize,
}

/// First time the trajectory's target gauge drops to `hit_radius`.
///
/// Transversal entries are bracketed by a sign change of
/// `gauge - hit_radius` and bisected; grazing touches (the gauge dips to
/// zero and rises again between samples) are caught by a ternary minimum
/// search over each local-minimum bracket.
pub fn first_target_hit(
    target: &SetSpec,
    traj: &Trajectory,
    hit_radius: f64,
) -> Option<TargetHit> {
    let g = |t: f64| target.gauge_at(t, &traj.state_at(t));
    let times = &traj.times;
    let gs: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| target.gauge_at(t, &traj.states[i]))
        .collect();

    if gs[0] <= hit_radius {
        return Some(TargetHit {
            time: times[0],
            state: traj.states[0].clone(),
            sample_index: 0,
        });
    }
    for i in 1..times.len() {
        if gs[i] <= hit_radius {
            let t = bisect_entry(&g, times[i - 1], times[i], hit_radius);
            return Some(TargetHit {
                time: t,
                state: traj.state_at(t),
                sample_index: i,
            });
        }
        // interior local minimum: the gauge may touch the target between
        // samples without any sample registering it
        if i + 1 < times.len() && gs[i] < gs[i - 1] && gs[i] <= gs[i + 1] {
            let (tm, gm) = ternary_min(&g, times[i - 1], times[i + 1]);
            if gm <= hit_radius {
                let t = bisect_entry(&g, times[i - 1], tm, hit_radius);
                return Some(TargetHit {
                    time: t,
                    state: traj.state_at(t),
                    sample_index: i,
                });
            }
        }
    }
    None
}

fn bisect_entry(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, radius: f64) -> f64 {
    // g(lo) > radius >= g(hi); find the earliest crossing
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= radius {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    hi
}

fn ternary_min(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if g(m1) <= g(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, g(t))
}

/// Cumulative cost of a trajectory truncated at `time` (re-integrates the
/// final partial step so the truncation keeps RK4 accuracy).
pub fn cost_until(
    problem: &ControlProblem,
    traj: &Trajectory,
    costs: &[f64],
    time: f64,
) -> Result<f64> {
    let i = traj.times.partition_point(|&s| s <= time);
    if i == 0 {
        return Ok(0.0);
    }
    let i = i - 1; // last sample <= time
    if traj.times[i] == time {
        return Ok(costs[i]);
    }
    let u = traj.control.eval(0.5 * (traj.times[i] + time))?.to_vec();
    let n = problem.dim;
    let mut scratch = Rk4Scratch::new(n + 1);
    let mut aug = vec![0.0; n + 1];
    aug[..n].copy_from_slice(&traj.states[i]);
    aug[n] = costs[i];
    rk4_step(
        problem,
        traj.times[i],
        &mut aug,
        &u,
        time - traj.times[i],
        &mut scratch,
    );
    Ok(aug[n])
}

/// Best piecewise-constant approximation of a sampled control in L^p.
///
/// Each grid cell takes the sampled-L^p-optimal constant (mean for p = 2,
/// componentwise median for p = 1) projected to the nearest sampled point
/// of U.
pub fn approximate_control(
    samples: &[(f64, Vec<f64>)],
    grid: &[f64],
    p: f64,
    control_set: &ControlSetSpec,
    projection_samples: usize,
) -> Result<PiecewiseConstantControl> {
    if grid.len() < 2 {
        return Err(HjbError::Precondition("grid needs two breakpoints".into()));
    }
    let q = control_set.dimension;
    let mut values = Vec::with_capacity(grid.len() - 1);
    for (cell, w) in grid.windows(2).enumerate() {
        let in_cell: Vec<&Vec<f64>> = samples
            .iter()
            .filter(|(t, _)| {
                if cell == 0 {
                    *t >= w[0] && *t <= w[1]
                } else {
                    *t > w[0] && *t <= w[1]
                }
            })
            .map(|(_, u)| u)
            .collect();
        if in_cell.is_empty() {
            return Err(HjbError::EmptyCell { index: cell });
        }
        let raw: Vec<f64> = if (p - 1.0).abs() < 1e-12 {
            (0..q)
                .map(|a| {
                    let mut comps: Vec<f64> = in_cell.iter().map(|u| u[a]).collect();
                    comps.sort_by(|x, y| x.partial_cmp(y).unwrap());
                    comps[comps.len() / 2]
                })
                .collect()
        } else {
            (0..q)
                .map(|a| in_cell.iter().map(|u| u[a]).sum::<f64>() / in_cell.len() as f64)
                .collect()
        };
        values.push(control_set.project(&raw, projection_samples));
    }
    PiecewiseConstantControl::new(grid.to_vec(), values)
}

/// One row of the continuous-dependence table.
#[derive(Debug, Clone)]
pub struct DependenceRow {
    pub scale: f64,
    /// ||dx0|| + ||du||_{L^p} of the applied perturbation.
    pub input_size: f64,
    /// sup_t |x_pert(t) - x_base(t)| over the common time grid.
    pub sup_distance: f64,
    /// The perturbed trajectory left the domain before tf.
    pub exited_domain: bool,
}

/// Perturbs the start by a random vector of each given norm and every
/// control value by at most the same amount, then records how far the
/// perturbed trajectory strays from the base one.
pub fn continuous_dependence_probe(
    problem: &ControlProblem,
    control: &PiecewiseConstantControl,
    t0: f64,
    x0: &[f64],
    tf: f64,
    step: f64,
    perturbation_scales: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DependenceRow>> {
    let base = integrate(problem, control, t0, x0, tf, step)?;
    if base.domain_exit.is_some() {
        return Err(HjbError::Precondition(
            "base trajectory leaves the domain".into(),
        ));
    }
    let p = problem.control_norm_exponent;
    let mut rows = Vec::new();
    for &scale in perturbation_scales {
        let mut dx: Vec<f64> = (0..problem.dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let nrm = geom::norm(&dx);
        if nrm > 0.0 {
            for c in &mut dx {
                *c *= scale / nrm;
            }
        }
        let x0p: Vec<f64> = x0.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let values: Vec<Vec<f64>> = control
            .values()
            .iter()
            .map(|v| {
                v.iter()
                    .map(|c| c + rng.gen_range(-1.0..=1.0) * scale)
                    .collect()
            })
            .collect();
        let perturbed =
            PiecewiseConstantControl::new(control.breakpoints().to_vec(), values.clone())?;

        // L^p norm of the control perturbation over [t0, tf]
        let mut du_lp = 0.0;
        for (i, w) in control.breakpoints().windows(2).enumerate() {
            let len = (w[1].min(tf) - w[0].max(t0)).max(0.0);
            let diff = geom::dist(&values[i], &control.values()[i]);
            du_lp += len * diff.powf(p);
        }
        let du_lp = du_lp.powf(1.0 / p);

        let traj = integrate(problem, &perturbed, t0, &x0p, tf, step)?;
        let exited = traj.domain_exit.is_some();
        let mut sup = 0.0f64;
        for (&t, x) in base.times.iter().zip(&base.states) {
            if let Some(exit) = traj.domain_exit {
                if t > exit {
                    break;
                }
            }
            sup = sup.max(geom::dist(x, &traj.state_at(t)));
        }
        rows.push(DependenceRow {
            scale,
            input_size: geom::norm(&dx) + du_lp,
            sup_distance: sup,
            exited_domain: exited,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use rand::SeedableRng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn oscillator_full_turn_reaches_origin() {
        // closed form: from (2,0) under u = +1 the state is
        // (1 + cos t, -sin t), reaching the origin at t = pi
        let entry = gallery::oscillator();
        let control = PiecewiseConstantControl::constant(0.0, PI, vec![1.0]);
        let traj = integrate(&entry.problem, &control, 0.0, &[2.0, 0.0], PI, PI / 2000.0).unwrap();
        let end = traj.final_state();
        assert!(geom::norm(end) < 1e-6, "final state {end:?}");
        // spot-check the closed form mid-flight
        let mid = traj.state_at(PI / 3.0);
        assert!((mid[0] - 1.5).abs() < 1e-7);
        assert!((mid[1] + (PI / 3.0).sin()).abs() < 1e-7);
    }

    #[test]
    fn zero_dynamics_keeps_state_constant() {
        let entry = gallery::sin_one_over_x();
        let control = PiecewiseConstantControl::constant(0.0, 3.0, vec![0.3]);
        let traj = integrate(&entry.problem, &control, 0.0, &[0.5], 3.0, 0.01).unwrap();
        assert!(traj.states.iter().all(|s| s[0] == 0.5));
    }

    #[test]
    fn double_integrator_is_exact_for_polynomials() {
        let entry = gallery::fuller();
        let control = PiecewiseConstantControl::constant(0.0, 1.0, vec![1.0]);
        let traj = integrate(&entry.problem, &control, 0.0, &[0.0, 0.0], 1.0, 0.02).unwrap();
        let end = traj.final_state();
        assert!((end[0] - 0.5).abs() < 1e-10);
        assert!((end[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn breakpoint_alignment_matches_concatenation() {
        let entry = gallery::oscillator();
        let c2 = PiecewiseConstantControl::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0], vec![-1.0]],
        )
        .unwrap();
        let joint = integrate(&entry.problem, &c2, 0.0, &[2.0, 0.0], 2.0, 0.01).unwrap();

        let ca = PiecewiseConstantControl::constant(0.0, 1.0, vec![1.0]);
        let first = integrate(&entry.problem, &ca, 0.0, &[2.0, 0.0], 1.0, 0.01).unwrap();
        let cb = PiecewiseConstantControl::constant(1.0, 2.0, vec![-1.0]);
        let second =
            integrate(&entry.problem, &cb, 1.0, first.final_state(), 2.0, 0.01).unwrap();

        let mid = joint.state_at(1.0);
        assert_eq!(mid, first.final_state().to_vec());
        assert_eq!(joint.final_state(), second.final_state());
    }

    #[test]
    fn step_halving_shows_fourth_order() {
        let entry = gallery::oscillator();
        let control = PiecewiseConstantControl::constant(0.0, PI, vec![1.0]);
        let endpoint = |h: f64| {
            integrate(&entry.problem, &control, 0.0, &[2.0, 0.0], PI, h)
                .unwrap()
                .final_state()
                .to_vec()
        };
        let mut h = PI / 40.0;
        let mut prev = endpoint(h);
        let mut errs = Vec::new();
        for _ in 0..4 {
            h *= 0.5;
            let cur = endpoint(h);
            errs.push(geom::dist(&prev, &cur));
            prev = cur;
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                ratio > 10.0 && ratio < 24.0,
                "expected ~16x per halving, got {ratio}"
            );
        }
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let entry = gallery::oscillator();
        let control = PiecewiseConstantControl::constant(0.0, PI, vec![1.0]);
        let fwd = integrate(&entry.problem, &control, 0.0, &[1.3, -0.4], PI, PI / 2000.0).unwrap();

        let mut reversed = entry.problem.clone();
        let f = entry.problem.dynamics.clone();
        reversed.dynamics = Arc::new(move |t, x, u, out: &mut [f64]| {
            f(t, x, u, out);
            for c in out.iter_mut() {
                *c = -*c;
            }
        });
        let back = integrate(
            &reversed,
            &PiecewiseConstantControl::constant(0.0, PI, vec![1.0]),
            0.0,
            fwd.final_state(),
            PI,
            PI / 2000.0,
        )
        .unwrap();
        assert!(geom::dist(back.final_state(), &[1.3, -0.4]) < 1e-8);
    }

    #[test]
    fn approximates_square_wave_in_l1() {
        use std::f64::consts::TAU;
        let u_star = |t: f64| if t.sin() >= 0.0 { 1.0 } else { -1.0 };
        let samples: Vec<(f64, Vec<f64>)> = (0..10_000)
            .map(|i| {
                let t = TAU * i as f64 / 9_999.0;
                (t, vec![u_star(t)])
            })
            .collect();
        let grid: Vec<f64> = (0..=64).map(|i| TAU * i as f64 / 64.0).collect();
        let set = ControlSetSpec::interval(-1.0, 1.0);
        let approx = approximate_control(&samples, &grid, 1.0, &set, 2001).unwrap();
        let mut mismatched_cells = 0;
        for w in grid.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            if (approx.eval(mid.max(1e-9)).unwrap()[0] - u_star(mid)).abs() > 1e-9 {
                mismatched_cells += 1;
            }
        }
        // only the two cells containing the sign changes may disagree
        assert!(mismatched_cells <= 2, "{mismatched_cells} cells off");
    }

    #[test]
    fn constant_control_projects_to_itself() {
        let samples: Vec<(f64, Vec<f64>)> =
            (0..100).map(|i| (i as f64 / 99.0, vec![0.5])).collect();
        let set = ControlSetSpec::interval(-1.0, 1.0);
        let approx =
            approximate_control(&samples, &[0.0, 0.5, 1.0], 2.0, &set, 2001).unwrap();
        for v in approx.values() {
            assert!((v[0] - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn empty_cell_is_reported() {
        let samples = vec![(0.1, vec![0.0])];
        let set = ControlSetSpec::interval(-1.0, 1.0);
        let err = approximate_control(&samples, &[0.0, 0.2, 1.0], 2.0, &set, 11).unwrap_err();
        assert!(matches!(err, HjbError::EmptyCell { index: 1 }));
    }

    #[test]
    fn l2_error_halves_with_cell_count() {
        use std::f64::consts::TAU;
        let samples: Vec<(f64, Vec<f64>)> = (0..40_000)
            .map(|i| {
                let t = TAU * i as f64 / 39_999.0;
                (t, vec![t.sin()])
            })
            .collect();
        let set = ControlSetSpec::interval(-1.0, 1.0);
        let l2_err = |cells: usize| {
            let grid: Vec<f64> = (0..=cells).map(|i| TAU * i as f64 / cells as f64).collect();
            let approx = approximate_control(&samples, &grid, 2.0, &set, 20_001).unwrap();
            let mut acc = 0.0;
            for (t, u) in &samples {
                let v = approx.eval(t.max(1e-12)).unwrap()[0];
                acc += (v - u[0]).powi(2);
            }
            (acc * TAU / samples.len() as f64).sqrt()
        };
        let e64 = l2_err(64);
        let e128 = l2_err(128);
        let ratio = e128 / e64;
        assert!(
            (ratio - 0.5).abs() <= 0.1,
            "halving ratio {ratio} outside 0.5 +- 20%"
        );
    }

    #[test]
    fn dependence_shrinks_with_scale() {
        let entry = gallery::oscillator();
        let control = PiecewiseConstantControl::constant(0.0, 2.0, vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = continuous_dependence_probe(
            &entry.problem,
            &control,
            0.0,
            &[2.0, 0.0],
            2.0,
            0.01,
            &[1e-1, 1e-2, 1e-3, 0.0],
            &mut rng,
        )
        .unwrap();
        assert!(rows[0].sup_distance > rows[1].sup_distance);
        assert!(rows[1].sup_distance > rows[2].sup_distance);
        assert_eq!(rows[3].sup_distance, 0.0);
    }

    #[test]
    fn zero_dynamics_dependence_equals_initial_offset() {
        let entry = gallery::sin_one_over_x();
        let control = PiecewiseConstantControl::constant(0.0, 1.0, vec![0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = continuous_dependence_probe(
            &entry.problem,
            &control,
            0.0,
            &[0.4],
            1.0,
            0.01,
            &[0.05],
            &mut rng,
        )
        .unwrap();
        assert!((rows[0].sup_distance - 0.05).abs() < 1e-12);
    }
}
