//! The control problem bundle: dynamics, costs, target and domains.

use std::sync::Arc;

use crate::control::ControlSetSpec;
use crate::set::SetSpec;

/// dynamics(t, x, u, out): writes f(t, x, u) into `out`.
pub type DynamicsFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type RunningCostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type FinalCostFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HorizonMode {
    Finite,
    Infinite,
}

/// A Bolza problem: minimize the running cost integral plus the final cost
/// at the time the trajectory reaches the target.
#[derive(Clone)]
pub struct ControlProblem {
    /// State dimension n.
    pub dim: usize,
    pub dynamics: DynamicsFn,
    pub running_cost: RunningCostFn,
    /// Final cost, defined on the target (finite horizon) or on the target
    /// neighborhood (infinite horizon).
    pub final_cost: FinalCostFn,
    /// Closed target set S.
    pub target: SetSpec,
    /// Open connected state-time domain Omega.
    pub domain: SetSpec,
    /// Open verification window Q with S ⊆ Q ⊆ Omega.
    pub verification_domain: SetSpec,
    /// True when Q = Omega; boundary and positivity hypotheses are dropped.
    pub q_is_omega: bool,
    pub control_set: ControlSetSpec,
    /// Exponent p >= 1 of the admissible control class.
    pub control_norm_exponent: f64,
    pub horizon_mode: HorizonMode,
    /// Open neighborhood S1 of the target (infinite horizon only).
    pub target_neighborhood: Option<SetSpec>,
}

impl ControlProblem {
    pub fn eval_dynamics(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.dynamics)(t, x, u, out);
    }

    pub fn eval_running_cost(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        (self.running_cost)(t, x, u)
    }

    pub fn eval_final_cost(&self, t: f64, x: &[f64]) -> f64 {
        (self.final_cost)(t, x)
    }
}

/// Convenience constructor for a finite-horizon problem with Q = Omega
/// equal to the whole space.
pub fn finite_problem_on_all_space(
    dim: usize,
    dynamics: DynamicsFn,
    running_cost: RunningCostFn,
    final_cost: FinalCostFn,
    target: SetSpec,
    control_set: ControlSetSpec,
) -> ControlProblem {
    ControlProblem {
        dim,
        dynamics,
        running_cost,
        final_cost,
        target,
        domain: SetSpec::everything(),
        verification_domain: SetSpec::everything(),
        q_is_omega: true,
        control_set,
        control_norm_exponent: 1.0,
        horizon_mode: HorizonMode::Finite,
        target_neighborhood: None,
    }
}
