//! Candidate value functions W with gradients and declared exceptional sets.

use std::sync::Arc;

use crate::grid::ValueGrid;
use crate::rectifiable::RectifiableSet;

pub type ValueFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Analytic gradient (W_s, W_y) at (t, x).
pub type GradientFn = Arc<dyn Fn(f64, &[f64]) -> (f64, Vec<f64>) + Send + Sync>;

/// Base step of the central-difference gradient fallback. The actual step
/// scales with the local coordinate magnitude.
pub const H_GRAD: f64 = 1e-5;

/// An evaluable candidate W on the closure of the verification window,
/// allowed to take the value +infinity.
#[derive(Clone)]
pub struct CandidateValueFunction {
    pub value: ValueFn,
    pub gradient: Option<GradientFn>,
    /// Declared set A outside which W is differentiable.
    pub exceptional_set: Arc<RectifiableSet>,
    /// Central-difference step when no analytic gradient is given.
    pub h_grad: f64,
}

impl CandidateValueFunction {
    pub fn new(value: ValueFn, gradient: Option<GradientFn>, exceptional_set: RectifiableSet) -> Self {
        Self {
            value,
            gradient,
            exceptional_set: Arc::new(exceptional_set),
            h_grad: H_GRAD,
        }
    }

    pub fn with_h_grad(mut self, h: f64) -> Self {
        self.h_grad = h;
        self
    }

    /// Interpolating candidate backed by a value grid. The finite-difference
    /// step is pinned to the table mesh: differentiating the interpolant
    /// below its own resolution only measures interpolation noise.
    pub fn from_grid(grid: Arc<ValueGrid>, exceptional_set: RectifiableSet) -> Self {
        let mesh = grid.space_mesh();
        let g = grid.clone();
        Self {
            value: Arc::new(move |t, x| g.interp(t, x)),
            gradient: None,
            exceptional_set: Arc::new(exceptional_set),
            h_grad: mesh,
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        (self.value)(t, x)
    }

    /// Analytic gradient when present, otherwise central differences with a
    /// coordinate-scaled step.
    pub fn gradient_at(&self, t: f64, x: &[f64]) -> (f64, Vec<f64>) {
        if let Some(g) = &self.gradient {
            return g(t, x);
        }
        let step = |c: f64| self.h_grad * c.abs().max(1.0);
        let ht = step(t);
        let ws = ((self.value)(t + ht, x) - (self.value)(t - ht, x)) / (2.0 * ht);
        let mut wy = Vec::with_capacity(x.len());
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let h = step(x[i]);
            xp[i] = x[i] + h;
            let a = (self.value)(t, &xp);
            xp[i] = x[i] - h;
            let b = (self.value)(t, &xp);
            xp[i] = x[i];
            wy.push((a - b) / (2.0 * h));
        }
        (ws, wy)
    }

    /// Forces the finite-difference path even when an analytic gradient
    /// exists (used by the gradient-consistency checks).
    pub fn fd_gradient_at(&self, t: f64, x: &[f64]) -> (f64, Vec<f64>) {
        let spare = Self {
            value: self.value.clone(),
            gradient: None,
            exceptional_set: self.exceptional_set.clone(),
            h_grad: self.h_grad,
        };
        spare.gradient_at(t, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_differences_match_analytic_on_smooth_w() {
        let w = CandidateValueFunction::new(
            Arc::new(|t, x: &[f64]| (t + x[0]).sin() + x[0] * x[0]),
            Some(Arc::new(|t, x: &[f64]| {
                ((t + x[0]).cos(), vec![(t + x[0]).cos() + 2.0 * x[0]])
            })),
            RectifiableSet::empty(),
        );
        let (ws_a, wy_a) = w.gradient_at(0.3, &[0.7]);
        let (ws_f, wy_f) = w.fd_gradient_at(0.3, &[0.7]);
        assert!((ws_a - ws_f).abs() < 1e-8);
        assert!((wy_a[0] - wy_f[0]).abs() < 1e-8);
    }
}
