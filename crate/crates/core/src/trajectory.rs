//! Sampled trajectories with interpolation and CSV export.

use std::io::Write;

use crate::control::PiecewiseConstantControl;
use crate::error::Result;

/// A trajectory sampled on an increasing time grid.
///
/// States between samples are interpolated linearly; at a sample time the
/// stored state is returned exactly.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub control: PiecewiseConstantControl,
    /// Time at which the state left the domain, when integration stopped early.
    pub domain_exit: Option<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Linear interpolation; clamps outside the sampled span.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.end_time() {
            return self.final_state().to_vec();
        }
        let i = self.times.partition_point(|&s| s < t);
        // times[i-1] < t <= times[i]
        if self.times[i] == t {
            return self.states[i].clone();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let lam = (t - t0) / (t1 - t0);
        self.states[i - 1]
            .iter()
            .zip(&self.states[i])
            .map(|(a, b)| a + lam * (b - a))
            .collect()
    }

    /// Writes rows `t, x1..xn, u1..uq`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim();
        let q = self.control.dimension();
        write!(w, "t")?;
        for i in 1..=n {
            write!(w, ",x{i}")?;
        }
        for i in 1..=q {
            write!(w, ",u{i}")?;
        }
        writeln!(w)?;
        for (k, &t) in self.times.iter().enumerate() {
            write!(w, "{t}")?;
            for c in &self.states[k] {
                write!(w, ",{c}")?;
            }
            // the control active just after t (left-continuous: sample at the
            // next instant, falling back to the last value at the end)
            let u = self
                .control
                .eval((t + 1e-12).min(self.control.end()))
                .unwrap_or_else(|_| self.control.values().last().unwrap());
            for c in u {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj() -> Trajectory {
        Trajectory {
            times: vec![0.0, 1.0, 2.0],
            states: vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![4.0, -2.0]],
            control: PiecewiseConstantControl::constant(0.0, 2.0, vec![0.0]),
            domain_exit: None,
        }
    }

    #[test]
    fn exact_at_samples() {
        let tr = traj();
        assert_eq!(tr.state_at(1.0), vec![1.0, -1.0]);
        assert_eq!(tr.state_at(0.0), vec![0.0, 0.0]);
        assert_eq!(tr.state_at(2.0), vec![4.0, -2.0]);
    }

    #[test]
    fn linear_between_samples() {
        let tr = traj();
        let s = tr.state_at(1.5);
        assert!((s[0] - 2.5).abs() < 1e-15);
        assert!((s[1] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let tr = traj();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,u1");
        assert_eq!(lines.count(), 3);
    }
}
