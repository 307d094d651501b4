//! Uniform grids over the time-state window and the value arrays living on
//! them, with +infinity-aware multilinear interpolation and file export.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{HjbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub step: f64,
    pub count: usize,
}

impl Axis {
    pub fn from_range(lo: f64, hi: f64, mesh: f64) -> Self {
        assert!(hi > lo && mesh > 0.0);
        let count = ((hi - lo) / mesh).round().max(1.0) as usize + 1;
        Self {
            min: lo,
            step: (hi - lo) / (count - 1) as f64,
            count,
        }
    }

    pub fn single(value: f64) -> Self {
        Self {
            min: value,
            step: 1.0,
            count: 1,
        }
    }

    pub fn max(&self) -> f64 {
        self.min + self.step * (self.count - 1) as f64
    }

    pub fn at(&self, i: usize) -> f64 {
        self.min + self.step * i as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.at(i))
    }

    /// Cell index and fraction for interpolation, clamped to the grid.
    fn locate(&self, v: f64) -> (usize, f64) {
        if self.count == 1 {
            return (0, 0.0);
        }
        let raw = (v - self.min) / self.step;
        let clamped = raw.max(0.0).min((self.count - 1) as f64);
        let i = (clamped.floor() as usize).min(self.count - 2);
        (i, clamped - i as f64)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min - 1e-12 && v <= self.max() + 1e-12
    }
}

/// Sampling window for checks and dynamic programming: one time axis plus
/// one axis per state dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub t: Axis,
    pub space: Vec<Axis>,
}

impl GridSpec {
    pub fn with_mesh(t_range: (f64, f64), x_ranges: &[(f64, f64)], mesh: f64) -> Self {
        Self {
            t: Axis::from_range(t_range.0, t_range.1, mesh),
            space: x_ranges
                .iter()
                .map(|&(lo, hi)| Axis::from_range(lo, hi, mesh))
                .collect(),
        }
    }

    /// Largest step among the space axes.
    pub fn space_mesh(&self) -> f64 {
        self.space
            .iter()
            .map(|a| a.step)
            .fold(0.0f64, f64::max)
    }

    pub fn space_point_count(&self) -> usize {
        self.space.iter().map(|a| a.count).product()
    }

    pub fn point_count(&self) -> usize {
        self.t.count * self.space_point_count()
    }

    /// Decodes a flat space index into coordinates.
    pub fn space_point(&self, mut idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.space.len()];
        for (a, axis) in self.space.iter().enumerate().rev() {
            out[a] = axis.at(idx % axis.count);
            idx /= axis.count;
        }
        out
    }
}

/// Extended-real values on a grid, +infinity marking unreachable points.
#[derive(Clone)]
pub struct ValueGrid {
    pub spec: GridSpec,
    /// Row-major over [t][x_1]...[x_n].
    pub values: Vec<f64>,
    /// Minimizing control index per point, when requested.
    pub policy: Option<Vec<u16>>,
    /// Euler steps that left the grid box during construction.
    pub boundary_losses: u64,
}

impl ValueGrid {
    pub fn new(spec: GridSpec, fill: f64) -> Self {
        let n = spec.point_count();
        Self {
            spec,
            values: vec![fill; n],
            policy: None,
            boundary_losses: 0,
        }
    }

    pub fn space_mesh(&self) -> f64 {
        self.spec.space_mesh()
    }

    pub fn index(&self, ti: usize, space_idx: usize) -> usize {
        ti * self.spec.space_point_count() + space_idx
    }

    /// Multilinear interpolation over (t, x); any +infinity corner makes the
    /// result +infinity. Coordinates are clamped to the grid box.
    pub fn interp(&self, t: f64, x: &[f64]) -> f64 {
        let (ti, tf) = self.spec.t.locate(t);
        let mut idx = Vec::with_capacity(1 + x.len());
        let mut frac = Vec::with_capacity(1 + x.len());
        idx.push(ti);
        frac.push(tf);
        for (a, axis) in self.spec.space.iter().enumerate() {
            let (i, f) = axis.locate(x[a]);
            idx.push(i);
            frac.push(f);
        }
        let dims = idx.len();
        let mut acc = 0.0;
        for corner in 0..(1usize << dims) {
            let mut weight = 1.0;
            let mut flat_t = 0usize;
            let mut flat_space = 0usize;
            for d in 0..dims {
                let up = (corner >> d) & 1 == 1;
                let f = frac[d];
                weight *= if up { f } else { 1.0 - f };
                let i = idx[d] + if up { 1 } else { 0 };
                if d == 0 {
                    flat_t = i.min(self.spec.t.count - 1);
                } else {
                    let axis = &self.spec.space[d - 1];
                    flat_space = flat_space * axis.count + i.min(axis.count - 1);
                }
            }
            if weight == 0.0 {
                continue;
            }
            let v = self.values[self.index(flat_t, flat_space)];
            if v.is_infinite() {
                return f64::INFINITY;
            }
            acc += weight * v;
        }
        acc
    }

    /// Space-only interpolation in one time layer.
    pub fn interp_layer(&self, ti: usize, x: &[f64]) -> f64 {
        let base = ti * self.spec.space_point_count();
        let mut idx = Vec::with_capacity(x.len());
        let mut frac = Vec::with_capacity(x.len());
        for (a, axis) in self.spec.space.iter().enumerate() {
            let (i, f) = axis.locate(x[a]);
            idx.push(i);
            frac.push(f);
        }
        let dims = idx.len();
        let mut acc = 0.0;
        for corner in 0..(1usize << dims) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for d in 0..dims {
                let up = (corner >> d) & 1 == 1;
                weight *= if up { frac[d] } else { 1.0 - frac[d] };
                let axis = &self.spec.space[d];
                flat = flat * axis.count + (idx[d] + up as usize).min(axis.count - 1);
            }
            if weight == 0.0 {
                continue;
            }
            let v = self.values[base + flat];
            if v.is_infinite() {
                return f64::INFINITY;
            }
            acc += weight * v;
        }
        acc
    }

    /// Whether x lies inside the space box (no extrapolation needed).
    pub fn space_contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.spec.space)
            .all(|(&c, axis)| axis.contains(c))
    }

    /// Rows `t, x1..xn, V`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for i in 1..=self.spec.space.len() {
            write!(w, ",x{i}")?;
        }
        writeln!(w, ",V")?;
        for ti in 0..self.spec.t.count {
            let t = self.spec.t.at(ti);
            for si in 0..self.spec.space_point_count() {
                let xs = self.spec.space_point(si);
                write!(w, "{t}")?;
                for c in &xs {
                    write!(w, ",{c}")?;
                }
                writeln!(w, ",{}", self.values[self.index(ti, si)])?;
            }
        }
        Ok(())
    }

    /// Compact binary dump. Little-endian layout:
    ///   magic "VGRD", version u32,
    ///   space-dimension u32,
    ///   time axis  (count u64, min f64, step f64),
    ///   space axes (count u64, min f64, step f64) each,
    ///   values row-major f64 over [t][x1]..[xn].
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"VGRD")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.spec.space.len() as u32).to_le_bytes())?;
        let axis = |w: &mut W, a: &Axis| -> Result<()> {
            w.write_all(&(a.count as u64).to_le_bytes())?;
            w.write_all(&a.min.to_le_bytes())?;
            w.write_all(&a.step.to_le_bytes())?;
            Ok(())
        };
        axis(&mut w, &self.spec.t)?;
        for a in &self.spec.space {
            axis(&mut w, a)?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"VGRD" {
            return Err(HjbError::Config("bad value-grid magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != 1 {
            return Err(HjbError::Config(format!("unsupported version {version}")));
        }
        r.read_exact(&mut u32buf)?;
        let ndim = u32::from_le_bytes(u32buf) as usize;
        let mut axis = |r: &mut R| -> Result<Axis> {
            let mut u64buf = [0u8; 8];
            r.read_exact(&mut u64buf)?;
            let count = u64::from_le_bytes(u64buf) as usize;
            r.read_exact(&mut u64buf)?;
            let min = f64::from_le_bytes(u64buf);
            r.read_exact(&mut u64buf)?;
            let step = f64::from_le_bytes(u64buf);
            Ok(Axis { min, step, count })
        };
        let t = axis(&mut r)?;
        let space: Vec<Axis> = (0..ndim)
            .map(|_| axis(&mut r))
            .collect::<Result<_>>()?;
        let spec = GridSpec { t, space };
        let n = spec.point_count();
        let mut values = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok(Self {
            spec,
            values,
            policy: None,
            boundary_losses: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_grid() -> ValueGrid {
        // V(t, x) = t + 2x on t in [0,1], x in [0,1], 5x5
        let spec = GridSpec::with_mesh((0.0, 1.0), &[(0.0, 1.0)], 0.25);
        let mut g = ValueGrid::new(spec, 0.0);
        for ti in 0..g.spec.t.count {
            for si in 0..g.spec.space_point_count() {
                let t = g.spec.t.at(ti);
                let x = g.spec.space_point(si)[0];
                let i = g.index(ti, si);
                g.values[i] = t + 2.0 * x;
            }
        }
        g
    }

    #[test]
    fn interpolation_is_exact_on_multilinear_data() {
        let g = ramp_grid();
        assert!((g.interp(0.37, &[0.61]) - (0.37 + 1.22)).abs() < 1e-12);
        assert!((g.interp(1.0, &[1.0]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn infinity_propagates_through_interpolation() {
        let mut g = ramp_grid();
        let idx = g.index(2, 2);
        g.values[idx] = f64::INFINITY;
        let t = g.spec.t.at(2);
        let x = g.spec.space_point(2)[0];
        assert!(g.interp(t + 0.1, &[x + 0.1]).is_infinite());
        // corners away from the marked point are unaffected
        assert!(g.interp(0.0, &[0.0]).is_finite());
    }

    #[test]
    fn binary_roundtrip() {
        let g = ramp_grid();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        let h = ValueGrid::read_binary(buf.as_slice()).unwrap();
        assert_eq!(g.spec.t, h.spec.t);
        assert_eq!(g.values, h.values);
    }
}
