//! Discrete semicontinuous envelopes of grid fields.
//!
//! The lower envelope is a morphological opening (min filter then max
//! filter over the one-cell neighborhood), the upper envelope the dual
//! closing. Both are idempotent, satisfy lower <= field <= upper pointwise
//! and the duality lower(-f) = -upper(f), and reproduce the field exactly
//! wherever it is the restriction of a function with clean jump edges;
//! sub-cell features (narrow channels, spikes) are where they differ from
//! the field, which is what the checks look for.

use crate::grid::ValueGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeMode {
    Lower,
    Upper,
}

/// Offsets of grid points within a Euclidean (t, x)-radius of a point.
fn ball_offsets(grid: &ValueGrid, radius: f64) -> Vec<Vec<isize>> {
    let mut steps = vec![grid.spec.t.step];
    steps.extend(grid.spec.space.iter().map(|a| a.step));
    let dims = steps.len();
    let reach: Vec<isize> = steps
        .iter()
        .map(|s| (radius / s).floor() as isize)
        .collect();
    let mut out = Vec::new();
    let mut off: Vec<isize> = reach.iter().map(|&r| -r).collect();
    'outer: loop {
        let r2: f64 = off
            .iter()
            .zip(&steps)
            .map(|(&o, s)| (o as f64 * s) * (o as f64 * s))
            .sum();
        if r2 <= radius * radius * (1.0 + 1e-12) {
            out.push(off.clone());
        }
        let mut d = 0;
        loop {
            if d == dims {
                break 'outer;
            }
            off[d] += 1;
            if off[d] <= reach[d] {
                break;
            }
            off[d] = -reach[d];
            d += 1;
        }
    }
    out
}

fn filter(grid: &ValueGrid, offsets: &[Vec<isize>], take_min: bool) -> Vec<f64> {
    let tcount = grid.spec.t.count as isize;
    let scounts: Vec<isize> = grid.spec.space.iter().map(|a| a.count as isize).collect();
    let nspace: usize = grid.spec.space.iter().map(|a| a.count).product();
    let mut out = vec![0.0; grid.values.len()];
    for ti in 0..tcount {
        for si in 0..nspace as isize {
            // decode space index
            let mut idx = vec![0isize; scounts.len()];
            let mut rem = si;
            for d in (0..scounts.len()).rev() {
                idx[d] = rem % scounts[d];
                rem /= scounts[d];
            }
            let mut acc = if take_min {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            for off in offsets {
                let nt = ti + off[0];
                if nt < 0 || nt >= tcount {
                    continue;
                }
                let mut ok = true;
                let mut flat = 0isize;
                for d in 0..scounts.len() {
                    let ni = idx[d] + off[d + 1];
                    if ni < 0 || ni >= scounts[d] {
                        ok = false;
                        break;
                    }
                    flat = flat * scounts[d] + ni;
                }
                if !ok {
                    continue;
                }
                let v = grid.values[(nt as usize) * nspace + flat as usize];
                acc = if take_min { acc.min(v) } else { acc.max(v) };
            }
            out[(ti as usize) * nspace + si as usize] = acc;
        }
    }
    out
}

/// Discrete envelope of a grid field. The structuring radius is the
/// smallest entry of `radii` that still reaches a neighbor, never below one
/// grid cell.
pub fn envelope(field: &ValueGrid, mode: EnvelopeMode, radii: &[f64]) -> ValueGrid {
    let min_cell = field
        .spec
        .space
        .iter()
        .map(|a| a.step)
        .chain((field.spec.t.count > 1).then_some(field.spec.t.step))
        .fold(f64::INFINITY, f64::min);
    let chosen = radii
        .iter()
        .copied()
        .filter(|&r| r >= min_cell)
        .fold(f64::INFINITY, f64::min);
    let radius = if chosen.is_finite() { chosen } else { min_cell };

    let offsets = ball_offsets(field, radius);
    let mut out = field.clone();
    match mode {
        EnvelopeMode::Lower => {
            let eroded = ValueGrid {
                values: filter(field, &offsets, true),
                ..field.clone()
            };
            out.values = filter(&eroded, &offsets, false);
            for (o, f) in out.values.iter_mut().zip(&field.values) {
                if *o > *f {
                    *o = *f; // opening never exceeds the field
                }
            }
        }
        EnvelopeMode::Upper => {
            let dilated = ValueGrid {
                values: filter(field, &offsets, false),
                ..field.clone()
            };
            out.values = filter(&dilated, &offsets, true);
            for (o, f) in out.values.iter_mut().zip(&field.values) {
                if *o < *f {
                    *o = *f;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, GridSpec};

    fn grid_1d(values: Vec<f64>) -> ValueGrid {
        let spec = GridSpec {
            t: Axis::single(0.0),
            space: vec![Axis {
                min: -((values.len() / 2) as f64),
                step: 1.0,
                count: values.len(),
            }],
        };
        let mut g = ValueGrid::new(spec, 0.0);
        g.values = values;
        g
    }

    #[test]
    fn continuous_field_is_left_alone_within_modulus() {
        let spec = GridSpec::with_mesh((0.0, 1.0), &[(0.0, 1.0)], 1.0 / 32.0);
        let mut g = ValueGrid::new(spec, 0.0);
        for ti in 0..g.spec.t.count {
            for si in 0..g.spec.space_point_count() {
                let t = g.spec.t.at(ti);
                let x = g.spec.space_point(si)[0];
                let i = g.index(ti, si);
                g.values[i] = (t + x).sin();
            }
        }
        // |d/dz sin| <= 1, so two cells move the value by at most 2*mesh*sqrt(2)
        let modulus = 2.0 * std::f64::consts::SQRT_2 / 32.0;
        for mode in [EnvelopeMode::Lower, EnvelopeMode::Upper] {
            let e = envelope(&g, mode, &[1.0 / 32.0]);
            for (a, b) in e.values.iter().zip(&g.values) {
                assert!((a - b).abs() <= modulus);
            }
        }
    }

    #[test]
    fn step_field_envelopes() {
        // 1 for x < 0, 0 for x >= 0
        let vals: Vec<f64> = (-4..=4).map(|i| if i < 0 { 1.0 } else { 0.0 }).collect();
        let g = grid_1d(vals);
        let lower = envelope(&g, EnvelopeMode::Lower, &[1.0]);
        let upper = envelope(&g, EnvelopeMode::Upper, &[1.0]);
        let at = |e: &ValueGrid, i: isize| e.values[(i + 4) as usize];
        // the lower envelope keeps the 0 at the jump point
        assert_eq!(at(&lower, 0), 0.0);
        // the boundary cell on the high side keeps its 1
        assert_eq!(at(&upper, -1), 1.0);
        // order
        for (l, (f, u)) in lower.values.iter().zip(g.values.iter().zip(&upper.values)) {
            assert!(l <= f && f <= u);
        }
    }

    #[test]
    fn idempotent_and_dual() {
        let vals = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0];
        let g = grid_1d(vals);
        for mode in [EnvelopeMode::Lower, EnvelopeMode::Upper] {
            let once = envelope(&g, mode, &[1.0]);
            let twice = envelope(&once, mode, &[1.0]);
            assert_eq!(once.values, twice.values, "{mode:?} not idempotent");
        }
        let mut neg = g.clone();
        for v in &mut neg.values {
            *v = -*v;
        }
        let lower_of_neg = envelope(&neg, EnvelopeMode::Lower, &[1.0]);
        let upper = envelope(&g, EnvelopeMode::Upper, &[1.0]);
        for (a, b) in lower_of_neg.values.iter().zip(&upper.values) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn narrow_spike_is_removed_by_opening() {
        let g = grid_1d(vec![0.0, 0.0, 0.0, 7.0, 0.0, 0.0, 0.0]);
        let lower = envelope(&g, EnvelopeMode::Lower, &[1.0]);
        assert!(lower.values.iter().all(|&v| v == 0.0));
        // and a narrow dip is filled by closing
        let g2 = grid_1d(vec![1.0, 1.0, 1.0, -5.0, 1.0, 1.0, 1.0]);
        let upper = envelope(&g2, EnvelopeMode::Upper, &[1.0]);
        assert!(upper.values.iter().all(|&v| v == 1.0));
    }
}
