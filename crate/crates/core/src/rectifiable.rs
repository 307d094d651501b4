//! Exceptional sets: finite unions of parameterized manifold pieces with
//! certified distance lower bounds.
//!
//! Each piece is a C^1 patch given by an embedding of a parameter box. A
//! piece is sampled adaptively until every parameter cell has embedded
//! diameter below a target mesh; the reported distance is then
//!
//!   d_hat = max(0, distance to samples - mesh)  <=  true distance,
//!
//! and the true distance is at most d_hat + mesh. Refinement levels halve
//! the target mesh; the bound returned at level r is the running maximum of
//! the per-level bounds, so it can only tighten as r grows.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::geom;

pub type EmbeddingFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Bound on the embedding's Lipschitz constant over a parameter cell
/// (lo, hi). Used to certify per-cell embedded diameters.
pub type LipschitzFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum PieceKind {
    /// Embedding into the full (t, x) ambient space.
    Full { embedding: EmbeddingFn },
    /// A state-space patch swept unchanged over a time range; distance
    /// decomposes into state distance plus time excess.
    TimeInvariant {
        state_embedding: EmbeddingFn,
        t_range: (f64, f64),
    },
}

#[derive(Clone)]
pub struct ManifoldPiece {
    pub param_box: Vec<(f64, f64)>,
    /// Dimension of the embedded sample points (n + 1 for full pieces, n
    /// for time-invariant state patches).
    pub embedded_dim: usize,
    kind: PieceKind,
    lipschitz: Option<LipschitzFn>,
}

impl ManifoldPiece {
    /// A patch embedded directly into (t, x)-space.
    pub fn full(
        param_box: Vec<(f64, f64)>,
        embedded_dim: usize,
        embedding: EmbeddingFn,
        lipschitz: Option<LipschitzFn>,
    ) -> Self {
        let dim = param_box.len();
        assert!(
            dim < embedded_dim,
            "piece must have positive codimension ({dim} !< {embedded_dim})"
        );
        Self {
            param_box,
            embedded_dim,
            kind: PieceKind::Full { embedding },
            lipschitz,
        }
    }

    /// A state-space patch crossed with a time interval. The effective
    /// manifold dimension is param_box.len() + 1 inside R x R^n.
    pub fn time_invariant(
        param_box: Vec<(f64, f64)>,
        state_dim: usize,
        t_range: (f64, f64),
        state_embedding: EmbeddingFn,
        lipschitz: Option<LipschitzFn>,
    ) -> Self {
        let dim = param_box.len() + 1;
        assert!(
            dim < state_dim + 1,
            "cylinder piece must have positive codimension in R x R^n"
        );
        Self {
            param_box,
            embedded_dim: state_dim,
            kind: PieceKind::TimeInvariant {
                state_embedding,
                t_range,
            },
        lipschitz,
        }
    }

    fn embed(&self, params: &[f64]) -> Vec<f64> {
        match &self.kind {
            PieceKind::Full { embedding } => embedding(params),
            PieceKind::TimeInvariant {
                state_embedding, ..
            } => state_embedding(params),
        }
    }

    /// Crude per-cell Lipschitz estimate from sampled differences, with a
    /// safety factor; used only when no analytic bound was supplied.
    fn lipschitz_over(&self, lo: &[f64], hi: &[f64]) -> f64 {
        if let Some(l) = &self.lipschitz {
            return l(lo, hi);
        }
        let k = lo.len();
        let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let base = self.embed(&mid);
        let mut worst: f64 = 0.0;
        for axis in 0..k {
            let h = (hi[axis] - lo[axis]).max(1e-300);
            for &frac in &[0.25, 0.75] {
                let mut p = mid.clone();
                p[axis] = lo[axis] + frac * (hi[axis] - lo[axis]);
                let q = self.embed(&p);
                let dp = (p[axis] - mid[axis]).abs().max(1e-300 * h);
                worst = worst.max(geom::dist(&q, &base) / dp);
            }
        }
        4.0 * worst.max(1e-12)
    }

    /// Rough embedded scale of the whole piece, setting the level-0 mesh.
    fn base_scale(&self) -> f64 {
        let lo: Vec<f64> = self.param_box.iter().map(|r| r.0).collect();
        let hi: Vec<f64> = self.param_box.iter().map(|r| r.1).collect();
        let diag = geom::dist(&lo, &hi).max(1e-12);
        // a cheap local slope at the box center rather than the sup bound,
        // so wildly varying pieces do not force absurd level-0 meshes
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut probe = mid.clone();
        probe[0] = mid[0] + 1e-4 * (hi[0] - lo[0]).max(1e-12);
        let slope =
            geom::dist(&self.embed(&probe), &self.embed(&mid)) / (probe[0] - mid[0]).abs();
        (slope.max(1.0) * diag).max(1e-9)
    }
}

struct PieceLevel {
    /// Flattened embedded samples, `embedded_dim` coordinates per sample.
    samples: Vec<f64>,
    /// Certified covering mesh actually achieved.
    mesh: f64,
    /// Embedded bounding box (lo, hi per coordinate).
    bbox: Vec<(f64, f64)>,
    index: BucketIndex,
}

/// A finite union of manifold pieces standing in for a countably
/// rectifiable exceptional set (the measure-zero remainder is empty).
pub struct RectifiableSet {
    pub pieces: Vec<ManifoldPiece>,
    levels: RwLock<HashMap<(usize, u32), Arc<PieceLevel>>>,
}

impl Clone for RectifiableSet {
    fn clone(&self) -> Self {
        Self::new(self.pieces.clone())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DistanceBound {
    /// Certified lower bound on the distance to the union.
    pub lower: f64,
    /// Sampling mesh: true distance <= lower + mesh (when uncapped).
    pub mesh: f64,
}

impl RectifiableSet {
    pub fn new(pieces: Vec<ManifoldPiece>) -> Self {
        Self {
            pieces,
            levels: RwLock::new(HashMap::new()),
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    fn target_mesh(&self, piece: usize, level: u32) -> f64 {
        self.pieces[piece].base_scale() / 8.0 / f64::powi(2.0, level as i32)
    }

    /// Smallest refinement level whose target mesh is at or below `mesh`
    /// for every piece.
    pub fn level_for_mesh(&self, mesh: f64) -> u32 {
        let mut level = 0u32;
        for p in 0..self.pieces.len() {
            let base = self.target_mesh(p, 0);
            let need = (base / mesh).log2().ceil().max(0.0) as u32;
            level = level.max(need);
        }
        level.min(24)
    }

    fn level_data(&self, piece: usize, level: u32) -> Arc<PieceLevel> {
        if let Some(found) = self.levels.read().unwrap().get(&(piece, level)) {
            return found.clone();
        }
        let built = Arc::new(build_level(
            &self.pieces[piece],
            self.target_mesh(piece, level),
        ));
        self.levels
            .write()
            .unwrap()
            .entry((piece, level))
            .or_insert(built)
            .clone()
    }

    /// Lower bound contributed by one level across all pieces, searching no
    /// farther than `cap` (bounds above cap are reported as +infinity).
    fn level_lower(&self, level: u32, t: f64, x: &[f64], cap: f64) -> (f64, f64) {
        let mut lower = f64::INFINITY;
        let mut mesh_max: f64 = 0.0;
        for piece in 0..self.pieces.len() {
            let data = self.level_data(piece, level);
            mesh_max = mesh_max.max(data.mesh);
            let effective_cap = lower.min(cap);
            let pl = match &self.pieces[piece].kind {
                PieceKind::Full { .. } => {
                    let mut q = Vec::with_capacity(x.len() + 1);
                    q.push(t);
                    q.extend_from_slice(x);
                    let quick = box_distance(&data.bbox, &q);
                    if (quick - data.mesh).max(0.0) > effective_cap {
                        continue;
                    }
                    let d = data.index.nearest_within(
                        &data.samples,
                        self.pieces[piece].embedded_dim,
                        &q,
                        effective_cap + data.mesh + 1e-12,
                    );
                    (d - data.mesh).max(0.0)
                }
                PieceKind::TimeInvariant { t_range, .. } => {
                    let dt = (t_range.0 - t).max(0.0).max(t - t_range.1);
                    if dt > effective_cap {
                        continue;
                    }
                    let state_cap =
                        (effective_cap * effective_cap - dt * dt).max(0.0).sqrt();
                    let quick = box_distance(&data.bbox, x);
                    if (quick - data.mesh).max(0.0) > state_cap {
                        continue;
                    }
                    let ds = data.index.nearest_within(
                        &data.samples,
                        self.pieces[piece].embedded_dim,
                        x,
                        state_cap + data.mesh + 1e-12,
                    );
                    let s = (ds - data.mesh).max(0.0);
                    (s * s + dt * dt).sqrt()
                }
            };
            lower = lower.min(pl);
        }
        (lower, mesh_max)
    }

    /// Certified lower bound at the given refinement; +infinity when empty.
    ///
    /// Monotone in the refinement level: the returned lower bound is the
    /// running maximum over all levels up to `refinement`.
    pub fn distance(&self, t: f64, x: &[f64], refinement: u32) -> DistanceBound {
        self.distance_capped(t, x, refinement, f64::INFINITY)
    }

    /// Like [`RectifiableSet::distance`] but certified only up to `cap`:
    /// when the true distance exceeds the cap the returned lower bound is
    /// some value above it.
    pub fn distance_capped(&self, t: f64, x: &[f64], refinement: u32, cap: f64) -> DistanceBound {
        if self.pieces.is_empty() {
            return DistanceBound {
                lower: f64::INFINITY,
                mesh: 0.0,
            };
        }
        let mut best_lower: f64 = 0.0;
        let mut last_mesh = f64::INFINITY;
        for level in 0..=refinement {
            let (lo, mesh) = self.level_lower(level, t, x, cap);
            best_lower = best_lower.max(lo);
            last_mesh = mesh;
            if best_lower > cap {
                break;
            }
        }
        DistanceBound {
            lower: best_lower,
            mesh: last_mesh,
        }
    }

    /// Exclusion predicate: whether the certified lower bound at this
    /// refinement is <= rho. Exactly equivalent to
    /// `distance(t, x, refinement).lower <= rho`.
    pub fn within(&self, t: f64, x: &[f64], rho: f64, refinement: u32) -> bool {
        if self.pieces.is_empty() {
            return false;
        }
        for level in 0..=refinement {
            let (lo, _) = self.level_lower(level, t, x, rho);
            if lo > rho {
                return false;
            }
        }
        true
    }
}

fn box_distance(bbox: &[(f64, f64)], q: &[f64]) -> f64 {
    q.iter()
        .zip(bbox)
        .map(|(&c, &(lo, hi))| {
            let d = (lo - c).max(0.0).max(c - hi);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn build_level(piece: &ManifoldPiece, target: f64) -> PieceLevel {
    let k = piece.param_box.len();
    let edim = piece.embedded_dim;
    let mut samples: Vec<f64> = Vec::new();
    let mut achieved: f64 = 0.0;
    let lo: Vec<f64> = piece.param_box.iter().map(|r| r.0).collect();
    let hi: Vec<f64> = piece.param_box.iter().map(|r| r.1).collect();
    let mut stack = vec![(lo, hi, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let diag = geom::dist(&lo, &hi);
        let lip = piece.lipschitz_over(&lo, &hi);
        let bound = lip * diag;
        if bound <= target || depth >= 48 {
            achieved = achieved.max(bound);
            let corners = 1usize << k;
            for c in 0..corners {
                let p: Vec<f64> = (0..k)
                    .map(|a| if (c >> a) & 1 == 0 { lo[a] } else { hi[a] })
                    .collect();
                samples.extend(piece.embed(&p));
            }
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            samples.extend(piece.embed(&mid));
        } else {
            // split the longest parameter axis
            let axis = (0..k)
                .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap())
                .unwrap();
            let mid = 0.5 * (lo[axis] + hi[axis]);
            let mut hi_left = hi.clone();
            hi_left[axis] = mid;
            let mut lo_right = lo.clone();
            lo_right[axis] = mid;
            stack.push((lo.clone(), hi_left, depth + 1));
            stack.push((lo_right, hi.clone(), depth + 1));
        }
    }
    let n = samples.len() / edim.max(1);
    let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); edim];
    for i in 0..n {
        for a in 0..edim {
            let v = samples[i * edim + a];
            bbox[a].0 = bbox[a].0.min(v);
            bbox[a].1 = bbox[a].1.max(v);
        }
    }
    let index = BucketIndex::build(&samples, edim, (2.0 * achieved).max(1e-9));
    PieceLevel {
        samples,
        mesh: achieved,
        bbox,
        index,
    }
}

/// Uniform bucket grid over a point cloud for nearest-distance queries.
pub struct BucketIndex {
    dim: usize,
    cell: f64,
    lo: Vec<f64>,
    counts: Vec<usize>,
    buckets: HashMap<Vec<i64>, Vec<u32>>,
}

impl BucketIndex {
    pub fn build(flat: &[f64], dim: usize, cell: f64) -> Self {
        let n = flat.len() / dim.max(1);
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for i in 0..n {
            for a in 0..dim {
                let v = flat[i * dim + a];
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        if n == 0 {
            lo = vec![0.0; dim];
            hi = vec![0.0; dim];
        }
        let counts: Vec<usize> = (0..dim)
            .map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1))
            .collect();
        let mut buckets: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for i in 0..n {
            let key: Vec<i64> = (0..dim)
                .map(|a| ((flat[i * dim + a] - lo[a]) / cell).floor() as i64)
                .collect();
            buckets.entry(key).or_default().push(i as u32);
        }
        Self {
            dim,
            cell,
            lo,
            counts,
            buckets,
        }
    }

    /// Exact nearest distance from `q` to the cloud, provided it does not
    /// exceed `cap` (+infinity otherwise; empty clouds are infinitely far).
    pub fn nearest_within(&self, flat: &[f64], dim: usize, q: &[f64], cap: f64) -> f64 {
        debug_assert_eq!(dim, self.dim);
        let n = flat.len() / dim.max(1);
        if n == 0 {
            return f64::INFINITY;
        }
        // clamp the query into the index box; dd corrects the ring bound
        let qc: Vec<f64> = (0..dim)
            .map(|a| {
                q[a].max(self.lo[a])
                    .min(self.lo[a] + self.cell * self.counts[a] as f64)
            })
            .collect();
        let dd = geom::dist(q, &qc);
        if dd > cap {
            return f64::INFINITY;
        }
        let center: Vec<i64> = (0..dim)
            .map(|a| ((qc[a] - self.lo[a]) / self.cell).floor() as i64)
            .collect();
        let all_scanned = self.counts.iter().max().copied().unwrap_or(1) as i64 + 1;
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            // a cell at Chebyshev ring r around the clamped cell is at least
            // (r-1) cells from qc, hence (r-1) cell - dd from q
            let floor_dist = (ring - 1) as f64 * self.cell - dd;
            if floor_dist > best.min(cap) || ring > all_scanned {
                break;
            }
            self.scan_ring(&center, ring, |idx| {
                let s = &flat[idx as usize * dim..idx as usize * dim + dim];
                let d = geom::dist(q, s);
                if d < best {
                    best = d;
                }
            });
            ring += 1;
        }
        if best <= cap {
            best
        } else {
            f64::INFINITY
        }
    }

    fn scan_ring<F: FnMut(u32)>(&self, center: &[i64], ring: i64, mut visit: F) {
        let dim = self.dim;
        let mut offs = vec![-ring; dim];
        'outer: loop {
            if ring == 0 || offs.iter().any(|o| o.abs() == ring) {
                let key: Vec<i64> = (0..dim).map(|a| center[a] + offs[a]).collect();
                if let Some(items) = self.buckets.get(&key) {
                    for &i in items {
                        visit(i);
                    }
                }
            }
            let mut axis = 0;
            loop {
                if axis == dim {
                    break 'outer;
                }
                offs[axis] += 1;
                if offs[axis] <= ring {
                    break;
                }
                offs[axis] = -ring;
                axis += 1;
            }
            if ring == 0 {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyperplane_t1() -> RectifiableSet {
        RectifiableSet::new(vec![ManifoldPiece::full(
            vec![(-6.0, 6.0)],
            2,
            Arc::new(|p: &[f64]| vec![1.0, p[0]]),
            Some(Arc::new(|_: &[f64], _: &[f64]| 1.0)),
        )])
    }

    #[test]
    fn planar_distance() {
        let a = hyperplane_t1();
        let b = a.distance(0.25, &[5.0], 3);
        assert!(b.lower <= 0.75 + 1e-12);
        assert!(0.75 <= b.lower + b.mesh);
    }

    #[test]
    fn circle_center_distance() {
        // unit circle about (1, 0) in the state plane, any time
        let a = RectifiableSet::new(vec![ManifoldPiece::time_invariant(
            vec![(0.0, std::f64::consts::TAU)],
            2,
            (-100.0, 100.0),
            Arc::new(|p: &[f64]| vec![1.0 + p[0].cos(), p[0].sin()]),
            Some(Arc::new(|_: &[f64], _: &[f64]| 1.0)),
        )]);
        let b = a.distance(0.0, &[1.0, 0.0], 4);
        assert!((b.lower - 1.0).abs() <= b.mesh + 1e-12);
        assert!(b.lower <= 1.0 + 1e-12);
    }

    #[test]
    fn empty_set_is_infinitely_far() {
        let a = RectifiableSet::empty();
        assert_eq!(a.distance(0.0, &[0.0], 2).lower, f64::INFINITY);
        assert!(!a.within(0.0, &[0.0], 10.0, 2));
    }

    #[test]
    fn graph_distance_matches_dense_oracle() {
        // graph t = sin(1/x) over x in [0.01, 1]
        let a = RectifiableSet::new(vec![ManifoldPiece::full(
            vec![(0.01, 1.0)],
            2,
            Arc::new(|p: &[f64]| vec![(1.0 / p[0]).sin(), p[0]]),
            Some(Arc::new(|lo: &[f64], _: &[f64]| {
                (1.0 + 1.0 / lo[0].powi(4)).sqrt()
            })),
        )]);
        let q = (0.0, [2.0 / std::f64::consts::PI]);

        // independent brute-force oracle: one million graph points
        let mut oracle = f64::INFINITY;
        for i in 0..1_000_000 {
            let x = 0.01 + 0.99 * i as f64 / 999_999.0;
            let d = (((1.0 / x).sin() - q.0).powi(2) + (x - q.1[0]).powi(2)).sqrt();
            oracle = oracle.min(d);
        }

        let b = a.distance(q.0, &q.1, 3);
        assert!(b.lower <= oracle + 1e-9, "lower {} oracle {}", b.lower, oracle);
        assert!(
            oracle <= b.lower + b.mesh,
            "oracle {} not within mesh {} of {}",
            oracle,
            b.mesh,
            b.lower
        );
    }

    #[test]
    fn refinement_tightens_monotonically() {
        let a = hyperplane_t1();
        let mut prev = 0.0;
        let mut prev_mesh = f64::INFINITY;
        for r in 0..5 {
            let b = a.distance(-0.3, &[2.2], r);
            assert!(b.lower + 1e-15 >= prev);
            assert!(r == 0 || b.lower <= prev + prev_mesh + 1e-15);
            prev = b.lower;
            prev_mesh = b.mesh;
        }
    }

    #[test]
    fn within_agrees_with_distance() {
        let a = hyperplane_t1();
        for &(t, x, rho) in &[
            (0.25, 5.0, 0.5),
            (0.25, 5.0, 0.8),
            (0.9, 0.0, 0.2),
            (0.99, 0.0, 0.005),
        ] {
            let d = a.distance(t, &[x], 3).lower;
            assert_eq!(a.within(t, &[x], rho, 3), d <= rho, "t={t} x={x} rho={rho}");
        }
    }

    #[test]
    fn level_for_mesh_reaches_requested_resolution() {
        let a = hyperplane_t1();
        let lvl = a.level_for_mesh(0.01);
        let b = a.distance(0.5, &[0.0], lvl);
        assert!(b.mesh <= 0.01, "mesh {} at level {lvl}", b.mesh);
    }
}
