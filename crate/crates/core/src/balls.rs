//! Carnot–Carathéodory distances on a horizontal lattice.
//!
//! Nodes are the points `(ε a, ε² c)` with `a ∈ ℤ^{2n}`, `c ∈ ℤ`, i.e. the
//! discrete Heisenberg group scaled by the intrinsic dilation of ratio `ε`.
//! Edges are exact flows of the frame fields for time `ε`: `±X_k` moves
//! `a_{x_k}` by one and `c` by `±a_{y_k}`, `±Y_k` moves `a_{y_k}` by one and
//! `c` by `∓a_{x_k}`. Flows stay on the lattice, so there is no snapping.
//! The optional diagonal directions `±X_k ± Y_k` are flows of
//! `αX_k + βY_k`, with `Δc = α a_{y_k} − β a_{x_k}`. Edge weights are the
//! `g`-length of the step, with `g` taken at its midpoint.
//!
//! With four directions per plane the quantity `c − Σ a_{x_k} a_{y_k}` keeps
//! its parity, so only every second node is reachable and each reachable
//! node represents a volume `2 ε^{2n+2}`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use nalgebra::DVector;

use crate::contact::{group_inverse, group_mul, ContactStructure, Point};
use crate::error::{Error, Result};
use crate::numerics::fit_power_law;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Directions {
    /// `±X_k, ±Y_k`.
    #[default]
    Four,
    /// Adds the diagonals `±X_k ± Y_k`.
    Eight,
}

/// Node set of a lattice run: a box `|a_k| ≤ a_half`, and in each column a
/// range `|c| ≤ c_half[col]` around `c_center[col]`.
#[derive(Debug, Clone)]
struct Region {
    n: usize,
    a_half: i64,
    side: i64,
    c_half: Vec<i64>,
    offsets: Vec<usize>,
    total: usize,
}

impl Region {
    fn new(n: usize, a_half: i64, c_half: impl Fn(&[i64]) -> i64) -> Result<Self> {
        let side = 2 * a_half + 1;
        let cols = (side as usize).checked_pow(2 * n as u32).ok_or(Error::Degenerate("lattice too large"))?;
        let mut halves = Vec::with_capacity(cols);
        let mut offsets = Vec::with_capacity(cols + 1);
        let mut total = 0usize;
        let mut a = vec![0i64; 2 * n];
        for col in 0..cols {
            decode_col(col, a_half, side, &mut a);
            let ch = c_half(&a).max(0);
            offsets.push(total);
            halves.push(ch);
            total += (2 * ch + 1) as usize;
        }
        offsets.push(total);
        if total > u32::MAX as usize {
            return Err(Error::Degenerate("lattice too large"));
        }
        Ok(Region { n, a_half, side, c_half: halves, offsets, total })
    }

    fn col_of(&self, a: &[i64]) -> Option<usize> {
        let mut col = 0usize;
        for v in a {
            if v.abs() > self.a_half {
                return None;
            }
            col = col * self.side as usize + (v + self.a_half) as usize;
        }
        Some(col)
    }

    fn node(&self, col: usize, c: i64) -> Option<usize> {
        let h = self.c_half[col];
        if c.abs() > h {
            return None;
        }
        Some(self.offsets[col] + (c + h) as usize)
    }
}

fn decode_col(mut col: usize, a_half: i64, side: i64, a: &mut [i64]) {
    for k in (0..a.len()).rev() {
        a[k] = (col % side as usize) as i64 - a_half;
        col /= side as usize;
    }
}

/// The horizontal lattice: step `ε`, box `|z_k| ≤ z_half`, `|t| ≤ t_half`.
#[derive(Debug, Clone)]
pub struct HorizontalLattice {
    structure: ContactStructure,
    eps: f64,
    z_half: f64,
    t_half: f64,
    directions: Directions,
}

/// A single move: change of `a` in the plane `k` and the coefficients
/// `(α, β)` with `Δc = α a_{y_k} − β a_{x_k}`.
#[derive(Debug, Clone, Copy)]
struct Move {
    plane: usize,
    alpha: i64,
    beta: i64,
}

impl HorizontalLattice {
    pub fn new(structure: ContactStructure, eps: f64, z_half: f64, t_half: f64, directions: Directions) -> Result<Self> {
        for (what, v) in [("lattice step", eps), ("box half-width in z", z_half), ("box half-height in t", t_half)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositive { what, value: v });
            }
        }
        if z_half < eps {
            return Err(Error::OutOfDomain { what: "box half-width (must be at least one step)", value: z_half });
        }
        Ok(HorizontalLattice { structure, eps, z_half, t_half, directions })
    }

    /// Lattice whose box is large enough for balls of radius `radius`
    /// around the origin in the standard structure.
    pub fn for_radius(structure: ContactStructure, eps: f64, radius: f64, directions: Directions) -> Result<Self> {
        let scale = 1.0 / min_eigen(&structure).sqrt();
        let r = radius * scale + 3.0 * eps;
        Self::new(structure, eps, r, r * r / PI + eps * r, directions)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn structure(&self) -> &ContactStructure {
        &self.structure
    }
    pub fn directions(&self) -> Directions {
        self.directions
    }
    pub fn n(&self) -> usize {
        self.structure.n()
    }

    /// Volume represented by one reachable node.
    pub fn node_volume(&self) -> f64 {
        let base = self.eps.powi(2 * self.n() as i32 + 2);
        match self.directions {
            Directions::Four => 2.0 * base,
            Directions::Eight => base,
        }
    }

    fn moves(&self) -> Vec<Move> {
        let mut out = Vec::new();
        for plane in 0..self.n() {
            for (alpha, beta) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                out.push(Move { plane, alpha, beta });
            }
            if self.directions == Directions::Eight {
                for (alpha, beta) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    out.push(Move { plane, alpha, beta });
                }
            }
        }
        out
    }

    /// Nearest lattice node `(a, c)` to `p`.
    pub fn snap(&self, p: &Point) -> (Vec<i64>, i64) {
        let a = p.z.iter().map(|v| (v / self.eps).round() as i64).collect();
        let c = (p.t / (self.eps * self.eps)).round() as i64;
        (a, c)
    }

    pub fn node_point(&self, a: &[i64], c: i64) -> Point {
        Point { z: a.iter().map(|v| *v as f64 * self.eps).collect(), t: c as f64 * self.eps * self.eps }
    }

    fn box_region(&self) -> Result<Region> {
        let a_half = (self.z_half / self.eps).floor() as i64;
        let c_half = (self.t_half / (self.eps * self.eps)).floor() as i64;
        Region::new(self.n(), a_half, |_| c_half)
    }

    /// Box trimmed to the a-priori envelope of balls of radius `radius`
    /// around the origin: a horizontal curve of length `L` ending at `z`
    /// lifts to `|t| ≤ min(L²/π, (L + |z|)²/2π)`.
    fn ball_region(&self, radius: f64) -> Result<Region> {
        let scale = 1.0 / min_eigen(&self.structure).sqrt();
        let r = radius * scale + 2.0 * self.eps;
        let a_half = ((r / self.eps).ceil() as i64 + 1).min((self.z_half / self.eps).floor() as i64);
        let c_box = (self.t_half / (self.eps * self.eps)).floor() as i64;
        let eps = self.eps;
        if self.directions == Directions::Four && self.structure.is_standard() {
            // rectilinear paths: |z|₁ ≤ L, and closing with the chord, the ℓ¹
            // isoperimetric inequality gives |t| ≤ (L + |z|₁)²/8
            return Region::new(self.n(), a_half, |a| {
                let s1 = a.iter().map(|v| v.abs()).sum::<i64>() as f64 * eps;
                if s1 > r {
                    return -1;
                }
                let z = a.iter().map(|v| (*v as f64 * eps).powi(2)).sum::<f64>().sqrt();
                let t = (r + s1).powi(2) / 8.0 + eps * (z + eps);
                ((t / (eps * eps)).ceil() as i64).min(c_box)
            });
        }
        Region::new(self.n(), a_half, |a| {
            let z = a.iter().map(|v| (*v as f64 * eps).powi(2)).sum::<f64>().sqrt();
            if z > r {
                return -1;
            }
            // one more step may change t by ε|z|
            let t = (r * r / PI).min((r + z).powi(2) / (2.0 * PI)) + eps * (z + eps);
            ((t / (eps * eps)).ceil() as i64).min(c_box)
        })
    }

    fn step_weight(&self, mv: Move, a: &[i64], c: i64, cache: &[f64], idx: usize) -> f64 {
        if self.structure.is_left_invariant() {
            return cache[idx];
        }
        let k = mv.plane;
        let dc = mv.alpha * a[2 * k + 1] - mv.beta * a[2 * k];
        let mut z: Vec<f64> = a.iter().map(|v| *v as f64 * self.eps).collect();
        z[2 * k] += 0.5 * mv.alpha as f64 * self.eps;
        z[2 * k + 1] += 0.5 * mv.beta as f64 * self.eps;
        let t = (c as f64 + 0.5 * dc as f64) * self.eps * self.eps;
        let g = self.structure.metric_at(&z, t);
        let mut v = DVector::zeros(2 * self.n());
        v[2 * k] = mv.alpha as f64;
        v[2 * k + 1] = mv.beta as f64;
        self.eps * v.dot(&(&g * &v)).max(0.0).sqrt()
    }

    /// Dijkstra from `source` over `region` until the popped distance
    /// exceeds `r_max` or `target` is settled.
    fn dijkstra(&self, region: &Region, source: (&[i64], i64), r_max: f64, target: Option<usize>) -> Result<Search> {
        let moves = self.moves();
        let origin_weights = self.origin_weights();
        let src_col = region.col_of(source.0).ok_or(Error::OutOfDomain { what: "source outside lattice box", value: 0.0 })?;
        let src = region.node(src_col, source.1).ok_or(Error::OutOfDomain { what: "source outside lattice box", value: 0.0 })?;
        let mut dist = vec![f64::INFINITY; region.total];
        let mut done = vec![false; region.total];
        let mut settled = Vec::new();
        let mut boundary_min = f64::INFINITY;
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Reverse((0u64, src_col as u32, source.1 as i32)));
        let mut a = vec![0i64; 2 * region.n];
        let mut b = vec![0i64; 2 * region.n];
        while let Some(Reverse((bits, col, c))) = heap.pop() {
            let d = f64::from_bits(bits);
            let (col, c) = (col as usize, c as i64);
            let id = region.offsets[col] + (c + region.c_half[col]) as usize;
            if done[id] {
                continue;
            }
            if d > r_max {
                break;
            }
            done[id] = true;
            settled.push(d);
            if Some(id) == target {
                break;
            }
            decode_col(col, region.a_half, region.side, &mut a);
            for (mi, mv) in moves.iter().enumerate() {
                let k = mv.plane;
                let dc = mv.alpha * a[2 * k + 1] - mv.beta * a[2 * k];
                b.copy_from_slice(&a);
                b[2 * k] += mv.alpha;
                b[2 * k + 1] += mv.beta;
                let nc = c + dc;
                let nid = region.col_of(&b).and_then(|ncol| region.node(ncol, nc).map(|nid| (ncol, nid)));
                match nid {
                    None => boundary_min = boundary_min.min(d),
                    Some((ncol, nid)) => {
                        if done[nid] {
                            continue;
                        }
                        let nd = d + self.step_weight(*mv, &a, c, &origin_weights, mi);
                        if nd < dist[nid] {
                            dist[nid] = nd;
                            heap.push(Reverse((nd.to_bits(), ncol as u32, nc as i32)));
                        }
                    }
                }
            }
        }
        Ok(Search { dist, done, settled, boundary_min })
    }

    /// Lattice distance between the nodes nearest to `p` and `q`. In four-direction
    /// mode `q` snaps to the nearest node of the parity class reachable from `p`.
    pub fn cc_distance(&self, p: &Point, q: &Point) -> Result<f64> {
        let region = self.box_region()?;
        let (pa, pc) = self.snap(p);
        let (qa, mut qc) = self.snap(q);
        if self.directions == Directions::Four && parity(&qa, qc) != parity(&pa, pc) {
            // four-direction moves preserve parity; take the other nearest level
            let level = q.t / (self.eps * self.eps);
            qc += if level >= qc as f64 { 1 } else { -1 };
        }
        let qcol = region.col_of(&qa).ok_or(Error::OutOfDomain { what: "target outside lattice box", value: q.t })?;
        let qid = region.node(qcol, qc).ok_or(Error::OutOfDomain { what: "target outside lattice box", value: q.t })?;
        let search = self.dijkstra(&region, (&pa, pc), f64::INFINITY, Some(qid))?;
        if !search.done[qid] {
            return Err(Error::Unreachable);
        }
        Ok(search.dist[qid])
    }

    /// Distances from `center` up to `r_max`. For left-invariant structures
    /// the search runs from the origin on the trimmed ball envelope.
    pub fn distance_field(&self, center: &Point, r_max: f64) -> Result<DistanceField> {
        if !(r_max > 0.0) {
            return Err(Error::NonPositive { what: "radius", value: r_max });
        }
        let (region, source) = if self.structure.is_left_invariant() {
            (self.ball_region(r_max)?, (vec![0i64; 2 * self.n()], 0i64))
        } else {
            (self.box_region()?, self.snap(center))
        };
        let weights = self.origin_weights();
        let uniform = self.structure.is_left_invariant() && weights.iter().all(|w| *w == weights[0]);
        let (store, boundary_min) = if uniform {
            self.bfs(&region, weights[0], r_max)?
        } else {
            let search = self.dijkstra(&region, (&source.0, source.1), r_max, None)?;
            (Store::Weighted { dist: search.dist, done: search.done, settled: search.settled }, search.boundary_min)
        };
        Ok(DistanceField {
            lattice: self.clone(),
            center: center.clone(),
            origin_based: self.structure.is_left_invariant(),
            r_max,
            boundary_min,
            region,
            store,
        })
    }

    fn origin_weights(&self) -> Vec<f64> {
        let g = self.structure.metric_at(&vec![0.0; 2 * self.n()], 0.0);
        self.moves()
            .iter()
            .map(|mv| {
                let mut v = DVector::zeros(2 * self.n());
                v[2 * mv.plane] = mv.alpha as f64;
                v[2 * mv.plane + 1] = mv.beta as f64;
                self.eps * v.dot(&(&g * &v)).sqrt()
            })
            .collect()
    }

    /// Breadth-first search from the origin when every move has weight
    /// `step`; distances are stored as hop counts.
    fn bfs(&self, region: &Region, step: f64, r_max: f64) -> Result<(Store, f64)> {
        let max_hops = (r_max * (1.0 + 1e-9) / step).floor();
        if max_hops >= (u16::MAX - 1) as f64 {
            return Err(Error::Degenerate("ball radius exceeds the hop counter"));
        }
        let max_hops = max_hops as u16;
        let moves = self.moves();
        let zero = vec![0i64; 2 * region.n];
        let src_col = region.col_of(&zero).ok_or(Error::OutOfDomain { what: "origin outside lattice box", value: 0.0 })?;
        let src = region.node(src_col, 0).ok_or(Error::OutOfDomain { what: "origin outside lattice box", value: 0.0 })?;
        let mut hops = vec![u16::MAX; region.total];
        hops[src] = 0;
        let mut level = vec![(src_col as u32, 0i32)];
        let mut cumulative = vec![1usize];
        let mut boundary_min = f64::INFINITY;
        let mut a = vec![0i64; 2 * region.n];
        let mut b = vec![0i64; 2 * region.n];
        for k in 0..=max_hops {
            let mut next = Vec::new();
            for &(col, c) in &level {
                decode_col(col as usize, region.a_half, region.side, &mut a);
                for mv in &moves {
                    let p = mv.plane;
                    b.copy_from_slice(&a);
                    b[2 * p] += mv.alpha;
                    b[2 * p + 1] += mv.beta;
                    let nc = c as i64 + mv.alpha * a[2 * p + 1] - mv.beta * a[2 * p];
                    match region.col_of(&b).and_then(|ncol| region.node(ncol, nc).map(|nid| (ncol, nid))) {
                        None => boundary_min = boundary_min.min(k as f64 * step),
                        Some((ncol, nid)) => {
                            if k < max_hops && hops[nid] == u16::MAX {
                                hops[nid] = k + 1;
                                next.push((ncol as u32, nc as i32));
                            }
                        }
                    }
                }
            }
            if k < max_hops {
                cumulative.push(cumulative[k as usize] + next.len());
            }
            level = next;
        }
        Ok((Store::Hops { hops, step, cumulative }, boundary_min))
    }

    /// `|B(center, r)|` as node volume × number of settled nodes within `r`.
    pub fn ball_volume(&self, center: &Point, r: f64) -> Result<f64> {
        self.distance_field(center, r)?.ball_volume(r)
    }

    /// `|B(x, 2r)| / |B(x, r)|`.
    pub fn doubling_ratio(&self, x: &Point, r: f64) -> Result<f64> {
        let field = self.distance_field(x, 2.0 * r)?;
        Ok(field.ball_volume(2.0 * r)? / field.ball_volume(r)?)
    }
}

/// `c − Σ a_{x,k} a_{y,k}` mod 2, invariant under the moves `±X_k, ±Y_k`.
fn parity(a: &[i64], c: i64) -> i64 {
    let twist: i64 = a.chunks(2).map(|p| p[0] * p[1]).sum();
    (c - twist).rem_euclid(2)
}

struct Search {
    dist: Vec<f64>,
    done: Vec<bool>,
    settled: Vec<f64>,
    boundary_min: f64,
}

fn min_eigen(s: &ContactStructure) -> f64 {
    match s.metric() {
        crate::contact::Metric::Identity => 1.0,
        crate::contact::Metric::Constant(m) => m.clone().symmetric_eigen().eigenvalues.min(),
        crate::contact::Metric::Field(_) => 1.0,
    }
}

#[derive(Debug, Clone)]
enum Store {
    Weighted {
        dist: Vec<f64>,
        done: Vec<bool>,
        /// Settled distances in nondecreasing order.
        settled: Vec<f64>,
    },
    Hops {
        hops: Vec<u16>,
        step: f64,
        /// `cumulative[k]`: number of nodes at most `k` hops away.
        cumulative: Vec<usize>,
    },
}

/// Settled lattice distances from one centre.
#[derive(Debug, Clone)]
pub struct DistanceField {
    lattice: HorizontalLattice,
    center: Point,
    origin_based: bool,
    r_max: f64,
    boundary_min: f64,
    region: Region,
    store: Store,
}

impl DistanceField {
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Number of settled nodes with distance `≤ r` (relative slack 1e−9 for
    /// distances that are exact multiples of the step).
    pub fn count_within(&self, r: f64) -> Result<usize> {
        if r > self.r_max * (1.0 + 1e-12) {
            return Err(Error::OutOfDomain { what: "radius beyond the computed field", value: r });
        }
        if r >= self.boundary_min {
            return Err(Error::BallClipped { radius: r });
        }
        let cut = r * (1.0 + 1e-9);
        Ok(match &self.store {
            Store::Weighted { settled, .. } => settled.partition_point(|d| *d <= cut),
            Store::Hops { step, cumulative, .. } => {
                let k = ((cut / step).floor() as usize).min(cumulative.len() - 1);
                cumulative[k]
            }
        })
    }

    fn settled_distance(&self, id: usize) -> Option<f64> {
        match &self.store {
            Store::Weighted { dist, done, .. } => done[id].then(|| dist[id]),
            Store::Hops { hops, step, .. } => (hops[id] != u16::MAX).then(|| hops[id] as f64 * step),
        }
    }

    pub fn ball_volume(&self, r: f64) -> Result<f64> {
        Ok(self.count_within(r)? as f64 * self.lattice.node_volume())
    }

    /// Distance from the centre to the node nearest `q`, if settled, else the
    /// smaller one of its settled vertical neighbours.
    pub fn distance_to(&self, q: &Point) -> Option<f64> {
        let local = if self.origin_based { group_mul(&group_inverse(&self.center), q) } else { q.clone() };
        let (a, c) = self.lattice.snap(&local);
        let col = self.region.col_of(&a)?;
        let settled = |c: i64| self.region.node(col, c).and_then(|id| self.settled_distance(id));
        // in four-direction mode half the nodes are unreachable by parity;
        // fall back to the vertical neighbours
        settled(c).or_else(|| match (settled(c - 1), settled(c + 1)) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        })
    }

    /// Settled nodes within `r` as points (translated back to the centre).
    pub fn nodes_within(&self, r: f64) -> Result<Vec<Point>> {
        self.count_within(r)?;
        let mut out = Vec::new();
        let mut a = vec![0i64; 2 * self.region.n];
        let cut = r * (1.0 + 1e-9);
        for col in 0..self.region.offsets.len() - 1 {
            decode_col(col, self.region.a_half, self.region.side, &mut a);
            let h = self.region.c_half[col];
            for c in -h..=h {
                let id = self.region.offsets[col] + (c + h) as usize;
                if self.settled_distance(id).is_some_and(|d| d <= cut) {
                    let p = self.lattice.node_point(&a, c);
                    out.push(if self.origin_based { group_mul(&self.center, &p) } else { p });
                }
            }
        }
        Ok(out)
    }
}

/// Log–log slope and prefactor of `r ↦ |B(r)|`.
pub fn ahlfors_fit(radii: &[f64], volumes: &[f64]) -> (f64, f64) {
    fit_power_law(radii, volumes)
}

/// Homogeneity constant: the smallest `(|B(x₀,r)|/|B(x,s)|)/(r/s)^Q` over
/// the given samples `(x, s)` with `x ∈ B(x₀, r)` and `r ≤ s`.
pub fn homogeneity_constant(lattice: &HorizontalLattice, x0: &Point, r: f64, samples: &[(Point, f64)]) -> Result<f64> {
    let q = lattice.structure().homogeneous_dimension() as i32;
    let field0 = lattice.distance_field(x0, r)?;
    let v0 = field0.ball_volume(r)?;
    let mut worst = f64::INFINITY;
    for (x, s) in samples {
        if *s < r {
            return Err(Error::HypothesisViolated(format!("s = {s} is smaller than r = {r}")));
        }
        match field0.distance_to(x) {
            Some(d) if d <= r => {}
            _ => return Err(Error::HypothesisViolated("sample centre outside B(x₀, r)".into())),
        }
        let vs = lattice.ball_volume(x, *s)?;
        worst = worst.min(v0 / vs / (r / s).powi(q));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(eps: f64, radius: f64, dirs: Directions) -> HorizontalLattice {
        HorizontalLattice::for_radius(ContactStructure::standard(1).unwrap(), eps, radius, dirs).unwrap()
    }

    #[test]
    fn distance_to_self_is_zero() {
        let l = lattice(0.1, 1.0, Directions::Four);
        let p = Point::new(vec![0.2, -0.3], 0.05).unwrap();
        assert_eq!(l.cc_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn horizontal_segment_is_exact() {
        let l = lattice(1.0 / 32.0, 1.0, Directions::Four);
        let d = l.cc_distance(&Point::origin(1), &Point::new(vec![0.5, 0.0], 0.0).unwrap()).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn four_direction_moves_preserve_parity() {
        let l = lattice(0.125, 1.0, Directions::Four);
        let field = l.distance_field(&Point::origin(1), 0.75).unwrap();
        for p in field.nodes_within(0.75).unwrap() {
            let (a, c) = l.snap(&p);
            assert_eq!((c - a[0] * a[1]).rem_euclid(2), 0);
        }
    }

    #[test]
    fn vertical_point_needs_a_loop() {
        // (0, t) is reached by a closed horizontal loop enclosing area t/2.
        let l = lattice(1.0 / 16.0, 1.0, Directions::Four);
        let t = 0.125;
        let d = l.cc_distance(&Point::origin(1), &Point::new(vec![0.0, 0.0], t).unwrap()).unwrap();
        // square loop of side √(t/2) has length 4√(t/2); the round loop √(2πt).
        assert!(d >= (2.0 * PI * t).sqrt() - 1e-12);
        assert!(d <= 4.0 * (t / 2.0).sqrt() + 1e-9);
    }

    #[test]
    fn ball_volume_monotone_and_clipping() {
        let l = HorizontalLattice::new(ContactStructure::standard(1).unwrap(), 0.1, 0.5, 0.5, Directions::Four).unwrap();
        let f = l.distance_field(&Point::origin(1), 1.0).unwrap();
        let mut prev = 0.0;
        for k in 1..=3 {
            let v = f.ball_volume(0.1 * k as f64).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(matches!(f.ball_volume(1.0), Err(Error::BallClipped { .. })));
    }
}
