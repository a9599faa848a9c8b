//! Volume and perimeter of voxel sets.
//!
//! A [`VoxelSet`] is a boolean occupancy array on a box grid with the `t`
//! axis varying fastest. Its perimeter is the horizontal total variation
//! of a mollified indicator: `φ = B³χ_E` with `B` the box filter of radius
//! `σ` cells along every axis (replicate boundary), and
//! `P(E) ≈ Σ |∇_h φ|_g √det g · cell`, where `∇_h φ` has frame components
//! `X_k φ = ∂_{x_k}φ + y_k ∂_t φ`, `Y_k φ = ∂_{y_k}φ − x_k ∂_t φ` taken by
//! central differences at interior voxel centres.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::balls::{DistanceField, HorizontalLattice};
use crate::contact::{group_mul, ContactStructure, Metric, Point};
use crate::error::{Error, Result};
use crate::numerics::stable_sum;
use crate::pansu::PansuSphere;

/// Default mollification radius in cells.
pub const DEFAULT_SIGMA: usize = 3;
/// Number of box-filter passes per axis.
pub const BOX_PASSES: usize = 3;
/// Step of the central differences used for horizontal derivatives of
/// callbacks.
pub const CALLBACK_STEP: f64 = 1e-6;

const MAGIC: &str = "ccperim-voxels 1";

/// Cell-centred box grid in `ℝ^{2n+1}`; axis order `(x_1, y_1, …, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    dims: Vec<usize>,
    lo: Vec<f64>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize, lo: Vec<f64>, spacing: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension(n));
        }
        let d = 2 * n + 1;
        for len in [lo.len(), spacing.len(), dims.len()] {
            if len != d {
                return Err(Error::DimensionMismatch { expected: d, got: len });
            }
        }
        if lo.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "grid corner" });
        }
        for &h in &spacing {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::NonPositive { what: "voxel spacing", value: h });
            }
        }
        if dims.iter().any(|&k| k == 0) {
            return Err(Error::NonPositive { what: "grid size", value: 0.0 });
        }
        dims.iter()
            .try_fold(1usize, |acc, &k| acc.checked_mul(k))
            .ok_or(Error::Degenerate("voxel grid too large"))?;
        Ok(Grid { n, dims, lo, spacing })
    }

    /// Uniform spacing `h` covering `[lo, hi]` with an even number of cells
    /// per axis, plus `margin` cells on every side.
    pub fn covering(n: usize, lo: &[f64], hi: &[f64], h: f64, margin: usize) -> Result<Self> {
        Grid::covering_with(n, lo, hi, &vec![h; 2 * n + 1], margin)
    }

    /// As [`Grid::covering`] with one spacing per axis.
    pub fn covering_with(n: usize, lo: &[f64], hi: &[f64], spacing: &[f64], margin: usize) -> Result<Self> {
        let d = 2 * n + 1;
        if lo.len() != d || hi.len() != d || spacing.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: lo.len().min(hi.len()).min(spacing.len()) });
        }
        let mut dims = Vec::with_capacity(d);
        let mut corner = Vec::with_capacity(d);
        for k in 0..d {
            let h = spacing[k];
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::NonPositive { what: "voxel spacing", value: h });
            }
            // even counts keep voxel centres off the mid-planes
            let cells = ((hi[k] - lo[k]) / (2.0 * h) - 1e-9).ceil().max(1.0) as usize * 2;
            let mid = 0.5 * (lo[k] + hi[k]);
            let total = cells + 2 * margin;
            dims.push(total);
            corner.push(mid - 0.5 * total as f64 * h);
        }
        Grid::new(n, corner, spacing.to_vec(), dims)
    }

    /// Grid around the metric ball `B(x, r)` of the standard structure with
    /// spacing `rη` in `z` and `r²η/4` in `t` (lattice balls are flat: the
    /// four-direction ball has height `±r²/8`), extended by `pad` (in units
    /// of `r`) on every side.
    pub fn for_ball(x: &Point, r: f64, eta: f64, pad: f64, sigma: usize) -> Result<Self> {
        if !(r > 0.0) || !(eta > 0.0) {
            return Err(Error::NonPositive { what: "ball radius and relative spacing", value: r.min(eta) });
        }
        let n = x.n();
        let zr = r * (1.0 + pad);
        // |t − t_x| ≤ r²/π on the ball, plus the twist |z_x||z − z_x|
        let tr = r * r * (1.0 / std::f64::consts::PI + pad) + x.radius() * zr;
        let mut lo: Vec<f64> = x.z.iter().map(|v| v - zr).collect();
        let mut hi: Vec<f64> = x.z.iter().map(|v| v + zr).collect();
        lo.push(x.t - tr);
        hi.push(x.t + tr);
        let mut spacing = vec![r * eta; 2 * n];
        spacing.push(r * r * eta / 4.0);
        Grid::covering_with(n, &lo, &hi, &spacing, mollifier_margin(sigma))
    }

    /// Uniform grid around the region `|z_k| ≤ z_half`, `|t| ≤ t_half`
    /// with room for the mollifier of radius `sigma`.
    pub fn around(n: usize, z_half: f64, t_half: f64, h: f64, sigma: usize) -> Result<Self> {
        let mut lo = vec![-z_half; 2 * n];
        lo.push(-t_half);
        let hi: Vec<f64> = lo.iter().map(|v| -v).collect();
        Grid::covering(n, &lo, &hi, h, mollifier_margin(sigma))
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for k in (0..self.dims.len() - 1).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            idx[k] = lin % self.dims[k];
            lin /= self.dims[k];
        }
        idx
    }

    pub fn center_of(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(k, &i)| self.lo[k] + (i as f64 + 0.5) * self.spacing[k]).collect()
    }

    /// Linear index of the voxel containing `coords`.
    pub fn locate(&self, coords: &[f64]) -> Option<usize> {
        let mut lin = 0usize;
        for k in 0..self.dims.len() {
            let f = ((coords[k] - self.lo[k]) / self.spacing[k]).floor();
            if !(f >= 0.0) || f >= self.dims[k] as f64 {
                return None;
            }
            lin = lin * self.dims[k] + f as usize;
        }
        Some(lin)
    }

    /// Image of the grid under the dilation `h_λ`.
    pub fn dilated(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::NonPositive { what: "dilation ratio", value: lambda });
        }
        let d = self.dims.len();
        let scale = |k: usize| if k + 1 == d { lambda * lambda } else { lambda };
        Ok(Grid {
            n: self.n,
            dims: self.dims.clone(),
            lo: (0..d).map(|k| self.lo[k] * scale(k)).collect(),
            spacing: (0..d).map(|k| self.spacing[k] * scale(k)).collect(),
        })
    }

    /// Fills one value per voxel from `f(centre)`, one `t`-line per task.
    fn fill<T: Send + Copy + Default>(&self, f: impl Fn(&[f64]) -> T + Sync) -> Vec<T> {
        let d = self.dims.len();
        let line = self.dims[d - 1];
        let mut out = vec![T::default(); self.len()];
        out.par_chunks_mut(line).enumerate().for_each(|(li, chunk)| {
            let mut idx = self.multi_index(li * line);
            let mut c = self.center_of(&idx);
            for (j, slot) in chunk.iter_mut().enumerate() {
                idx[d - 1] = j;
                c[d - 1] = self.lo[d - 1] + (j as f64 + 0.5) * self.spacing[d - 1];
                *slot = f(&c);
            }
        });
        out
    }
}

/// Cells needed between a set and the box boundary so that the mollified
/// indicator is flat there.
pub fn mollifier_margin(sigma: usize) -> usize {
    BOX_PASSES * sigma + 2
}

/// Boolean occupancy on a [`Grid`].
#[derive(Clone, PartialEq)]
pub struct VoxelSet {
    grid: Grid,
    occ: Vec<bool>,
}

impl fmt::Debug for VoxelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VoxelSet").field("grid", &self.grid).field("count", &self.count()).finish()
    }
}

impl VoxelSet {
    pub fn new(grid: Grid, occ: Vec<bool>) -> Result<Self> {
        if occ.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: occ.len() });
        }
        Ok(VoxelSet { grid, occ })
    }

    pub fn empty(grid: Grid) -> Self {
        let occ = vec![false; grid.len()];
        VoxelSet { grid, occ }
    }

    /// Voxels whose centre `(z, t)` satisfies `f`.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64], f64) -> bool + Sync) -> Self {
        let d = grid.dims.len();
        let occ = grid.fill(|c| f(&c[..d - 1], c[d - 1]));
        VoxelSet { grid, occ }
    }

    /// The region bounded by a Pansu sphere.
    pub fn pansu_ball(grid: Grid, sphere: &PansuSphere) -> Self {
        VoxelSet::from_fn(grid, |z, t| sphere.contains_coords(z, t))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn n(&self) -> usize {
        self.grid.n
    }
    pub fn occupancy(&self) -> &[bool] {
        &self.occ
    }
    pub fn count(&self) -> usize {
        self.occ.iter().filter(|b| **b).count()
    }
    pub fn is_empty(&self) -> bool {
        !self.occ.iter().any(|b| *b)
    }

    /// Lebesgue volume: cell volume × occupied count.
    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    /// Riemannian volume `∫_E √det g dL` of the structure `s`.
    pub fn riemannian_volume(&self, s: &ContactStructure) -> Result<f64> {
        check_structure(self, s)?;
        match s.metric() {
            Metric::Identity => Ok(self.volume()),
            Metric::Constant(_) => Ok(self.volume() * s.factor_at(&vec![0.0; 2 * s.n()], 0.0)?.determinant.sqrt()),
            Metric::Field(_) => {
                let d = self.grid.dims.len();
                let parts: Vec<f64> = (0..self.occ.len())
                    .into_par_iter()
                    .filter(|&i| self.occ[i])
                    .map(|i| {
                        let c = self.grid.center_of(&self.grid.multi_index(i));
                        s.factor_at(&c[..d - 1], c[d - 1]).map(|f| f.determinant.sqrt())
                    })
                    .collect::<Result<_>>()?;
                Ok(stable_sum(parts) * self.grid.cell_volume())
            }
        }
    }

    /// Whether the voxel containing `(z, t)` is occupied; `false` outside
    /// the box.
    pub fn contains(&self, z: &[f64], t: f64) -> bool {
        let mut c = z.to_vec();
        c.push(t);
        self.grid.locate(&c).is_some_and(|i| self.occ[i])
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.contains(&p.z, p.t)
    }

    /// Whether any occupied voxel lies within `cells` of the box boundary.
    pub fn touches_margin(&self, cells: usize) -> bool {
        let dims = &self.grid.dims;
        self.occ.iter().enumerate().any(|(i, &b)| {
            b && self.grid.multi_index(i).iter().zip(dims).any(|(&j, &m)| j < cells || j + cells >= m)
        })
    }

    fn zip_with(&self, other: &VoxelSet, op: impl Fn(bool, bool) -> bool) -> Result<VoxelSet> {
        if self.grid != other.grid {
            return Err(Error::Degenerate("set operations need identical grids"));
        }
        let occ = self.occ.iter().zip(&other.occ).map(|(a, b)| op(*a, *b)).collect();
        Ok(VoxelSet { grid: self.grid.clone(), occ })
    }

    pub fn union(&self, other: &VoxelSet) -> Result<VoxelSet> {
        self.zip_with(other, |a, b| a || b)
    }
    pub fn intersection(&self, other: &VoxelSet) -> Result<VoxelSet> {
        self.zip_with(other, |a, b| a && b)
    }
    pub fn difference(&self, other: &VoxelSet) -> Result<VoxelSet> {
        self.zip_with(other, |a, b| a && !b)
    }

    /// Complement within the box.
    pub fn complement(&self) -> VoxelSet {
        VoxelSet { grid: self.grid.clone(), occ: self.occ.iter().map(|b| !b).collect() }
    }

    /// `h_λ(E)` carried exactly: same occupancy on the dilated grid.
    pub fn dilate(&self, lambda: f64) -> Result<VoxelSet> {
        Ok(VoxelSet { grid: self.grid.dilated(lambda)?, occ: self.occ.clone() })
    }

    /// `h_λ(E)` sampled on another grid: a voxel of `grid` is occupied when
    /// `h_{1/λ}` of its centre falls in an occupied voxel of `E`.
    pub fn dilate_onto(&self, lambda: f64, grid: Grid) -> Result<VoxelSet> {
        if grid.n != self.grid.n {
            return Err(Error::DimensionMismatch { expected: self.grid.n, got: grid.n });
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::NonPositive { what: "dilation ratio", value: lambda });
        }
        let (a, b) = (1.0 / lambda, 1.0 / (lambda * lambda));
        let d = grid.dims.len();
        let occ = grid.fill(|c| {
            let back: Vec<f64> = (0..d).map(|k| if k + 1 == d { b * c[k] } else { a * c[k] }).collect();
            self.grid.locate(&back).is_some_and(|i| self.occ[i])
        });
        Ok(VoxelSet { grid, occ })
    }

    /// Left translate `p · E` sampled on `grid`.
    pub fn translate_onto(&self, p: &Point, grid: Grid) -> Result<VoxelSet> {
        if p.n() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: p.n() });
        }
        let inv = crate::contact::group_inverse(p);
        let d = grid.dims.len();
        let occ = grid.fill(|c| {
            let q = group_mul(&inv, &Point { z: c[..d - 1].to_vec(), t: c[d - 1] });
            self.contains_point(&q)
        });
        Ok(VoxelSet { grid, occ })
    }

    /// `φ = B³χ_E` with box radius `sigma`.
    pub fn mollify(&self, sigma: usize) -> Result<MollifiedIndicator> {
        if sigma < 2 {
            return Err(Error::MollifierTooSmall { sigma });
        }
        if self.grid.dims.iter().any(|&m| m < 3) {
            return Err(Error::Degenerate("voxel grid needs at least 3 cells per axis"));
        }
        let mut field: Vec<f64> = self.occ.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        for axis in 0..self.grid.dims.len() {
            for _ in 0..BOX_PASSES {
                box_pass(&mut field, &self.grid.dims, axis, sigma);
            }
        }
        Ok(MollifiedIndicator { grid: self.grid.clone(), sigma, field })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "n {}", self.grid.n)?;
        writeln!(out, "dims {}", self.grid.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "))?;
        writeln!(out, "lo {}", join(&self.grid.lo))?;
        writeln!(out, "spacing {}", join(&self.grid.spacing))?;
        writeln!(out, "rle")?;
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for &b in &self.occ {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        for chunk in runs.chunks(16) {
            writeln!(out, "{}", chunk.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<VoxelSet> {
        let mut lines = BufReader::new(input).lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Parse(format!("voxel file ends before {what}")))
        };
        if next("header")?.trim() != MAGIC {
            return Err(Error::Parse(format!("voxel file must start with '{MAGIC}'")));
        }
        fn field<T: std::str::FromStr>(line: &str, key: &str) -> Result<Vec<T>> {
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse(format!("expected '{key}' line, got '{line}'")));
            }
            parts.map(|p| p.parse::<T>().map_err(|_| Error::Parse(format!("bad {key} entry '{p}'")))).collect()
        }
        let n: Vec<usize> = field(&next("n")?, "n")?;
        if n.len() != 1 {
            return Err(Error::Parse("'n' line needs exactly one value".into()));
        }
        let dims: Vec<usize> = field(&next("dims")?, "dims")?;
        let lo: Vec<f64> = field(&next("lo")?, "lo")?;
        let spacing: Vec<f64> = field(&next("spacing")?, "spacing")?;
        if next("rle")?.trim() != "rle" {
            return Err(Error::Parse("expected 'rle' line".into()));
        }
        let grid = Grid::new(n[0], lo, spacing, dims)?;
        let mut occ = Vec::with_capacity(grid.len());
        let mut current = false;
        for line in lines {
            for tok in line?.split_whitespace() {
                let run: usize = tok.parse().map_err(|_| Error::Parse(format!("bad run length '{tok}'")))?;
                if occ.len() + run > grid.len() {
                    return Err(Error::Parse("run lengths exceed the grid size".into()));
                }
                occ.extend(std::iter::repeat(current).take(run));
                current = !current;
            }
        }
        if occ.len() != grid.len() {
            return Err(Error::Parse(format!("run lengths cover {} of {} voxels", occ.len(), grid.len())));
        }
        Ok(VoxelSet { grid, occ })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VoxelSet> {
        VoxelSet::read_from(std::fs::File::open(path)?)
    }
}

/// One box-filter pass of radius `sigma` along `axis`, replicate boundary.
fn box_pass(field: &mut [f64], dims: &[usize], axis: usize, sigma: usize) {
    let len = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let w = 1.0 / (2 * sigma + 1) as f64;
    let s = sigma as isize;
    field.par_chunks_mut(len * stride).for_each(|blk| {
        let src = blk.to_vec();
        let row = |i: isize| {
            let j = i.clamp(0, len as isize - 1) as usize;
            &src[j * stride..(j + 1) * stride]
        };
        let mut acc = vec![0.0; stride];
        for i in -s..=s {
            for (a, v) in acc.iter_mut().zip(row(i)) {
                *a += v;
            }
        }
        for i in 0..len {
            for (o, a) in blk[i * stride..(i + 1) * stride].iter_mut().zip(&acc) {
                *o = a * w;
            }
            let (add, sub) = (row(i as isize + s + 1), row(i as isize - s));
            for k in 0..stride {
                acc[k] += add[k] - sub[k];
            }
        }
    });
}

fn check_structure(e: &VoxelSet, s: &ContactStructure) -> Result<()> {
    if s.n() != e.n() {
        return Err(Error::DimensionMismatch { expected: e.n(), got: s.n() });
    }
    Ok(())
}

/// Smoothed indicator `φ ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct MollifiedIndicator {
    grid: Grid,
    sigma: usize,
    field: Vec<f64>,
}

enum Norm {
    Euclidean,
    Constant { inverse: DMatrix<f64>, density: f64 },
    Field,
}

impl MollifiedIndicator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn sigma(&self) -> usize {
        self.sigma
    }
    pub fn values(&self) -> &[f64] {
        &self.field
    }

    /// `Σ ψ |∇_h φ|_g √det g · cell` over interior voxels, with optional
    /// weight `ψ` on the same grid.
    pub fn total_variation(&self, s: &ContactStructure, window: Option<&MollifiedIndicator>) -> Result<f64> {
        if s.n() != self.grid.n {
            return Err(Error::DimensionMismatch { expected: self.grid.n, got: s.n() });
        }
        if let Some(w) = window {
            if w.grid != self.grid {
                return Err(Error::Degenerate("window lives on a different grid"));
            }
        }
        let norm = match s.metric() {
            Metric::Identity => Norm::Euclidean,
            Metric::Constant(_) => {
                let f = s.factor_at(&vec![0.0; 2 * s.n()], 0.0)?;
                Norm::Constant { inverse: f.inverse.clone(), density: f.determinant.sqrt() }
            }
            Metric::Field(_) => Norm::Field,
        };
        let dims = &self.grid.dims;
        let d = dims.len();
        let strides = self.grid.strides();
        let inv2h: Vec<f64> = self.grid.spacing.iter().map(|h| 0.5 / h).collect();
        let slabs: Vec<f64> = (1..dims[0] - 1)
            .into_par_iter()
            .map(|i0| -> Result<f64> {
                let mut idx = vec![1usize; d];
                idx[0] = i0;
                let mut grad = vec![0.0; d];
                let mut zeta = vec![0.0; d - 1];
                let mut sum = 0.0;
                loop {
                    let base: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
                    let mut c = self.grid.center_of(&idx);
                    for j in 1..dims[d - 1] - 1 {
                        let lin = base + j - 1;
                        let mut flat = true;
                        for k in 0..d {
                            let g = self.field[lin + strides[k]] - self.field[lin - strides[k]];
                            flat &= g == 0.0;
                            grad[k] = g * inv2h[k];
                        }
                        if flat {
                            continue;
                        }
                        let weight = window.map_or(1.0, |w| w.field[lin]);
                        if weight == 0.0 {
                            continue;
                        }
                        c[d - 1] = self.grid.lo[d - 1] + (j as f64 + 0.5) * self.grid.spacing[d - 1];
                        let dt = grad[d - 1];
                        for k in 0..(d - 1) / 2 {
                            let (x, y) = (c[2 * k], c[2 * k + 1]);
                            zeta[2 * k] = grad[2 * k] + y * dt;
                            zeta[2 * k + 1] = grad[2 * k + 1] - x * dt;
                        }
                        let value = match &norm {
                            Norm::Euclidean => zeta.iter().map(|v| v * v).sum::<f64>().sqrt(),
                            Norm::Constant { inverse, density } => quad(inverse, &zeta).sqrt() * density,
                            Norm::Field => {
                                let f = s.factor_at(&c[..d - 1], c[d - 1])?;
                                quad(&f.inverse, &zeta).sqrt() * f.determinant.sqrt()
                            }
                        };
                        sum += weight * value;
                    }
                    // advance the odometer over axes 1..d-1 (t handled inline)
                    let mut k = d - 2;
                    loop {
                        if k == 0 {
                            return Ok(sum);
                        }
                        idx[k] += 1;
                        if idx[k] < dims[k] - 1 {
                            break;
                        }
                        idx[k] = 1;
                        k -= 1;
                    }
                }
            })
            .collect::<Result<_>>()?;
        Ok(stable_sum(slabs) * self.grid.cell_volume())
    }
}

fn quad(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            acc += v[i] * m[(i, j)] * v[j];
        }
    }
    acc.max(0.0)
}

/// `P(E)` from the mollified indicator of radius `sigma`.
pub fn bv_perimeter(e: &VoxelSet, sigma: usize, s: &ContactStructure) -> Result<f64> {
    check_structure(e, s)?;
    e.mollify(sigma)?.total_variation(s, None)
}

/// The ball `B(x, r)` of a distance field rasterized on `grid`.
pub fn ball_on_grid(field: &DistanceField, r: f64, grid: Grid) -> Result<VoxelSet> {
    field.count_within(r)?;
    let cut = r * (1.0 + 1e-9);
    let ball = VoxelSet::from_fn(grid, |z, t| {
        field.distance_to(&Point { z: z.to_vec(), t }).is_some_and(|v| v <= cut)
    });
    if ball.is_empty() {
        return Err(Error::Degenerate("ball contains no voxel centre"));
    }
    if ball.touches_margin(1) {
        return Err(Error::BallClipped { radius: r });
    }
    Ok(ball)
}

/// Parts of the relative isoperimetric quotient.
#[derive(Debug, Clone, Copy)]
pub struct RelativeRatio {
    pub ratio: f64,
    pub perimeter: f64,
    pub inside: f64,
    pub outside: f64,
}

/// `P(E, B(x,r)) / min(|E∩B|, |Eᶜ∩B|)^q`, the localized perimeter weighted
/// by the mollified ball indicator.
pub fn relative_isoperimetric_ratio(
    e: &VoxelSet,
    x: &Point,
    r: f64,
    lattice: &HorizontalLattice,
    sigma: usize,
) -> Result<RelativeRatio> {
    let s = lattice.structure();
    check_structure(e, s)?;
    let field = lattice.distance_field(x, r)?;
    let ball = ball_on_grid(&field, r, e.grid.clone())?;
    let inside = e.intersection(&ball)?.riemannian_volume(s)?;
    let outside = ball.difference(e)?.riemannian_volume(s)?;
    let m = inside.min(outside);
    if m <= 0.0 {
        return Err(Error::Degenerate("min(|E∩B|, |Eᶜ∩B|) is zero"));
    }
    let window = ball.mollify(sigma)?;
    let perimeter = e.mollify(sigma)?.total_variation(s, Some(&window))?;
    Ok(RelativeRatio { ratio: perimeter / m.powf(s.isoperimetric_exponent()), perimeter, inside, outside })
}

/// `P(E)/|E|^q`.
pub fn small_volume_ratio(e: &VoxelSet, sigma: usize, s: &ContactStructure) -> Result<f64> {
    let v = e.riemannian_volume(s)?;
    if v <= 0.0 {
        return Err(Error::Degenerate("set has zero volume"));
    }
    Ok(bv_perimeter(e, sigma, s)? / v.powf(s.isoperimetric_exponent()))
}

/// Result of [`lr_ratio`].
#[derive(Debug, Clone)]
pub struct LrRatio {
    /// `m P(E)^Q / |E|^Q`.
    pub ratio: f64,
    /// Largest `|E ∩ B(x, r₀)|` found by the scan.
    pub max_local_volume: f64,
    pub ball_volume: f64,
    pub centers_scanned: usize,
}

/// `m P(E)^Q / |E|^Q` after checking `|E ∩ B(x, r₀)| < m` on the voxel
/// centres of `E`'s grid taken every `stride` cells (left-invariant
/// structures only).
pub fn lr_ratio(
    e: &VoxelSet,
    m: f64,
    r0: f64,
    lattice: &HorizontalLattice,
    stride: usize,
    sigma: usize,
) -> Result<LrRatio> {
    let s = lattice.structure();
    check_structure(e, s)?;
    if !s.is_left_invariant() {
        return Err(Error::HypothesisViolated("ball scan needs a left-invariant metric".into()));
    }
    if !(m > 0.0) {
        return Err(Error::NonPositive { what: "m", value: m });
    }
    let stride = stride.max(1);
    let field = lattice.distance_field(&Point::origin(e.n()), r0)?;
    let nodes = field.nodes_within(r0)?;
    let dv = lattice.node_volume() * s.factor_at(&vec![0.0; 2 * s.n()], 0.0)?.determinant.sqrt();
    let ball_volume = nodes.len() as f64 * dv;
    if m >= ball_volume / 2.0 {
        return Err(Error::HypothesisViolated(format!("m = {m} is not below |B(x, r₀)|/2 = {}", ball_volume / 2.0)));
    }
    let grid = &e.grid;
    let centers: Vec<usize> = (0..grid.len())
        .filter(|&i| e.occ[i] && grid.multi_index(i).iter().all(|j| j % stride == 0))
        .collect();
    let d = grid.dims.len();
    let local: Vec<(f64, usize)> = centers
        .par_iter()
        .map(|&i| {
            let c = grid.center_of(&grid.multi_index(i));
            let x = Point { z: c[..d - 1].to_vec(), t: c[d - 1] };
            let hits = nodes.iter().filter(|b| e.contains_point(&group_mul(&x, b))).count();
            (hits as f64 * dv, i)
        })
        .collect();
    let (max_local_volume, at) = local.iter().fold((0.0, 0usize), |acc, v| if v.0 > acc.0 { *v } else { acc });
    if max_local_volume >= m {
        let c = grid.center_of(&grid.multi_index(at));
        return Err(Error::HypothesisViolated(format!("|E∩B(x,r₀)| = {max_local_volume:.6e} ≥ m = {m:.6e} at x = {c:?}")));
    }
    let q = s.homogeneous_dimension() as i32;
    let p = bv_perimeter(e, sigma, s)?;
    let v = e.riemannian_volume(s)?;
    Ok(LrRatio { ratio: m * p.powi(q) / v.powi(q), max_local_volume, ball_volume, centers_scanned: centers.len() })
}

/// Perimeters of metric balls of prescribed volume, an upper bound for the
/// isoperimetric profile.
///
/// The unit ball is computed once on the lattice and rasterized on a grid
/// of `cells` voxels per unit radius. The ball of volume `v` has radius
/// `ρ = (v/|B(0,1)|)^{1/Q}`; it is the same occupancy carried by `h_ρ` to
/// the dilated grid, so the rasterization commutes with dilations.
#[derive(Debug, Clone)]
pub struct UpperProfile {
    structure: ContactStructure,
    unit_ball: VoxelSet,
    unit_volume: f64,
    sigma: usize,
}

impl UpperProfile {
    pub fn new(structure: ContactStructure, eps: f64, cells: usize, sigma: usize) -> Result<Self> {
        if !structure.is_standard() {
            return Err(Error::NonStandardMetric);
        }
        if cells < 4 {
            return Err(Error::NonPositive { what: "cells per radius (at least 4)", value: cells as f64 });
        }
        let lattice = HorizontalLattice::for_radius(structure.clone(), eps, 1.0, Default::default())?;
        let unit = lattice.distance_field(&Point::origin(structure.n()), 1.0)?;
        let unit_volume = unit.ball_volume(1.0)?;
        let h = 1.0 / cells as f64;
        let grid = Grid::around(structure.n(), 1.0 + h, 1.0 / std::f64::consts::PI + 2.0 * h, h, sigma)?;
        let unit_ball = ball_on_grid(&unit, 1.0, grid)?;
        Ok(UpperProfile { structure, unit_ball, unit_volume, sigma })
    }

    pub fn unit_volume(&self) -> f64 {
        self.unit_volume
    }

    /// Radius of the ball of volume `v`.
    pub fn radius_for(&self, v: f64) -> f64 {
        (v / self.unit_volume).powf(1.0 / self.structure.homogeneous_dimension() as f64)
    }

    /// `P(B(0, ρ))` with `|B(0, ρ)| = v`.
    pub fn perimeter(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive { what: "volume", value: v });
        }
        let ball = self.unit_ball.dilate(self.radius_for(v))?;
        bv_perimeter(&ball, self.sigma, &self.structure)
    }
}

/// `P(ball of volume v)` for the standard structure; see [`UpperProfile`].
pub fn profile_upper(v: f64, upper: &UpperProfile) -> Result<f64> {
    upper.perimeter(v)
}

/// `∫_B |u − u_B| / (r ∫_B |∇_h u|)` by quadrature on the lattice nodes of
/// `B(x, r)`; `0` when `∫_B |∇_h u| = 0`.
pub fn poincare_ratio(u: &(dyn Fn(&Point) -> f64 + Sync), x: &Point, r: f64, lattice: &HorizontalLattice) -> Result<f64> {
    let s = lattice.structure();
    if x.n() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), got: x.n() });
    }
    let nodes = lattice.distance_field(x, r)?.nodes_within(r)?;
    let samples: Vec<(f64, f64, f64)> = nodes
        .par_iter()
        .map(|p| -> Result<(f64, f64, f64)> {
            let f = s.factor_at(&p.z, p.t)?;
            let zeta = horizontal_derivatives(u, p);
            Ok((f.determinant.sqrt(), u(p), quad(&f.inverse, &zeta).sqrt()))
        })
        .collect::<Result<_>>()?;
    let mass = stable_sum(samples.iter().map(|s| s.0));
    let mean = stable_sum(samples.iter().map(|s| s.0 * s.1)) / mass;
    let grad = stable_sum(samples.iter().map(|s| s.0 * s.2));
    if grad == 0.0 {
        return Ok(0.0);
    }
    let dev = stable_sum(samples.iter().map(|s| s.0 * (s.1 - mean).abs()));
    Ok(dev / (r * grad))
}

/// Frame derivatives `(X_1 u, Y_1 u, …)` by central differences along the
/// exact flows.
pub fn horizontal_derivatives(u: &(dyn Fn(&Point) -> f64 + Sync), p: &Point) -> Vec<f64> {
    let h = CALLBACK_STEP;
    let mut out = Vec::with_capacity(p.z.len());
    for k in 0..p.n() {
        let (x, y) = (p.z[2 * k], p.z[2 * k + 1]);
        let shift = |dx: f64, dy: f64| {
            let mut q = p.clone();
            q.z[2 * k] += dx;
            q.z[2 * k + 1] += dy;
            // X: t += y s along the flow, Y: t −= x s
            q.t += y * dx - x * dy;
            q
        };
        out.push((u(&shift(h, 0.0)) - u(&shift(-h, 0.0))) / (2.0 * h));
        out.push((u(&shift(0.0, h)) - u(&shift(0.0, -h))) / (2.0 * h));
    }
    out
}

/// Seeded family of test sets inside `grid`: unions of one to three
/// translated Pansu balls and coordinate boxes.
pub fn random_family(seed: u64, count: usize, grid: &Grid) -> Vec<VoxelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dims.len();
    let margin = mollifier_margin(DEFAULT_SIGMA) as f64;
    let lo: Vec<f64> = (0..d).map(|k| grid.lo[k] + margin * grid.spacing[k]).collect();
    let hi: Vec<f64> = (0..d).map(|k| grid.lo[k] + (grid.dims[k] as f64 - margin) * grid.spacing[k]).collect();
    (0..count)
        .map(|_| {
            let pieces = rng.gen_range(1..=3);
            let shapes: Vec<Shape> = (0..pieces).map(|_| Shape::random(&mut rng, &lo, &hi)).collect();
            VoxelSet::from_fn(grid.clone(), |z, t| shapes.iter().any(|s| s.contains(z, t)))
        })
        .collect()
}

enum Shape {
    Ball(PansuSphere),
    Block { lo: Vec<f64>, hi: Vec<f64> },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Shape {
        let d = lo.len();
        let half: Vec<f64> = (0..d).map(|k| 0.5 * (hi[k] - lo[k])).collect();
        let mid: Vec<f64> = (0..d).map(|k| 0.5 * (hi[k] + lo[k])).collect();
        if rng.gen_bool(0.5) {
            // radius between 15% and 45% of the horizontal half-width
            let zr = half[..d - 1].iter().cloned().fold(f64::INFINITY, f64::min);
            let radius = zr * rng.gen_range(0.15..0.45);
            let lambda = 1.0 / radius;
            let pole = std::f64::consts::PI / (4.0 * lambda * lambda);
            let mut z = Vec::with_capacity(d - 1);
            for k in 0..d - 1 {
                z.push(mid[k] + rng.gen_range(-1.0..1.0) * (half[k] - radius));
            }
            // translation mixes t with z; keep the shifted poles in range
            let spread = z.iter().map(|v| v.abs()).sum::<f64>() * radius;
            let room = (half[d - 1] - pole - spread).max(0.0);
            let t = mid[d - 1] + rng.gen_range(-1.0..=1.0) * room;
            Shape::Ball(PansuSphere::new(lambda, Point { z, t }).expect("positive curvature"))
        } else {
            let mut blo = Vec::with_capacity(d);
            let mut bhi = Vec::with_capacity(d);
            for k in 0..d {
                let w = half[k] * rng.gen_range(0.2..0.8);
                let c = mid[k] + rng.gen_range(-1.0..1.0) * (half[k] - w);
                blo.push(c - w);
                bhi.push(c + w);
            }
            Shape::Block { lo: blo, hi: bhi }
        }
    }

    fn contains(&self, z: &[f64], t: f64) -> bool {
        match self {
            Shape::Ball(s) => s.contains_coords(z, t),
            Shape::Block { lo, hi } => {
                let d = lo.len();
                z.iter().enumerate().all(|(k, v)| *v >= lo[k] && *v <= hi[k]) && t >= lo[d - 1] && t <= hi[d - 1]
            }
        }
    }
}

/// The fixed family of ten test functions for the Poincaré quotient.
pub fn poincare_family() -> Vec<(&'static str, fn(&Point) -> f64)> {
    vec![
        ("x", |p| p.z[0]),
        ("y", |p| p.z[1]),
        ("t", |p| p.t),
        ("x^2+y", |p| p.z[0] * p.z[0] + p.z[1]),
        ("sin3x*cos2y", |p| (3.0 * p.z[0]).sin() * (2.0 * p.z[1]).cos()),
        ("t+xy", |p| p.t + p.z[0] * p.z[1]),
        ("exp(x)-y^2", |p| p.z[0].exp() - p.z[1] * p.z[1]),
        ("|z|^2", |p| p.z.iter().map(|v| v * v).sum()),
        ("x*t", |p| p.z[0] * p.t),
        ("cos2t+x", |p| (2.0 * p.t).cos() + p.z[0]),
    ]
}
