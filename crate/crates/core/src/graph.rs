//! Hypersurfaces given as graphs `t = u(z)` over a domain `Ω ⊂ ℝ^{2n}`:
//! unit-normal components, sub-Riemannian area, mean curvature and the
//! first-variation machinery.
//!
//! With `w = ∇u + F` and `b = g⁻¹` the area density is
//! `⟨w, b w⟩^{1/2} · det(g + w wᵀ)^{1/2} / (1 + ⟨w, b w⟩)^{1/2}`.
//! Mean curvature is normalized so that the Pansu sphere `S_λ` has
//! curvature `λ`: `H = −div(w/|w|) / 2n` for the standard metric. With that
//! normalization the first variation along `v T` reads
//! `dA/ds = −2n ∫ H v g(T, N) Jac dL`.

use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::contact::{rotation_field, ContactStructure};
use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, integrate, stable_sum};

/// Guard on `|∇u + F|` below which a point counts as singular.
pub const SINGULAR_EPS: f64 = 1e-6;

/// Step in `s` for finite differences of `s ↦ A(u + s v)`.
pub const VARIATION_STEP: f64 = 1e-4;

/// Step for differentiating analytic callbacks when a closed form is missing.
pub const ANALYTIC_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Rect { lo: Vec<f64>, hi: Vec<f64> },
    Disk { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn rect(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() % 2 != 0 {
            return Err(Error::DimensionMismatch { expected: lo.len().max(2), got: hi.len() });
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(b - a > 0.0) {
                return Err(Error::NonPositive { what: "rectangle side", value: b - a });
            }
        }
        Ok(Domain::Rect { lo, hi })
    }

    pub fn disk(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.len() % 2 != 0 {
            return Err(Error::DimensionMismatch { expected: 2, got: center.len() });
        }
        if !(radius > 0.0) {
            return Err(Error::NonPositive { what: "disk radius", value: radius });
        }
        Ok(Domain::Disk { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Rect { lo, .. } => lo.len(),
            Domain::Disk { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        match self {
            Domain::Rect { lo, hi } => z.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= *a && *v <= *b),
            Domain::Disk { center, radius } => dist(z, center) <= *radius,
        }
    }

    /// Closest point of the domain, used to give off-domain grid nodes a value.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Domain::Rect { lo, hi } => z.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect(),
            Domain::Disk { center, radius } => {
                let d = dist(z, center);
                if d <= *radius {
                    z.to_vec()
                } else {
                    z.iter().zip(center).map(|(v, c)| c + (v - c) * radius / d).collect()
                }
            }
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Analytic description of a height function. Only `value` is mandatory.
pub trait HeightFunction: Send + Sync {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, _z: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn hessian(&self, _z: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> HeightFunction for F {
    fn value(&self, z: &[f64]) -> f64 {
        self(z)
    }
}

/// `−u` for a height function `u`, i.e. the reflection `t ↦ −t`.
pub struct Reflected(pub Arc<dyn HeightFunction>);

impl HeightFunction for Reflected {
    fn value(&self, z: &[f64]) -> f64 {
        -self.0.value(z)
    }
    fn gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        self.0.gradient(z).map(|g| g.into_iter().map(|v| -v).collect())
    }
    fn hessian(&self, z: &[f64]) -> Option<DMatrix<f64>> {
        self.0.hessian(z).map(|h| -h)
    }
}

/// Where to evaluate a pointwise quantity.
#[derive(Debug, Clone, Copy)]
pub enum At<'a> {
    /// Grid node by multi-index.
    Node(&'a [usize]),
    /// Arbitrary point; needs analytic callbacks.
    Point(&'a [f64]),
}

/// A quadrature cell: evaluation point, weight and the lower corner of
/// the grid cell that contains it.
#[derive(Debug, Clone)]
pub struct Cell {
    pub corner: usize,
    pub point: Vec<f64>,
    pub weight: f64,
}

/// The graph `t = u(z)` over `Ω`, sampled on a uniform grid of spacing `h`.
#[derive(Clone)]
pub struct GraphFunction {
    domain: Domain,
    h: f64,
    origin: Vec<f64>,
    dims: Vec<usize>,
    values: Vec<f64>,
    analytic: Option<Arc<dyn HeightFunction>>,
    cells: Arc<OnceLock<Vec<Cell>>>,
}

impl std::fmt::Debug for GraphFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphFunction")
            .field("domain", &self.domain)
            .field("h", &self.h)
            .field("dims", &self.dims)
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

fn grid_layout(domain: &Domain, h: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::NonPositive { what: "grid spacing", value: h });
    }
    match domain {
        Domain::Rect { lo, hi } => {
            let mut dims = Vec::with_capacity(lo.len());
            for (a, b) in lo.iter().zip(hi) {
                let cells = (b - a) / h;
                let m = cells.round();
                if (cells - m).abs() > 1e-9 * cells.max(1.0) || m < 2.0 {
                    return Err(Error::OutOfDomain { what: "rectangle side / grid spacing (integer ≥ 2 required)", value: cells });
                }
                dims.push(m as usize + 1);
            }
            Ok((lo.clone(), dims))
        }
        Domain::Disk { center, radius } => {
            let m = (radius / h - 1e-9).ceil().max(2.0) as usize;
            let origin = center.iter().map(|c| c - m as f64 * h).collect();
            Ok((origin, vec![2 * m + 1; center.len()]))
        }
    }
}

impl GraphFunction {
    /// Samples an analytic height function and keeps its callbacks.
    pub fn from_analytic(domain: Domain, h: f64, f: Arc<dyn HeightFunction>) -> Result<Self> {
        let mut g = Self::sample(domain, h, f.as_ref())?;
        if let Some(grad) = f.gradient(&g.node_point(0)) {
            if grad.len() != g.dim() {
                return Err(Error::DimensionMismatch { expected: g.dim(), got: grad.len() });
            }
        }
        g.analytic = Some(f);
        Ok(g)
    }

    /// Samples `f` on the grid and forgets it: derivatives come from
    /// finite differences.
    pub fn sample(domain: Domain, h: f64, f: &dyn HeightFunction) -> Result<Self> {
        let (origin, dims) = grid_layout(&domain, h)?;
        let total: usize = dims.iter().product();
        let mut g = GraphFunction {
            domain,
            h,
            origin,
            dims,
            values: Vec::new(),
            analytic: None,
            cells: Arc::new(OnceLock::new()),
        };
        let values: Vec<f64> =
            (0..total).into_par_iter().map(|i| f.value(&g.domain.project(&g.node_point(i)))).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "graph values" });
        }
        g.values = values;
        Ok(g)
    }

    pub fn from_values(domain: Domain, h: f64, values: Vec<f64>) -> Result<Self> {
        let (origin, dims) = grid_layout(&domain, h)?;
        let total: usize = dims.iter().product();
        if values.len() != total {
            return Err(Error::DimensionMismatch { expected: total, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "graph values" });
        }
        Ok(GraphFunction { domain, h, origin, dims, values, analytic: None, cells: Arc::new(OnceLock::new()) })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn dim(&self) -> usize {
        self.dims.len()
    }
    pub fn n(&self) -> usize {
        self.dims.len() / 2
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn analytic(&self) -> Option<&Arc<dyn HeightFunction>> {
        self.analytic.as_ref()
    }
    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// Drops the analytic callbacks, keeping the sampled values.
    pub fn without_analytic(&self) -> Self {
        let mut g = self.clone();
        g.analytic = None;
        g
    }

    /// Same grid, values `u + s v`.
    pub fn perturbed(&self, v: &VariationField, s: f64) -> Self {
        let mut g = self.without_analytic();
        for (a, b) in g.values.iter_mut().zip(&v.values) {
            *a += s * b;
        }
        g
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (i, d)| acc * d + i)
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            idx[k] = lin % self.dims[k];
            lin /= self.dims[k];
        }
        idx
    }

    pub fn node_point(&self, lin: usize) -> Vec<f64> {
        self.multi_index(lin).iter().zip(&self.origin).map(|(i, o)| o + *i as f64 * self.h).collect()
    }

    pub fn node_coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.origin).map(|(i, o)| o + *i as f64 * self.h).collect()
    }

    /// Multi-index of the node nearest to `z`, if `z` is a node up to 1e−9·h.
    pub fn node_at(&self, z: &[f64]) -> Option<Vec<usize>> {
        let mut idx = Vec::with_capacity(z.len());
        for (k, v) in z.iter().enumerate() {
            let f = (v - self.origin[k]) / self.h;
            let r = f.round();
            if (f - r).abs() > 1e-9 || r < 0.0 || r as usize >= self.dims[k] {
                return None;
            }
            idx.push(r as usize);
        }
        Some(idx)
    }

    /// Value at a node or, with callbacks, at any point.
    pub fn value(&self, at: At) -> Result<f64> {
        match at {
            At::Node(idx) => Ok(self.values[self.linear_index(idx)]),
            At::Point(z) => match &self.analytic {
                Some(f) => Ok(f.value(z)),
                None => self.node_at(z).map(|i| self.values[self.linear_index(&i)]).ok_or(Error::NotANode),
            },
        }
    }

    /// Whether the node has `margin` neighbours on each side in every axis
    /// and lies in the closed domain.
    pub fn is_interior(&self, idx: &[usize], margin: usize) -> bool {
        idx.iter().zip(&self.dims).all(|(i, d)| *i >= margin && i + margin < *d)
            && self.domain.contains(&self.node_coords(idx))
    }

    fn analytic_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let f = self.analytic.as_ref()?;
        if let Some(g) = f.gradient(z) {
            return Some(g);
        }
        let d = ANALYTIC_FD_STEP;
        Some(
            (0..z.len())
                .map(|k| {
                    let (mut p, mut m) = (z.to_vec(), z.to_vec());
                    p[k] += d;
                    m[k] -= d;
                    (f.value(&p) - f.value(&m)) / (2.0 * d)
                })
                .collect(),
        )
    }

    fn fd_gradient(&self, idx: &[usize]) -> Result<Vec<f64>> {
        if !self.is_interior(idx, 1) {
            return Err(Error::BoundaryNode);
        }
        let lin = self.linear_index(idx);
        let mut stride = 1;
        let mut strides = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            strides[k] = stride;
            stride *= self.dims[k];
        }
        Ok((0..self.dims.len())
            .map(|k| (self.values[lin + strides[k]] - self.values[lin - strides[k]]) / (2.0 * self.h))
            .collect())
    }

    fn strides(&self) -> Vec<usize> {
        let mut stride = 1;
        let mut strides = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            strides[k] = stride;
            stride *= self.dims[k];
        }
        strides
    }

    /// `∇u` at a node or point: analytic when callbacks exist, otherwise
    /// central differences with step `h`.
    pub fn gradient(&self, at: At) -> Result<Vec<f64>> {
        match at {
            At::Node(idx) => match self.analytic_gradient(&self.node_coords(idx)) {
                Some(g) => Ok(g),
                None => self.fd_gradient(idx),
            },
            At::Point(z) => match self.analytic_gradient(z) {
                Some(g) => Ok(g),
                None => self.fd_gradient(&self.node_at(z).ok_or(Error::NotANode)?),
            },
        }
    }

    /// Hessian of `u`: analytic, differences of the analytic gradient, or
    /// second central differences on the grid.
    pub fn hessian(&self, at: At) -> Result<DMatrix<f64>> {
        let z = match at {
            At::Node(idx) => self.node_coords(idx),
            At::Point(z) => z.to_vec(),
        };
        if let Some(f) = &self.analytic {
            if let Some(hs) = f.hessian(&z) {
                return Ok(hs);
            }
            let d = ANALYTIC_FD_STEP;
            let m = z.len();
            let mut hs = DMatrix::zeros(m, m);
            for k in 0..m {
                let (mut p, mut q) = (z.clone(), z.clone());
                p[k] += d;
                q[k] -= d;
                let gp = self.analytic_gradient(&p).expect("analytic");
                let gq = self.analytic_gradient(&q).expect("analytic");
                for j in 0..m {
                    hs[(j, k)] = (gp[j] - gq[j]) / (2.0 * d);
                }
            }
            return Ok((&hs + hs.transpose()) * 0.5);
        }
        let idx = match at {
            At::Node(idx) => idx.to_vec(),
            At::Point(z) => self.node_at(z).ok_or(Error::NotANode)?,
        };
        if !self.is_interior(&idx, 1) {
            return Err(Error::BoundaryNode);
        }
        let lin = self.linear_index(&idx);
        let st = self.strides();
        let u = &self.values;
        let h2 = self.h * self.h;
        let m = self.dims.len();
        let mut hs = DMatrix::zeros(m, m);
        for k in 0..m {
            hs[(k, k)] = (u[lin + st[k]] - 2.0 * u[lin] + u[lin - st[k]]) / h2;
            for j in 0..k {
                let v = (u[lin + st[k] + st[j]] - u[lin + st[k] - st[j]] - u[lin - st[k] + st[j]]
                    + u[lin - st[k] - st[j]])
                    / (4.0 * h2);
                hs[(k, j)] = v;
                hs[(j, k)] = v;
            }
        }
        Ok(hs)
    }

    fn point_of(&self, at: At) -> Vec<f64> {
        match at {
            At::Node(idx) => self.node_coords(idx),
            At::Point(z) => z.to_vec(),
        }
    }

    /// Value and gradient of the multilinear interpolant inside the cell
    /// with lower corner `corner`, at `p`.
    fn interpolate(values: &[f64], dims: &[usize], origin: &[f64], h: f64, corner: usize, p: &[f64]) -> (f64, Vec<f64>) {
        let m = dims.len();
        let mut strides = vec![0; m];
        let mut stride = 1;
        for k in (0..m).rev() {
            strides[k] = stride;
            stride *= dims[k];
        }
        let mut rem = corner;
        let mut base = vec![0usize; m];
        for k in (0..m).rev() {
            base[k] = rem % dims[k];
            rem /= dims[k];
        }
        let xi: Vec<f64> = (0..m).map(|k| (p[k] - origin[k] - base[k] as f64 * h) / h).collect();
        let mut val = 0.0;
        let mut grad = vec![0.0; m];
        for c in 0..(1usize << m) {
            let mut lin = corner;
            let mut wts = vec![0.0; m];
            for k in 0..m {
                if (c >> k) & 1 == 1 {
                    lin += strides[k];
                    wts[k] = xi[k];
                } else {
                    wts[k] = 1.0 - xi[k];
                }
            }
            let u = values[lin];
            val += u * wts.iter().product::<f64>();
            for k in 0..m {
                let sign = if (c >> k) & 1 == 1 { 1.0 } else { -1.0 };
                let others: f64 = (0..m).filter(|&j| j != k).map(|j| wts[j]).product();
                grad[k] += sign * u * others / h;
            }
        }
        (val, grad)
    }

    /// Quadrature cells of the domain: midpoint rule, with disk boundary
    /// cells clipped to their exact overlap and evaluated at its centroid.
    pub fn cells(&self) -> &[Cell] {
        self.cells.get_or_init(|| self.build_cells())
    }

    fn build_cells(&self) -> Vec<Cell> {
        let m = self.dims.len();
        let cell_dims: Vec<usize> = self.dims.iter().map(|d| d - 1).collect();
        let total: usize = cell_dims.iter().product();
        let h = self.h;
        let vol = h.powi(m as i32);
        let strides = self.strides();
        (0..total)
            .into_par_iter()
            .filter_map(|c| {
                let mut rem = c;
                let mut base = vec![0usize; m];
                for k in (0..m).rev() {
                    base[k] = rem % cell_dims[k];
                    rem /= cell_dims[k];
                }
                let corner: usize = base.iter().zip(&strides).map(|(b, s)| b * s).sum();
                let lo: Vec<f64> = (0..m).map(|k| self.origin[k] + base[k] as f64 * h).collect();
                match &self.domain {
                    Domain::Rect { .. } => {
                        Some(Cell { corner, point: lo.iter().map(|v| v + 0.5 * h).collect(), weight: vol })
                    }
                    Domain::Disk { center, radius } => {
                        let (area, centroid) = clip_cell_to_disk(&lo, h, center, *radius)?;
                        Some(Cell { corner, point: centroid, weight: area })
                    }
                }
            })
            .collect()
    }

    /// `u` and `∇u` at a quadrature cell's evaluation point.
    pub fn cell_value_gradient(&self, cell: &Cell) -> (f64, Vec<f64>) {
        match &self.analytic {
            Some(f) => (f.value(&cell.point), self.analytic_gradient(&cell.point).expect("analytic")),
            None => Self::interpolate(&self.values, &self.dims, &self.origin, self.h, cell.corner, &cell.point),
        }
    }
}

/// Overlap of the cube `[lo, lo + h]^{2n}` with the ball: measure and centroid.
fn clip_cell_to_disk(lo: &[f64], h: f64, center: &[f64], radius: f64) -> Option<(f64, Vec<f64>)> {
    let m = lo.len();
    let mut near = 0.0;
    let mut far = 0.0;
    for k in 0..m {
        let a = lo[k] - center[k];
        let b = a + h;
        let dn = if a > 0.0 { a } else if b < 0.0 { -b } else { 0.0 };
        let df = a.abs().max(b.abs());
        near += dn * dn;
        far += df * df;
    }
    let r2 = radius * radius;
    if near >= r2 {
        return None;
    }
    if far <= r2 {
        return Some((h.powi(m as i32), lo.iter().map(|v| v + 0.5 * h).collect()));
    }
    if m == 2 {
        let (x0, x1) = (lo[0] - center[0], lo[0] - center[0] + h);
        let (y0, y1) = (lo[1] - center[1], lo[1] - center[1] + h);
        let (a, b) = (x0.max(-radius), x1.min(radius));
        let mut cuts = vec![a, b];
        for y in [y0, y1] {
            if y.abs() < radius {
                let x = (r2 - y * y).sqrt();
                for c in [-x, x] {
                    if c > a && c < b {
                        cuts.push(c);
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        let span = |x: f64| {
            let s = (r2 - x * x).max(0.0).sqrt();
            (y0.max(-s), y1.min(s))
        };
        let tol = 1e-15 * h * h;
        let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
        for w in cuts.windows(2) {
            area += integrate(|x| { let (l, u) = span(x); (u - l).max(0.0) }, w[0], w[1], tol);
            mx += integrate(|x| { let (l, u) = span(x); x * (u - l).max(0.0) }, w[0], w[1], tol);
            my += integrate(|x| { let (l, u) = span(x); if u > l { 0.5 * (u * u - l * l) } else { 0.0 } }, w[0], w[1], tol);
        }
        if area <= 0.0 {
            return None;
        }
        return Some((area, vec![center[0] + mx / area, center[1] + my / area]));
    }
    // Higher dimensions: sub-cell midpoints.
    let k = 4usize;
    let sub = h / k as f64;
    let mut count = 0usize;
    let mut sum = vec![0.0; m];
    for s in 0..k.pow(m as u32) {
        let mut rem = s;
        let mut p = vec![0.0; m];
        for j in 0..m {
            p[j] = lo[j] + (rem % k) as f64 * sub + 0.5 * sub;
            rem /= k;
        }
        if dist(&p, center) <= radius {
            count += 1;
            for j in 0..m {
                sum[j] += p[j];
            }
        }
    }
    if count == 0 {
        return None;
    }
    let frac = count as f64 / k.pow(m as u32) as f64;
    Some((frac * h.powi(m as i32), sum.iter().map(|v| v / count as f64).collect()))
}

/// A variation `v` on the grid of a [`GraphFunction`], vanishing on a
/// band of `margin` nodes along the grid boundary and outside the domain.
#[derive(Debug, Clone)]
pub struct VariationField {
    pub values: Vec<f64>,
    pub margin: usize,
}

impl VariationField {
    pub fn from_fn(u: &GraphFunction, margin: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let values: Vec<f64> = (0..u.node_count())
            .into_par_iter()
            .map(|lin| {
                let idx = u.multi_index(lin);
                if u.is_interior(&idx, margin.max(1)) {
                    f(&u.node_coords(&idx))
                } else {
                    0.0
                }
            })
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "variation values" });
        }
        Ok(VariationField { values, margin: margin.max(1) })
    }

    pub fn zero(u: &GraphFunction) -> Self {
        VariationField { values: vec![0.0; u.node_count()], margin: 1 }
    }

    /// Checks finiteness and that `v` vanishes on the margin band.
    pub fn validate(&self, u: &GraphFunction) -> Result<()> {
        if self.values.len() != u.node_count() {
            return Err(Error::DimensionMismatch { expected: u.node_count(), got: self.values.len() });
        }
        for (lin, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "variation values" });
            }
            if *v != 0.0 && !u.is_interior(&u.multi_index(lin), self.margin) {
                return Err(Error::BadVariation("does not vanish on the margin band"));
            }
        }
        Ok(())
    }
}

/// Radially symmetric `C²` bump `(1 − |z − c|²/ε²)³` and its gradient.
pub fn bump(center: &[f64], eps: f64, z: &[f64]) -> (f64, Vec<f64>) {
    let s2 = z.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (eps * eps);
    if s2 >= 1.0 {
        return (0.0, vec![0.0; z.len()]);
    }
    let one = 1.0 - s2;
    let g = -6.0 * one * one / (eps * eps);
    (one * one * one, z.iter().zip(center).map(|(a, b)| g * (a - b)).collect())
}

/// Normal data of the graph at one point.
#[derive(Debug, Clone)]
pub struct NormalData {
    /// `w = ∇u + F`.
    pub w: Vec<f64>,
    /// `⟨w, b w⟩`.
    pub wbw: f64,
    /// `b w`.
    pub bw: Vec<f64>,
    /// `det(g + w wᵀ)^{1/2}`.
    pub jacobian: f64,
    /// `|N_h|`.
    pub horizontal_norm: f64,
    /// `g(N, T)`.
    pub reeb: f64,
}

impl NormalData {
    /// Area density `⟨w, bw⟩^{1/2} Jac / (1 + ⟨w, bw⟩)^{1/2}`.
    pub fn area_density(&self) -> f64 {
        self.wbw.sqrt() * self.jacobian / (1.0 + self.wbw).sqrt()
    }

    /// `G = −Jac · g(T, N)`.
    pub fn g_factor(&self) -> f64 {
        -self.jacobian * self.reeb
    }
}

/// `∇u + F` from a gradient and a base point.
pub fn w_vector(grad: &[f64], z: &[f64]) -> Vec<f64> {
    rotation_field(z).iter().zip(grad).map(|(f, g)| f + g).collect()
}

/// Normal data at `(z, t)` for a given `w`.
pub fn normal_data(s: &ContactStructure, z: &[f64], t: f64, w: Vec<f64>) -> Result<NormalData> {
    let m = w.len();
    if m != 2 * s.n() {
        return Err(Error::DimensionMismatch { expected: 2 * s.n(), got: m });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "∇u + F" });
    }
    let factor = s.factor_at(z, t)?;
    let wv = DVector::from_column_slice(&w);
    let bw = &factor.inverse * &wv;
    let wbw = wv.dot(&bw).max(0.0);
    let g = s.metric_at(z, t);
    let det = (g + &wv * wv.transpose()).determinant();
    if !(det > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let root = (1.0 + wbw).sqrt();
    Ok(NormalData {
        w,
        wbw,
        bw: bw.iter().copied().collect(),
        jacobian: det.sqrt(),
        horizontal_norm: wbw.sqrt() / root,
        reeb: -1.0 / root,
    })
}

/// `∇u + F` at a node (or point with analytic gradient).
pub fn grad_plus_f(u: &GraphFunction, at: At) -> Result<Vec<f64>> {
    let z = u.point_of(at);
    Ok(w_vector(&u.gradient(at)?, &z))
}

fn normal_at(u: &GraphFunction, at: At, s: &ContactStructure) -> Result<NormalData> {
    let z = u.point_of(at);
    let t = u.value(at)?;
    normal_data(s, &z, t, grad_plus_f(u, at)?)
}

/// `det(g_ij + w_i w_j)^{1/2}`.
pub fn jacobian(u: &GraphFunction, at: At, s: &ContactStructure) -> Result<f64> {
    Ok(normal_at(u, at, s)?.jacobian)
}

/// `|N_h| = ⟨w, bw⟩^{1/2} / (1 + ⟨w, bw⟩)^{1/2}`.
pub fn horizontal_normal_norm(u: &GraphFunction, at: At, s: &ContactStructure) -> Result<f64> {
    Ok(normal_at(u, at, s)?.horizontal_norm)
}

/// `g(N, T) = −1 / (1 + ⟨w, bw⟩)^{1/2}`.
pub fn normal_reeb_component(u: &GraphFunction, at: At, s: &ContactStructure) -> Result<f64> {
    Ok(normal_at(u, at, s)?.reeb)
}

fn area_density_at(s: &ContactStructure, z: &[f64], t: f64, grad: &[f64]) -> Result<f64> {
    let d = normal_data(s, z, t, w_vector(grad, z))?.area_density();
    if !d.is_finite() {
        return Err(Error::NonFinite { what: "area integrand" });
    }
    Ok(d)
}

/// Sub-Riemannian area of the graph over `Ω`.
pub fn area(u: &GraphFunction, s: &ContactStructure) -> Result<f64> {
    if u.dim() != 2 * s.n() {
        return Err(Error::DimensionMismatch { expected: 2 * s.n(), got: u.dim() });
    }
    let terms: Vec<f64> = u
        .cells()
        .par_iter()
        .map(|c| {
            let (t, grad) = u.cell_value_gradient(c);
            area_density_at(s, &c.point, t, &grad).map(|d| d * c.weight)
        })
        .collect::<Result<_>>()?;
    Ok(stable_sum(terms))
}

/// `−div(w/|w|)/2n` for the standard metric, from `∇u` and `Hess u`.
pub fn standard_curvature_from(grad: &[f64], hess: &DMatrix<f64>, z: &[f64]) -> Result<f64> {
    let w = w_vector(grad, z);
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= SINGULAR_EPS {
        return Err(Error::SingularPoint { norm });
    }
    let wv = DVector::from_column_slice(&w);
    let lap = hess.trace();
    let quad = wv.dot(&(hess * &wv));
    let n2 = w.len() as f64;
    Ok(-(lap / norm - quad / (norm * norm * norm)) / n2)
}

/// Mean curvature for the standard metric.
pub fn mean_curvature_standard(u: &GraphFunction, at: At) -> Result<f64> {
    let z = u.point_of(at);
    let grad = u.gradient(at)?;
    let w = w_vector(&grad, &z);
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= SINGULAR_EPS {
        return Err(Error::SingularPoint { norm });
    }
    standard_curvature_from(&grad, &u.hessian(at)?, &z)
}

/// Mean curvature for an arbitrary metric, by the first-variation quotient
/// of a bump of radius `eps` centred at the query point.
pub fn mean_curvature_general(u: &GraphFunction, at: At, s: &ContactStructure, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NonPositive { what: "bump radius", value: eps });
    }
    let c = u.point_of(at);
    let analytic = u.analytic().is_some();
    let r2 = eps * eps;
    let support: Vec<&Cell> = if analytic {
        Vec::new()
    } else {
        u.cells()
            .iter()
            .filter(|cell| cell.point.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r2)
            .collect()
    };
    // Quadrature points and weights covering the bump support.
    let pts: Vec<(Vec<f64>, f64)> = if analytic {
        bump_quadrature(&c, eps)
    } else {
        support.iter().map(|cell| (cell.point.clone(), cell.weight)).collect()
    };
    if pts.is_empty() {
        return Err(Error::Degenerate("bump support contains no quadrature points"));
    }
    let mut base = Vec::with_capacity(pts.len());
    for (k, (p, _)) in pts.iter().enumerate() {
        let (t, grad) = if analytic {
            (u.value(At::Point(p))?, u.gradient(At::Point(p))?)
        } else {
            u.cell_value_gradient(support[k])
        };
        base.push((t, grad));
    }
    let density = |step: f64| -> Result<f64> {
        let mut acc = Vec::with_capacity(pts.len());
        for ((p, wt), (t, grad)) in pts.iter().zip(&base) {
            let (v, dv) = bump(&c, eps, p);
            if v == 0.0 && dv.iter().all(|x| *x == 0.0) {
                continue;
            }
            let g: Vec<f64> = grad.iter().zip(&dv).map(|(a, b)| a + step * b).collect();
            acc.push(area_density_at(s, p, t + step * v, &g)? * wt);
        }
        Ok(stable_sum(acc))
    };
    let ds = richardson_derivative(&density, VARIATION_STEP)?;
    let mut denom = Vec::with_capacity(pts.len());
    for ((p, wt), (t, grad)) in pts.iter().zip(&base) {
        let (v, _) = bump(&c, eps, p);
        if v == 0.0 {
            continue;
        }
        let nd = normal_data(s, p, *t, w_vector(grad, p))?;
        if nd.wbw.sqrt() <= SINGULAR_EPS {
            return Err(Error::Degenerate("bump support meets the singular set"));
        }
        denom.push(v * nd.reeb * nd.jacobian * wt);
    }
    let denom = stable_sum(denom);
    if denom.abs() < 1e-300 {
        return Err(Error::Degenerate("vanishing first-variation denominator"));
    }
    Ok(-ds / (2.0 * s.n() as f64 * denom))
}

/// Gauss quadrature on the ball of radius `eps` around `c`: polar
/// Gauss–Legendre × trapezoid for `2n = 2`, tensor Gauss on the cube otherwise.
fn bump_quadrature(c: &[f64], eps: f64) -> Vec<(Vec<f64>, f64)> {
    let m = c.len();
    if m == 2 {
        let (x, w) = gauss_legendre(32);
        let na = 96;
        let mut out = Vec::with_capacity(x.len() * na);
        for (xi, wi) in x.iter().zip(&w) {
            let r = 0.5 * eps * (xi + 1.0);
            let wr = 0.5 * eps * wi * r;
            for j in 0..na {
                let th = 2.0 * std::f64::consts::PI * j as f64 / na as f64;
                out.push((vec![c[0] + r * th.cos(), c[1] + r * th.sin()], wr * 2.0 * std::f64::consts::PI / na as f64));
            }
        }
        return out;
    }
    let (x, w) = gauss_legendre(8);
    let pieces = 2usize;
    let mut nodes = Vec::new();
    for p in 0..pieces {
        let a = -eps + 2.0 * eps * p as f64 / pieces as f64;
        let half = eps / pieces as f64;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push((a + half * (xi + 1.0), half * wi));
        }
    }
    let k = nodes.len();
    let mut out = Vec::new();
    for lin in 0..k.pow(m as u32) {
        let mut rem = lin;
        let mut p = Vec::with_capacity(m);
        let mut wt = 1.0;
        for j in 0..m {
            let (x, w) = nodes[rem % k];
            rem /= k;
            p.push(c[j] + x);
            wt *= w;
        }
        if dist(&p, c) < eps {
            out.push((p, wt));
        }
    }
    out
}

/// Central difference of `f` at 0 with one Richardson level.
fn richardson_derivative(f: &dyn Fn(f64) -> Result<f64>, step: f64) -> Result<f64> {
    let d1 = (f(step)? - f(-step)?) / (2.0 * step);
    let half = 0.5 * step;
    let d2 = (f(half)? - f(-half)?) / (2.0 * half);
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Both sides of the first-variation identity for the variation `v T`:
/// `lhs = d/ds A(u + s v)` by finite differences, `rhs = −2n ∫ H v g(T,N) Jac`.
pub fn first_variation_check(u: &GraphFunction, v: &VariationField, s: &ContactStructure) -> Result<(f64, f64)> {
    v.validate(u)?;
    let active: Vec<usize> = (0..u.node_count()).filter(|&i| v.values[i] != 0.0).collect();
    if active.is_empty() {
        return Ok((0.0, 0.0));
    }
    for &lin in &active {
        let idx = u.multi_index(lin);
        let w = grad_plus_f(u, At::Node(&idx))?;
        if w.iter().map(|x| x * x).sum::<f64>().sqrt() <= SINGULAR_EPS {
            return Err(Error::BadVariation("support touches the singular set"));
        }
    }
    // Cells with a nonzero corner value of v.
    let m = u.dim();
    let strides = u.strides();
    let touched: Vec<&Cell> = u
        .cells()
        .iter()
        .filter(|cell| {
            (0..(1usize << m)).any(|c| {
                let off: usize = (0..m).filter(|k| (c >> k) & 1 == 1).map(|k| strides[k]).sum();
                v.values[cell.corner + off] != 0.0
            })
        })
        .collect();
    let prepared: Vec<(&Cell, f64, Vec<f64>, f64, Vec<f64>)> = touched
        .par_iter()
        .map(|cell| {
            let (t, grad) = u.cell_value_gradient(cell);
            let (vv, dv) = GraphFunction::interpolate(&v.values, &u.dims, &u.origin, u.h, cell.corner, &cell.point);
            (*cell, t, grad, vv, dv)
        })
        .collect();
    let slope = |step: f64| -> Result<f64> {
        let terms: Vec<f64> = prepared
            .par_iter()
            .map(|(cell, t, grad, vv, dv)| {
                let at = |sgn: f64| {
                    let g: Vec<f64> = grad.iter().zip(dv).map(|(a, b)| a + sgn * step * b).collect();
                    area_density_at(s, &cell.point, t + sgn * step * vv, &g)
                };
                Ok((at(1.0)? - at(-1.0)?) * cell.weight / (2.0 * step))
            })
            .collect::<Result<_>>()?;
        Ok(stable_sum(terms))
    };
    let d1 = slope(VARIATION_STEP)?;
    let d2 = slope(0.5 * VARIATION_STEP)?;
    let lhs = (4.0 * d2 - d1) / 3.0;

    let two_n = 2.0 * s.n() as f64;
    if s.is_standard() && u.analytic.is_some() {
        // same cells and the same interpolant of v as the left-hand side
        let terms: Vec<f64> = prepared
            .par_iter()
            .map(|(cell, _, _, vv, _)| {
                let at = At::Point(&cell.point);
                let hc = mean_curvature_standard(u, at)?;
                let nd = normal_at(u, at, s)?;
                Ok(-two_n * hc * vv * nd.reeb * nd.jacobian * cell.weight)
            })
            .collect::<Result<_>>()?;
        return Ok((lhs, stable_sum(terms)));
    }
    let node_vol = u.h.powi(m as i32);
    let terms: Vec<f64> = active
        .par_iter()
        .map(|&lin| {
            let idx = u.multi_index(lin);
            let vv = v.values[lin];
            if s.is_standard() {
                let hc = mean_curvature_standard(u, At::Node(&idx))?;
                let nd = normal_at(u, At::Node(&idx), s)?;
                Ok(-two_n * hc * vv * nd.reeb * nd.jacobian * node_vol)
            } else {
                Ok(two_n * euler_lagrange_residual(u, At::Node(&idx), s)? * vv * node_vol)
            }
        })
        .collect::<Result<_>>()?;
    Ok((lhs, stable_sum(terms)))
}

/// Integrand `F(z, u, p) = ⟨p+F, b(p+F)⟩^{1/2} G(z, u, p)` of the area functional.
fn lagrangian(s: &ContactStructure, z: &[f64], t: f64, p: &[f64]) -> Result<f64> {
    let nd = normal_data(s, z, t, w_vector(p, z))?;
    Ok(nd.wbw.sqrt() * nd.g_factor())
}

/// `F_p = G · b w / ⟨w, bw⟩^{1/2}`.
fn lagrangian_p(s: &ContactStructure, z: &[f64], t: f64, p: &[f64]) -> Result<Vec<f64>> {
    let nd = normal_data(s, z, t, w_vector(p, z))?;
    let norm = nd.wbw.sqrt();
    if norm <= SINGULAR_EPS {
        return Err(Error::SingularPoint { norm });
    }
    let g = nd.g_factor();
    Ok(nd.bw.iter().map(|b| g * b / norm).collect())
}

/// Euler–Lagrange residual `(F_u − div F_p)/2n`, which equals
/// `−H g(T,N) Jac` on a graph with mean curvature `H`.
pub fn euler_lagrange_residual(u: &GraphFunction, at: At, s: &ContactStructure) -> Result<f64> {
    let z = u.point_of(at);
    let m = z.len();
    let t = u.value(at)?;
    let grad = u.gradient(at)?;
    let w = w_vector(&grad, &z);
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= SINGULAR_EPS {
        return Err(Error::SingularPoint { norm });
    }
    let f_u = if s.is_left_invariant() {
        0.0
    } else {
        let d = crate::contact::METRIC_FD_STEP;
        (lagrangian(s, &z, t + d, &grad)? - lagrangian(s, &z, t - d, &grad)?) / (2.0 * d)
    };
    let mut div = 0.0;
    match (at, u.analytic().is_some()) {
        (At::Node(idx), false) => {
            if !u.is_interior(idx, 2) {
                return Err(Error::BoundaryNode);
            }
            for k in 0..m {
                let mut side = [0.0; 2];
                for (j, off) in [1isize, -1].iter().enumerate() {
                    let mut nb = idx.to_vec();
                    nb[k] = (nb[k] as isize + off) as usize;
                    let zn = u.node_coords(&nb);
                    let fp = lagrangian_p(s, &zn, u.value(At::Node(&nb))?, &u.gradient(At::Node(&nb))?)?;
                    side[j] = fp[k];
                }
                div += (side[0] - side[1]) / (2.0 * u.h());
            }
        }
        _ => {
            let d = ANALYTIC_FD_STEP;
            for k in 0..m {
                let mut side = [0.0; 2];
                for (j, off) in [d, -d].iter().enumerate() {
                    let mut zn = z.clone();
                    zn[k] += off;
                    let fp = lagrangian_p(s, &zn, u.value(At::Point(&zn))?, &u.gradient(At::Point(&zn))?)?;
                    side[j] = fp[k];
                }
                div += (side[0] - side[1]) / (2.0 * d);
            }
        }
    }
    Ok((f_u - div) / (2.0 * s.n() as f64))
}

/// One row of a pointwise report.
#[derive(Debug, Clone)]
pub struct NodeReport {
    pub z: Vec<f64>,
    pub mean_curvature: f64,
    pub horizontal_norm: f64,
    pub integrand: f64,
}

/// Pointwise report at the given points (nodes or, with callbacks, any point).
/// Singular points get a NaN curvature.
pub fn report(u: &GraphFunction, s: &ContactStructure, points: &[Vec<f64>], eps: f64) -> Result<Vec<NodeReport>> {
    points
        .iter()
        .map(|z| {
            let at = At::Point(z);
            let nd = normal_at(u, at, s)?;
            let hc = if s.is_standard() {
                mean_curvature_standard(u, at)
            } else {
                mean_curvature_general(u, at, s, eps)
            };
            let hc = match hc {
                Ok(v) => v,
                Err(Error::SingularPoint { .. }) | Err(Error::Degenerate(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            Ok(NodeReport {
                z: z.clone(),
                mean_curvature: hc,
                horizontal_norm: nd.horizontal_norm,
                integrand: nd.area_density(),
            })
        })
        .collect()
}

fn coord_names(m: usize) -> Vec<String> {
    (0..m / 2).flat_map(|k| [format!("x{}", k + 1), format!("y{}", k + 1)]).collect()
}

pub fn write_report<W: Write>(rows: &[NodeReport], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    if let Some(first) = rows.first() {
        let mut header = coord_names(first.z.len());
        header.extend(["H", "horizontal_normal", "integrand"].map(String::from));
        wtr.write_record(&header)?;
    }
    for r in rows {
        let mut rec: Vec<String> = r.z.iter().map(|v| v.to_string()).collect();
        rec.push(r.mean_curvature.to_string());
        rec.push(r.horizontal_norm.to_string());
        rec.push(r.integrand.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

impl GraphFunction {
    /// CSV with columns `i1, j1, …, x1, y1, …, u`, one row per node.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let m = self.dim();
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..m / 2).flat_map(|k| [format!("i{}", k + 1), format!("j{}", k + 1)]).collect();
        header.extend(coord_names(m));
        header.push("u".into());
        wtr.write_record(&header)?;
        for lin in 0..self.node_count() {
            let idx = self.multi_index(lin);
            let mut rec: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            rec.extend(self.node_coords(&idx).iter().map(|v| v.to_string()));
            rec.push(self.values[lin].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format of [`GraphFunction::write_csv`] as a rectangular grid.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let cols = rdr.headers()?.len();
        if cols < 5 || (cols - 1) % 4 != 0 {
            return Err(Error::Parse(format!("unexpected column count {cols}")));
        }
        let m = (cols - 1) / 2;
        let mut rows: Vec<(Vec<usize>, Vec<f64>, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse_f = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            let idx: Vec<usize> = (0..m)
                .map(|k| rec[k].trim().parse::<usize>().map_err(|e| Error::Parse(format!("{:?}: {e}", &rec[k]))))
                .collect::<Result<_>>()?;
            let z: Vec<f64> = (0..m).map(|k| parse_f(&rec[m + k])).collect::<Result<_>>()?;
            rows.push((idx, z, parse_f(&rec[2 * m])?));
        }
        if rows.is_empty() {
            return Err(Error::Parse("no nodes".into()));
        }
        let dims: Vec<usize> = (0..m).map(|k| rows.iter().map(|r| r.0[k]).max().unwrap_or(0) + 1).collect();
        let total: usize = dims.iter().product();
        if total != rows.len() {
            return Err(Error::Parse("nodes do not form a full grid".into()));
        }
        let lo: Vec<f64> = (0..m).map(|k| rows.iter().map(|r| r.1[k]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> = (0..m).map(|k| rows.iter().map(|r| r.1[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let h = (hi[0] - lo[0]) / (dims[0] - 1) as f64;
        let domain = Domain::rect(lo, hi)?;
        let mut values = vec![f64::NAN; total];
        for (idx, _, v) in &rows {
            let lin = idx.iter().zip(&dims).fold(0, |acc, (i, d)| acc * d + i);
            values[lin] = *v;
        }
        GraphFunction::from_values(domain, h, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn zero() -> Arc<dyn HeightFunction> {
        Arc::new(|_: &[f64]| 0.0)
    }

    #[test]
    fn grad_plus_f_of_zero_graph() {
        let u = GraphFunction::from_analytic(Domain::rect(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(), 0.5, zero()).unwrap();
        assert_eq!(grad_plus_f(&u, At::Point(&[0.0, 1.0])).unwrap(), vec![-1.0, 0.0]);
        let grid = u.without_analytic();
        let w = grad_plus_f(&grid, At::Point(&[0.5, 1.0])).unwrap();
        assert_eq!(w, vec![-1.0, 0.5]);
        assert!(matches!(grad_plus_f(&grid, At::Point(&[-2.0, 0.0])), Err(Error::BoundaryNode)));
        assert!(matches!(grad_plus_f(&grid, At::Point(&[0.3, 0.0])), Err(Error::NotANode)));
    }

    #[test]
    fn zero_graph_normal_components() {
        let s = ContactStructure::standard(1).unwrap();
        let u = GraphFunction::from_analytic(Domain::disk(vec![0.0, 0.0], 2.0).unwrap(), 0.25, zero()).unwrap();
        let at = At::Point(&[1.0, 0.0]);
        assert!((jacobian(&u, at, &s).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!((horizontal_normal_norm(&u, at, &s).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((normal_reeb_component(&u, at, &s).unwrap() + 0.5f64.sqrt()).abs() < 1e-14);
        let origin = At::Point(&[0.0, 0.0]);
        assert_eq!(horizontal_normal_norm(&u, origin, &s).unwrap(), 0.0);
        assert_eq!(normal_reeb_component(&u, origin, &s).unwrap(), -1.0);
        assert_eq!(jacobian(&u, origin, &s).unwrap(), 1.0);
    }

    #[test]
    fn singular_jacobian_is_root_det_g() {
        let s = ContactStructure::diagonal(&[4.0, 9.0]).unwrap();
        let nd = normal_data(&s, &[0.0, 0.0], 0.0, vec![0.0, 0.0]).unwrap();
        assert!((nd.jacobian - 6.0).abs() < 1e-12);
    }

    #[test]
    fn horizontal_norm_tends_to_one() {
        let s = ContactStructure::standard(1).unwrap();
        let nd = normal_data(&s, &[0.0, 0.0], 0.0, vec![1e6, 0.0]).unwrap();
        assert!(1.0 - nd.horizontal_norm < 1e-11);
    }

    #[test]
    fn zero_graph_area_on_unit_disk() {
        let s = ContactStructure::standard(1).unwrap();
        let u = GraphFunction::from_analytic(Domain::disk(vec![0.0, 0.0], 1.0).unwrap(), 1.0 / 64.0, zero()).unwrap();
        let a = area(&u, &s).unwrap();
        assert!((a - 2.0 * PI / 3.0).abs() < 1e-4, "{a}");
        let grid = area(&u.without_analytic(), &s).unwrap();
        assert!((grid - 2.0 * PI / 3.0).abs() < 1e-4, "{grid}");
    }

    #[test]
    fn disk_cells_cover_exact_area() {
        let u = GraphFunction::from_analytic(Domain::disk(vec![0.1, -0.2], 0.7).unwrap(), 0.03, zero()).unwrap();
        let total = stable_sum(u.cells().iter().map(|c| c.weight));
        assert!((total - PI * 0.49).abs() < 1e-12, "{total}");
    }

    #[test]
    fn zero_graph_is_minimal() {
        let u = GraphFunction::from_analytic(Domain::disk(vec![0.0, 0.0], 1.0).unwrap(), 1.0 / 32.0, zero()).unwrap();
        for z in [[0.1, 0.0], [0.3, -0.7], [-0.5, 0.5]] {
            assert!(mean_curvature_standard(&u, At::Point(&z)).unwrap().abs() < 1e-12);
        }
        assert!(matches!(mean_curvature_standard(&u, At::Point(&[0.0, 0.0])), Err(Error::SingularPoint { .. })));
    }

    #[test]
    fn csv_roundtrip() {
        let f: Arc<dyn HeightFunction> = Arc::new(|z: &[f64]| z[0] * z[1] + 0.25);
        let u = GraphFunction::from_analytic(Domain::rect(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap(), 0.25, f).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i1,j1,x1,y1,u\n"));
        let back = GraphFunction::read_csv(&buf[..]).unwrap();
        assert_eq!(back.dims(), u.dims());
        assert_eq!(back.values(), u.values());
        assert_eq!(back.h(), 0.25);
    }

    #[test]
    fn general_density_reduces_to_norm_for_standard_metric() {
        let s = ContactStructure::standard(2).unwrap();
        let w = vec![0.3, -1.2, 2.0, 0.1];
        let nd = normal_data(&s, &[0.1, 0.2, 0.3, 0.4], 0.0, w.clone()).unwrap();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((nd.area_density() - norm).abs() < 1e-12);
        assert!((nd.jacobian - (1.0 + norm * norm).sqrt()).abs() < 1e-12);
    }
}
