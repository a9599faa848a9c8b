//! Pansu spheres `S_λ`: the graph of
//! `u_λ(z) = (λ|z|√(1−λ²|z|²) + arccos(λ|z|)) / 2λ²` over `|z| ≤ 1/λ` and its
//! reflection in `t = 0`. They have constant mean curvature `λ`, poles at
//! `±(0, π/4λ²)`, and foliate the punctured space.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::contact::{group_inverse, group_mul, ContactStructure, Point};
use crate::error::{Error, Result};
use crate::graph::{self, At, Domain, GraphFunction, HeightFunction};
use crate::numerics::integrate;
use crate::perimeter::{bv_perimeter, mollifier_margin, VoxelSet};

/// Iteration cap for the bisection in [`foliation_lambda`].
pub const BISECTION_MAX_ITER: usize = 200;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositive { what: "λ", value: lambda });
    }
    Ok(())
}

/// `u_λ(r)` for `0 ≤ r ≤ 1/λ`.
pub fn profile(lambda: f64, r: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let s = lambda * r;
    if !(0.0..=1.0 + 1e-15).contains(&s) {
        return Err(Error::OutOfDomain { what: "radius r (need 0 ≤ r ≤ 1/λ)", value: r });
    }
    let s = s.min(1.0);
    Ok((s * (1.0 - s * s).sqrt() + s.acos()) / (2.0 * lambda * lambda))
}

/// `u_λ'(r) = −λr²/√(1−λ²r²)` for `0 ≤ r < 1/λ`.
pub fn profile_derivative(lambda: f64, r: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let s = lambda * r;
    if !(0.0..1.0).contains(&s) {
        return Err(Error::OutOfDomain { what: "radius r (need 0 ≤ r < 1/λ)", value: r });
    }
    Ok(-lambda * r * r / (1.0 - s * s).sqrt())
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_open_disk(lambda: f64, z: &[f64]) -> Result<f64> {
    check_lambda(lambda)?;
    if z.is_empty() || z.len() % 2 != 0 {
        return Err(Error::DimensionMismatch { expected: 2, got: z.len() });
    }
    let r = norm(z);
    if r == 0.0 {
        return Err(Error::OutOfDomain { what: "|z| (pole)", value: r });
    }
    if lambda * r >= 1.0 {
        return Err(Error::OutOfDomain { what: "|z| (need |z| < 1/λ)", value: r });
    }
    Ok(r)
}

/// `∂u/∂z_i = −λ|z| z_i / √(1−λ²|z|²)`.
pub fn profile_gradient(lambda: f64, z: &[f64]) -> Result<Vec<f64>> {
    let r = check_open_disk(lambda, z)?;
    let c = -lambda * r / (1.0 - lambda * lambda * r * r).sqrt();
    Ok(z.iter().map(|v| c * v).collect())
}

/// `u_ij = −δ_ij λ|z|/√(1−λ²|z|²) − λ z_i z_j / (|z| (1−λ²|z|²)^{3/2})`.
pub fn profile_hessian(lambda: f64, z: &[f64]) -> Result<DMatrix<f64>> {
    let r = check_open_disk(lambda, z)?;
    Ok(hessian_formula(lambda, z, r))
}

fn hessian_formula(lambda: f64, z: &[f64], r: f64) -> DMatrix<f64> {
    let m = z.len();
    let q = 1.0 - lambda * lambda * r * r;
    let diag = -lambda * r / q.sqrt();
    let outer = -lambda / (r * q * q.sqrt());
    DMatrix::from_fn(m, m, |i, j| if i == j { diag } else { 0.0 } + outer * z[i] * z[j])
}

/// Upper (`sign = 1`) or lower (`sign = −1`) hemisphere of `S_λ` centred at
/// the origin, as an analytic height function. Outside the disk the value
/// is clamped to the equator.
#[derive(Debug, Clone, Copy)]
pub struct PansuGraph {
    pub lambda: f64,
    pub sign: f64,
}

impl HeightFunction for PansuGraph {
    fn value(&self, z: &[f64]) -> f64 {
        let r = norm(z).min(1.0 / self.lambda);
        self.sign * profile(self.lambda, r).unwrap_or(0.0)
    }
    fn gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let r = norm(z);
        if r == 0.0 {
            return Some(vec![0.0; z.len()]);
        }
        profile_gradient(self.lambda, z).ok().map(|g| g.into_iter().map(|v| self.sign * v).collect())
    }
    fn hessian(&self, z: &[f64]) -> Option<DMatrix<f64>> {
        let r = norm(z);
        if r == 0.0 {
            return Some(DMatrix::zeros(z.len(), z.len()));
        }
        profile_hessian(self.lambda, z).ok().map(|h| h * self.sign)
    }
}

/// The sphere `S_λ` left-translated to `center`.
#[derive(Debug, Clone)]
pub struct PansuSphere {
    pub lambda: f64,
    pub center: Point,
}

impl PansuSphere {
    pub fn new(lambda: f64, center: Point) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(PansuSphere { lambda, center })
    }

    pub fn centered(lambda: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension(n));
        }
        Self::new(lambda, Point::origin(n))
    }

    pub fn n(&self) -> usize {
        self.center.n()
    }

    /// Outer radius `1/λ` of the projected disk.
    pub fn radius(&self) -> f64 {
        1.0 / self.lambda
    }

    /// Pole height `π/(4λ²)`.
    pub fn pole_height(&self) -> f64 {
        PI / (4.0 * self.lambda * self.lambda)
    }

    /// Whether `q` lies in the closed region bounded by the sphere.
    pub fn contains(&self, q: &Point) -> bool {
        let local = group_mul(&group_inverse(&self.center), q);
        let r = local.radius();
        if r * self.lambda > 1.0 {
            return false;
        }
        local.t.abs() <= profile(self.lambda, r).unwrap_or(0.0)
    }

    /// Same test on raw coordinates `(z, t)`, avoiding allocation for `n = 1`.
    pub fn contains_coords(&self, z: &[f64], t: f64) -> bool {
        let c = &self.center;
        let mut r2 = 0.0;
        let mut tl = t - c.t;
        for k in 0..z.len() / 2 {
            let (x, y) = (z[2 * k] - c.z[2 * k], z[2 * k + 1] - c.z[2 * k + 1]);
            r2 += x * x + y * y;
            // c⁻¹ · q with c⁻¹ = (−z_c, −t_c)
            tl += -c.z[2 * k + 1] * z[2 * k] + c.z[2 * k] * z[2 * k + 1];
        }
        let r = r2.sqrt();
        if r * self.lambda > 1.0 {
            return false;
        }
        tl.abs() <= profile(self.lambda, r).unwrap_or(0.0)
    }

    /// Total sub-Riemannian area (both hemispheres), standard metric.
    pub fn area(&self) -> Result<f64> {
        sphere_area(self.lambda, self.n())
    }

    pub fn volume(&self) -> Result<f64> {
        sphere_volume(self.lambda, self.n())
    }
}

/// `|S^{2n−1}| = 2πⁿ/(n−1)!`.
fn unit_sphere_measure(n: usize) -> f64 {
    let fact: f64 = (1..n).map(|k| k as f64).product();
    2.0 * PI.powi(n as i32) / fact
}

/// Total area of `S_λ` in the standard structure of dimension `2n+1`,
/// from the general area density along a ray, with `r = sin θ / λ`.
pub fn sphere_area(lambda: f64, n: usize) -> Result<f64> {
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::InvalidDimension(n));
    }
    let s = ContactStructure::standard(n)?;
    let m = 2 * n;
    let radial = |theta: f64| -> f64 {
        let r = theta.sin() / lambda;
        let mut z = vec![0.0; m];
        z[0] = r;
        let grad = match profile_gradient(lambda, &z) {
            Ok(g) => g,
            Err(_) => vec![0.0; m],
        };
        let t = profile(lambda, r).unwrap_or(0.0);
        let density = graph::normal_data(&s, &z, t, graph::w_vector(&grad, &z)).map(|d| d.area_density()).unwrap_or(f64::NAN);
        density * r.powi(m as i32 - 1) * theta.cos() / lambda
    };
    let scale = lambda.powi(-(2 * n as i32 + 1));
    let v = 2.0 * unit_sphere_measure(n) * integrate(radial, 0.0, PI / 2.0, 1e-12 * scale);
    if !v.is_finite() {
        return Err(Error::NonFinite { what: "sphere area" });
    }
    Ok(v)
}

/// Volume enclosed by `S_λ`: `2 |S^{2n−1}| ∫ u_λ(r) r^{2n−1} dr`.
pub fn sphere_volume(lambda: f64, n: usize) -> Result<f64> {
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::InvalidDimension(n));
    }
    let m = 2 * n as i32;
    let radial = |theta: f64| {
        let r = theta.sin() / lambda;
        profile(lambda, r).unwrap_or(0.0) * r.powi(m - 1) * theta.cos() / lambda
    };
    let scale = lambda.powi(-(m + 2));
    Ok(2.0 * unit_sphere_measure(n) * integrate(radial, 0.0, PI / 2.0, 1e-12 * scale))
}

/// The unique `λ` with `p ∈ S_λ` (sphere centred at the origin).
pub fn foliation_lambda(p: &Point) -> Result<f64> {
    let r = p.radius();
    let t = p.t.abs();
    if r == 0.0 && t == 0.0 {
        return Err(Error::OutOfDomain { what: "point (origin is not on any leaf)", value: 0.0 });
    }
    if r == 0.0 {
        return Ok((PI / (4.0 * t)).sqrt());
    }
    if t == 0.0 {
        return Ok(1.0 / r);
    }
    // height(λ) = u_λ(r) − |t| decreases on (0, 1/r] from +∞ to −|t|.
    let height = |l: f64| profile(l, r).map(|u| u - t).unwrap_or(-t);
    let mut hi = 1.0 / r;
    let mut lo = hi.min((PI / (4.0 * t)).sqrt()) * 0.5;
    while height(lo) < 0.0 {
        lo *= 0.5;
    }
    // near the equator ∂u/∂λ blows up, so bisect until the bracket is a
    // pair of adjacent floats
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if height(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How curvature is evaluated in [`cmc_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureMode {
    Analytic,
    /// Central differences on a grid of spacing `h` through the query point.
    FiniteDifference { h: f64 },
}

/// `|H(u_λ)(z) − λ|` on the annulus `0.05 ≤ λ|z| ≤ 0.95`.
pub fn cmc_residual(lambda: f64, z: &[f64], mode: CurvatureMode) -> Result<f64> {
    check_lambda(lambda)?;
    let r = norm(z);
    if !(0.05 - 1e-12..=0.95 + 1e-12).contains(&(lambda * r)) {
        return Err(Error::OutOfDomain { what: "λ|z| (need 0.05 ≤ λ|z| ≤ 0.95)", value: lambda * r });
    }
    let f: Arc<dyn HeightFunction> = Arc::new(PansuGraph { lambda, sign: 1.0 });
    let h = match mode {
        CurvatureMode::Analytic => {
            let hs = profile_hessian(lambda, z)?;
            let grad = profile_gradient(lambda, z)?;
            graph::standard_curvature_from(&grad, &hs, z)?
        }
        CurvatureMode::FiniteDifference { h } => {
            let lo: Vec<f64> = z.iter().map(|v| v - 2.0 * h).collect();
            let hi: Vec<f64> = z.iter().map(|v| v + 2.0 * h).collect();
            let patch = GraphFunction::sample(Domain::rect(lo, hi)?, h, f.as_ref())?;
            let centre = vec![2usize; z.len()];
            graph::mean_curvature_standard(&patch, At::Node(&centre))?
        }
    };
    Ok((h - lambda).abs())
}

/// Nested leaves `U_r` around `center`: `U_r` is the region bounded by the
/// Pansu sphere with `λ = 1/r` translated to `center`.
#[derive(Debug, Clone)]
pub struct FoliationRegion {
    pub center: Point,
    pub r_inner: f64,
    pub r_outer: f64,
}

impl FoliationRegion {
    pub fn new(center: Point, r_inner: f64, r_outer: f64) -> Result<Self> {
        if !(r_inner > 0.0) {
            return Err(Error::NonPositive { what: "inner leaf radius", value: r_inner });
        }
        if !(r_outer >= r_inner) {
            return Err(Error::OutOfDomain { what: "outer leaf radius (must be ≥ inner)", value: r_outer });
        }
        Ok(FoliationRegion { center, r_inner, r_outer })
    }

    pub fn leaf(&self, r: f64) -> Result<PansuSphere> {
        if !(r > 0.0) {
            return Err(Error::NonPositive { what: "leaf radius", value: r });
        }
        PansuSphere::new(1.0 / r, self.center.clone())
    }

    /// Leaf radius through `q` (the `r` with `q ∈ F_r`).
    pub fn leaf_through(&self, q: &Point) -> Result<f64> {
        let local = group_mul(&group_inverse(&self.center), q);
        Ok(1.0 / foliation_lambda(&local)?)
    }
}

/// Result of [`deform_enlarge`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deformation {
    pub leaf_radius: f64,
    pub added_volume: f64,
    pub perimeter_change: f64,
}

impl Deformation {
    pub fn ratio(&self) -> f64 {
        self.perimeter_change / self.added_volume
    }
}

/// `Ẽ_r = E ∪ (U_r ∩ Eᶜ)` for the leaf region `U_r` of radius `r` around
/// `p`; returns `|Ẽ_r ∖ E|` and `P(Ẽ_r) − P(E)` from the voxel perimeter.
pub fn deform_enlarge(e: &VoxelSet, p: &Point, r: f64, sigma: usize, s: &ContactStructure) -> Result<Deformation> {
    let base = bv_perimeter(e, sigma, s)?;
    enlarge(e, base, p, r, sigma, s)
}

fn enlarge(e: &VoxelSet, base: f64, p: &Point, r: f64, sigma: usize, s: &ContactStructure) -> Result<Deformation> {
    if !e.contains_point(p) {
        return Err(Error::HypothesisViolated("leaf centre must lie in E".into()));
    }
    let leaf = FoliationRegion::new(p.clone(), r, r)?.leaf(r)?;
    let u = VoxelSet::pansu_ball(e.grid().clone(), &leaf);
    if u.touches_margin(mollifier_margin(sigma)) {
        return Err(Error::BallClipped { radius: r });
    }
    let added = u.difference(e)?;
    if added.is_empty() {
        return Err(Error::NoVolumeAdded);
    }
    let grown = e.union(&u)?;
    Ok(Deformation {
        leaf_radius: r,
        added_volume: added.riemannian_volume(s)?,
        perimeter_change: bv_perimeter(&grown, sigma, s)? - base,
    })
}

/// Empirical constant `C` in `ΔP ≤ C ΔV` over a set of leaf radii.
#[derive(Debug, Clone)]
pub struct DeformationFit {
    pub steps: Vec<Deformation>,
    /// `max ΔP/ΔV`.
    pub constant: f64,
    /// Least-squares slope of `ΔP` against `ΔV` through the origin.
    pub slope: f64,
    /// `max ΔP/ΔV / min ΔP/ΔV`.
    pub band: f64,
}

pub fn deformation_constant(
    e: &VoxelSet,
    p: &Point,
    radii: &[f64],
    sigma: usize,
    s: &ContactStructure,
) -> Result<DeformationFit> {
    if radii.is_empty() {
        return Err(Error::Degenerate("no leaf radii"));
    }
    let base = bv_perimeter(e, sigma, s)?;
    let steps = radii.iter().map(|&r| enlarge(e, base, p, r, sigma, s)).collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = steps.iter().map(Deformation::ratio).collect();
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let sxy: f64 = steps.iter().map(|d| d.added_volume * d.perimeter_change).sum();
    let sxx: f64 = steps.iter().map(|d| d.added_volume * d.added_volume).sum();
    Ok(DeformationFit { steps, constant: hi, slope: sxy / sxx, band: hi / lo })
}
