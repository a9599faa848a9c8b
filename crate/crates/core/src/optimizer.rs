//! Volume-constrained perimeter minimization over axisymmetric double
//! graphs `{|t| ≤ u(|z|)}` in the first Heisenberg group.
//!
//! For radial `u` the horizontal gradient `u′ z/|z|` is orthogonal to
//! `F(z)`, so `|∇u + F|² = u′² + r²` and
//! `P = 2·2π ∫₀^R √(u′² + r²) r dr`, `V = 2·2π ∫₀^R u r dr`.
//! On a piecewise-linear `u` both integrals are exact per cell:
//! with slope `a` on `[r₀, r₁]`,
//! `∫ √(a² + r²) r dr = ((a² + r₁²)^{3/2} − (a² + r₀²)^{3/2}) / 3`.
//!
//! The descent minimizes the dilation-invariant quotient `J = P / V^{3/4}`
//! with a Newton-like direction (a tridiagonal majorizer of the Hessian of
//! `P`, the lagged-diffusivity matrix of total-variation solvers),
//! Armijo backtracking, projection onto `u ≥ 0`, and after each accepted
//! step the dilation `(R, u) ↦ (λR, λ²u)` that restores `V = v`. Since `J`
//! is unchanged by the dilation, the perimeter never increases across
//! accepted steps.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::ContactStructure;
use crate::error::{Error, Result};
use crate::graph::{self, Domain, GraphFunction, HeightFunction};
use crate::numerics::{fit_power_law, solve_tridiagonal, CubicSpline};
use crate::pansu;

/// Exponent `q = 3/4` of `ℍ¹`.
const Q_EXP: f64 = 0.75;

/// Maximum relative discrepancy accepted when validating the 1-D reduction
/// against the 2-D area.
pub const REDUCTION_TOLERANCE: f64 = 5e-3;
/// Grid spacing of the 2-D validation.
pub const REDUCTION_GRID: f64 = 1.0 / 128.0;

/// Radial profile on `r_i = R s_i`, `0 = s_0 < … < s_N = 1`, with `u_N = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiProfile {
    pub radius: f64,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
}

/// `s_i = sin(πi/2N)`: nodes cluster at the rim, where `u′` blows up.
pub fn rim_grid(nodes: usize) -> Vec<f64> {
    let n = nodes - 1;
    (0..nodes).map(|i| if i == n { 1.0 } else { (0.5 * PI * i as f64 / n as f64).sin() }).collect()
}

impl AxiProfile {
    pub fn new(radius: f64, s: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::NonPositive { what: "outer radius", value: radius });
        }
        if s.len() < 3 || u.len() != s.len() {
            return Err(Error::DimensionMismatch { expected: s.len().max(3), got: u.len() });
        }
        if s[0] != 0.0 || *s.last().unwrap() != 1.0 || s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("profile grid must increase strictly from 0 to 1".into()));
        }
        if let Some(bad) = u.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::OutOfDomain { what: "profile value (must be finite and ≥ 0)", value: *bad });
        }
        if *u.last().unwrap() != 0.0 {
            return Err(Error::OutOfDomain { what: "profile value at the rim", value: *u.last().unwrap() });
        }
        Ok(AxiProfile { radius, s, u })
    }

    /// Samples `f(r)` on the rim grid; the last value is forced to zero.
    pub fn from_fn(radius: f64, nodes: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::NonPositive { what: "node count (at least 3)", value: nodes as f64 });
        }
        let s = rim_grid(nodes);
        let mut u: Vec<f64> = s.iter().map(|si| f(radius * si)).collect();
        *u.last_mut().unwrap() = 0.0;
        AxiProfile::new(radius, s, u)
    }

    /// The Pansu profile `u_λ` on `[0, 1/λ]`.
    pub fn pansu(lambda: f64, nodes: usize) -> Result<Self> {
        AxiProfile::from_fn(1.0 / lambda, nodes, |r| pansu::profile(lambda, r.min(1.0 / lambda)).unwrap_or(0.0))
    }

    pub fn nodes(&self) -> usize {
        self.s.len()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.s.iter().map(|s| s * self.radius).collect()
    }

    /// `(R, u) ↦ (λR, λ²u)`.
    pub fn dilate(&self, lambda: f64) -> AxiProfile {
        AxiProfile { radius: self.radius * lambda, s: self.s.clone(), u: self.u.iter().map(|v| v * lambda * lambda).collect() }
    }

    /// Dilation to volume `v`.
    pub fn with_volume(&self, v: f64) -> Result<AxiProfile> {
        let current = axi_volume(self);
        if !(current > 0.0) {
            return Err(Error::Degenerate("profile encloses no volume"));
        }
        Ok(self.dilate((v / current).powf(0.25)))
    }

    /// Natural cubic spline of `u(r)`.
    pub fn spline(&self) -> CubicSpline {
        CubicSpline::natural(self.radii(), self.u.clone())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "u"])?;
        for (r, u) in self.radii().iter().zip(&self.u) {
            w.write_record([format!("{r:?}"), format!("{u:?}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut rs = Vec::new();
        let mut us = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("profile rows need 2 columns, got {}", rec.len())));
            }
            let parse = |i: usize| rec[i].trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{}'", &rec[i])));
            rs.push(parse(0)?);
            us.push(parse(1)?);
        }
        let radius = *rs.last().ok_or_else(|| Error::Parse("empty profile".into()))?;
        if !(radius > 0.0) {
            return Err(Error::NonPositive { what: "outer radius", value: radius });
        }
        let mut s: Vec<f64> = rs.iter().map(|r| r / radius).collect();
        *s.last_mut().unwrap() = 1.0;
        AxiProfile::new(radius, s, us)
    }
}

/// Per-cell data of the piecewise-linear functional.
struct Energy {
    p: f64,
    v: f64,
    grad_p: Vec<f64>,
    grad_v: Vec<f64>,
    /// Tridiagonal majorizer of the Hessian of `P`: diagonal and
    /// off-diagonal.
    h_diag: Vec<f64>,
    h_off: Vec<f64>,
}

fn energy(r: &[f64], u: &[f64]) -> Energy {
    let n = r.len();
    let mut e = Energy {
        p: 0.0,
        v: 0.0,
        grad_p: vec![0.0; n],
        grad_v: vec![0.0; n],
        h_diag: vec![0.0; n],
        h_off: vec![0.0; n - 1],
    };
    let (mut ps, mut vs) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n - 1 {
        let (r0, r1) = (r[k], r[k + 1]);
        let dr = r1 - r0;
        let a = (u[k + 1] - u[k]) / dr;
        let (q0, q1) = ((a * a + r0 * r0).sqrt(), (a * a + r1 * r1).sqrt());
        // q₁ − q₀ without cancellation on steep cells
        let dq = (r1 - r0) * (r1 + r0) / (q1 + q0);
        ps.push(4.0 * PI * dq * (q1 * q1 + q1 * q0 + q0 * q0) / 3.0);
        let dp_da = 4.0 * PI * a * dq;
        e.grad_p[k] -= dp_da / dr;
        e.grad_p[k + 1] += dp_da / dr;
        // φ′(a)/a ≥ φ″(a) for the cell term φ: a positive majorizer of the
        // curvature that stays away from 0 on steep cells
        let c = 4.0 * PI * dq / (dr * dr);
        e.h_diag[k] += c;
        e.h_diag[k + 1] += c;
        e.h_off[k] -= c;
        // ∫ ξ r dr and ∫ (1 − ξ) r dr with ξ = (r − r₀)/Δr
        let w1 = ((r1.powi(3) - r0.powi(3)) / 3.0 - r0 * (r1 * r1 - r0 * r0) / 2.0) / dr;
        let w0 = (r1 * r1 - r0 * r0) / 2.0 - w1;
        vs.push(4.0 * PI * (u[k] * w0 + u[k + 1] * w1));
        e.grad_v[k] += 4.0 * PI * w0;
        e.grad_v[k + 1] += 4.0 * PI * w1;
    }
    e.p = crate::numerics::stable_sum(ps);
    e.v = crate::numerics::stable_sum(vs);
    e
}

/// `2·2π ∫₀^R |w| r dr` with `|w|² = u′² + r²`, exact on the piecewise-linear
/// interpolant. `u ≡ 0` describes a null set, whose perimeter is 0 (the two
/// sheets coincide).
pub fn axi_perimeter(u: &AxiProfile) -> f64 {
    if u.u.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    energy(&u.radii(), &u.u).p
}

/// `2·2π ∫₀^R u r dr`.
pub fn axi_volume(u: &AxiProfile) -> f64 {
    energy(&u.radii(), &u.u).v
}

/// Radial height `u(|z|)` with analytic derivatives from `(u, u′, u″)(r)`.
pub struct RadialHeight<F: Fn(f64) -> (f64, f64, f64) + Send + Sync>(pub F);

impl<F: Fn(f64) -> (f64, f64, f64) + Send + Sync> HeightFunction for RadialHeight<F> {
    fn value(&self, z: &[f64]) -> f64 {
        (self.0)(norm(z)).0
    }
    fn gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let r = norm(z);
        if r == 0.0 {
            return Some(vec![0.0; z.len()]);
        }
        let d = (self.0)(r).1;
        Some(z.iter().map(|v| d * v / r).collect())
    }
    fn hessian(&self, z: &[f64]) -> Option<DMatrix<f64>> {
        let r = norm(z);
        let (_, d, dd) = (self.0)(r);
        let m = z.len();
        if r == 0.0 {
            return Some(DMatrix::identity(m, m) * dd);
        }
        // u″ ẑẑᵀ + (u′/r)(I − ẑẑᵀ)
        Some(DMatrix::from_fn(m, m, |i, j| {
            let zz = z[i] * z[j] / (r * r);
            dd * zz + d / r * (if i == j { 1.0 } else { 0.0 } - zz)
        }))
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest relative gap between `2·area()` of the 2-D graph over the unit
/// disk and the 1-D reduction, over three radial profiles with finite slope
/// at the rim (an infinite rim slope, as for `u_λ`, slows the 2-D
/// quadrature to `O(√h)`).
pub fn validate_reduction(h: f64, nodes: usize) -> Result<f64> {
    let s = ContactStructure::standard(1)?;
    let disk = Domain::disk(vec![0.0, 0.0], 1.0)?;
    let cases: [fn(f64) -> (f64, f64, f64); 3] = [
        |r| (0.5 * (1.0 - r * r).powi(2), -2.0 * r * (1.0 - r * r), -2.0 + 6.0 * r * r),
        |r| (0.4 * (1.0 - r * r), -0.8 * r, -0.8),
        |r| {
            let c = (0.5 * PI * r).cos();
            let sn = (0.5 * PI * r).sin();
            (0.3 * c * (1.0 + r * r), 0.3 * (-0.5 * PI * sn * (1.0 + r * r) + 2.0 * r * c),
             0.3 * (-0.25 * PI * PI * c * (1.0 + r * r) - 2.0 * PI * r * sn + 2.0 * c))
        },
    ];
    let mut worst = 0.0f64;
    for f in cases {
        let g = GraphFunction::from_analytic(disk.clone(), h, Arc::new(RadialHeight(f)))?;
        let two_d = 2.0 * graph::area(&g, &s)?;
        let one_d = axi_perimeter(&AxiProfile::from_fn(1.0, nodes, |r| f(r).0)?);
        worst = worst.max((two_d - one_d).abs() / one_d);
    }
    Ok(worst)
}

static VALIDATION: OnceLock<std::result::Result<f64, f64>> = OnceLock::new();

/// Runs [`validate_reduction`] once per process; fails with
/// [`Error::ReductionMismatch`] above [`REDUCTION_TOLERANCE`].
pub fn ensure_reduction_validated() -> Result<f64> {
    let outcome = VALIDATION.get_or_init(|| match validate_reduction(REDUCTION_GRID, 512) {
        Ok(gap) if gap <= REDUCTION_TOLERANCE => Ok(gap),
        Ok(gap) => Err(gap),
        Err(_) => Err(f64::NAN),
    });
    outcome.map_err(|gap| Error::ReductionMismatch { discrepancy: gap })
}

/// Initial shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Euclidean spherical cap `√(R² − r²)`.
    #[default]
    Cap,
    /// Cone `R − r`.
    Cone,
    /// A given profile, resampled.
    #[serde(skip)]
    Profile(AxiProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub nodes: usize,
    /// Tolerance on the Newton decrement `√(gᵀH⁻¹g)/J`.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
    pub armijo: f64,
    pub init: Init,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { nodes: 512, tol: 1e-6, max_iter: 100_000, initial_step: 1.0, armijo: 1e-4, init: Init::Cap }
    }
}

impl OptimizerConfig {
    /// Smallest admissible target volume `(10h)³` with `h = 1/(nodes − 1)`.
    pub fn volume_floor(&self) -> f64 {
        (10.0 / (self.nodes as f64 - 1.0)).powi(3)
    }
}

/// Iteration log of [`optimize_traced`].
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// Perimeter after each accepted step (index 0: initial profile).
    pub perimeters: Vec<f64>,
    /// Relative volume error after each renormalization.
    pub volume_errors: Vec<f64>,
    pub decrement: f64,
}

fn initial_profile(v: f64, cfg: &OptimizerConfig) -> Result<AxiProfile> {
    let base = match &cfg.init {
        Init::Cap => AxiProfile::from_fn(1.0, cfg.nodes, |r| (1.0 - r * r).max(0.0).sqrt())?,
        Init::Cone => AxiProfile::from_fn(1.0, cfg.nodes, |r| 1.0 - r)?,
        Init::Profile(p) => {
            let spline = p.spline();
            AxiProfile::from_fn(p.radius, cfg.nodes, |r| spline.eval(r).0.max(0.0))?
        }
    };
    base.with_volume(v)
}

/// Minimizes the perimeter at volume `v` over the axisymmetric class.
pub fn optimize(v: f64, cfg: &OptimizerConfig) -> Result<AxiProfile> {
    optimize_traced(v, cfg).map(|(p, _)| p)
}

pub fn optimize_traced(v: f64, cfg: &OptimizerConfig) -> Result<(AxiProfile, Trace)> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::NonPositive { what: "target volume", value: v });
    }
    if cfg.nodes < 8 {
        return Err(Error::NonPositive { what: "node count (at least 8)", value: cfg.nodes as f64 });
    }
    if !(cfg.tol > 0.0) || !(cfg.initial_step > 0.0) || !(cfg.armijo > 0.0 && cfg.armijo < 1.0) {
        return Err(Error::Config("tol and initial_step must be positive, armijo in (0, 1)".into()));
    }
    let floor = cfg.volume_floor();
    if v < floor {
        return Err(Error::VolumeTooSmall { volume: v, floor });
    }
    ensure_reduction_validated()?;
    let mut prof = initial_profile(v, cfg)?;
    let mut trace = Trace::default();
    let free = prof.nodes() - 1;
    let mut r = prof.radii();
    let mut e = energy(&r, &prof.u);
    trace.perimeters.push(e.p);
    trace.volume_errors.push((e.v - v).abs() / v);
    for iter in 0..cfg.max_iter {
        let scale = e.v.powf(Q_EXP);
        let j = e.p / scale;
        let g: Vec<f64> = (0..free).map(|i| e.grad_p[i] / scale - Q_EXP * j / e.v * e.grad_v[i]).collect();
        // nodes pinned at u = 0 by the projection stay out of the step
        let pinned: Vec<bool> = (0..free).map(|i| prof.u[i] <= 0.0 && g[i] > 0.0).collect();
        let mut diag: Vec<f64> = e.h_diag[..free].iter().map(|d| d / scale).collect();
        let mut lower = vec![0.0; free];
        let mut upper = vec![0.0; free];
        for i in 0..free - 1 {
            let off = if pinned[i] || pinned[i + 1] { 0.0 } else { e.h_off[i] / scale };
            upper[i] = off;
            lower[i + 1] = off;
        }
        let rhs: Vec<f64> = (0..free).map(|i| if pinned[i] { 0.0 } else { -g[i] }).collect();
        for (i, p) in pinned.iter().enumerate() {
            if *p {
                diag[i] = 1.0;
            }
        }
        let mut d = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        let mut slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            // fall back to the gradient in the lumped volume metric
            d = (0..free).map(|i| if pinned[i] { 0.0 } else { -g[i] / e.grad_v[i].max(f64::MIN_POSITIVE) }).collect();
            slope = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        }
        let decrement = (-slope).max(0.0).sqrt() / j;
        trace.decrement = decrement;
        if decrement < cfg.tol {
            return Ok((prof, trace));
        }
        if !(slope < 0.0) {
            return Err(not_converged(iter, decrement, prof));
        }
        let mut step = cfg.initial_step;
        let accepted = loop {
            let trial: Vec<f64> = (0..=free).map(|i| if i < free { (prof.u[i] + step * d[i]).max(0.0) } else { 0.0 }).collect();
            let te = energy(&r, &trial);
            if te.v > 0.0 {
                let tj = te.p / te.v.powf(Q_EXP);
                if tj <= j + cfg.armijo * step * slope {
                    break Some(trial);
                }
            }
            step *= 0.5;
            if step < 1e-14 {
                break None;
            }
        };
        let Some(u_new) = accepted else {
            // no decrease left at double precision
            if decrement < cfg.tol.sqrt() {
                return Ok((prof, trace));
            }
            return Err(not_converged(iter, decrement, prof));
        };
        prof = AxiProfile { radius: prof.radius, s: prof.s.clone(), u: u_new }.with_volume(v)?;
        r = prof.radii();
        e = energy(&r, &prof.u);
        trace.perimeters.push(e.p);
        trace.volume_errors.push((e.v - v).abs() / v);
    }
    Err(not_converged(cfg.max_iter, trace.decrement, prof))
}

fn not_converged(iterations: usize, gradient_norm: f64, last: AxiProfile) -> Error {
    Error::NotConverged { iterations, gradient_norm, last: Box::new(last) }
}

/// One point of the numerical isoperimetric profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub v: f64,
    pub p: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Optimizes every volume independently (in parallel); non-converged runs
/// are kept with `converged = false`.
pub fn profile_curve(volumes: &[f64], cfg: &OptimizerConfig) -> Result<Vec<(ProfilePoint, AxiProfile)>> {
    ensure_reduction_validated()?;
    volumes
        .par_iter()
        .map(|&v| match optimize_traced(v, cfg) {
            Ok((prof, trace)) => {
                let p = axi_perimeter(&prof);
                Ok((ProfilePoint { v, p, iterations: trace.perimeters.len() - 1, converged: true }, prof))
            }
            Err(Error::NotConverged { iterations, last, .. }) => {
                Ok((ProfilePoint { v, p: axi_perimeter(&last), iterations, converged: false }, *last))
            }
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    /// Log–log slope of `P` against `v`.
    pub exponent: f64,
    pub prefactor: f64,
    /// Largest `|P_j − (v_j/v_i)^{3/4} P_i| / P_j` over pairs.
    pub pairwise_error: f64,
    /// `(max − min)/mean` of `P/v^{3/4}`.
    pub ratio_spread: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Fits the scaling law on the converged points (at least 4, spanning a
/// decade).
pub fn scaling_check(points: &[ProfilePoint]) -> Result<ScalingReport> {
    let good: Vec<&ProfilePoint> = points.iter().filter(|p| p.converged).collect();
    if good.len() < 4 {
        return Err(Error::HypothesisViolated(format!("need ≥ 4 converged volumes, have {}", good.len())));
    }
    let lo = good.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
    let hi = good.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::HypothesisViolated(format!("volumes span {:.3} < one decade", hi / lo)));
    }
    let vs: Vec<f64> = good.iter().map(|p| p.v).collect();
    let ps: Vec<f64> = good.iter().map(|p| p.p).collect();
    let (exponent, prefactor) = fit_power_law(&vs, &ps);
    let mut pairwise_error = 0.0f64;
    for a in &good {
        for b in &good {
            let predicted = (b.v / a.v).powf(Q_EXP) * a.p;
            pairwise_error = pairwise_error.max((b.p - predicted).abs() / b.p);
        }
    }
    let ratios: Vec<f64> = good.iter().map(|p| p.p / p.v.powf(Q_EXP)).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = (ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ratios.iter().cloned().fold(f64::INFINITY, f64::min))
        / mean;
    Ok(ScalingReport { exponent, prefactor, pairwise_error, ratio_spread: spread, used: good.len(), excluded: points.len() - good.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmcReport {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `(max − min)/mean` over the annulus.
    pub spread: f64,
    /// `R · H̄`, which is 1 for a Pansu sphere.
    pub radius_times_curvature: f64,
}

/// Mean curvature of the spline-resampled graph over the annulus
/// `a R ≤ |z| ≤ b R`, sampled at `samples` radii.
pub fn cmc_check(prof: &AxiProfile, a: f64, b: f64, samples: usize) -> Result<CmcReport> {
    if !(0.0 < a && a < b && b < 1.0) || samples < 2 {
        return Err(Error::OutOfDomain { what: "annulus bounds (need 0 < a < b < 1)", value: a });
    }
    let spline = prof.spline();
    let radius = prof.radius;
    let height = Arc::new(RadialHeight(move |r: f64| spline.eval(r)));
    let u = GraphFunction::from_analytic(Domain::disk(vec![0.0, 0.0], radius)?, radius / 16.0, height)?;
    let hs: Vec<f64> = (0..samples)
        .map(|k| {
            let r = radius * (a + (b - a) * k as f64 / (samples - 1) as f64);
            graph::mean_curvature_standard(&u, graph::At::Point(&[r, 0.0]))
        })
        .collect::<Result<_>>()?;
    let mean = hs.iter().sum::<f64>() / hs.len() as f64;
    let min = hs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(CmcReport { mean, min, max, spread: (max - min) / mean.abs(), radius_times_curvature: radius * mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pansu_profile_reproduces_oracles() {
        let p = AxiProfile::pansu(1.0, 512).unwrap();
        assert!((axi_perimeter(&p) / (PI * PI) - 1.0).abs() < 1e-3);
        assert!((axi_volume(&p) / (3.0 * PI * PI / 8.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_profile_is_empty() {
        let p = AxiProfile::from_fn(1.0, 16, |_| 0.0).unwrap();
        assert_eq!(axi_perimeter(&p), 0.0);
        assert_eq!(axi_volume(&p), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = AxiProfile::from_fn(1.3, 12, |r| (1.69 - r * r).sqrt() * 0.7).unwrap();
        let r = p.radii();
        let e = energy(&r, &p.u);
        for i in [0, 3, 10] {
            let h = 1e-6;
            let mut up = p.u.clone();
            up[i] += h;
            let mut dn = p.u.clone();
            dn[i] -= h;
            let (ep, ed) = (energy(&r, &up), energy(&r, &dn));
            assert!(((ep.p - ed.p) / (2.0 * h) - e.grad_p[i]).abs() < 1e-6);
            assert!(((ep.v - ed.v) / (2.0 * h) - e.grad_v[i]).abs() < 1e-8);
            // the diagonal majorizes the true curvature of P
            let fd = (ep.grad_p[i] - ed.grad_p[i]) / (2.0 * h);
            assert!(e.h_diag[i] >= fd - 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = AxiProfile::pansu(2.0, 9).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = AxiProfile::read_csv(buf.as_slice()).unwrap();
        assert!((back.radius - p.radius).abs() < 1e-15);
        assert_eq!(back.u, p.u);
    }
}
