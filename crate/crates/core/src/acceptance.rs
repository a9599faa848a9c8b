//! The acceptance suite: ten numerical checks, each with its tolerance and
//! wall-clock budget. Used by the `acceptance` test target and by
//! `ccperim check`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::balls::{ahlfors_fit, Directions, HorizontalLattice};
use crate::contact::{ContactStructure, Point};
use crate::graph::{
    bump, first_variation_check, mean_curvature_standard, At, Domain, GraphFunction, HeightFunction,
    VariationField,
};
use crate::numerics::fit_power_law;
use crate::optimizer::{cmc_check, profile_curve, scaling_check, OptimizerConfig, ProfilePoint};
use crate::pansu::{cmc_residual, deformation_constant, profile, sphere_area, sphere_volume, CurvatureMode, PansuSphere};
use crate::perimeter::{
    bv_perimeter, lr_ratio, poincare_family, poincare_ratio, profile_upper, random_family, relative_isoperimetric_ratio,
    small_volume_ratio, Grid, UpperProfile, VoxelSet, DEFAULT_SIGMA,
};
use crate::Result;

pub const POLE_TOL: f64 = 1e-12;
pub const CMC_ANALYTIC_TOL: f64 = 1e-3;
pub const CMC_FD_TOL: f64 = 1e-2;
pub const CMC_FD_SPACING: f64 = 1.0 / 256.0;
pub const MINIMAL_PLANE_TOL: f64 = 1e-6;
pub const FIRST_VARIATION_TOL: f64 = 1e-3;
pub const FIRST_VARIATION_SPACING: f64 = 1.0 / 256.0;
pub const FIRST_VARIATION_PAIRS: usize = 20;
pub const SPHERE_TOL: f64 = 1e-3;
pub const AHLFORS_SLOPE_TOL: f64 = 0.1;
pub const AHLFORS_SPACING: f64 = 1.0 / 64.0;
pub const DOUBLING_MAX: f64 = 20.0;
pub const VOXEL_PERIMETER_TOL: f64 = 0.05;
pub const DEFORMATION_BAND_MAX: f64 = 2.0;
pub const DEFORMATION_DRIFT_MAX: f64 = 0.2;
pub const PROFILE_SLOPE_TOL: f64 = 0.05;
pub const PROFILE_PANSU_FACTOR: f64 = 1.02;
pub const PROFILE_CMC_SPREAD: f64 = 0.02;
pub const FAMILY_SIZE: usize = 20;
pub const FAMILY_SEED: u64 = 20_240_601;
pub const UPPER_PROFILE_SPREAD: f64 = 0.02;

/// Which checks to run. `Quick` is the full list of ten at the stated
/// tolerances; it is "quick" in the sense of fitting in a few minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Quick,
}

impl std::str::FromStr for Suite {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Suite::Quick),
            other => Err(crate::Error::Config(format!("unknown suite `{other}` (expected `quick`)"))),
        }
    }
}

/// Numerical verdict of one check, before timing is taken into account.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub budget: Duration,
    run: fn() -> Result<Verdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    /// Numerical check and runtime budget both met.
    pub passed: bool,
    pub numerics_ok: bool,
    pub elapsed_s: f64,
    pub budget_s: f64,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let slow = if self.numerics_ok && !self.passed { " over budget;" } else { "" };
        write!(
            f,
            "[{tag}] {:>2} {:<32} {:>8.3}s / {:>6.0}s{slow} {}",
            self.id, self.name, self.elapsed_s, self.budget_s, self.detail
        )
    }
}

pub fn criteria(suite: Suite) -> Vec<Criterion> {
    let Suite::Quick = suite;
    let c = |id, name, secs: f64, run| Criterion { id, name, budget: Duration::from_secs_f64(secs), run };
    vec![
        c(1, "pansu pole height", 1e-3, pole_height as fn() -> Result<Verdict>),
        c(2, "constant mean curvature", 5.0, constant_mean_curvature),
        c(3, "minimal plane", 1.0, minimal_plane),
        c(4, "first variation", 30.0, first_variation),
        c(5, "pansu area and volume", 5.0, pansu_area_volume),
        c(6, "ahlfors exponent", 120.0, ahlfors_exponent),
        c(7, "voxel perimeter", 60.0, voxel_perimeter),
        c(8, "deformation bound", 120.0, deformation_bound),
        c(9, "isoperimetric profile", 600.0, isoperimetric_profile),
        c(10, "inequality suites", 300.0, inequality_suites),
    ]
}

impl Criterion {
    pub fn run(&self) -> Outcome {
        let t0 = Instant::now();
        let verdict = (self.run)().unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        let elapsed = t0.elapsed();
        Outcome {
            id: self.id,
            name: self.name,
            passed: verdict.pass && elapsed <= self.budget,
            numerics_ok: verdict.pass,
            elapsed_s: elapsed.as_secs_f64(),
            budget_s: self.budget.as_secs_f64(),
            detail: verdict.detail,
        }
    }
}

/// Runs every check in order, calling `each` as results arrive.
pub fn run_suite(suite: Suite, mut each: impl FnMut(&Outcome)) -> Vec<Outcome> {
    criteria(suite)
        .iter()
        .map(|c| {
            let o = c.run();
            each(&o);
            o
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn pole_height() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    for l in [0.5, 1.0, 2.0] {
        worst = worst.max((profile(l, 0.0)? - PI / (4.0 * l * l)).abs());
    }
    Ok(Verdict::new(worst <= POLE_TOL, format!("max |u_λ(0) − π/4λ²| = {worst:.1e}")))
}

fn annulus(lambda: f64) -> Vec<[f64; 2]> {
    let mut pts = Vec::new();
    for i in 0..=18 {
        let r = (0.05 + 0.05 * i as f64) / lambda;
        for a in 0..8 {
            let th = 0.1 + a as f64 * PI / 8.0;
            pts.push([r * th.cos(), r * th.sin()]);
        }
    }
    pts
}

fn constant_mean_curvature() -> Result<Verdict> {
    let (mut analytic, mut fd): (f64, f64) = (0.0, 0.0);
    for l in [0.5, 1.0, 2.0] {
        for z in annulus(l) {
            analytic = analytic.max(cmc_residual(l, &z, CurvatureMode::Analytic)? / l);
            // spacing carried along by the dilation taking S_1 to S_λ
            let h = CMC_FD_SPACING / l;
            fd = fd.max(cmc_residual(l, &z, CurvatureMode::FiniteDifference { h })? / l);
        }
    }
    Ok(Verdict::new(
        analytic <= CMC_ANALYTIC_TOL && fd <= CMC_FD_TOL,
        format!("max |H−λ|/λ analytic {analytic:.1e}, finite differences {fd:.1e}"),
    ))
}

fn minimal_plane() -> Result<Verdict> {
    let zero: Arc<dyn HeightFunction> = Arc::new(|_: &[f64]| 0.0);
    let h = 1.0 / 64.0;
    let u = GraphFunction::from_analytic(Domain::disk(vec![0.0, 0.0], 1.25)?, h, zero)?;
    let grid = u.without_analytic();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for lin in 0..grid.node_count() {
        let z = grid.node_point(lin);
        let r = z[0].hypot(z[1]);
        if !(0.1..=1.0).contains(&r) {
            continue;
        }
        let idx = grid.multi_index(lin);
        worst = worst.max(mean_curvature_standard(&u, At::Node(&idx))?.abs());
        worst = worst.max(mean_curvature_standard(&grid, At::Node(&idx))?.abs());
        count += 1;
    }
    Ok(Verdict::new(worst <= MINIMAL_PLANE_TOL, format!("max |H(0)| = {worst:.1e} over {count} nodes")))
}

/// Seeded quadratic graphs over `[-1,1]²` with bump variations whose
/// support keeps `|∇u + F| ≥ 1/4`.
pub fn first_variation_pairs(seed: u64, count: usize, h: f64) -> Result<Vec<(GraphFunction, VariationField)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 50 * count {
            return Err(crate::Error::Degenerate("no admissible variation found"));
        }
        let c: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
        let center = [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)];
        let eps = rng.gen_range(0.2..0.4);
        let amp = rng.gen_range(0.5..1.5);
        // reject supports near the characteristic point, on the coefficients alone
        let far = (0..64).all(|k| {
            let a = k as f64 * PI / 32.0;
            (0..8).all(|j| {
                let rho = eps * j as f64 / 7.0;
                let (x, y) = (center[0] + rho * a.cos(), center[1] + rho * a.sin());
                let (ux, uy) = (c[1] + 2.0 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2.0 * c[5] * y);
                (ux - y).hypot(uy + x) >= 0.25
            })
        });
        if !far {
            continue;
        }
        let f: Arc<dyn HeightFunction> = Arc::new(move |z: &[f64]| {
            c[0] + c[1] * z[0] + c[2] * z[1] + c[3] * z[0] * z[0] + c[4] * z[0] * z[1] + c[5] * z[1] * z[1]
        });
        let u = GraphFunction::from_analytic(Domain::rect(vec![-1.0, -1.0], vec![1.0, 1.0])?, h, f)?;
        let v = VariationField::from_fn(&u, 2, |z| amp * bump(&center, eps, z).0)?;
        out.push((u, v));
    }
    Ok(out)
}

fn first_variation() -> Result<Verdict> {
    let s = ContactStructure::standard(1)?;
    let pairs = first_variation_pairs(FAMILY_SEED, FIRST_VARIATION_PAIRS, FIRST_VARIATION_SPACING)?;
    let mut worst: f64 = 0.0;
    for (u, v) in &pairs {
        let (lhs, rhs) = first_variation_check(u, v, &s)?;
        worst = worst.max(rel(rhs, lhs));
    }
    Ok(Verdict::new(worst <= FIRST_VARIATION_TOL, format!("max relative gap {worst:.1e} over {} pairs", pairs.len())))
}

fn pansu_area_volume() -> Result<Verdict> {
    let a = sphere_area(1.0, 1)?;
    let v = sphere_volume(1.0, 1)?;
    let (ea, ev) = (rel(a, PI * PI), rel(v, 3.0 * PI * PI / 8.0));
    let lambdas = [0.5, 0.75, 1.0, 1.5, 2.0];
    let mut areas = Vec::new();
    let mut vols = Vec::new();
    for l in lambdas {
        areas.push(sphere_area(l, 1)?);
        vols.push(sphere_volume(l, 1)?);
    }
    let (pa, _) = fit_power_law(&lambdas, &areas);
    let (pv, _) = fit_power_law(&lambdas, &vols);
    let (xa, xv) = (rel(-pa, 3.0), rel(-pv, 4.0));
    Ok(Verdict::new(
        ea.max(ev).max(xa).max(xv) <= SPHERE_TOL,
        format!("area err {ea:.1e}, volume err {ev:.1e}, exponents {:.5} and {:.5}", -pa, -pv),
    ))
}

fn ahlfors_exponent() -> Result<Verdict> {
    let s = ContactStructure::standard(1)?;
    let lattice = HorizontalLattice::for_radius(s, AHLFORS_SPACING, 2.0, Directions::Four)?;
    let field = lattice.distance_field(&Point::origin(1), 2.0)?;
    // lattice balls only grow at whole steps, so radii are multiples of ε
    let radii = step_radii(0.2, 1.0, AHLFORS_SPACING, 8);
    let vols = radii.iter().map(|&r| field.ball_volume(r)).collect::<Result<Vec<_>>>()?;
    let (slope, _) = ahlfors_fit(&radii, &vols);
    let mut doubling: f64 = 0.0;
    for (r, v) in radii.iter().zip(&vols) {
        doubling = doubling.max(field.ball_volume(2.0 * r)? / v);
    }
    Ok(Verdict::new(
        (slope - 4.0).abs() <= AHLFORS_SLOPE_TOL && doubling <= DOUBLING_MAX,
        format!("slope {slope:.4}, max doubling ratio {doubling:.3}"),
    ))
}

/// About `count` radii, geometrically spaced in `[lo, hi]`, each a whole
/// number of steps `eps`.
pub fn step_radii(lo: f64, hi: f64, eps: f64, count: usize) -> Vec<f64> {
    let (k0, k1) = ((lo / eps).ceil(), (hi / eps).floor());
    let mut ks: Vec<f64> =
        (0..count).map(|i| (k0 * (k1 / k0).powf(i as f64 / (count - 1) as f64)).round()).collect();
    ks.dedup();
    ks.into_iter().map(|k| k * eps).collect()
}

fn pansu_perimeter_error(h: f64) -> Result<f64> {
    let s = ContactStructure::standard(1)?;
    let grid = Grid::around(1, 1.0, PI / 4.0, h, DEFAULT_SIGMA)?;
    let ball = VoxelSet::pansu_ball(grid, &PansuSphere::centered(1.0, 1)?);
    Ok(rel(bv_perimeter(&ball, DEFAULT_SIGMA, &s)?, PI * PI))
}

fn voxel_perimeter() -> Result<Verdict> {
    let coarse = pansu_perimeter_error(1.0 / 64.0)?;
    let fine = pansu_perimeter_error(1.0 / 128.0)?;
    Ok(Verdict::new(
        coarse <= VOXEL_PERIMETER_TOL && fine < coarse,
        format!("relative error {coarse:.2e} at h=1/64, {fine:.2e} at h=1/128"),
    ))
}

/// Concentric leaves `1.05·(1 + 0.05 i)`, a factor 1.2 apart end to end.
pub fn deformation_radii() -> Vec<f64> {
    (0..5).map(|i| 1.05 * (1.0 + 0.05 * i as f64)).collect()
}

fn deformation_at(h: f64) -> Result<(f64, f64)> {
    let s = ContactStructure::standard(1)?;
    let radii = deformation_radii();
    let rmax = radii[radii.len() - 1];
    let grid = Grid::around(1, rmax, PI / 4.0 * rmax * rmax, h, DEFAULT_SIGMA)?;
    let e = VoxelSet::pansu_ball(grid, &PansuSphere::centered(1.0, 1)?);
    let fit = deformation_constant(&e, &Point::origin(1), &radii, DEFAULT_SIGMA, &s)?;
    Ok((fit.constant, fit.band))
}

fn deformation_bound() -> Result<Verdict> {
    let (c0, b0) = deformation_at(1.0 / 32.0)?;
    let (c1, b1) = deformation_at(1.0 / 64.0)?;
    let drift = rel(c1, c0);
    Ok(Verdict::new(
        b0.max(b1) <= DEFORMATION_BAND_MAX && drift <= DEFORMATION_DRIFT_MAX,
        format!("C = {c0:.4} → {c1:.4} (drift {drift:.1e}), band {b0:.3} / {b1:.3}"),
    ))
}

fn isoperimetric_profile() -> Result<Verdict> {
    let v1 = 3.0 * PI * PI / 8.0;
    let volumes: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|k| k * v1).collect();
    let runs = profile_curve(&volumes, &OptimizerConfig::default())?;
    let points: Vec<ProfilePoint> = runs.iter().map(|r| r.0.clone()).collect();
    let report = scaling_check(&points)?;
    // Pansu perimeter at matched volume: π² (v/v₁)^{3/4}
    let worst = points
        .iter()
        .filter(|p| p.converged)
        .map(|p| p.p / (PI * PI * (p.v / v1).powf(0.75)))
        .fold(0.0, f64::max);
    let unit = runs.iter().find(|r| (r.0.v - v1).abs() < 1e-12 * v1).map(|r| &r.1);
    let cmc = match unit {
        Some(prof) => cmc_check(prof, 0.1, 0.9, 41)?,
        None => return Ok(Verdict::new(false, "no profile at the unit volume")),
    };
    Ok(Verdict::new(
        (report.exponent - 0.75).abs() <= PROFILE_SLOPE_TOL
            && report.excluded == 0
            && worst <= PROFILE_PANSU_FACTOR
            && cmc.spread <= PROFILE_CMC_SPREAD,
        format!(
            "slope {:.5}, max P/P_pansu {worst:.6}, CMC spread {:.1e}, {} of {} converged",
            report.exponent,
            cmc.spread,
            report.used,
            points.len()
        ),
    ))
}

/// Fitted constants of the inequality suites.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityConstants {
    /// `min P(E, B)/min(|E∩B|, |Eᶜ∩B|)^{3/4}` over the family.
    pub relative: f64,
    /// `min P(E)/|E|^{3/4}`.
    pub small_volume: f64,
    /// `min m P(E)^Q/|E|^Q`.
    pub lr: f64,
    /// `max ∫|u − u_B| / (r ∫|∇_h u|)` over functions, centres and radii.
    pub poincare: f64,
    /// Mean of `profile_upper(v)/v^{3/4}` over two decades.
    pub upper: f64,
    /// `max/min − 1` of the same quotient.
    pub upper_spread: f64,
    pub sets: usize,
    pub functions: usize,
}

pub fn inequality_constants() -> Result<InequalityConstants> {
    let s = ContactStructure::standard(1)?;
    let sigma = DEFAULT_SIGMA;
    let q = s.isoperimetric_exponent();

    // relative inequality: random sets filling the box of B(0, r)
    let (x, r, eta) = (Point::origin(1), 0.5, 1.0 / 32.0);
    let ball_grid = Grid::for_ball(&x, r, eta, 0.25, sigma)?;
    let ball_lattice = HorizontalLattice::for_radius(s.clone(), r * eta / 2.0, r, Directions::Four)?;
    let mut relative = f64::INFINITY;
    let mut used = 0;
    for e in random_family(FAMILY_SEED, 2 * FAMILY_SIZE, &ball_grid) {
        match relative_isoperimetric_ratio(&e, &x, r, &ball_lattice, sigma) {
            Ok(rr) => {
                relative = relative.min(rr.ratio);
                used += 1;
            }
            Err(crate::Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
        if used == FAMILY_SIZE {
            break;
        }
    }
    if used < FAMILY_SIZE {
        return Err(crate::Error::Degenerate("too few sets meet both the ball and its complement"));
    }

    // global ratios on sets in a unit box
    let grid = Grid::around(1, 1.0, 0.5, 1.0 / 32.0, sigma)?;
    let family = random_family(FAMILY_SEED + 1, FAMILY_SIZE, &grid);
    let coarse = HorizontalLattice::for_radius(s.clone(), 1.0 / 16.0, 2.5, Directions::Four)?;
    let balls = coarse.distance_field(&Point::origin(1), 2.5)?;
    let mut small_volume = f64::INFINITY;
    let mut lr = f64::INFINITY;
    for e in &family {
        small_volume = small_volume.min(small_volume_ratio(e, sigma, &s)?);
        // m just above |E|, and the smallest r₀ on the lattice with |B(r₀)| > 2m
        let m = 1.05 * e.volume();
        let mut r0 = coarse.eps();
        while balls.ball_volume(r0)? <= 2.1 * m {
            r0 += coarse.eps();
        }
        lr = lr.min(lr_ratio(e, m, r0, &coarse, 4, sigma)?.ratio);
    }

    // Poincaré: ten functions, two centres, radii in [0.1, 0.5]
    let fine = HorizontalLattice::for_radius(s.clone(), 1.0 / 64.0, 0.5, Directions::Four)?;
    let centres = [Point::origin(1), Point::new(vec![0.3, -0.2], 0.1)?];
    let functions = poincare_family();
    let mut poincare: f64 = 0.0;
    for (_, f) in &functions {
        for c in &centres {
            for k in 1..=5 {
                let ratio = poincare_ratio(f, c, 0.1 * k as f64, &fine)?;
                poincare = poincare.max(ratio);
            }
        }
    }

    // profile upper bound over two decades
    let upper = UpperProfile::new(s.clone(), 1.0 / 32.0, 32, sigma)?;
    let scaled = [0.01, 0.0316, 0.1, 0.316, 1.0]
        .iter()
        .map(|v| Ok(profile_upper(*v, &upper)? / v.powf(q)))
        .collect::<Result<Vec<f64>>>()?;
    let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);

    Ok(InequalityConstants {
        relative,
        small_volume,
        lr,
        poincare,
        upper: scaled.iter().sum::<f64>() / scaled.len() as f64,
        upper_spread: hi / lo - 1.0,
        sets: FAMILY_SIZE,
        functions: functions.len(),
    })
}

fn inequality_suites() -> Result<Verdict> {
    let c = inequality_constants()?;
    let bounded = [c.relative, c.small_volume, c.lr].iter().all(|v| v.is_finite() && *v > 0.0)
        && c.poincare.is_finite()
        && c.poincare > 0.0;
    Ok(Verdict::new(
        bounded && c.upper_spread <= UPPER_PROFILE_SPREAD,
        format!(
            "C_I {:.3}, small-volume {:.3}, LR {:.3}, C_P {:.3}, upper profile {:.4} (spread {:.1e})",
            c.relative, c.small_volume, c.lr, c.poincare, c.upper, c.upper_spread
        ),
    ))
}
