//! The `ccperim` command line.
//!
//! Every subcommand writes one CSV table (to `--output`, default stdout)
//! and, with `--json`, a JSON summary. Output is assembled in memory and
//! written only on success. A `--config` TOML file may hold the global
//! options at top level and each subcommand's options in a table named
//! after it; flags given on the command line win.
//!
//! Exit codes: 0 success, 1 rejected input, 2 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::acceptance::{run_suite, step_radii, Suite};
use crate::balls::{ahlfors_fit, Directions, HorizontalLattice};
use crate::contact::{ContactStructure, Point, StructureConfig};
use crate::graph::{self, standard_curvature_from, Domain, GraphFunction, HeightFunction};
use crate::optimizer::{profile_curve, scaling_check, AxiProfile, Init, OptimizerConfig, ProfilePoint};
use crate::pansu::{profile, profile_derivative, profile_gradient, profile_hessian, sphere_area, sphere_volume, PansuGraph};
use crate::perimeter::{bv_perimeter, random_family, Grid, VoxelSet, DEFAULT_SIGMA};
use crate::{Error, Result};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "CCPERIM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ccperim", version, about = "Isoperimetric experiments in contact sub-Riemannian model spaces")]
struct Cli {
    /// TOML file with defaults for any option; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV output path (default: stdout).
    #[arg(short, long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Also write a JSON summary here.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Seed for randomized inputs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the Pansu profile u_λ, its slope and mean curvature.
    Pansu(PansuArgs),
    /// Sub-Riemannian area of a graph.
    Area(SurfaceArgs),
    /// Pointwise mean curvature report of a graph.
    Meancurv(SurfaceArgs),
    /// Volumes of lattice metric balls.
    Ballvol(BallArgs),
    /// Volume and perimeter of a voxel set.
    Perimeter(PerimeterArgs),
    /// Numerical isoperimetric profile from the axisymmetric optimizer.
    Profile(ProfileArgs),
    /// Run the acceptance suite.
    Check(CheckArgs),
}

/// Global options as they may appear at the top of a config file.
#[derive(Debug, Default, Deserialize)]
struct Globals {
    output: Option<PathBuf>,
    json: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PansuArgs {
    /// Curvature λ > 0.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// Number of equally spaced radii in [0, 1/λ] (at least 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    /// Dimension parameter n of the group.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Surface {
    /// Upper hemisphere of the Pansu sphere over the disk of radius 1/λ.
    Pansu,
    /// The plane t = 0 over the disk of radius `--radius`.
    Plane,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SurfaceArgs {
    /// Built-in surface (ignored with `--graph`).
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    surface: Option<Surface>,
    /// Graph CSV (columns: node indices, coordinates, u).
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    graph: Option<PathBuf>,
    /// Curvature of the Pansu surface.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// Disk radius of the plane.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    /// Grid spacing of built-in surfaces.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    /// Use grid values and finite differences only.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_only: Option<bool>,
    /// Horizontal metric: standard, diagonal(d1,...,d2n) or file:<path>.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<String>,
    /// Report every k-th node per axis (meancurv).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    /// Bump radius for curvature under a general metric (default 8h).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bump: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dirs {
    Four,
    Eight,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct BallArgs {
    /// Smallest radius.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    r_min: Option<f64>,
    /// Largest radius.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    r_max: Option<f64>,
    /// Number of geometrically spaced radii, rounded to whole lattice steps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    /// Lattice node spacing (the step length equals it).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    /// Lattice step ε (alias of `--h`; both must agree when given).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    /// Moves per horizontal plane.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    directions: Option<Dirs>,
    /// Ball centre as comma-separated x1,y1,...,t.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// Horizontal metric: standard, diagonal(d1,...,d2n) or file:<path>.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Shape {
    /// Pansu ball of curvature `--lambda`.
    Pansu,
    /// Cylinder |z| ≤ `--radius`, |t| ≤ `--height`.
    Cylinder,
    /// Cube of half-width `--radius`.
    Cube,
    /// One set of the seeded random family.
    Random,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PerimeterArgs {
    /// Voxel set file (overrides `--shape`).
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    voxels: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<Shape>,
    /// Voxel spacing of built-in shapes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    /// Half-height of the cylinder.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
    /// Mollification radius in cells (at least 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<usize>,
    /// Horizontal metric: standard, diagonal(d1,...,d2n) or file:<path>.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<String>,
    /// Write the voxel set here.
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    save: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InitKind {
    Cap,
    Cone,
    /// Profile CSV given by `--init-file`.
    File,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ProfileArgs {
    /// Comma-separated target volumes.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    volumes: Option<Vec<f64>>,
    /// Radial nodes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
    /// Stopping tolerance on the Newton decrement.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<InitKind>,
    /// Initial profile CSV (columns r,u) for `--init file`.
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    init_file: Option<PathBuf>,
    /// Directory receiving one profile CSV per volume.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    export: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CheckArgs {
    /// Suite to run.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<String>,
}

/// What a subcommand produced.
struct Report {
    csv: Vec<u8>,
    summary: serde_json::Value,
    /// One human-readable line for stderr.
    line: String,
    /// Whether the run counts as a numerical failure despite completing.
    failed: bool,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    match execute(cli) {
        Ok(failed) => i32::from(failed) * 2,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    let file: Option<toml::Table> = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Some(toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let globals: Globals = match &file {
        Some(table) => {
            let mut top = table.clone();
            top.retain(|_, v| !v.is_table());
            top.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        }
        None => Globals::default(),
    };
    let output = cli.output.or(globals.output);
    let json_path = cli.json.or(globals.json);
    let seed = cli.seed.or(globals.seed).unwrap_or(0);
    let section = |name: &str| file.as_ref().and_then(|t| t.get(name)).cloned();

    let report = match cli.command {
        Command::Pansu(a) => pansu(merge(a, section("pansu"))?)?,
        Command::Area(a) => area(merge(a, section("area"))?)?,
        Command::Meancurv(a) => meancurv(merge(a, section("meancurv"))?)?,
        Command::Ballvol(a) => ballvol(merge(a, section("ballvol"))?)?,
        Command::Perimeter(a) => perimeter(merge(a, section("perimeter"))?, seed)?,
        Command::Profile(a) => profile_cmd(merge(a, section("profile"))?)?,
        Command::Check(a) => check(merge(a, section("check"))?)?,
    };

    match &output {
        Some(path) => std::fs::write(path, &report.csv)?,
        None => std::io::stdout().write_all(&report.csv)?,
    }
    if let Some(path) = &json_path {
        let mut text = serde_json::to_string_pretty(&report.summary).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
    }
    eprintln!("{}", report.line);
    Ok(report.failed)
}

/// Overlays the flags given on the command line onto the config section.
fn merge<A: Serialize + DeserializeOwned>(flags: A, section: Option<toml::Value>) -> Result<A> {
    let Some(section) = section else {
        return Ok(flags);
    };
    let mut table = match section {
        toml::Value::Table(t) => t,
        _ => return Err(Error::Config("subcommand section must be a table".into())),
    };
    let given = toml::Table::try_from(&flags).map_err(|e| Error::Config(e.to_string()))?;
    table.extend(given);
    table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

fn structure(n: usize, metric: Option<&str>) -> Result<ContactStructure> {
    StructureConfig { n, metric: metric.unwrap_or("standard").to_string() }.build(None)
}

fn positive(what: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonPositive { what, value: v })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn pansu(a: PansuArgs) -> Result<Report> {
    let lambda = positive("lambda", a.lambda.unwrap_or(1.0))?;
    let samples = a.samples.unwrap_or(100);
    let n = a.n.unwrap_or(1);
    if samples < 2 {
        return Err(Error::OutOfDomain { what: "samples (need at least 2)", value: samples as f64 });
    }
    if n == 0 {
        return Err(Error::InvalidDimension(n));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "u", "du", "H"])?;
    for i in 0..samples {
        let r = if i + 1 == samples { 1.0 / lambda } else { i as f64 / ((samples - 1) as f64 * lambda) };
        let u = profile(lambda, r)?;
        let du = profile_derivative(lambda, r).ok().map(|d| d + 0.0);
        let mut z = vec![0.0; 2 * n];
        z[0] = r;
        // undefined at the pole and on the equator
        let h = match (profile_gradient(lambda, &z), profile_hessian(lambda, &z)) {
            (Ok(g), Ok(hs)) => standard_curvature_from(&g, &hs, &z).ok(),
            _ => None,
        };
        w.write_record([r.to_string(), u.to_string(), fmt_opt(du), fmt_opt(h)])?;
    }
    let area = sphere_area(lambda, n)?;
    let volume = sphere_volume(lambda, n)?;
    let q = (2 * n + 1) as f64 / (2 * n + 2) as f64;
    let ratio = area / volume.powf(q);
    Ok(Report {
        csv: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        summary: json!({ "lambda": lambda, "n": n, "samples": samples, "area": area, "volume": volume, "ratio": ratio }),
        line: format!("area {area} volume {volume} area/volume^{q} {ratio}"),
        failed: false,
    })
}

fn surface(a: &SurfaceArgs) -> Result<(GraphFunction, ContactStructure)> {
    let metric = a.metric.as_deref();
    let u = match &a.graph {
        Some(path) => GraphFunction::read_csv(std::fs::File::open(path)?)?,
        None => {
            let h = positive("h", a.h.unwrap_or(1.0 / 64.0))?;
            match a.surface.unwrap_or(Surface::Pansu) {
                Surface::Pansu => {
                    let lambda = positive("lambda", a.lambda.unwrap_or(1.0))?;
                    let f: Arc<dyn HeightFunction> = Arc::new(PansuGraph { lambda, sign: 1.0 });
                    GraphFunction::from_analytic(Domain::disk(vec![0.0, 0.0], 1.0 / lambda)?, h, f)?
                }
                Surface::Plane => {
                    let radius = positive("radius", a.radius.unwrap_or(1.0))?;
                    let f: Arc<dyn HeightFunction> = Arc::new(|_: &[f64]| 0.0);
                    GraphFunction::from_analytic(Domain::disk(vec![0.0, 0.0], radius)?, h, f)?
                }
            }
        }
    };
    let u = if a.grid_only.unwrap_or(false) { u.without_analytic() } else { u };
    let s = structure(u.n(), metric)?;
    Ok((u, s))
}

fn area(a: SurfaceArgs) -> Result<Report> {
    let (u, s) = surface(&a)?;
    let value = graph::area(&u, &s)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["h", "nodes", "area"])?;
    w.write_record([u.h().to_string(), u.node_count().to_string(), value.to_string()])?;
    Ok(Report {
        csv: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        summary: json!({ "h": u.h(), "nodes": u.node_count(), "area": value }),
        line: format!("area {value}"),
        failed: false,
    })
}

fn meancurv(a: SurfaceArgs) -> Result<Report> {
    let (u, s) = surface(&a)?;
    let stride = a.stride.unwrap_or(1).max(1);
    let eps = positive("bump", a.bump.unwrap_or(8.0 * u.h()))?;
    let points: Vec<Vec<f64>> = (0..u.node_count())
        .filter_map(|lin| {
            let idx = u.multi_index(lin);
            (u.is_interior(&idx, 1) && idx.iter().all(|i| i % stride == 0)).then(|| u.node_coords(&idx))
        })
        .collect();
    let rows = graph::report(&u, &s, &points, eps)?;
    let mut csv = Vec::new();
    graph::write_report(&rows, &mut csv)?;
    let finite: Vec<f64> = rows.iter().map(|r| r.mean_curvature).filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
    Ok(Report {
        csv,
        summary: json!({
            "points": rows.len(),
            "singular": rows.len() - finite.len(),
            "mean": mean, "min": lo, "max": hi,
        }),
        line: format!("{} points, H mean {mean} min {lo} max {hi}", rows.len()),
        failed: false,
    })
}

fn ballvol(a: BallArgs) -> Result<Report> {
    let n = a.n.unwrap_or(1);
    let s = structure(n, a.metric.as_deref())?;
    let eps = match (a.h, a.eps) {
        (Some(h), Some(e)) if (h - e).abs() > 1e-12 * h.abs().max(e.abs()) => {
            return Err(Error::Config(format!("--h {h} and --eps {e} differ; the lattice steps one node per move")))
        }
        (Some(v), _) | (None, Some(v)) => positive("eps", v)?,
        (None, None) => 1.0 / 32.0,
    };
    let r_min = positive("r-min", a.r_min.unwrap_or(0.2))?;
    let r_max = positive("r-max", a.r_max.unwrap_or(1.0))?;
    let steps = a.steps.unwrap_or(8);
    if r_max < r_min || steps == 0 {
        return Err(Error::Config("need r-min <= r-max and at least one step".into()));
    }
    if r_min < eps {
        return Err(Error::OutOfDomain { what: "r-min (below one lattice step)", value: r_min });
    }
    let radii = if steps == 1 || r_max == r_min {
        vec![(r_min / eps).round() * eps]
    } else {
        step_radii(r_min, r_max, eps, steps)
    };
    let dirs = match a.directions.unwrap_or(Dirs::Four) {
        Dirs::Four => Directions::Four,
        Dirs::Eight => Directions::Eight,
    };
    let center = match a.center {
        Some(c) if c.len() == 2 * n + 1 => Point::new(c[..2 * n].to_vec(), c[2 * n])?,
        Some(c) => return Err(Error::DimensionMismatch { expected: 2 * n + 1, got: c.len() }),
        None => Point::origin(n),
    };
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let lattice = if s.is_left_invariant() {
        HorizontalLattice::for_radius(s, eps, rmax, dirs)?
    } else {
        // box around the centre, with the t-shift of the twist
        let zc = center.radius();
        let zr = zc + 2.0 * rmax + 3.0 * eps;
        let tr = center.t.abs() + rmax * rmax + zc * rmax + 3.0 * eps;
        HorizontalLattice::new(s, eps, zr, tr, dirs)?
    };
    let field = lattice.distance_field(&center, rmax)?;
    let vols = radii.iter().map(|r| field.ball_volume(*r)).collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "volume"])?;
    for (r, v) in radii.iter().zip(&vols) {
        w.write_record([r.to_string(), v.to_string()])?;
    }
    let fit = (radii.len() >= 2).then(|| ahlfors_fit(&radii, &vols));
    Ok(Report {
        csv: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        summary: json!({
            "eps": eps,
            "node_volume": lattice.node_volume(),
            "slope": fit.map(|f| f.0),
            "prefactor": fit.map(|f| f.1),
        }),
        line: match fit {
            Some((slope, pre)) => format!("log-log slope {slope} prefactor {pre}"),
            None => format!("volume {}", vols[0]),
        },
        failed: false,
    })
}

fn perimeter(a: PerimeterArgs, seed: u64) -> Result<Report> {
    let s = structure(1, a.metric.as_deref())?;
    let sigma = a.sigma.unwrap_or(DEFAULT_SIGMA);
    let set = match &a.voxels {
        Some(path) => VoxelSet::load(path)?,
        None => {
            let h = positive("h", a.h.unwrap_or(1.0 / 64.0))?;
            match a.shape.unwrap_or(Shape::Pansu) {
                Shape::Pansu => {
                    let sphere = crate::pansu::PansuSphere::centered(positive("lambda", a.lambda.unwrap_or(1.0))?, 1)?;
                    let grid = Grid::around(1, sphere.radius(), sphere.pole_height(), h, sigma)?;
                    VoxelSet::pansu_ball(grid, &sphere)
                }
                Shape::Cylinder => {
                    let r = positive("radius", a.radius.unwrap_or(0.6))?;
                    let t = positive("height", a.height.unwrap_or(0.4))?;
                    let grid = Grid::around(1, r, t, h, sigma)?;
                    VoxelSet::from_fn(grid, |z, tt| z[0].hypot(z[1]) <= r && tt.abs() <= t)
                }
                Shape::Cube => {
                    let r = positive("radius", a.radius.unwrap_or(0.5))?;
                    let grid = Grid::around(1, r, r, h, sigma)?;
                    VoxelSet::from_fn(grid, |z, tt| z[0].abs() <= r && z[1].abs() <= r && tt.abs() <= r)
                }
                Shape::Random => {
                    let grid = Grid::around(1, 1.0, 0.5, h, sigma)?;
                    random_family(seed, 1, &grid).remove(0)
                }
            }
        }
    };
    if let Some(path) = &a.save {
        set.save(path)?;
    }
    let volume = set.riemannian_volume(&s)?;
    let p = bv_perimeter(&set, sigma, &s)?;
    let ratio = if volume > 0.0 { p / volume.powf(s.isoperimetric_exponent()) } else { f64::NAN };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["volume", "perimeter", "ratio"])?;
    w.write_record([volume.to_string(), p.to_string(), ratio.to_string()])?;
    Ok(Report {
        csv: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        summary: json!({ "volume": volume, "perimeter": p, "ratio": ratio, "sigma": sigma, "voxels": set.count() }),
        line: format!("volume {volume} perimeter {p} ratio {ratio}"),
        failed: false,
    })
}

fn profile_cmd(a: ProfileArgs) -> Result<Report> {
    let volumes = a.volumes.ok_or_else(|| Error::Config("--volumes is required".into()))?;
    if volumes.is_empty() {
        return Err(Error::Config("--volumes is empty".into()));
    }
    for v in &volumes {
        positive("volume", *v)?;
    }
    let mut cfg = OptimizerConfig::default();
    if let Some(nodes) = a.grid {
        cfg.nodes = nodes;
    }
    if let Some(tol) = a.tol {
        cfg.tol = positive("tol", tol)?;
    }
    if let Some(m) = a.max_iter {
        cfg.max_iter = m;
    }
    cfg.init = match a.init.unwrap_or(InitKind::Cap) {
        InitKind::Cap => Init::Cap,
        InitKind::Cone => Init::Cone,
        InitKind::File => {
            let path = a.init_file.as_ref().ok_or_else(|| Error::Config("--init file needs --init-file".into()))?;
            Init::Profile(AxiProfile::read_csv(std::fs::File::open(path)?)?)
        }
    };
    let runs = profile_curve(&volumes, &cfg)?;
    if let Some(dir) = &a.export {
        std::fs::create_dir_all(dir)?;
        for (i, (_, prof)) in runs.iter().enumerate() {
            let mut buf = Vec::new();
            prof.write_csv(&mut buf)?;
            std::fs::write(export_name(dir, i), buf)?;
        }
    }
    let points: Vec<ProfilePoint> = runs.into_iter().map(|r| r.0).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["v", "p", "iterations", "converged"])?;
    for p in &points {
        w.write_record([p.v.to_string(), p.p.to_string(), p.iterations.to_string(), p.converged.to_string()])?;
    }
    let scaling = scaling_check(&points).ok();
    let unconverged = points.iter().filter(|p| !p.converged).count();
    Ok(Report {
        csv: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        summary: json!({ "points": points, "scaling": scaling, "tol": cfg.tol, "nodes": cfg.nodes }),
        line: match &scaling {
            Some(r) => format!("fitted exponent {} prefactor {} ({} points used)", r.exponent, r.prefactor, r.used),
            None => format!("{} points; too few converged points over a decade for a scaling fit", points.len()),
        },
        failed: unconverged > 0,
    })
}

fn export_name(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("profile_{i:03}.csv"))
}

fn check(a: CheckArgs) -> Result<Report> {
    let suite: Suite = a.suite.as_deref().unwrap_or("quick").parse()?;
    let outcomes = run_suite(suite, |o| eprintln!("{o}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "name", "passed", "detail"])?;
    for o in &outcomes {
        w.write_record([o.id.to_string(), o.name.to_string(), o.passed.to_string(), o.detail.clone()])?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    Ok(Report {
        csv: w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        summary: json!({ "outcomes": outcomes }),
        line: format!("{} passed, {failed} failed", outcomes.len() - failed),
        failed: failed > 0,
    })
}
