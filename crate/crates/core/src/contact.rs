//! The model contact sub-Riemannian space: ℝ^{2n+1} with the standard
//! contact form `ω₀ = dt + Σ (x_i dy_i − y_i dx_i)` and a positive-definite
//! horizontal metric expressed in the frame `{X_1, Y_1, …, X_n, Y_n}`.
//!
//! Sign convention: `X_i = ∂x_i + y_i ∂t`, `Y_i = ∂y_i − x_i ∂t`, `T = ∂t`.
//! Both horizontal fields annihilate `ω₀`, `[X_i, Y_i] = −2T`, and the
//! tangent space of a graph `t = u(z)` is spanned by `Z_i + (∇u + F)_i T`
//! with `F(x, y) = (−y, x)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::numerics::{spd_factor, SpdFactor};

/// A point `(z, t)` with `z = (x_1, y_1, …, x_n, y_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub z: Vec<f64>,
    pub t: f64,
}

impl Point {
    pub fn new(z: Vec<f64>, t: f64) -> Result<Self> {
        if z.is_empty() || z.len() % 2 != 0 {
            return Err(Error::DimensionMismatch { expected: 2, got: z.len() });
        }
        if z.iter().any(|v| !v.is_finite()) || !t.is_finite() {
            return Err(Error::NonFinite { what: "point coordinates" });
        }
        Ok(Point { z, t })
    }

    pub fn origin(n: usize) -> Self {
        Point { z: vec![0.0; 2 * n], t: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.z.len() / 2
    }

    /// Coordinates in the order `(x_1, y_1, …, x_n, y_n, t)`.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.z.clone();
        c.push(self.t);
        c
    }

    /// Euclidean norm of the horizontal projection `|z|`.
    pub fn radius(&self) -> f64 {
        self.z.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `F(x_1, y_1, …) = (−y_1, x_1, …, −y_n, x_n)`.
pub fn rotation_field(z: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; z.len()];
    for k in 0..z.len() / 2 {
        f[2 * k] = -z[2 * k + 1];
        f[2 * k + 1] = z[2 * k];
    }
    f
}

/// Group law of the Heisenberg group for the convention above; the frame
/// fields are left-invariant for it.
pub fn group_mul(p: &Point, q: &Point) -> Point {
    let mut z = Vec::with_capacity(p.z.len());
    let mut t = p.t + q.t;
    for k in 0..p.z.len() / 2 {
        let (x, y) = (p.z[2 * k], p.z[2 * k + 1]);
        let (xq, yq) = (q.z[2 * k], q.z[2 * k + 1]);
        z.push(x + xq);
        z.push(y + yq);
        t += y * xq - x * yq;
    }
    Point { z, t }
}

pub fn group_inverse(p: &Point) -> Point {
    Point { z: p.z.iter().map(|v| -v).collect(), t: -p.t }
}

/// Intrinsic dilation `(z, t) ↦ (λz, λ²t)`.
pub fn dilate(lambda: f64, p: &Point) -> Result<Point> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositive { what: "dilation ratio", value: lambda });
    }
    Ok(Point { z: p.z.iter().map(|v| lambda * v).collect(), t: lambda * lambda * p.t })
}

/// Evaluates `ω₀` at `p` on a coordinate vector `v = (v_x1, v_y1, …, v_t)`.
pub fn contact_form(p: &Point, v: &[f64]) -> f64 {
    let m = p.z.len();
    let mut w = v[m];
    for k in 0..m / 2 {
        w += p.z[2 * k] * v[2 * k + 1] - p.z[2 * k + 1] * v[2 * k];
    }
    w
}

/// A position-dependent horizontal metric `g_ij(z, t) = g(Z_i, Z_j)`.
pub trait MetricField: Send + Sync {
    fn matrix(&self, z: &[f64], t: f64) -> DMatrix<f64>;

    /// `∂g/∂(coordinate k)` with `k = 2n` meaning `t`. `None` falls back to
    /// central differences.
    fn derivative(&self, _z: &[f64], _t: f64, _coord: usize) -> Option<DMatrix<f64>> {
        None
    }

    fn describe(&self) -> String {
        "field".to_string()
    }
}

/// Step for central differences of metric callbacks without derivatives.
pub const METRIC_FD_STEP: f64 = 1e-5;

#[derive(Clone)]
pub enum Metric {
    Identity,
    /// Constant matrix; stays left-invariant because the frame is.
    Constant(DMatrix<f64>),
    Field(Arc<dyn MetricField>),
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Identity => write!(f, "standard"),
            Metric::Constant(m) => write!(f, "constant({m})"),
            Metric::Field(field) => write!(f, "{}", field.describe()),
        }
    }
}

/// `ℝ^{2n+1}` with `ω₀` and a horizontal metric. Immutable once built.
#[derive(Clone, Debug)]
pub struct ContactStructure {
    n: usize,
    metric: Metric,
    constant_factor: Option<Arc<SpdFactor>>,
}

impl ContactStructure {
    pub fn standard(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension(n));
        }
        let factor = spd_factor(&DMatrix::identity(2 * n, 2 * n))?;
        Ok(ContactStructure { n, metric: Metric::Identity, constant_factor: Some(Arc::new(factor)) })
    }

    pub fn constant(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::DimensionMismatch { expected: 2, got: dim });
        }
        let factor = spd_factor(&matrix)?;
        Ok(ContactStructure {
            n: dim / 2,
            metric: Metric::Constant(matrix),
            constant_factor: Some(Arc::new(factor)),
        })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        if let Some(&d) = diag.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::NonPositive { what: "diagonal metric entry", value: d });
        }
        Self::constant(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn with_field(n: usize, field: Arc<dyn MetricField>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension(n));
        }
        let probe = field.matrix(&vec![0.0; 2 * n], 0.0);
        if probe.nrows() != 2 * n || probe.ncols() != 2 * n {
            return Err(Error::DimensionMismatch { expected: 2 * n, got: probe.nrows() });
        }
        Ok(ContactStructure { n, metric: Metric::Field(field), constant_factor: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Homogeneous dimension `Q = 2n + 2`.
    pub fn homogeneous_dimension(&self) -> usize {
        2 * self.n + 2
    }

    /// Isoperimetric exponent `q = (Q − 1)/Q`.
    pub fn isoperimetric_exponent(&self) -> f64 {
        let q = self.homogeneous_dimension() as f64;
        (q - 1.0) / q
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn is_standard(&self) -> bool {
        matches!(self.metric, Metric::Identity)
    }

    /// True when the metric does not depend on the point, so the structure
    /// is invariant under the left translations of the group.
    pub fn is_left_invariant(&self) -> bool {
        !matches!(self.metric, Metric::Field(_))
    }

    pub fn metric_at(&self, z: &[f64], t: f64) -> DMatrix<f64> {
        match &self.metric {
            Metric::Identity => DMatrix::identity(2 * self.n, 2 * self.n),
            Metric::Constant(m) => m.clone(),
            Metric::Field(f) => f.matrix(z, t),
        }
    }

    /// Cholesky factorization of `g` at `(z, t)`, cached for constant metrics.
    pub fn factor_at(&self, z: &[f64], t: f64) -> Result<Arc<SpdFactor>> {
        match &self.constant_factor {
            Some(f) => Ok(Arc::clone(f)),
            None => Ok(Arc::new(spd_factor(&self.metric_at(z, t))?)),
        }
    }

    /// `∂g/∂(coordinate)` (`coord = 2n` is `t`), analytic when the field
    /// provides it, otherwise central differences with step 1e−5.
    pub fn metric_derivative(&self, z: &[f64], t: f64, coord: usize) -> DMatrix<f64> {
        let dim = 2 * self.n;
        match &self.metric {
            Metric::Identity | Metric::Constant(_) => DMatrix::zeros(dim, dim),
            Metric::Field(f) => f.derivative(z, t, coord).unwrap_or_else(|| {
                let h = METRIC_FD_STEP;
                let (mut zp, mut zm) = (z.to_vec(), z.to_vec());
                let (mut tp, mut tm) = (t, t);
                if coord == dim {
                    tp += h;
                    tm -= h;
                } else {
                    zp[coord] += h;
                    zm[coord] -= h;
                }
                (f.matrix(&zp, tp) - f.matrix(&zm, tm)) / (2.0 * h)
            }),
        }
    }

    /// The frame `(Z_1, …, Z_{2n}, T)` at `p` as coordinate vectors of length `2n+1`.
    pub fn frame_at(&self, p: &Point) -> Vec<Vec<f64>> {
        let m = 2 * self.n;
        let mut frame = Vec::with_capacity(m + 1);
        for k in 0..self.n {
            let (x, y) = (p.z[2 * k], p.z[2 * k + 1]);
            let mut xf = vec![0.0; m + 1];
            xf[2 * k] = 1.0;
            xf[m] = y;
            let mut yf = vec![0.0; m + 1];
            yf[2 * k + 1] = 1.0;
            yf[m] = -x;
            frame.push(xf);
            frame.push(yf);
        }
        let mut reeb = vec![0.0; m + 1];
        reeb[m] = 1.0;
        frame.push(reeb);
        frame
    }

    /// Checks symmetry and positive definiteness of the metric on `count`
    /// random points drawn from the box `[-extent, extent]^{2n+1}`.
    pub fn validate_on_cloud<R: Rng>(&self, rng: &mut R, count: usize, extent: f64) -> Result<()> {
        for _ in 0..count {
            let z: Vec<f64> = (0..2 * self.n).map(|_| rng.gen_range(-extent..extent)).collect();
            let t = rng.gen_range(-extent..extent);
            spd_factor(&self.metric_at(&z, t))?;
        }
        Ok(())
    }

    pub fn from_config_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let cfg: StructureConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.build(base_dir)
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text, path.parent())
    }
}

/// `n = 1` / `metric = "standard" | "diagonal(d1,…,d2n)" | "file:<path>"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    pub n: usize,
    #[serde(default = "default_metric")]
    pub metric: String,
}

fn default_metric() -> String {
    "standard".to_string()
}

impl StructureConfig {
    pub fn build(&self, base_dir: Option<&Path>) -> Result<ContactStructure> {
        let spec = self.metric.trim();
        if spec == "standard" {
            return ContactStructure::standard(self.n);
        }
        if let Some(inner) = spec.strip_prefix("diagonal(").and_then(|s| s.strip_suffix(')')) {
            let diag: Vec<f64> = inner
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("diagonal entry {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if diag.len() != 2 * self.n {
                return Err(Error::DimensionMismatch { expected: 2 * self.n, got: diag.len() });
            }
            return ContactStructure::diagonal(&diag);
        }
        if let Some(path) = spec.strip_prefix("file:") {
            let path = Path::new(path.trim());
            let full = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.to_path_buf(),
            };
            let table = TabulatedMetric::from_file(&full, self.n)?;
            return ContactStructure::with_field(self.n, Arc::new(table));
        }
        Err(Error::Config(format!("unknown metric specification {spec:?}")))
    }
}

/// Metric sampled on a tensor grid in `(z, t)`, multilinearly interpolated
/// and clamped outside the table.
///
/// File format: whitespace- or comma-separated rows
/// `x_1 y_1 … x_n y_n t g_11 g_12 … g_{2n,2n}` (full matrix, row-major);
/// `#` starts a comment.
#[derive(Debug, Clone)]
pub struct TabulatedMetric {
    n: usize,
    axes: Vec<Vec<f64>>,
    values: Vec<DMatrix<f64>>,
}

impl TabulatedMetric {
    pub fn from_file(path: &Path, n: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, n)
    }

    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let dim = 2 * n;
        let ncoord = dim + 1;
        let width = ncoord + dim * dim;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != width {
                return Err(Error::Parse(format!("line {}: expected {width} values, got {}", lineno + 1, vals.len())));
            }
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty metric table".into()));
        }
        let mut axes: Vec<Vec<f64>> = (0..ncoord)
            .map(|k| {
                let mut a: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                a.sort_by(f64::total_cmp);
                a.dedup();
                a
            })
            .collect();
        for a in &mut axes {
            if a.is_empty() {
                return Err(Error::Parse("empty axis".into()));
            }
        }
        let total: usize = axes.iter().map(Vec::len).product();
        if total != rows.len() {
            return Err(Error::Parse(format!("table is not a full tensor grid ({} rows, {total} grid points)", rows.len())));
        }
        let mut values = vec![DMatrix::zeros(dim, dim); total];
        let mut seen = vec![false; total];
        for r in &rows {
            let mut idx = 0;
            for k in 0..ncoord {
                let pos = axes[k].binary_search_by(|v| v.total_cmp(&r[k])).expect("axis value");
                idx = idx * axes[k].len() + pos;
            }
            if seen[idx] {
                return Err(Error::Parse("duplicate grid point in metric table".into()));
            }
            seen[idx] = true;
            let m = DMatrix::from_row_slice(dim, dim, &r[ncoord..]);
            spd_factor(&m)?;
            values[idx] = m;
        }
        Ok(TabulatedMetric { n, axes, values })
    }
}

impl MetricField for TabulatedMetric {
    fn matrix(&self, z: &[f64], t: f64) -> DMatrix<f64> {
        let dim = 2 * self.n;
        let ncoord = dim + 1;
        let coord = |k: usize| if k == dim { t } else { z[k] };
        // Bracketing cell and weight per axis.
        let mut lo = vec![0usize; ncoord];
        let mut frac = vec![0.0; ncoord];
        for k in 0..ncoord {
            let a = &self.axes[k];
            if a.len() == 1 {
                continue;
            }
            let c = coord(k).clamp(a[0], a[a.len() - 1]);
            let i = match a.binary_search_by(|v| v.total_cmp(&c)) {
                Ok(i) => i.min(a.len() - 2),
                Err(i) => (i - 1).min(a.len() - 2),
            };
            lo[k] = i;
            frac[k] = (c - a[i]) / (a[i + 1] - a[i]);
        }
        let mut out = DMatrix::zeros(dim, dim);
        for corner in 0..(1usize << ncoord) {
            let mut weight = 1.0;
            let mut idx = 0;
            for k in 0..ncoord {
                let up = (corner >> k) & 1 == 1;
                let len = self.axes[k].len();
                let pos = if len == 1 {
                    if up {
                        weight = 0.0;
                    }
                    0
                } else if up {
                    weight *= frac[k];
                    lo[k] + 1
                } else {
                    weight *= 1.0 - frac[k];
                    lo[k]
                };
                idx = idx * len + pos;
            }
            if weight != 0.0 {
                out += &self.values[idx] * weight;
            }
        }
        out
    }

    fn describe(&self) -> String {
        format!("tabulated({} nodes)", self.values.len())
    }
}

/// A horizontal vector `Σ a_i Z_i` based at a point.
#[derive(Debug, Clone)]
pub struct HorizontalVector {
    pub base: Point,
    pub coeffs: Vec<f64>,
}

impl HorizontalVector {
    pub fn new(base: Point, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != base.z.len() {
            return Err(Error::DimensionMismatch { expected: base.z.len(), got: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { what: "horizontal coefficients" });
        }
        Ok(HorizontalVector { base, coeffs })
    }

    /// `(aᵀ g a)^{1/2}`.
    pub fn norm(&self, s: &ContactStructure) -> f64 {
        let g = s.metric_at(&self.base.z, self.base.t);
        let a = DVector::from_column_slice(&self.coeffs);
        a.dot(&(&g * &a)).max(0.0).sqrt()
    }

    /// Coordinate expression in `ℝ^{2n+1}`.
    pub fn to_coordinates(&self) -> Vec<f64> {
        let m = self.coeffs.len();
        let mut v = vec![0.0; m + 1];
        for k in 0..m / 2 {
            let (a, b) = (self.coeffs[2 * k], self.coeffs[2 * k + 1]);
            let (x, y) = (self.base.z[2 * k], self.base.z[2 * k + 1]);
            v[2 * k] = a;
            v[2 * k + 1] = b;
            v[m] += a * y - b * x;
        }
        v
    }
}

/// `σ(X, Y) = ⟨J X, Y⟩` with `J X_i = Y_i`, `J Y_i = −X_i`, valid for the
/// standard metric only.
pub fn sigma_standard(s: &ContactStructure, x: &HorizontalVector, y: &HorizontalVector) -> Result<f64> {
    if !s.is_standard() {
        return Err(Error::NonStandardMetric);
    }
    if x.coeffs.len() != 2 * s.n() || y.coeffs.len() != 2 * s.n() {
        return Err(Error::DimensionMismatch { expected: 2 * s.n(), got: x.coeffs.len().min(y.coeffs.len()) });
    }
    let mut acc = 0.0;
    for k in 0..s.n() {
        let (ax, ay) = (x.coeffs[2 * k], x.coeffs[2 * k + 1]);
        let (bx, by) = (y.coeffs[2 * k], y.coeffs[2 * k + 1]);
        // J(a) = (−a_y, a_x)
        acc += -ay * bx + ax * by;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64, t: f64) -> Point {
        Point { z: vec![x, y], t }
    }

    #[test]
    fn standard_structure_dimensions() {
        let s1 = ContactStructure::standard(1).unwrap();
        assert_eq!(s1.homogeneous_dimension(), 4);
        assert_eq!(s1.isoperimetric_exponent(), 0.75);
        let s2 = ContactStructure::standard(2).unwrap();
        assert_eq!(s2.homogeneous_dimension(), 6);
        assert_eq!(s2.isoperimetric_exponent(), 5.0 / 6.0);
        assert_eq!(s1.metric_at(&[0.3, -2.0], 1.0), DMatrix::identity(2, 2));
        assert!(matches!(ContactStructure::standard(0), Err(Error::InvalidDimension(0))));
    }

    #[test]
    fn frame_at_origin_and_offset_point() {
        let s = ContactStructure::standard(1).unwrap();
        let f = s.frame_at(&Point::origin(1));
        assert_eq!(f, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let f = s.frame_at(&pt(1.0, 2.0, 0.0));
        assert_eq!(f[0], vec![1.0, 0.0, 2.0]);
        assert_eq!(f[1], vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn sigma_on_frame() {
        let s = ContactStructure::standard(1).unwrap();
        let p = Point::origin(1);
        let x = HorizontalVector::new(p.clone(), vec![1.0, 0.0]).unwrap();
        let y = HorizontalVector::new(p, vec![0.0, 1.0]).unwrap();
        assert_eq!(sigma_standard(&s, &x, &y).unwrap(), 1.0);
        assert_eq!(sigma_standard(&s, &x, &x).unwrap(), 0.0);
        assert_eq!(sigma_standard(&s, &y, &x).unwrap(), -1.0);
        let d = ContactStructure::diagonal(&[1.0, 2.0]).unwrap();
        assert!(matches!(sigma_standard(&d, &x, &y), Err(Error::NonStandardMetric)));
    }

    #[test]
    fn dilation_examples() {
        let p = pt(1.0, 0.0, 1.0);
        assert_eq!(dilate(2.0, &p).unwrap(), pt(2.0, 0.0, 4.0));
        assert_eq!(dilate(1.0, &p).unwrap(), p);
        assert!(dilate(0.0, &p).is_err());
        assert!(dilate(-1.0, &p).is_err());
    }

    /// Flow of `a X + b Y` (constant coefficients) for unit time; exact.
    fn flow(p: &Point, a: f64, b: f64) -> Point {
        let (x, y) = (p.z[0], p.z[1]);
        pt(x + a, y + b, p.t + a * y - b * x)
    }

    #[test]
    fn bracket_of_frame_is_minus_two_reeb() {
        let p = pt(0.4, -1.3, 0.7);
        let s = 1e-3;
        let q = flow(&flow(&flow(&flow(&p, s, 0.0), 0.0, s), -s, 0.0), 0.0, -s);
        let bracket_t = (q.t - p.t) / (s * s);
        assert!((bracket_t + 2.0).abs() < 1e-6, "{bracket_t}");
        assert!((q.z[0] - p.z[0]).abs() < 1e-15 && (q.z[1] - p.z[1]).abs() < 1e-15);
    }

    #[test]
    fn frame_is_left_invariant() {
        // dL_p maps the frame at the identity to the frame at p.
        let p = pt(0.3, 1.7, -0.2);
        let s = ContactStructure::standard(1).unwrap();
        let frame = s.frame_at(&p);
        let h = 1e-6;
        for (k, dir) in [[1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
            let q = group_mul(&p, &pt(h * dir[0], h * dir[1], 0.0));
            let v = [(q.z[0] - p.z[0]) / h, (q.z[1] - p.z[1]) / h, (q.t - p.t) / h];
            for c in 0..3 {
                assert!((v[c] - frame[k][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn config_parsing() {
        let s = ContactStructure::from_config_str("n = 1\nmetric = \"standard\"\n", None).unwrap();
        assert!(s.is_standard());
        let d = ContactStructure::from_config_str("n = 1\nmetric = \"diagonal(2, 3)\"\n", None).unwrap();
        assert_eq!(d.metric_at(&[0.0, 0.0], 0.0), DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert!(ContactStructure::from_config_str("n = 1\nmetric = \"diagonal(2)\"\n", None).is_err());
        assert!(ContactStructure::from_config_str("n = 1\nmetric = \"diagonal(2,-1)\"\n", None).is_err());
        assert!(ContactStructure::from_config_str("n = 1\nmetric = \"weird\"\n", None).is_err());
        assert!(ContactStructure::from_config_str("n = 1\nfoo = 3\n", None).is_err());
    }

    #[test]
    fn tabulated_metric_file_interpolates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let mut text = String::from("# x y t g11 g12 g21 g22\n");
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for t in [-1.0, 1.0] {
                    let a = 2.0 + x;
                    text.push_str(&format!("{x} {y} {t} {a} 0.1 0.1 {}\n", 2.0 + 0.5 * t));
                }
            }
        }
        std::fs::write(&path, text).unwrap();
        let s = ContactStructure::from_config_str(&format!("n = 1\nmetric = \"file:{}\"\n", path.display()), None)
            .unwrap();
        let g = s.metric_at(&[0.5, 0.0], 0.5);
        assert!((g[(0, 0)] - 2.5).abs() < 1e-12);
        assert!((g[(1, 1)] - 2.25).abs() < 1e-12);
        assert!((g[(0, 1)] - 0.1).abs() < 1e-12);
        // clamped outside the table
        assert!((s.metric_at(&[5.0, 0.0], 0.0)[(0, 0)] - 3.0).abs() < 1e-12);
        let dg = s.metric_derivative(&[0.2, 0.1], 0.0, 2);
        assert!((dg[(1, 1)] - 0.5).abs() < 1e-8);
    }

    struct Wavy;
    impl MetricField for Wavy {
        fn matrix(&self, z: &[f64], t: f64) -> DMatrix<f64> {
            let off = 0.3 * (z[0] + t).sin();
            DMatrix::from_row_slice(2, 2, &[1.0 + z[1] * z[1], off, off, 2.0 + 0.5 * t.cos()])
        }
    }

    #[test]
    fn registered_structures_valid_on_point_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let structures = vec![
            ContactStructure::standard(1).unwrap(),
            ContactStructure::standard(2).unwrap(),
            ContactStructure::diagonal(&[0.5, 4.0]).unwrap(),
            ContactStructure::with_field(1, Arc::new(Wavy)).unwrap(),
        ];
        for s in &structures {
            s.validate_on_cloud(&mut rng, 1000, 2.0).unwrap();
        }
    }

    proptest! {
        #[test]
        fn frame_annihilates_contact_form(x in -50.0..50.0f64, y in -50.0..50.0f64, t in -50.0..50.0f64,
                                           x2 in -50.0..50.0f64, y2 in -50.0..50.0f64) {
            let s = ContactStructure::standard(2).unwrap();
            let p = Point { z: vec![x, y, x2, y2], t };
            let frame = s.frame_at(&p);
            for v in &frame[..4] {
                prop_assert!(contact_form(&p, v).abs() <= 1e-12);
            }
            prop_assert_eq!(contact_form(&p, &frame[4]), 1.0);
        }

        #[test]
        fn dilation_is_a_group(l1 in 0.05..20.0f64, l2 in 0.05..20.0f64,
                               x in -10.0..10.0f64, y in -10.0..10.0f64, t in -10.0..10.0f64) {
            let p = pt(x, y, t);
            let a = dilate(l1, &dilate(l2, &p).unwrap()).unwrap();
            let b = dilate(l1 * l2, &p).unwrap();
            prop_assert!((a.z[0] - b.z[0]).abs() <= 1e-12 * (1.0 + b.z[0].abs()));
            prop_assert!((a.t - b.t).abs() <= 1e-12 * (1.0 + b.t.abs()));
            let back = dilate(l1, &dilate(1.0 / l1, &p).unwrap()).unwrap();
            prop_assert!((back.t - t).abs() <= 1e-12 * (1.0 + t.abs()));
        }

        #[test]
        fn group_inverse_roundtrip(x in -10.0..10.0f64, y in -10.0..10.0f64, t in -10.0..10.0f64) {
            let p = pt(x, y, t);
            let e = group_mul(&group_inverse(&p), &p);
            prop_assert!(e.z.iter().all(|v| v.abs() < 1e-12) && e.t.abs() < 1e-12);
        }
    }
}
