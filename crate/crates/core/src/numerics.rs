//! Small numerical kernels shared by the geometry modules: compensated
//! summation, adaptive Gauss–Kronrod quadrature, Gauss–Legendre rules,
//! SPD inversion with a conditioning guard, log–log fits and cubic splines.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest admissible condition number for a metric matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Neumaier-compensated sum. Order of accumulation is the iteration order,
/// so the result is reproducible bit for bit.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate, error estimate, and the roundoff floor of the error.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut absolute = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let (fl, fr) = (f(c - dx), f(c + dx));
        kronrod += WGK[j] * (fl + fr);
        absolute += WGK[j] * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (fl + fr);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs(), 50.0 * f64::EPSILON * (absolute * h).abs())
}

/// Globally adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` to
/// absolute tolerance `tol`: the interval with the largest error estimate
/// is bisected until the total estimate drops below `tol`, the estimates
/// reach roundoff, or 4000 intervals are in use. Interior nodes only, so
/// integrable endpoint singularities are tolerated.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 4000;
    let (v, e, fl) = gk15(&f, a, b);
    // (a, b, value, error, roundoff floor)
    let mut parts = vec![(a, b, v, e, fl)];
    loop {
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let floor: f64 = parts.iter().map(|p| p.4).sum();
        if err <= tol.max(floor) || parts.len() >= MAX_INTERVALS {
            break;
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, e, _) = parts[worst];
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) || e <= 0.0 {
            break;
        }
        let (lv, le, lf) = gk15(&f, lo, mid);
        let (rv, re, rf) = gk15(&f, mid, hi);
        if !(lv + rv + le + re).is_finite() {
            // Nodes have collapsed onto a singular endpoint; keep the coarser estimate.
            parts[worst].3 = 0.0;
            continue;
        }
        parts[worst] = (lo, mid, lv, le, lf);
        parts.push((mid, hi, rv, re, rf));
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    stable_sum(parts.iter().map(|p| p.2))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            dp = nf * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Inverse and determinant of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    pub inverse: DMatrix<f64>,
    pub determinant: f64,
    pub condition: f64,
}

/// Cholesky-based inversion; rejects asymmetric, indefinite or
/// ill-conditioned input.
pub fn spd_factor(m: &DMatrix<f64>) -> Result<SpdFactor> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "metric matrix" });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale.max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let condition = if n == 1 {
        1.0
    } else if n == 2 {
        let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let (hi, lo) = (mean + rad, mean - rad);
        if lo <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        hi / lo
    } else {
        let eig = m.clone().symmetric_eigen();
        let hi = eig.eigenvalues.max();
        let lo = eig.eigenvalues.min();
        if lo <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        hi / lo
    };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let determinant = chol.l_dirty().diagonal().iter().map(|d| d * d).product();
    Ok(SpdFactor { inverse: chol.inverse(), determinant, condition })
}

/// Least-squares fit of `log y = slope · log x + c`; returns `(slope, exp(c))`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, (my - slope * mx).exp())
}

/// Solves a tridiagonal system in place (Thomas algorithm).
/// `lower[i]` couples row `i` to `i-1`, `upper[i]` couples row `i` to `i+1`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { upper[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Natural cubic spline through `(xs[i], ys[i])` with strictly increasing `xs`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 3 && ys.len() == n, "spline needs at least three samples");
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            lower[i] = h0;
            diag[i] = 2.0 * (h0 + h1);
            upper[i] = h1;
            rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        }
        let m = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        CubicSpline { xs, ys, m }
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    /// Value, first and second derivative at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let v = a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (self.ys[i + 1] - self.ys[i]) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0
            + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let dd = a * m0 + b * m1;
        (v, d, dd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_kronrod_handles_endpoint_singularity() {
        // ∫₀¹ r²/√(1−r²) dr = π/4
        let v = integrate(|r| r * r / (1.0 - r * r).sqrt(), 0.0, 1.0, 1e-12);
        assert!((v - PI / 4.0).abs() < 1e-7, "{v}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spd_factor_rejects_bad_matrices() {
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_factor(&indefinite), Err(Error::NotPositiveDefinite)));
        let ill = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]);
        assert!(matches!(spd_factor(&ill), Err(Error::IllConditioned { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(spd_factor(&asym), Err(Error::NotSymmetric { .. })));
        let ok = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 3.0]);
        let f = spd_factor(&ok).unwrap();
        assert!(((&ok * &f.inverse) - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!((f.determinant - ok.determinant()).abs() < 1e-12);
    }

    #[test]
    fn stable_sum_beats_naive_accumulation() {
        let mut v = vec![1.0];
        v.extend(std::iter::repeat(1e-16).take(10_000));
        assert!((stable_sum(v) - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn spline_reproduces_cubic_interior() {
        let xs: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin()).collect();
        let s = CubicSpline::natural(xs, ys);
        let (v, d, _) = s.eval(0.5);
        assert!((v - 1f64.sin()).abs() < 1e-6);
        assert!((d - 2.0 * 1f64.cos()).abs() < 1e-4);
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.75)).collect();
        let (s, c) = fit_power_law(&xs, &ys);
        assert!((s - 0.75).abs() < 1e-12 && (c - 3.0).abs() < 1e-12);
    }
}
