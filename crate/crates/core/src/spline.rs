//! Univariate smoothing cubic splines.
//!
//! Fits the penalized natural cubic spline minimizing
//! `sum_i (y_i - f(x_i))^2 + s * integral f''(t)^2 dt`
//! (Green & Silverman formulation). `s = 0` reproduces natural cubic
//! interpolation; `s -> infinity` converges to the least-squares line.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct SmoothingSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots (natural: zero at both ends).
    second: Vec<f64>,
}

impl SmoothingSpline {
    /// Evaluates the spline; outside the knot range the curve continues
    /// linearly with the boundary slope (natural-spline extension).
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if n == 1 {
            return self.values[0];
        }
        if t <= self.knots[0] {
            let slope = self.segment_slope_at_start();
            return self.values[0] + slope * (t - self.knots[0]);
        }
        if t >= self.knots[n - 1] {
            let slope = self.segment_slope_at_end();
            return self.values[n - 1] + slope * (t - self.knots[n - 1]);
        }
        let mut i = match self
            .knots
            .partition_point(|&k| k <= t)
        {
            0 => 0,
            p => p - 1,
        };
        if i >= n - 1 {
            i = n - 2;
        }
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    fn segment_slope_at_start(&self) -> f64 {
        let h = self.knots[1] - self.knots[0];
        (self.values[1] - self.values[0]) / h - h / 6.0 * (2.0 * self.second[0] + self.second[1])
    }

    fn segment_slope_at_end(&self) -> f64 {
        let n = self.knots.len();
        let h = self.knots[n - 1] - self.knots[n - 2];
        (self.values[n - 1] - self.values[n - 2]) / h
            + h / 6.0 * (self.second[n - 2] + 2.0 * self.second[n - 1])
    }
}

fn check_abscissae(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("xs and ys must have equal length"));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("need at least 2 points"));
    }
    for w in xs.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid(
                "abscissae must be strictly increasing (duplicates not allowed)",
            ));
        }
    }
    Ok(())
}

/// Green-Silverman band matrices: `delta` ((n-2) x n) second-difference
/// operator and `w` ((n-2) x (n-2)) overlap matrix, so the roughness
/// penalty is `f^T K f` with `K = delta^T W^-1 delta`.
fn penalty_matrices(xs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = xs.len();
    let m = n - 2;
    let mut delta = DMatrix::zeros(m, n);
    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        let h0 = xs[i + 1] - xs[i];
        let h1 = xs[i + 2] - xs[i + 1];
        delta[(i, i)] = 1.0 / h0;
        delta[(i, i + 1)] = -1.0 / h0 - 1.0 / h1;
        delta[(i, i + 2)] = 1.0 / h1;
        w[(i, i)] = (h0 + h1) / 3.0;
        if i + 1 < m {
            w[(i, i + 1)] = h1 / 6.0;
            w[(i + 1, i)] = h1 / 6.0;
        }
    }
    (delta, w)
}

fn build_spline(xs: &[f64], fitted: DVector<f64>, delta: &DMatrix<f64>, w: &DMatrix<f64>) -> SmoothingSpline {
    let n = xs.len();
    let mut second = vec![0.0; n];
    if n > 2 {
        let rhs = delta * &fitted;
        let gamma = w
            .clone()
            .lu()
            .solve(&rhs)
            .expect("overlap matrix is positive definite");
        for i in 0..n - 2 {
            second[i + 1] = gamma[i];
        }
    }
    SmoothingSpline {
        knots: xs.to_vec(),
        values: fitted.iter().cloned().collect(),
        second,
    }
}

/// Fits with an explicit smoothing weight `s >= 0`.
pub fn fit_smoothing_spline(xs: &[f64], ys: &[f64], smoothing: f64) -> Result<SmoothingSpline> {
    check_abscissae(xs, ys)?;
    if !(smoothing >= 0.0) {
        return Err(Error::invalid("smoothing must be >= 0"));
    }
    let n = xs.len();
    let y = DVector::from_column_slice(ys);
    if n == 2 {
        return Ok(build_spline(xs, y, &DMatrix::zeros(0, 2), &DMatrix::zeros(0, 0)));
    }
    let (delta, w) = penalty_matrices(xs);
    let k = delta.transpose()
        * w.clone()
            .lu()
            .solve(&delta)
            .expect("overlap matrix is positive definite");
    let system = DMatrix::identity(n, n) + &k * smoothing;
    let fitted = system
        .lu()
        .solve(&y)
        .ok_or_else(|| Error::numerical("smoothing system is singular"))?;
    Ok(build_spline(xs, fitted, &delta, &w))
}

/// Fits with the smoothing weight chosen by generalized cross-validation
/// over a log-spaced grid; returns the spline and the selected weight.
pub fn fit_smoothing_spline_gcv(xs: &[f64], ys: &[f64]) -> Result<(SmoothingSpline, f64)> {
    check_abscissae(xs, ys)?;
    let n = xs.len();
    if n == 2 {
        return Ok((fit_smoothing_spline(xs, ys, 0.0)?, 0.0));
    }
    let (delta, w) = penalty_matrices(xs);
    let k = delta.transpose()
        * w.clone()
            .lu()
            .solve(&delta)
            .expect("overlap matrix is positive definite");
    let y = DVector::from_column_slice(ys);
    let span = xs[n - 1] - xs[0];
    let h_mean = span / (n as f64 - 1.0);
    let scale = h_mean.powi(3);

    let mut best = (f64::INFINITY, scale);
    for step in 0..29 {
        let s = scale * 10f64.powf(-6.0 + 12.0 * step as f64 / 28.0);
        let system = DMatrix::identity(n, n) + &k * s;
        let inv = match system.try_inverse() {
            Some(inv) => inv,
            None => continue,
        };
        let fitted = &inv * &y;
        let resid = (&y - &fitted).norm_squared();
        let tr_residual = n as f64 - inv.trace();
        if tr_residual < 1e-9 {
            continue;
        }
        let gcv = n as f64 * resid / (tr_residual * tr_residual);
        if gcv < best.0 {
            best = (gcv, s);
        }
    }
    Ok((fit_smoothing_spline(xs, ys, best.1)?, best.1))
}
