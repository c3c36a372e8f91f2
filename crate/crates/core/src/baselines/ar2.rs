//! Autoregressive baseline: order-2 with intercept (an ARIMA(2,0,0)),
//! fitted by conditional least squares — deterministic and closed-form.
//! Singular designs (constant or collinear series) fall back to a tiny
//! ridge term, which reproduces the constant-series fixed point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ridge strength relative to the largest normal-equation diagonal; only
/// used when the plain solve hits a singular pivot.
const RIDGE: f64 = 1e-10;

/// `yₜ = intercept + phi1·yₜ₋₁ + phi2·yₜ₋₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ar2Model {
    pub phi1: f64,
    pub phi2: f64,
    pub intercept: f64,
}

/// Solves `a·x = b` in place by Gaussian elimination with partial
/// pivoting. Returns `None` on a (numerically) singular pivot.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))
            .expect("nonempty range");
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Conditional least squares for `yₜ = c + Σᵢ φᵢ·yₜ₋ᵢ` over rows `t ≥ p`.
/// Returns `(coefficients, intercept)`. Needs `2p + 1` points so the
/// design has more rows than unknowns.
pub fn fit_ar(series: &[f64], p: usize) -> Result<(Vec<f64>, f64)> {
    if p == 0 {
        return Err(Error::domain("autoregressive order must be at least 1"));
    }
    if series.len() < 2 * p + 1 {
        return Err(Error::domain(format!(
            "an order-{p} fit needs at least {} points, got {}",
            2 * p + 1,
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite value in the fitted series"));
    }
    let dim = p + 1; // intercept + p lags
    let rows: Vec<(Vec<f64>, f64)> = (p..series.len())
        .map(|t| {
            let mut x = Vec::with_capacity(dim);
            x.push(1.0);
            for lag in 1..=p {
                x.push(series[t - lag]);
            }
            (x, series[t])
        })
        .collect();

    let build_normal = |ridge: f64| {
        let mut xtx = vec![vec![0.0; dim]; dim];
        let mut xty = vec![0.0; dim];
        for (x, y) in &rows {
            for i in 0..dim {
                for j in 0..dim {
                    xtx[i][j] += x[i] * x[j];
                }
                xty[i] += x[i] * y;
            }
        }
        for (i, row) in xtx.iter_mut().enumerate() {
            row[i] += ridge;
        }
        (xtx, xty)
    };

    let (xtx, xty) = build_normal(0.0);
    let scale = xtx.iter().enumerate().map(|(i, row)| row[i]).fold(1.0f64, f64::max);
    let solution = match solve_linear(xtx, xty) {
        Some(s) => s,
        None => {
            let ridge = RIDGE * scale;
            log::warn!("singular autoregressive design; refitting with ridge {ridge:.3e}");
            let (xtx, xty) = build_normal(ridge);
            solve_linear(xtx, xty)
                .ok_or_else(|| Error::Fit("autoregressive design is singular even with ridge".into()))?
        }
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("autoregressive fit produced non-finite coefficients".into()));
    }
    let (intercept, phi) = solution.split_first().expect("dim >= 2");
    Ok((phi.to_vec(), *intercept))
}

/// Fits the order-2 model on a yearly peak series (at least 5 points).
pub fn fit_ar2(series: &[f64]) -> Result<Ar2Model> {
    let (phi, intercept) = fit_ar(series, 2)?;
    Ok(Ar2Model {
        phi1: phi[0],
        phi2: phi[1],
        intercept,
    })
}

/// Iterated one-step forecasts, each feeding the next.
pub fn forecast_ar2(model: &Ar2Model, second_last: f64, last: f64, horizon: usize) -> Vec<f64> {
    let mut prev2 = second_last;
    let mut prev1 = last;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next = model.intercept + model.phi1 * prev1 + model.phi2 * prev2;
        out.push(next);
        prev2 = prev1;
        prev1 = next;
    }
    out
}
