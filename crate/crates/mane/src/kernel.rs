//! Low-dimensional similarity kernel q = 1/(1 + a*||dy||^(2b)) and the
//! least-squares fit of (a, b) against the min-dist target curve.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{ManeError, Result};

/// Fitting grid: 300 uniform distances on [0, 3], covering the curvature
/// region of the target curve.
pub const FIT_GRID_MAX: f64 = 3.0;
pub const FIT_GRID_POINTS: usize = 300;
/// Required mean squared residual of the fit.
pub const FIT_MAX_MSE: f64 = 1e-3;
const FIT_MAX_ITER: usize = 200;

/// Fitted parameters of the low-dimensional similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub a: f64,
    pub b: f64,
    pub min_dist: f64,
}

/// The target curve: 1 below min_dist, exponential falloff beyond it.
pub fn psi(distance: f64, min_dist: f64) -> f64 {
    if distance < min_dist {
        1.0
    } else {
        (-(distance - min_dist)).exp()
    }
}

/// Kernel evaluated on a squared distance.
#[inline]
pub fn kernel_value(dist_sq: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * dist_sq.powf(b))
}

/// Similarity q between two embedded points: 1/(1 + a*||yi - yj||^(2b)).
pub fn q_similarity(yi: ArrayView1<'_, f64>, yj: ArrayView1<'_, f64>, params: &KernelParams) -> f64 {
    assert_eq!(yi.len(), yj.len(), "vectors must have the same dimension");
    let mut dist_sq = 0.0;
    for (a, b) in yi.iter().zip(yj.iter()) {
        let d = a - b;
        dist_sq += d * d;
    }
    kernel_value(dist_sq, params.a, params.b)
}

fn fit_grid() -> Vec<f64> {
    (0..FIT_GRID_POINTS)
        .map(|i| FIT_GRID_MAX * i as f64 / (FIT_GRID_POINTS - 1) as f64)
        .collect()
}

/// Mean squared residual of the kernel against the target curve on the
/// fitting grid.
pub fn fit_residual_mse(a: f64, b: f64, min_dist: f64) -> f64 {
    let grid = fit_grid();
    let sum: f64 = grid
        .iter()
        .map(|&d| {
            let r = kernel_value(d * d, a, b) - psi(d, min_dist);
            r * r
        })
        .sum();
    sum / grid.len() as f64
}

/// Fit (a, b) to the target curve by damped least squares in (ln a, b) with
/// an analytic Jacobian, starting from (1, 1).
pub fn fit_ab(min_dist: f64) -> Result<KernelParams> {
    if !(min_dist >= 0.0 && min_dist.is_finite()) {
        return Err(ManeError::Parameter(format!(
            "min_dist must be a nonnegative real, got {min_dist}"
        )));
    }

    let grid = fit_grid();
    let targets: Vec<f64> = grid.iter().map(|&d| psi(d, min_dist)).collect();
    let mse_of = |a: f64, b: f64| -> f64 {
        let sum: f64 = grid
            .iter()
            .zip(targets.iter())
            .map(|(&d, &y)| {
                let r = kernel_value(d * d, a, b) - y;
                r * r
            })
            .sum();
        sum / grid.len() as f64
    };

    let mut u = 0.0f64; // ln a
    let mut b = 1.0f64;
    let mut lambda = 1e-3;
    let mut mse = mse_of(u.exp(), b);

    for _ in 0..FIT_MAX_ITER {
        let a = u.exp();
        // Accumulate J^T J and J^T r for the two parameters.
        let (mut juu, mut jub, mut jbb) = (0.0, 0.0, 0.0);
        let (mut gu, mut gb) = (0.0, 0.0);
        for (&d, &y) in grid.iter().zip(targets.iter()) {
            let s = d * d;
            let q = kernel_value(s, a, b);
            let r = q - y;
            let asb = a * s.powf(b);
            let dq_du = -asb * q * q;
            let dq_db = if s > 0.0 { -asb * s.ln() * q * q } else { 0.0 };
            juu += dq_du * dq_du;
            jub += dq_du * dq_db;
            jbb += dq_db * dq_db;
            gu += dq_du * r;
            gb += dq_db * r;
        }

        let mut accepted = false;
        for _ in 0..20 {
            let auu = juu * (1.0 + lambda);
            let abb = jbb * (1.0 + lambda);
            let det = auu * abb - jub * jub;
            if det.abs() < 1e-300 {
                break;
            }
            let du = (-gu * abb + gb * jub) / det;
            let db = (-gb * auu + gu * jub) / det;
            let (u_new, b_new) = (u + du, b + db);
            if b_new > 0.0 && u_new.is_finite() {
                let mse_new = mse_of(u_new.exp(), b_new);
                if mse_new < mse {
                    u = u_new;
                    b = b_new;
                    let improvement = mse - mse_new;
                    mse = mse_new;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if improvement < 1e-16 || du.abs() + db.abs() < 1e-12 {
                        // converged
                        return finish(u.exp(), b, min_dist, mse);
                    }
                    break;
                }
            }
            lambda *= 3.0;
        }
        if !accepted {
            break;
        }
    }

    finish(u.exp(), b, min_dist, mse)
}

fn finish(a: f64, b: f64, min_dist: f64, mse: f64) -> Result<KernelParams> {
    if mse <= FIT_MAX_MSE {
        Ok(KernelParams { a, b, min_dist })
    } else {
        Err(ManeError::Fit { residual: mse })
    }
}
