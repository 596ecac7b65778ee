//! Embedding quality measures: trustworthiness, Procrustes distance, and
//! anchor drift.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ManeError, Result};
use crate::graph::{as_flat_rows, sq_dist};

/// Procrustes distance between one pair of dataset embeddings, restricted
/// to the shared points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharedPairMetric {
    pub dataset_a: usize,
    pub dataset_b: usize,
    pub distance: f64,
}

/// Everything the experiment harness reports about embedding quality.
/// Fields that do not apply to a run are None with the reason recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub k_used: usize,
    pub trustworthiness_per_dataset: Vec<f64>,
    pub trustworthiness_union: Option<f64>,
    pub trustworthiness_union_reason: Option<String>,
    pub procrustes_shared: Option<Vec<SharedPairMetric>>,
    pub procrustes_shared_reason: Option<String>,
    pub anchor_drift: Option<f64>,
    pub anchor_drift_reason: Option<String>,
}

/// Rank-based preservation of local structure:
/// T = 1 - 2/(nk(2n-3k-1)) * sum_i sum_{j in KNN_low(i,k)} max(0, r(i,j) - k)
/// where r(i,j) is the rank of j among the high-dimensional neighbors of i
/// (nearest rank = 1, self excluded, ties broken by lower index).
pub fn trustworthiness(
    high: &ArrayView2<'_, f64>,
    low: &ArrayView2<'_, f64>,
    k: usize,
) -> Result<f64> {
    let n = high.nrows();
    if low.nrows() != n {
        return Err(ManeError::Shape(format!(
            "{} high rows vs {} low rows",
            n,
            low.nrows()
        )));
    }
    if k == 0 {
        return Err(ManeError::Parameter("k must be at least 1".into()));
    }
    if 2 * k >= n {
        return Err(ManeError::Parameter(format!(
            "trustworthiness needs k < n/2, got k = {k}, n = {n}"
        )));
    }

    let (high_flat, _, dh) = as_flat_rows(high);
    let (low_flat, _, dl) = as_flat_rows(low);
    let high_row = |i: usize| &high_flat[i * dh..(i + 1) * dh];
    let low_row = |i: usize| &low_flat[i * dl..(i + 1) * dl];

    let penalty: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            // k nearest neighbors of i in the embedding.
            let li = low_row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(li, low_row(j)), j))
                .collect();
            cand.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
            cand.truncate(k);

            // High-dimensional ranks of those neighbors, by counting.
            let hi = high_row(i);
            let dh_all: Vec<f64> = (0..n).map(|j| sq_dist(hi, high_row(j))).collect();
            let mut row_penalty = 0u64;
            for &(_, j) in &cand {
                let dj = dh_all[j];
                let mut rank = 1u64;
                for (l, &dl_) in dh_all.iter().enumerate() {
                    if l != i && (dl_, l) < (dj, j) {
                        rank += 1;
                    }
                }
                row_penalty += rank.saturating_sub(k as u64);
            }
            row_penalty
        })
        .sum();

    let denom = (n as f64) * (k as f64) * ((2 * n - 3 * k - 1) as f64);
    Ok(1.0 - 2.0 * (penalty as f64) / denom)
}

/// Procrustes distance: center and Frobenius-normalize both point sets,
/// find the optimal orthogonal map (rotations and reflections) and scale,
/// and return sqrt(sum_i ||x_i - y'_i||^2) of the residual.
pub fn procrustes_distance(x: &ArrayView2<'_, f64>, y: &ArrayView2<'_, f64>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(ManeError::Shape(format!(
            "point sets {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if x.nrows() < 2 {
        return Err(ManeError::Parameter(
            "Procrustes distance needs at least 2 rows".into(),
        ));
    }
    // Identical sets are at distance 0 by definition; returning it directly
    // keeps the hard-constraint checks bit-exact.
    if x.iter().zip(y.iter()).all(|(a, b)| a == b) {
        return Ok(0.0);
    }

    let center_normalize = |p: &ArrayView2<'_, f64>| -> Result<ndarray::Array2<f64>> {
        let mean = p.mean_axis(ndarray::Axis(0)).expect("nonempty");
        let centered = p - &mean;
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(ManeError::Degenerate(
                "all points identical; Procrustes distance undefined".into(),
            ));
        }
        Ok(centered / norm)
    };

    let xh = center_normalize(x)?;
    let yh = center_normalize(y)?;

    // Optimal orthogonal map sending yh onto xh: with M = yh^T xh = U S V^T,
    // the rotation (or reflection) is U V^T and the optimal scale is the
    // sum of singular values. The residual is evaluated directly rather
    // than through 1 - (sum of singular values)^2, which cancels badly for
    // near-identical sets.
    let d = x.ncols();
    let cross = yh.t().dot(&xh);
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| cross[[i, j]]);
    let svd = m.svd(true, true);
    let scale: f64 = svd.singular_values.iter().sum();
    let rotation = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");

    let mut residual = 0.0;
    for (rx, ry) in xh.rows().into_iter().zip(yh.rows()) {
        for c in 0..d {
            let mut mapped = 0.0;
            for e in 0..d {
                mapped += ry[e] * rotation[(e, c)];
            }
            let diff = rx[c] - scale * mapped;
            residual += diff * diff;
        }
    }
    Ok(residual.sqrt())
}

/// Maximum over anchors and dataset pairs of the raw Euclidean distance
/// between anchor coordinates. Identically zero for embeddings that store
/// anchors once; computed on deserialized per-dataset exports as an
/// integrity check.
pub fn anchor_drift(anchor_blocks: &[ArrayView2<'_, f64>]) -> Result<f64> {
    if anchor_blocks.len() < 2 {
        return Err(ManeError::Parameter(
            "anchor drift needs at least 2 datasets".into(),
        ));
    }
    let shape = anchor_blocks[0].shape().to_vec();
    for (m, block) in anchor_blocks.iter().enumerate() {
        if block.shape() != &shape[..] {
            return Err(ManeError::Shape(format!(
                "anchor block {m} has shape {:?}, block 0 has {:?}",
                block.shape(),
                shape
            )));
        }
    }

    let mut max_drift = 0.0f64;
    for a in 0..anchor_blocks.len() {
        for b in (a + 1)..anchor_blocks.len() {
            for (ra, rb) in anchor_blocks[a].rows().into_iter().zip(anchor_blocks[b].rows()) {
                let mut acc = 0.0;
                for (x, y) in ra.iter().zip(rb.iter()) {
                    let d = x - y;
                    acc += d * d;
                }
                max_drift = max_drift.max(acc.sqrt());
            }
        }
    }
    Ok(max_drift)
}
