//! PCA of the seed dataset, anchor-consistent initialization of all
//! embeddings, and the standalone linear projection baseline.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::ExtendedDataset;
use crate::embedding::AlignedEmbedding;
use crate::error::{ManeError, Result};

const POWER_MAX_ITER: usize = 500;
const POWER_TOL: f64 = 1e-9;
/// Start vectors for the power iteration come from this fixed seed, so the
/// solver is deterministic.
const POWER_SEED: u64 = 0x5eed_0001;
/// An axis whose eigenvalue falls below this fraction of the total variance
/// is treated as numerically rank-deficient.
const DEGENERATE_FRACTION: f64 = 1e-12;

/// A linear projection: column means plus top-d principal axes.
#[derive(Debug, Clone)]
pub struct Projection {
    pub mean: Array1<f64>,
    /// n x d, columns orthonormal, ordered by descending explained variance.
    pub axes: Array2<f64>,
    pub explained_variance: Vec<f64>,
    /// Indices of axes that were filled by arbitrary orthonormal completion
    /// because the input had rank below d.
    pub degenerate_axes: Vec<usize>,
}

fn orthogonalize(v: &mut Array1<f64>, axes: &[Array1<f64>]) {
    // Two Gram-Schmidt passes keep the residual orthogonal to working
    // precision even when v is nearly inside the span.
    for _ in 0..2 {
        for u in axes {
            let proj = v.dot(u);
            v.scaled_add(-proj, u);
        }
    }
}

fn apply_sign_rule(v: &mut Array1<f64>) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Top-d principal axes of the centered covariance, found by power
/// iteration with deflation. Deterministic: fixed start seed, fixed
/// iteration cap, sign convention making the largest-magnitude component of
/// each axis positive.
pub fn pca_axes(seed_data: &ArrayView2<'_, f64>, d: usize) -> Result<Projection> {
    let (n_rows, n_features) = (seed_data.nrows(), seed_data.ncols());
    if d == 0 || d > n_features {
        return Err(ManeError::Parameter(format!(
            "target dimension {d} outside 1..={n_features}"
        )));
    }
    if n_rows < 2 {
        return Err(ManeError::Parameter(format!(
            "PCA needs at least 2 rows, got {n_rows}"
        )));
    }

    let mean = seed_data.mean_axis(ndarray::Axis(0)).expect("n_rows >= 1");
    let centered = seed_data - &mean;
    let denom = (n_rows - 1) as f64;
    let total_variance: f64 = centered.iter().map(|v| v * v).sum::<f64>() / denom;
    let cov_apply = |v: &Array1<f64>| -> Array1<f64> {
        let tmp = centered.dot(v);
        centered.t().dot(&tmp) / denom
    };

    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut axes: Vec<Array1<f64>> = Vec::with_capacity(d);
    let mut variances: Vec<f64> = Vec::with_capacity(d);
    let mut degenerate_axes: Vec<usize> = Vec::new();
    let floor = DEGENERATE_FRACTION * total_variance.max(f64::MIN_POSITIVE);

    for axis_idx in 0..d {
        let mut v = Array1::from_shape_fn(n_features, |_| rng.random_range(-1.0..1.0));
        orthogonalize(&mut v, &axes);
        let norm = v.dot(&v).sqrt();
        let mut degenerate = total_variance <= 0.0;
        if norm > 0.0 {
            v /= norm;
        } else {
            degenerate = true;
        }

        if !degenerate {
            let mut converged_degenerate = false;
            for _ in 0..POWER_MAX_ITER {
                let mut w = cov_apply(&v);
                orthogonalize(&mut w, &axes);
                let norm = w.dot(&w).sqrt();
                if norm <= floor {
                    converged_degenerate = true;
                    break;
                }
                w /= norm;
                let diff = (&w - &v).iter().map(|x| x * x).sum::<f64>().sqrt();
                v = w;
                if diff <= POWER_TOL {
                    break;
                }
            }
            degenerate = converged_degenerate;
        }

        if degenerate {
            // Rank-deficient: complete with the first standard basis vector
            // that has a component outside the current span.
            let mut filled = false;
            for basis in 0..n_features {
                let mut e = Array1::zeros(n_features);
                e[basis] = 1.0;
                orthogonalize(&mut e, &axes);
                let norm = e.dot(&e).sqrt();
                if norm > 1e-6 {
                    e /= norm;
                    apply_sign_rule(&mut e);
                    axes.push(e);
                    variances.push(0.0);
                    degenerate_axes.push(axis_idx);
                    filled = true;
                    break;
                }
            }
            if !filled {
                return Err(ManeError::Degenerate(
                    "could not complete an orthonormal basis".into(),
                ));
            }
        } else {
            let lambda = v.dot(&cov_apply(&v));
            apply_sign_rule(&mut v);
            axes.push(v);
            variances.push(lambda.max(0.0));
        }
    }

    let mut axes_mat = Array2::zeros((n_features, d));
    for (c, axis) in axes.iter().enumerate() {
        axes_mat.column_mut(c).assign(axis);
    }
    Ok(Projection {
        mean,
        axes: axes_mat,
        explained_variance: variances,
        degenerate_axes,
    })
}

/// Project points through (x - mean) * axes.
pub fn project(points: &ArrayView2<'_, f64>, proj: &Projection) -> Result<Array2<f64>> {
    if points.ncols() != proj.mean.len() {
        return Err(ManeError::Shape(format!(
            "points have {} features, projection expects {}",
            points.ncols(),
            proj.mean.len()
        )));
    }
    let centered = points - &proj.mean;
    Ok(centered.dot(&proj.axes))
}

fn project_blocks(
    datasets: &[&ExtendedDataset],
    proj: &Projection,
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    if datasets.is_empty() {
        return Err(ManeError::Parameter("no datasets to initialize".into()));
    }
    let n_anchors = datasets[0].n_anchors();
    for (m, ds) in datasets.iter().enumerate() {
        if ds.n_anchors() != n_anchors {
            return Err(ManeError::Shape(format!(
                "dataset {m} has {} anchors, dataset 0 has {n_anchors}",
                ds.n_anchors()
            )));
        }
    }

    // Anchor rows are bit-identical across datasets, so projecting the
    // first dataset's anchor view gives the one shared anchor block.
    let anchor_block = project(&datasets[0].points().slice(s![..n_anchors, ..]), proj)?;
    let mut private_blocks = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let local = ds.points();
        let local = local.slice(s![n_anchors.., ..]);
        private_blocks.push(project(&local, proj)?);
    }
    Ok((anchor_block, private_blocks))
}

/// Initialize all embeddings from one projection of the seed data, then
/// rescale globally so the maximum absolute coordinate equals `spread`.
/// Anchor coordinates are written once into the shared block.
pub fn project_init(
    datasets: &[&ExtendedDataset],
    proj: &Projection,
    spread: f64,
) -> Result<AlignedEmbedding> {
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(ManeError::Parameter(format!(
            "spread must be a positive real, got {spread}"
        )));
    }
    let (mut anchor_block, mut private_blocks) = project_blocks(datasets, proj)?;
    rescale_in_place(&mut anchor_block, &mut private_blocks, spread);
    AlignedEmbedding::new(anchor_block, private_blocks)
}

/// Rescale all blocks globally so the maximum absolute coordinate equals
/// `spread` exactly (each value is divided by the maximum first, so the
/// extreme coordinate maps to exactly +-spread). All-zero blocks are left
/// untouched.
pub(crate) fn rescale_in_place(
    anchor_block: &mut Array2<f64>,
    private_blocks: &mut [Array2<f64>],
    spread: f64,
) {
    let max_abs = anchor_block
        .iter()
        .chain(private_blocks.iter().flat_map(|b| b.iter()))
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if max_abs > 0.0 {
        anchor_block.mapv_inplace(|v| v / max_abs * spread);
        for block in private_blocks.iter_mut() {
            block.mapv_inplace(|v| v / max_abs * spread);
        }
    }
}

/// The linear baseline: the same shared projection without rescaling,
/// returned as a finished embedding for metric evaluation.
pub fn pca_baseline(datasets: &[&ExtendedDataset], proj: &Projection) -> Result<AlignedEmbedding> {
    let (anchor_block, private_blocks) = project_blocks(datasets, proj)?;
    AlignedEmbedding::new(anchor_block, private_blocks)
}
