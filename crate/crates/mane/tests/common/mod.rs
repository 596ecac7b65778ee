//! Shared helpers for the integration and acceptance suites.
#![allow(dead_code)]

use std::path::PathBuf;

use mane::data::{load_idx, LabeledMatrix};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A smooth random field: a coarse coefficient grid upsampled bilinearly,
/// values roughly in [-1, 1].
fn smooth_field(rng: &mut ChaCha8Rng, grid: usize, side: usize) -> Array2<f64> {
    let coeff = Array2::from_shape_fn((grid, grid), |_| rng.random_range(-1.0..1.0));
    Array2::from_shape_fn((side, side), |(r, c)| {
        let u = r as f64 / (side - 1) as f64 * (grid - 1) as f64;
        let v = c as f64 / (side - 1) as f64 * (grid - 1) as f64;
        let (r0, c0) = (u.floor() as usize, v.floor() as usize);
        let (r1, c1) = ((r0 + 1).min(grid - 1), (c0 + 1).min(grid - 1));
        let (fu, fv) = (u - r0 as f64, v - c0 as f64);
        coeff[[r0, c0]] * (1.0 - fu) * (1.0 - fv)
            + coeff[[r1, c0]] * fu * (1.0 - fv)
            + coeff[[r0, c1]] * (1.0 - fu) * fv
            + coeff[[r1, c1]] * fu * fv
    })
}

/// Deterministic 10-class image-manifold dataset: 28x28 grayscale images in
/// [0, 1], each a smooth class prototype plus a smooth per-sample
/// deformation and pixel noise. Serves as a desk-scale stand-in for image
/// data when the real IDX files are not available.
pub fn image_manifold(n: usize, seed: u64) -> LabeledMatrix {
    const SIDE: usize = 28;
    const CLASSES: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Array2<f64>> =
        (0..CLASSES).map(|_| smooth_field(&mut rng, 4, SIDE)).collect();

    let mut values = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % CLASSES;
        let deform = smooth_field(&mut rng, 4, SIDE);
        for r in 0..SIDE {
            for c in 0..SIDE {
                let v = 0.5
                    + 0.32 * prototypes[class][[r, c]]
                    + 0.16 * deform[[r, c]]
                    + 0.02 * rng.random_range(-1.0..1.0);
                values.push(v.clamp(0.0, 1.0));
            }
        }
        labels.push(class as i64);
    }
    let points = Array2::from_shape_vec((n, SIDE * SIDE), values).expect("sized above");
    let names = (0..CLASSES).map(|c| format!("class {c}")).collect();
    LabeledMatrix::new(points, Some(labels), Some(names)).expect("valid by construction")
}

/// Seeded subsample of n rows (sorted original order).
pub fn subsample(data: &LabeledMatrix, n: usize, seed: u64) -> LabeledMatrix {
    let mut idx: Vec<usize> = (0..data.n_points()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(n);
    idx.sort_unstable();
    data.select_rows(&idx).expect("indices in range")
}

fn fashion_mnist_dir() -> Option<PathBuf> {
    let mut candidates: Vec<PathBuf> = Vec::new();
    if let Ok(dir) = std::env::var("MANE_FMNIST_DIR") {
        candidates.push(PathBuf::from(dir));
    }
    candidates.push(PathBuf::from("data/fashion-mnist"));
    candidates.push(PathBuf::from("../../data/fashion-mnist"));
    candidates.into_iter().find(|dir| {
        dir.join("train-images-idx3-ubyte").is_file()
            && dir.join("train-labels-idx1-ubyte").is_file()
    })
}

/// A desk-scale image dataset: a seeded subsample of real Fashion-MNIST
/// when its IDX files are present (MANE_FMNIST_DIR or data/fashion-mnist),
/// otherwise the deterministic surrogate image manifold. Returns the data
/// and a tag naming which one was used.
pub fn image_dataset(n: usize, seed: u64) -> (LabeledMatrix, &'static str) {
    if let Some(dir) = fashion_mnist_dir() {
        let data = load_idx(
            &dir.join("train-images-idx3-ubyte"),
            Some(&dir.join("train-labels-idx1-ubyte")),
        )
        .expect("IDX files present but unreadable");
        (subsample(&data, n, seed), "fashion-mnist")
    } else {
        (image_manifold(n, seed), "surrogate image manifold")
    }
}

use mane::data::{extend, split_shared, ExtendedDataset};
use mane::embedding::AlignedEmbedding;
use mane::graph::{build_fuzzy_graph, Metric};
use mane::init::{pca_axes, project_init};
use mane::metrics::trustworthiness;
use mane::optim::{optimize, OptimizerConfig};
use ndarray::s;

/// Split, build graphs, PCA-init, and jointly optimize with the anchor
/// constraint. Returns the extended datasets and the final embedding.
pub fn mane_embed(
    data: &LabeledMatrix,
    n_shared: usize,
    n_partitions: usize,
    cfg: &OptimizerConfig,
    split_seed: u64,
) -> (Vec<ExtendedDataset>, AlignedEmbedding) {
    let plan = split_shared(data, n_shared, n_partitions, split_seed).unwrap();
    let datasets: Vec<ExtendedDataset> = (1..=n_partitions)
        .map(|m| extend(data, &plan, m).unwrap())
        .collect();
    let graphs: Vec<_> = datasets
        .iter()
        .map(|d| build_fuzzy_graph(&d.points(), cfg.n_neighbors, Metric::Euclidean).unwrap())
        .collect();
    let proj = if n_shared >= 2 {
        let seed_rows = datasets[0].points().slice(s![..n_shared, ..]).to_owned();
        pca_axes(&seed_rows.view(), 2).unwrap()
    } else {
        pca_axes(&data.points(), 2).unwrap()
    };
    let refs: Vec<&ExtendedDataset> = datasets.iter().collect();
    let mut embedding = project_init(&refs, &proj, 10.0).unwrap();
    optimize(&mut embedding, &graphs, cfg).unwrap();
    (datasets, embedding)
}

/// Plain UMAP on the whole dataset (one partition, no shared block),
/// returning its trustworthiness at the given k.
pub fn plain_umap_union_t(data: &LabeledMatrix, cfg: &OptimizerConfig, k: usize) -> f64 {
    let (datasets, embedding) = mane_embed(data, 0, 1, cfg, cfg.rng_seed);
    trustworthiness(
        &datasets[0].points(),
        &embedding.dataset_coords(0).view(),
        k,
    )
    .unwrap()
}

/// Trustworthiness of the deduplicated union: seed rows once plus all local
/// rows against the anchor block plus all private blocks.
pub fn union_trustworthiness(
    datasets: &[ExtendedDataset],
    embedding: &AlignedEmbedding,
    k: usize,
) -> f64 {
    let n0 = embedding.n_anchors();
    let dim_high = datasets[0].n_features();
    let total: usize = n0 + datasets.iter().map(|d| d.total_size() - n0).sum::<usize>();
    let mut high = Array2::zeros((total, dim_high));
    let mut low = Array2::zeros((total, embedding.dim()));
    let mut cursor = 0;
    if n0 > 0 {
        high.slice_mut(s![..n0, ..])
            .assign(&datasets[0].points().slice(s![..n0, ..]));
        low.slice_mut(s![..n0, ..]).assign(&embedding.anchor_block());
        cursor = n0;
    }
    for (m, ds) in datasets.iter().enumerate() {
        let rows = ds.total_size() - n0;
        high.slice_mut(s![cursor..cursor + rows, ..])
            .assign(&ds.points().slice(s![n0.., ..]));
        low.slice_mut(s![cursor..cursor + rows, ..])
            .assign(&embedding.private_block(m));
        cursor += rows;
    }
    trustworthiness(&high.view(), &low.view(), k).unwrap()
}

/// Print one acceptance line and assert it passed.
pub fn criterion(number: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number:2} ({name}): {verdict} — {detail}");
    assert!(pass, "criterion {number} ({name}) failed: {detail}");
}
