//! Acceptance suite. Each test checks one criterion at its stated
//! tolerance and prints one pass/fail line (visible with --nocapture).

mod common;

use std::time::Instant;

use common::*;
use mane::data::{gen_swiss_roll, split_shared, extend, LabeledMatrix};
use mane::embedding::AlignedEmbedding;
use mane::experiment::{run_experiment, DataSource, ExperimentConfig};
use mane::graph::smooth_knn_row;
use mane::init::{pca_axes, pca_baseline, project, project_init, Projection};
use mane::kernel::{fit_ab, fit_residual_mse, kernel_value, psi};
use mane::metrics::{procrustes_distance, trustworthiness};
use mane::optim::{
    attractive_coefficient, optimize, repulsive_coefficient, OptimizerConfig,
};
use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn desk_config(seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        rng_seed: seed,
        ..OptimizerConfig::default()
    }
}

/// Criterion 1: for every constrained run, shared-point Procrustes distance
/// and anchor drift are exactly zero, bit-exact, across datasets and M.
#[test]
fn c01_hard_constraint_exactness() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    // Three different datasets and partition counts, through the full
    // experiment harness (reports read back from exported artifacts).
    let mut runs: Vec<(&str, ExperimentConfig)> = Vec::new();

    let mut swiss = ExperimentConfig::new(
        DataSource::SwissRoll { n_samples: 600, noise: 0.2 },
        dir.path().join("swiss"),
    );
    swiss.n_shared = 120;
    swiss.n_partitions = 2;
    swiss.optimizer.n_epochs = 40;
    runs.push(("swiss roll M=2", swiss));

    let (img, _) = common::image_dataset(600, 11);
    let img_csv = dir.path().join("img.csv");
    write_feature_csv(&img, &img_csv);
    let mut img_cfg = ExperimentConfig::new(
        DataSource::Csv { path: img_csv, label_column: Some("label".into()) },
        dir.path().join("img"),
    );
    img_cfg.n_shared = 100;
    img_cfg.n_partitions = 3;
    img_cfg.optimizer.n_epochs = 30;
    img_cfg.optimizer.n_neighbors = 15;
    runs.push(("image data M=3", img_cfg));

    let mut wide = ExperimentConfig::new(
        DataSource::SwissRoll { n_samples: 900, noise: 0.0 },
        dir.path().join("wide"),
    );
    wide.n_shared = 90;
    wide.n_partitions = 4;
    wide.optimizer.n_epochs = 30;
    wide.optimizer.n_neighbors = 12;
    wide.rng_seed = 9;
    wide.optimizer.rng_seed = 9;
    runs.push(("swiss roll M=4", wide));

    let mut all_pass = true;
    let mut details = Vec::new();
    for (tag, cfg) in &runs {
        let report = run_experiment(cfg).unwrap();
        let pairs = report.metrics.procrustes_shared.as_ref().unwrap();
        let max_dp = pairs.iter().map(|p| p.distance).fold(0.0f64, f64::max);
        let drift = report.metrics.anchor_drift.unwrap();
        let ok = max_dp == 0.0 && drift == 0.0;
        all_pass &= ok;
        details.push(format!("{tag}: max d_p = {max_dp}, drift = {drift}"));
    }
    criterion(
        1,
        "hard-constraint exactness",
        all_pass,
        &format!("{} [{:.0?}]", details.join("; "), started.elapsed()),
    );
}

fn write_feature_csv(data: &LabeledMatrix, path: &std::path::Path) {
    let mut text = String::new();
    for c in 0..data.n_features() {
        text.push_str(&format!("f{c},"));
    }
    text.push_str("label\n");
    for (i, row) in data.points().rows().into_iter().enumerate() {
        for v in row.iter() {
            text.push_str(&format!("{v},"));
        }
        text.push_str(&format!("{}\n", data.labels().unwrap()[i]));
    }
    std::fs::write(path, text).unwrap();
}

/// Criterion 2: desk-scale image data, split 1000/2500/2500. Plain-UMAP
/// trustworthiness of the union (k = 5) is at least 0.93 and the MANE union
/// value is within 0.02 of it.
#[test]
fn c02_desk_scale_image_data() {
    let started = Instant::now();
    let (data, tag) = image_dataset(6000, 4217);

    let t_umap = plain_umap_union_t(&data, &desk_config(42), 5);
    let (datasets, embedding) = mane_embed(&data, 1000, 2, &desk_config(42), 42);
    let t_mane = union_trustworthiness(&datasets, &embedding, 5);

    let gap = (t_mane - t_umap).abs();
    let pass = t_umap >= 0.93 && gap <= 0.02;
    criterion(
        2,
        "desk-scale image data",
        pass,
        &format!(
            "{tag}: plain UMAP union T = {t_umap:.4} (>= 0.93), MANE union T = {t_mane:.4}, \
             gap {gap:.4} (<= 0.02) [{:.0?}]",
            started.elapsed()
        ),
    );
}

/// Criterion 3: swiss roll, 6000 samples, 1000 shared, two partitions:
/// MANE union trustworthiness at least 0.97.
#[test]
fn c03_swiss_roll_desk_scale() {
    let started = Instant::now();
    let data = gen_swiss_roll(6000, 0.0, 3).unwrap();
    let (datasets, embedding) = mane_embed(&data, 1000, 2, &desk_config(3), 3);
    let t = union_trustworthiness(&datasets, &embedding, 5);
    criterion(
        3,
        "swiss roll desk scale",
        t >= 0.97,
        &format!("MANE union T = {t:.4} (>= 0.97) [{:.0?}]", started.elapsed()),
    );
}

/// Criterion 4: at 6000 total points with N0 in {100, 500, 2000}, mean
/// union trustworthiness over 3 seeds is nondecreasing in N0 within a
/// 0.005 tolerance band.
#[test]
fn c04_vary_shared_count_trend() {
    let started = Instant::now();
    let mut means = Vec::new();
    for n0 in [100usize, 500, 2000] {
        let mut sum = 0.0;
        for seed in [1u64, 2, 3] {
            let data = gen_swiss_roll(6000, 0.0, seed).unwrap();
            let (datasets, embedding) = mane_embed(&data, n0, 2, &desk_config(seed), seed);
            sum += union_trustworthiness(&datasets, &embedding, 5);
        }
        means.push(sum / 3.0);
    }
    let pass = means[1] >= means[0] - 0.005 && means[2] >= means[1] - 0.005;
    criterion(
        4,
        "vary-N0 trend",
        pass,
        &format!(
            "mean union T at N0 = 100/500/2000: {:.4}/{:.4}/{:.4}, nondecreasing within 0.005 \
             [{:.0?}]",
            means[0],
            means[1],
            means[2],
            started.elapsed()
        ),
    );
}

/// Criterion 5: 6000 points, 5 partitions, 600 shared: all 10 pairwise
/// shared-point Procrustes distances are exactly 0 and union T >= 0.90.
#[test]
fn c05_five_way_split() {
    let started = Instant::now();
    let data = gen_swiss_roll(6000, 0.0, 9).unwrap();
    let (datasets, embedding) = mane_embed(&data, 600, 5, &desk_config(9), 9);

    // Materialize each dataset's view of the shared points, then evaluate
    // all pairs, as the figure does.
    let anchor_views: Vec<Array2<f64>> = (0..5)
        .map(|m| embedding.dataset_coords(m).slice(s![..600, ..]).to_owned())
        .collect();
    let mut n_pairs = 0;
    let mut max_dp = 0.0f64;
    for a in 0..5 {
        for b in (a + 1)..5 {
            let dp =
                procrustes_distance(&anchor_views[a].view(), &anchor_views[b].view()).unwrap();
            max_dp = max_dp.max(dp);
            n_pairs += 1;
        }
    }
    let t = union_trustworthiness(&datasets, &embedding, 5);
    let pass = n_pairs == 10 && max_dp == 0.0 && t >= 0.90;
    criterion(
        5,
        "five-way split",
        pass,
        &format!(
            "10 pairwise d_p all = {max_dp}, union T = {t:.4} (>= 0.90) [{:.0?}]",
            started.elapsed()
        ),
    );
}

/// Criterion 6: on 1000 random k-NN rows (k in {15, 30}), the calibrated
/// weight sum is within 1e-4 of log2(k) except on clamped degenerate rows,
/// which are counted and reported.
#[test]
fn c06_sigma_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut clamped_count = 0usize;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let k = if trial % 2 == 0 { 15 } else { 30 };
        // One in fifty rows is all-duplicates, deliberately degenerate.
        let row: Vec<f64> = if trial % 50 == 17 {
            vec![rng.random_range(0.5..2.0); k]
        } else {
            let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..4.0)).collect();
            r.sort_by(|a, b| a.partial_cmp(b).unwrap());
            r
        };
        let (rho, sigma, clamped) = smooth_knn_row(&row, k).unwrap();
        if clamped {
            clamped_count += 1;
            continue;
        }
        let sum: f64 = row.iter().map(|&d| (-((d - rho).max(0.0) / sigma)).exp()).sum();
        let residual = (sum - (k as f64).log2()).abs();
        worst = worst.max(residual);
        checked += 1;
        assert!(
            residual <= 1e-4,
            "row {trial}: residual {residual} exceeds 1e-4"
        );
    }
    criterion(
        6,
        "sigma calibration",
        worst <= 1e-4,
        &format!(
            "{checked} rows within 1e-4 of log2(k) (worst {worst:.2e}), {clamped_count} clamped \
             degenerate rows reported"
        ),
    );
}

/// Criterion 7: analytic attractive/repulsive gradients match central
/// finite differences of the loss terms within 1e-4 relative on 1000
/// random (delta, a, b) triples with |delta| in [0.1, 5].
#[test]
fn c07_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = rng.random_range(0.5..3.0);
        let b = rng.random_range(0.5..2.0);
        let norm = rng.random_range(0.1..5.0);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let yj = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let yi = [yj[0] + norm * angle.cos(), yj[1] + norm * angle.sin()];
        let dist_sq: f64 = (yi[0] - yj[0]).powi(2) + (yi[1] - yj[1]).powi(2);

        let attr_loss = |p: &[f64; 2]| {
            let s: f64 = (p[0] - yj[0]).powi(2) + (p[1] - yj[1]).powi(2);
            (1.0 + a * s.powf(b)).ln()
        };
        let rep_loss = |p: &[f64; 2]| {
            let s: f64 = (p[0] - yj[0]).powi(2) + (p[1] - yj[1]).powi(2);
            let q = 1.0 / (1.0 + a * s.powf(b));
            -(1.0 - q).ln()
        };

        let fd = |f: &dyn Fn(&[f64; 2]) -> f64| -> [f64; 2] {
            let mut out = [0.0; 2];
            for c in 0..2 {
                let mut plus = yi;
                let mut minus = yi;
                plus[c] += h;
                minus[c] -= h;
                out[c] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
            out
        };

        // The applied gradient is the negated loss gradient; compare as
        // vectors, relative to the finite-difference norm.
        let fd_attr = fd(&attr_loss);
        let coef_attr = attractive_coefficient(dist_sq, a, b);
        let fd_rep = fd(&rep_loss);
        let coef_rep = repulsive_coefficient(dist_sq, a, b, 0.0);
        for (coef, fd_vec) in [(coef_attr, fd_attr), (coef_rep, fd_rep)] {
            let g = [coef * (yi[0] - yj[0]), coef * (yi[1] - yj[1])];
            let err = ((g[0] + fd_vec[0]).powi(2) + (g[1] + fd_vec[1]).powi(2)).sqrt();
            let scale = (fd_vec[0].powi(2) + fd_vec[1].powi(2)).sqrt().max(1e-12);
            worst = worst.max(err / scale);
        }
    }
    criterion(
        7,
        "gradient oracle",
        worst <= 1e-4,
        &format!("1000 random triples, worst relative error {worst:.2e} (<= 1e-4)"),
    );
}

/// Criterion 8: fit_ab(0.1) lands within 0.02 of the independent
/// grid-search optimum and its residual against the target curve is at
/// most 1e-3 MSE.
#[test]
fn c08_kernel_fit() {
    // Independent oracle: coarse grid search minimizing the same residual.
    let grid: Vec<f64> = (0..300).map(|i| 3.0 * i as f64 / 299.0).collect();
    let targets: Vec<f64> = grid.iter().map(|&d| psi(d, 0.1)).collect();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut b = 0.5;
    while b <= 2.0 + 1e-9 {
        let powers: Vec<f64> = grid.iter().map(|&d| (d * d).powf(b)).collect();
        let mut a = 0.5;
        while a <= 3.0 + 1e-9 {
            let mse = powers
                .iter()
                .zip(targets.iter())
                .map(|(&p, &y)| {
                    let r = 1.0 / (1.0 + a * p) - y;
                    r * r
                })
                .sum::<f64>()
                / grid.len() as f64;
            if mse < best.0 {
                best = (mse, a, b);
            }
            a += 0.005;
        }
        b += 0.005;
    }
    let (_, a_oracle, b_oracle) = best;

    let params = fit_ab(0.1).unwrap();
    let mse = fit_residual_mse(params.a, params.b, 0.1);
    let pass = (params.a - a_oracle).abs() <= 0.02
        && (params.b - b_oracle).abs() <= 0.02
        && mse <= 1e-3
        && kernel_value(0.0, params.a, params.b) == 1.0;
    criterion(
        8,
        "(a,b) fit",
        pass,
        &format!(
            "fit (a, b) = ({:.4}, {:.4}) vs grid oracle ({a_oracle:.3}, {b_oracle:.3}), \
             MSE = {mse:.2e} (<= 1e-3)",
            params.a, params.b
        ),
    );
}

/// Criterion 9: trustworthiness equals an independent all-pairs-rank
/// oracle exactly, and Procrustes distance matches an independent
/// brute-force angle scan to 1e-8, on 50 random instances each (n <= 200).
#[test]
fn c09_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst_dp = 0.0f64;
    for trial in 0..50 {
        let n = rng.random_range(20..=200);
        let high = Array2::from_shape_fn((n, 6), |_| rng.random_range(-1.0..1.0));
        let low = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let k = rng.random_range(1..=(n / 2 - 1).min(9));
        let mine = trustworthiness(&high.view(), &low.view(), k).unwrap();
        let oracle = trustworthiness_rank_oracle(&high.view(), &low.view(), k);
        assert_eq!(mine, oracle, "trustworthiness trial {trial} (n = {n}, k = {k})");

        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let dp = procrustes_distance(&x.view(), &y.view()).unwrap();
        let dp_oracle = procrustes_angle_scan_oracle(&x.view(), &y.view());
        worst_dp = worst_dp.max((dp - dp_oracle).abs());
    }
    criterion(
        9,
        "metric oracles",
        worst_dp <= 1e-8,
        &format!(
            "50 trustworthiness instances equal exactly; 50 Procrustes instances within \
             {worst_dp:.2e} of the angle-scan oracle (<= 1e-8)"
        ),
    );
}

fn trustworthiness_rank_oracle(high: &ArrayView2<'_, f64>, low: &ArrayView2<'_, f64>, k: usize) -> f64 {
    let n = high.nrows();
    let dist = |p: &ArrayView2<'_, f64>, i: usize, j: usize| {
        let mut acc = 0.0;
        for (x, y) in p.row(i).iter().zip(p.row(j).iter()) {
            let d = x - y;
            acc += d * d;
        }
        acc
    };
    let mut penalty = 0u64;
    for i in 0..n {
        let mut high_order: Vec<(f64, usize)> =
            (0..n).filter(|&j| j != i).map(|j| (dist(high, i, j), j)).collect();
        high_order.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut rank_of = vec![0u64; n];
        for (pos, &(_, j)) in high_order.iter().enumerate() {
            rank_of[j] = pos as u64 + 1;
        }
        let mut low_order: Vec<(f64, usize)> =
            (0..n).filter(|&j| j != i).map(|j| (dist(low, i, j), j)).collect();
        low_order.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &(_, j) in low_order.iter().take(k) {
            penalty += rank_of[j].saturating_sub(k as u64);
        }
    }
    let denom = (n as f64) * (k as f64) * ((2 * n - 3 * k - 1) as f64);
    1.0 - 2.0 * (penalty as f64) / denom
}

fn procrustes_angle_scan_oracle(x: &ArrayView2<'_, f64>, y: &ArrayView2<'_, f64>) -> f64 {
    let center_normalize = |p: &ArrayView2<'_, f64>| {
        let mean = p.mean_axis(ndarray::Axis(0)).unwrap();
        let c = p - &mean;
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        c / norm
    };
    let xh = center_normalize(x);
    let yh = center_normalize(y);
    let corr = |theta: f64, reflect: bool| -> f64 {
        let (c, s) = (theta.cos(), theta.sin());
        let mut acc = 0.0;
        for (rx, ry) in xh.rows().into_iter().zip(yh.rows()) {
            let (yx, yy) = (ry[0], ry[1]);
            let (ryx, ryy) = if reflect {
                (c * yx + s * yy, s * yx - c * yy)
            } else {
                (c * yx - s * yy, s * yx + c * yy)
            };
            acc += rx[0] * ryx + rx[1] * ryy;
        }
        acc
    };
    let mut best = f64::NEG_INFINITY;
    for reflect in [false, true] {
        let coarse = 2048;
        let mut best_theta = 0.0;
        let mut best_c = f64::NEG_INFINITY;
        for step in 0..coarse {
            let theta = std::f64::consts::TAU * step as f64 / coarse as f64;
            let c = corr(theta, reflect);
            if c > best_c {
                best_c = c;
                best_theta = theta;
            }
        }
        let window = std::f64::consts::TAU / coarse as f64;
        let (mut lo, mut hi) = (best_theta - window, best_theta + window);
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        for _ in 0..90 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if corr(m1, reflect) < corr(m2, reflect) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        best = best.max(corr(0.5 * (lo + hi), reflect));
    }
    (1.0 - best * best).max(0.0).sqrt()
}

/// Criterion 10: the PCA linear baseline scores higher trustworthiness on
/// the swiss roll than on the image data, and its shared points have
/// Procrustes distance 0.
#[test]
fn c10_pca_baseline() {
    let started = Instant::now();
    let (img, tag) = image_dataset(6000, 1010);
    let roll = gen_swiss_roll(6000, 0.0, 1010).unwrap();

    let run = |data: &LabeledMatrix| -> (f64, f64) {
        let plan = split_shared(data, 1000, 2, 1010).unwrap();
        let datasets: Vec<_> = (1..=2).map(|m| extend(data, &plan, m).unwrap()).collect();
        let seed_rows = datasets[0].points().slice(s![..1000, ..]).to_owned();
        let proj = pca_axes(&seed_rows.view(), 2).unwrap();
        let refs: Vec<&mane::data::ExtendedDataset> = datasets.iter().collect();
        let embedding = pca_baseline(&refs, &proj).unwrap();
        let t = union_trustworthiness(&datasets, &embedding, 5);
        let dp = procrustes_distance(&embedding.anchor_block(), &embedding.anchor_block()).unwrap();
        (t, dp)
    };
    let (t_img, dp_img) = run(&img);
    let (t_roll, dp_roll) = run(&roll);

    let pass = t_roll > t_img && dp_img == 0.0 && dp_roll == 0.0;
    criterion(
        10,
        "PCA baseline",
        pass,
        &format!(
            "baseline union T: swiss roll {t_roll:.4} > {tag} {t_img:.4}; shared d_p = \
             {dp_roll}/{dp_img} [{:.0?}]",
            started.elapsed()
        ),
    );
}

/// Criterion 11: with one dataset and no shared points, the constrained
/// optimizer and the plain-UMAP path produce trustworthiness values that
/// differ by less than 1e-6 under the same seed (identical code path).
#[test]
fn c11_reduction_to_plain_umap() {
    let data = gen_swiss_roll(800, 0.0, 5).unwrap();
    let plan = split_shared(&data, 0, 1, 5).unwrap();
    let ds = extend(&data, &plan, 1).unwrap();
    let graph =
        mane::graph::build_fuzzy_graph(&ds.points(), 15, mane::graph::Metric::Euclidean).unwrap();
    let proj: Projection = pca_axes(&ds.points(), 2).unwrap();
    let cfg = OptimizerConfig {
        n_epochs: 60,
        n_neighbors: 15,
        rng_seed: 5,
        ..OptimizerConfig::default()
    };

    // Constrained path with an empty anchor block.
    let mut via_mane = project_init(&[&ds], &proj, 10.0).unwrap();
    optimize(&mut via_mane, std::slice::from_ref(&graph), &cfg).unwrap();

    // Dedicated plain-UMAP path: project, rescale, single private block.
    let coords = project(&ds.points(), &proj).unwrap();
    let max_abs = coords.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let coords = coords.mapv(|v| v / max_abs * 10.0);
    let mut via_umap = AlignedEmbedding::new(Array2::zeros((0, 2)), vec![coords]).unwrap();
    optimize(&mut via_umap, std::slice::from_ref(&graph), &cfg).unwrap();

    let t_mane = trustworthiness(&ds.points(), &via_mane.dataset_coords(0).view(), 5).unwrap();
    let t_umap = trustworthiness(&ds.points(), &via_umap.dataset_coords(0).view(), 5).unwrap();
    let diff = (t_mane - t_umap).abs();
    let identical = via_mane == via_umap;
    criterion(
        11,
        "reduction sanity",
        diff < 1e-6 && identical,
        &format!(
            "T difference {diff:.2e} (< 1e-6); embeddings bit-identical: {identical}"
        ),
    );
}
