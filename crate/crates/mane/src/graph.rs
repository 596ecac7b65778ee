//! High-dimensional fuzzy graph construction: exact k-nearest neighbors,
//! smooth-knn calibration of (rho, sigma), directed membership weights, and
//! probabilistic t-conorm symmetrization.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{ManeError, Result};

/// Convergence tolerance of the sigma bisection on |sum - log2(k)|.
pub const SMOOTH_KNN_TOL: f64 = 1e-5;
/// Iteration cap of the sigma bisection.
pub const SMOOTH_KNN_MAX_ITER: usize = 64;
/// Sigma clamp bounds, relative to the mean row distance.
pub const SIGMA_SCALE_LO: f64 = 1e-3;
pub const SIGMA_SCALE_HI: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
}

/// Exact k-nearest-neighbor lists: row i holds the neighbors of point i in
/// ascending distance order, self excluded, ties broken by lower index.
#[derive(Debug, Clone)]
pub struct NeighborLists {
    pub indices: Array2<usize>,
    pub distances: Array2<f64>,
}

impl NeighborLists {
    pub fn n_points(&self) -> usize {
        self.indices.nrows()
    }

    pub fn k(&self) -> usize {
        self.indices.ncols()
    }
}

/// Per-point smooth-knn calibration: rho is the nearest-neighbor distance,
/// sigma the bandwidth solving sum_j exp(-(d_j - rho)/sigma) = log2(k).
#[derive(Debug, Clone)]
pub struct SmoothKnnParams {
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// True where the bisection result had to be clamped into the allowed
    /// sigma range (degenerate rows whose target sum is unattainable).
    pub clamped: Vec<bool>,
}

/// Sparse directed membership weights: rows[i] lists (j, weight) for the k
/// neighbors of i, in neighbor order.
#[derive(Debug, Clone)]
pub struct DirectedWeights {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl DirectedWeights {
    pub fn n_points(&self) -> usize {
        self.rows.len()
    }
}

/// One undirected edge of a fuzzy graph, with i < j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Sparse symmetric adjacency with weights in (0, 1], one entry per
/// unordered pair, sorted by (i, j).
#[derive(Debug, Clone)]
pub struct FuzzyGraph {
    pub edges: Vec<Edge>,
    pub n_vertices: usize,
}

impl FuzzyGraph {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn max_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let mut prev: Option<(usize, usize)> = None;
        for e in &self.edges {
            if e.i >= e.j {
                return Err(ManeError::Consistency(format!(
                    "edge ({}, {}) not ordered i < j",
                    e.i, e.j
                )));
            }
            if e.j >= self.n_vertices {
                return Err(ManeError::Index(format!(
                    "edge ({}, {}) beyond {} vertices",
                    e.i, e.j, self.n_vertices
                )));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) || !e.weight.is_finite() {
                return Err(ManeError::Consistency(format!(
                    "edge weight {} outside (0, 1]",
                    e.weight
                )));
            }
            if let Some(p) = prev {
                if p >= (e.i, e.j) {
                    return Err(ManeError::Consistency(
                        "edges not sorted by (i, j) or pair duplicated".into(),
                    ));
                }
            }
            prev = Some((e.i, e.j));
        }
        Ok(())
    }
}

/// Squared Euclidean distance between two rows, accumulated left to right.
/// Every distance in this crate (graph construction, metrics) uses this same
/// accumulation order so results are reproducible across call sites.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

pub(crate) fn as_flat_rows(points: &ArrayView2<'_, f64>) -> (Vec<f64>, usize, usize) {
    let (n, dim) = (points.nrows(), points.ncols());
    let flat = match points.as_slice() {
        Some(s) => s.to_vec(),
        None => points.iter().copied().collect(),
    };
    (flat, n, dim)
}

/// Exact brute-force k-nearest neighbors under the metric, self excluded,
/// ties broken by lower index. Rows are computed independently and in
/// parallel; the result is identical to sequential execution.
pub fn knn(points: &ArrayView2<'_, f64>, k: usize, metric: Metric) -> Result<NeighborLists> {
    let Metric::Euclidean = metric;
    let n = points.nrows();
    if k == 0 {
        return Err(ManeError::Parameter("k must be at least 1".into()));
    }
    if k >= n {
        return Err(ManeError::Parameter(format!(
            "k = {k} must be smaller than the number of points {n}"
        )));
    }
    let (flat, n, dim) = as_flat_rows(points);
    let row = |i: usize| &flat[i * dim..(i + 1) * dim];

    let per_row: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(ri, row(j)), j))
                .collect();
            cand.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
            cand.truncate(k);
            cand.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            cand
        })
        .collect();

    let mut indices = Array2::zeros((n, k));
    let mut distances = Array2::zeros((n, k));
    for (i, cand) in per_row.iter().enumerate() {
        for (c, &(d2, j)) in cand.iter().enumerate() {
            indices[[i, c]] = j;
            distances[[i, c]] = d2.sqrt();
        }
    }
    Ok(NeighborLists { indices, distances })
}

/// Calibrate (rho, sigma) for one ascending row of neighbor distances so
/// that sum_j exp(-max(0, d_j - rho)/sigma) hits log2(k), by bisection.
/// Returns (rho, sigma, clamped).
pub fn smooth_knn_row(distances: &[f64], k: usize) -> Result<(f64, f64, bool)> {
    if distances.is_empty() {
        return Err(ManeError::Parameter("empty distance row".into()));
    }
    if k < 2 {
        return Err(ManeError::Parameter(format!(
            "smooth-knn target log2(k) needs k >= 2, got {k}"
        )));
    }
    if distances[0] < 0.0 || distances.windows(2).any(|w| w[0] > w[1]) {
        return Err(ManeError::Parameter(
            "distances must be ascending and nonnegative".into(),
        ));
    }

    let rho = distances[0];
    let target = (k as f64).log2();
    let mean_d = distances.iter().sum::<f64>() / distances.len() as f64;
    if mean_d == 0.0 {
        // All-duplicate row: every weight is exp(0) regardless of sigma.
        return Ok((rho, 1.0, true));
    }

    // Bisect sigma in units of the mean row distance so the search path,
    // and therefore the resulting weights, are invariant under rescaling
    // of the input points.
    let weight_sum = |scale: f64| -> f64 {
        let sigma = scale * mean_d;
        distances
            .iter()
            .map(|&d| (-((d - rho).max(0.0) / sigma)).exp())
            .sum()
    };

    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut mid = 1.0f64;
    for _ in 0..SMOOTH_KNN_MAX_ITER {
        let sum = weight_sum(mid);
        if (sum - target).abs() <= SMOOTH_KNN_TOL {
            break;
        }
        if sum > target {
            hi = mid;
            mid = 0.5 * (lo + hi);
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { 0.5 * (lo + hi) };
        }
    }

    let clamped_scale = mid.clamp(SIGMA_SCALE_LO, SIGMA_SCALE_HI);
    Ok((rho, clamped_scale * mean_d, clamped_scale != mid))
}

/// Calibrate every row of a neighbor list. Row-parallel; identical to
/// sequential execution.
pub fn smooth_knn_params(neighbors: &NeighborLists) -> Result<SmoothKnnParams> {
    let k = neighbors.k();
    let rows: Vec<(f64, f64, bool)> = (0..neighbors.n_points())
        .into_par_iter()
        .map(|i| {
            let row = neighbors.distances.row(i);
            smooth_knn_row(row.as_slice().expect("row-major"), k)
        })
        .collect::<Result<_>>()?;

    let mut params = SmoothKnnParams {
        rho: Vec::with_capacity(rows.len()),
        sigma: Vec::with_capacity(rows.len()),
        clamped: Vec::with_capacity(rows.len()),
    };
    for (rho, sigma, clamped) in rows {
        params.rho.push(rho);
        params.sigma.push(sigma);
        params.clamped.push(clamped);
    }
    Ok(params)
}

/// Directed membership weights: weight(i -> j) = exp(-(d(i,j) - rho_i)/sigma_i)
/// for j among the k nearest neighbors of i. The nearest neighbor always
/// receives weight exactly 1.
pub fn directed_weights(
    neighbors: &NeighborLists,
    params: &SmoothKnnParams,
) -> Result<DirectedWeights> {
    let n = neighbors.n_points();
    if params.rho.len() != n || params.sigma.len() != n {
        return Err(ManeError::Shape(format!(
            "calibration for {} points, neighbor lists for {n}",
            params.rho.len()
        )));
    }
    let rows = (0..n)
        .map(|i| {
            let rho = params.rho[i];
            let sigma = params.sigma[i];
            neighbors
                .indices
                .row(i)
                .iter()
                .zip(neighbors.distances.row(i).iter())
                .map(|(&j, &d)| (j, (-((d - rho).max(0.0) / sigma)).exp()))
                .collect()
        })
        .collect();
    Ok(DirectedWeights { rows })
}

/// Combine the two directions of every pair with the probabilistic t-conorm
/// p = a + b - a*b (missing direction treated as 0), yielding one undirected
/// edge per pair with nonzero combined weight.
pub fn symmetrize_tconorm(directed: &DirectedWeights) -> FuzzyGraph {
    use std::collections::HashMap;

    let n = directed.n_points();
    let mut pairs: HashMap<(usize, usize), f64> = HashMap::new();
    for (i, row) in directed.rows.iter().enumerate() {
        for &(j, w) in row {
            if i == j || w == 0.0 {
                continue;
            }
            let key = (i.min(j), i.max(j));
            let entry = pairs.entry(key).or_insert(0.0);
            // t-conorm is associative with identity 0, so folding one
            // direction at a time gives a + b - a*b overall.
            *entry = *entry + w - *entry * w;
        }
    }

    let mut edges: Vec<Edge> = pairs
        .into_iter()
        .filter(|&(_, w)| w > 0.0)
        .map(|((i, j), weight)| Edge { i, j, weight })
        .collect();
    edges.sort_unstable_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    FuzzyGraph {
        edges,
        n_vertices: n,
    }
}

/// Full pipeline from points to a fuzzy graph.
pub fn build_fuzzy_graph(points: &ArrayView2<'_, f64>, k: usize, metric: Metric) -> Result<FuzzyGraph> {
    if k < 2 {
        return Err(ManeError::Parameter(format!(
            "fuzzy graph construction needs k >= 2, got {k}"
        )));
    }
    let neighbors = knn(points, k, metric)?;
    let params = smooth_knn_params(&neighbors)?;
    let directed = directed_weights(&neighbors, &params)?;
    Ok(symmetrize_tconorm(&directed))
}

/// Serialize a graph as sorted "i j weight" lines. Weights round-trip
/// exactly (shortest representation that parses back to the same float).
pub fn write_edge_list(graph: &FuzzyGraph, path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in &graph.edges {
        writeln!(out, "{} {} {}", e.i, e.j, e.weight).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse an "i j weight" edge list. The vertex count is taken as the
/// largest index plus one.
pub fn read_edge_list(path: &Path) -> Result<FuzzyGraph> {
    let text = std::fs::read_to_string(path)?;
    let mut edges = Vec::new();
    let mut max_vertex = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse_err = |what: &str| {
            ManeError::Parse(format!("edge list line {}: bad {what}", lineno + 1))
        };
        let i: usize = it
            .next()
            .ok_or_else(|| parse_err("i"))?
            .parse()
            .map_err(|_| parse_err("i"))?;
        let j: usize = it
            .next()
            .ok_or_else(|| parse_err("j"))?
            .parse()
            .map_err(|_| parse_err("j"))?;
        let weight: f64 = it
            .next()
            .ok_or_else(|| parse_err("weight"))?
            .parse()
            .map_err(|_| parse_err("weight"))?;
        if it.next().is_some() {
            return Err(parse_err("trailing fields"));
        }
        max_vertex = max_vertex.max(j);
        edges.push(Edge { i, j, weight });
    }
    let graph = FuzzyGraph {
        edges,
        n_vertices: max_vertex + 1,
    };
    graph.validate()?;
    Ok(graph)
}
