//! Dataset loading, synthesis, and partitioning into a seed set plus
//! disjoint local sets, composed into extended datasets with the shared
//! points ordered first.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ManeError, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Angular range of the swiss roll parameter, matching the standard generator.
const SWISS_T_MIN: f64 = 1.5 * std::f64::consts::PI;
const SWISS_T_MAX: f64 = 4.5 * std::f64::consts::PI;
const SWISS_HEIGHT: f64 = 21.0;
const SWISS_LABEL_BINS: usize = 10;

/// A raw dataset: N points of dimension n, with optional integer labels.
#[derive(Debug, Clone)]
pub struct LabeledMatrix {
    points: Array2<f64>,
    labels: Option<Vec<i64>>,
    label_names: Option<Vec<String>>,
}

impl LabeledMatrix {
    /// Build a dataset, checking that every row is finite and that label
    /// counts agree with the point count.
    pub fn new(
        points: Array2<f64>,
        labels: Option<Vec<i64>>,
        label_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(ManeError::Parameter(format!(
                "dataset must have at least one row and one column, got {}x{}",
                points.nrows(),
                points.ncols()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(ManeError::Consistency(
                "dataset contains a non-finite value".into(),
            ));
        }
        if let Some(ref l) = labels {
            if l.len() != points.nrows() {
                return Err(ManeError::Consistency(format!(
                    "{} labels for {} points",
                    l.len(),
                    points.nrows()
                )));
            }
        }
        Ok(Self {
            points,
            labels,
            label_names,
        })
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.points.ncols()
    }

    /// Keep only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        for &r in rows {
            if r >= self.n_points() {
                return Err(ManeError::Index(format!(
                    "row {r} out of range for {} points",
                    self.n_points()
                )));
            }
        }
        let points = gather_rows(&self.points.view(), rows);
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        Ok(Self {
            points,
            labels,
            label_names: self.label_names.clone(),
        })
    }
}

/// Assignment of dataset rows to the seed set and M disjoint local sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed_indices: Vec<usize>,
    pub partition_indices: Vec<Vec<usize>>,
    pub rng_seed: u64,
}

impl SplitPlan {
    pub fn n_shared(&self) -> usize {
        self.seed_indices.len()
    }

    pub fn n_partitions(&self) -> usize {
        self.partition_indices.len()
    }
}

/// One seed-plus-local dataset: the seed rows first (the anchors), then the
/// local rows. Row i for i < n_anchors is bit-identical across all extended
/// datasets built from the same plan.
#[derive(Debug, Clone)]
pub struct ExtendedDataset {
    points: Array2<f64>,
    labels: Option<Vec<i64>>,
    /// Original row index in the source dataset for every row; anchors keep
    /// the same source row across all extended datasets.
    source_rows: Vec<usize>,
    n_anchors: usize,
}

impl ExtendedDataset {
    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }

    pub fn n_anchors(&self) -> usize {
        self.n_anchors
    }

    pub fn total_size(&self) -> usize {
        self.points.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.points.ncols()
    }

    /// Rows of the local (non-anchor) part.
    pub fn n_local(&self) -> usize {
        self.total_size() - self.n_anchors
    }
}

fn gather_rows(points: &ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), points.ncols()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&points.row(src));
    }
    out
}

/// Load an IDX image file (big-endian magic 0x00000803, three dimensions,
/// unsigned bytes), mapping pixel bytes to [0, 1] by division by 255.
/// An optional IDX label file (magic 0x00000801) attaches integer labels.
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<LabeledMatrix> {
    let mut reader = BufReader::new(File::open(images_path)?);
    let magic = reader.read_u32::<BigEndian>()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(ManeError::Format(format!(
            "bad IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n_items = reader.read_u32::<BigEndian>()? as usize;
    let n_rows = reader.read_u32::<BigEndian>()? as usize;
    let n_cols = reader.read_u32::<BigEndian>()? as usize;
    let n_features = n_rows * n_cols;
    if n_items == 0 || n_features == 0 {
        return Err(ManeError::Format(format!(
            "IDX image file declares empty shape {n_items}x{n_rows}x{n_cols}"
        )));
    }
    let mut bytes = vec![0u8; n_items * n_features];
    reader.read_exact(&mut bytes)?;

    let values: Vec<f64> = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    let points = Array2::from_shape_vec((n_items, n_features), values)
        .expect("shape matches by construction");

    let labels = match labels_path {
        Some(path) => {
            let mut reader = BufReader::new(File::open(path)?);
            let magic = reader.read_u32::<BigEndian>()?;
            if magic != IDX_LABELS_MAGIC {
                return Err(ManeError::Format(format!(
                    "bad IDX label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
                )));
            }
            let n_labels = reader.read_u32::<BigEndian>()? as usize;
            if n_labels != n_items {
                return Err(ManeError::Consistency(format!(
                    "{n_labels} labels for {n_items} images"
                )));
            }
            let mut raw = vec![0u8; n_labels];
            reader.read_exact(&mut raw)?;
            Some(raw.iter().map(|&b| i64::from(b)).collect())
        }
        None => None,
    };

    LabeledMatrix::new(points, labels, None)
}

/// Load a CSV file. All non-label columns become features in file order.
/// When `label_column` is given the first row must be a header naming it and
/// label values are encoded as integers in order of first appearance;
/// otherwise a header row is detected by failing to parse as numbers.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<LabeledMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ManeError::Parse(format!("{}: {e}", path.display())))?;

    let mut records: Vec<csv::StringRecord> = Vec::new();
    for rec in reader.records() {
        records.push(rec.map_err(|e| ManeError::Parse(format!("{}: {e}", path.display())))?);
    }
    if records.is_empty() {
        return Err(ManeError::Parse(format!("{}: empty file", path.display())));
    }

    let width = records[0].len();
    for (row, rec) in records.iter().enumerate() {
        if rec.len() != width {
            return Err(ManeError::Parse(format!(
                "ragged row {}: {} cells, expected {width}",
                row + 1,
                rec.len()
            )));
        }
    }

    let is_numeric_row = |rec: &csv::StringRecord| rec.iter().all(|c| c.trim().parse::<f64>().is_ok());

    let (label_idx, data_start) = match label_column {
        Some(name) => {
            let header = &records[0];
            let idx = header
                .iter()
                .position(|c| c.trim() == name)
                .ok_or_else(|| ManeError::Parse(format!("label column '{name}' not found in header")))?;
            (Some(idx), 1)
        }
        None => {
            let skip_header = !is_numeric_row(&records[0]);
            (None, usize::from(skip_header))
        }
    };

    if records.len() <= data_start {
        return Err(ManeError::Parse("no data rows".into()));
    }

    let n_rows = records.len() - data_start;
    let n_features = width - usize::from(label_idx.is_some());
    if n_features == 0 {
        return Err(ManeError::Parse("no feature columns".into()));
    }

    let mut values = Vec::with_capacity(n_rows * n_features);
    let mut labels: Vec<i64> = Vec::new();
    let mut label_codes: HashMap<String, i64> = HashMap::new();
    let mut label_names: Vec<String> = Vec::new();

    for (row, rec) in records.iter().enumerate().skip(data_start) {
        for (col, cell) in rec.iter().enumerate() {
            if Some(col) == label_idx {
                let key = cell.trim().to_string();
                let next = label_codes.len() as i64;
                let code = *label_codes.entry(key.clone()).or_insert_with(|| {
                    label_names.push(key);
                    next
                });
                labels.push(code);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    ManeError::Parse(format!(
                        "row {}, column {}: '{}' is not a number",
                        row + 1,
                        col + 1,
                        cell
                    ))
                })?;
                values.push(v);
            }
        }
    }

    let points =
        Array2::from_shape_vec((n_rows, n_features), values).expect("rectangular by checks above");
    let (labels, label_names) = if label_idx.is_some() {
        (Some(labels), Some(label_names))
    } else {
        (None, None)
    };
    LabeledMatrix::new(points, labels, label_names)
}

/// Generate a swiss roll: points (t cos t, h, t sin t) with t uniform on
/// [1.5p, 4.5p] and h uniform on [0, 21], plus i.i.d. Gaussian noise of the
/// given standard deviation. Labels quantize t into 10 bins so plots can be
/// colored by position along the manifold.
pub fn gen_swiss_roll(n_samples: usize, noise: f64, rng_seed: u64) -> Result<LabeledMatrix> {
    if n_samples == 0 {
        return Err(ManeError::Parameter("n_samples must be at least 1".into()));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(ManeError::Parameter(format!(
            "noise must be a nonnegative real, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = if noise > 0.0 {
        Some(Normal::new(0.0, noise).expect("validated above"))
    } else {
        None
    };

    let mut values = Vec::with_capacity(n_samples * 3);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let t: f64 = rng.random_range(SWISS_T_MIN..SWISS_T_MAX);
        let h: f64 = rng.random_range(0.0..SWISS_HEIGHT);
        let mut p = [t * t.cos(), h, t * t.sin()];
        if let Some(ref normal) = normal {
            for v in &mut p {
                *v += normal.sample(&mut rng);
            }
        }
        values.extend_from_slice(&p);

        let frac = (t - SWISS_T_MIN) / (SWISS_T_MAX - SWISS_T_MIN);
        let bin = ((frac * SWISS_LABEL_BINS as f64) as usize).min(SWISS_LABEL_BINS - 1);
        labels.push(bin as i64);
    }

    let points = Array2::from_shape_vec((n_samples, 3), values).expect("3 values per sample");
    let names = (0..SWISS_LABEL_BINS).map(|i| format!("band {i}")).collect();
    LabeledMatrix::new(points, Some(labels), Some(names))
}

/// Randomly assign `n_shared` rows to the seed set and divide the remaining
/// rows into `n_partitions` near-equal disjoint parts (earlier partitions
/// take the extra row when the remainder does not divide evenly).
pub fn split_shared(
    data: &LabeledMatrix,
    n_shared: usize,
    n_partitions: usize,
    rng_seed: u64,
) -> Result<SplitPlan> {
    let n = data.n_points();
    if n_partitions == 0 {
        return Err(ManeError::Parameter("n_partitions must be at least 1".into()));
    }
    if n_shared + n_partitions > n {
        return Err(ManeError::Capacity(format!(
            "cannot split {n} points into {n_shared} shared + {n_partitions} nonempty partitions"
        )));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    perm.shuffle(&mut rng);

    let seed_indices = perm[..n_shared].to_vec();
    let rest = &perm[n_shared..];
    let base = rest.len() / n_partitions;
    let extra = rest.len() % n_partitions;

    let mut partition_indices = Vec::with_capacity(n_partitions);
    let mut cursor = 0;
    for m in 0..n_partitions {
        let size = base + usize::from(m < extra);
        partition_indices.push(rest[cursor..cursor + size].to_vec());
        cursor += size;
    }

    Ok(SplitPlan {
        seed_indices,
        partition_indices,
        rng_seed,
    })
}

/// Compose extended dataset m (1-based): the seed rows in plan order, then
/// partition m's rows.
pub fn extend(data: &LabeledMatrix, plan: &SplitPlan, m: usize) -> Result<ExtendedDataset> {
    if m == 0 || m > plan.n_partitions() {
        return Err(ManeError::Index(format!(
            "partition index {m} out of range 1..={}",
            plan.n_partitions()
        )));
    }
    let mut rows = plan.seed_indices.clone();
    rows.extend_from_slice(&plan.partition_indices[m - 1]);
    for &r in &rows {
        if r >= data.n_points() {
            return Err(ManeError::Index(format!(
                "plan refers to row {r} of a {}-point dataset",
                data.n_points()
            )));
        }
    }

    let points = gather_rows(&data.points(), &rows);
    let labels = data
        .labels()
        .map(|l| rows.iter().map(|&r| l[r]).collect());
    Ok(ExtendedDataset {
        points,
        labels,
        source_rows: rows,
        n_anchors: plan.n_shared(),
    })
}
