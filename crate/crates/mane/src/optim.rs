//! Joint optimization of all dataset embeddings under the cross-entropy
//! loss via negative sampling. The shared-point constraint is enforced
//! structurally: anchor coordinates live in one block that every dataset
//! view reads and writes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::AlignedEmbedding;
use crate::error::{ManeError, Result};
use crate::graph::FuzzyGraph;
use crate::kernel::{fit_ab, kernel_value, KernelParams};

/// Regularizer added to the squared distance in the repulsive denominator.
pub const REPULSION_EPS: f64 = 1e-3;
/// q is clamped into (LOSS_Q_CLAMP, 1 - LOSS_Q_CLAMP) for trace reporting.
const LOSS_Q_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub n_epochs: usize,
    /// Initial learning rate; decays linearly to 0 over the epochs.
    pub learning_rate: f64,
    /// Negatives drawn per positive edge is the ceiling of this rate.
    pub negative_sample_rate: f64,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub rng_seed: u64,
    /// Per-component gradient clip applied before the learning rate.
    pub grad_clip: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_epochs: 200,
            learning_rate: 1.0,
            negative_sample_rate: 1.0,
            n_neighbors: 30,
            min_dist: 0.1,
            rng_seed: 42,
            grad_clip: 4.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_epochs == 0 {
            return Err(ManeError::Parameter("n_epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ManeError::Parameter(format!(
                "learning_rate must be a positive real, got {}",
                self.learning_rate
            )));
        }
        if !(self.negative_sample_rate > 0.0 && self.negative_sample_rate.is_finite()) {
            return Err(ManeError::Parameter(format!(
                "negative_sample_rate must be a positive real, got {}",
                self.negative_sample_rate
            )));
        }
        if self.n_neighbors < 2 {
            return Err(ManeError::Parameter(format!(
                "n_neighbors must be at least 2, got {}",
                self.n_neighbors
            )));
        }
        if !(self.min_dist >= 0.0 && self.min_dist.is_finite()) {
            return Err(ManeError::Parameter(format!(
                "min_dist must be a nonnegative real, got {}",
                self.min_dist
            )));
        }
        if !(self.grad_clip > 0.0) {
            return Err(ManeError::Parameter(format!(
                "grad_clip must be positive, got {}",
                self.grad_clip
            )));
        }
        Ok(())
    }
}

/// Coefficient of (y_i - y_j) in the attractive update: the negated
/// gradient of the p = 1 loss term with respect to y_i.
#[inline]
pub fn attractive_coefficient(dist_sq: f64, a: f64, b: f64) -> f64 {
    if dist_sq <= 0.0 {
        return 0.0;
    }
    (-2.0 * a * b * dist_sq.powf(b - 1.0)) / (1.0 + a * dist_sq.powf(b))
}

/// Coefficient of (y_i - y_j) in the repulsive update: the negated gradient
/// of the p = 0 loss term, with an eps regularizer in the denominator.
#[inline]
pub fn repulsive_coefficient(dist_sq: f64, a: f64, b: f64, eps: f64) -> f64 {
    (2.0 * b) / ((eps + dist_sq) * (1.0 + a * dist_sq.powf(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceKind {
    Attractive,
    Repulsive,
}

/// Gradient step applied to y_i for one edge, each component clipped to
/// [-grad_clip, +grad_clip].
pub fn edge_gradient(
    yi: &[f64],
    yj: &[f64],
    params: &KernelParams,
    kind: ForceKind,
    grad_clip: f64,
) -> Vec<f64> {
    assert_eq!(yi.len(), yj.len(), "endpoint dimensions differ");
    let mut dist_sq = 0.0;
    for (a, b) in yi.iter().zip(yj.iter()) {
        let d = a - b;
        dist_sq += d * d;
    }
    let coef = match kind {
        ForceKind::Attractive => attractive_coefficient(dist_sq, params.a, params.b),
        ForceKind::Repulsive => repulsive_coefficient(dist_sq, params.a, params.b, REPULSION_EPS),
    };
    yi.iter()
        .zip(yj.iter())
        .map(|(a, b)| (coef * (a - b)).clamp(-grad_clip, grad_clip))
        .collect()
}

/// Cross-entropy between an edge weight p and a low-dimensional similarity
/// q, with the 0*log(0) = 0 convention. Used for diagnostics and trace
/// reporting, not in the sampled update path.
pub fn cross_entropy_loss(p: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(ManeError::Domain(format!("q must be in (0, 1), got {q}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(ManeError::Domain(format!("p must be in [0, 1], got {p}")));
    }
    let attract = if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    let repel = if p < 1.0 {
        (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
    } else {
        0.0
    };
    Ok(attract + repel)
}

/// One edge in the merged sampling schedule.
#[derive(Debug, Clone)]
pub struct ScheduledEdge {
    pub dataset: usize,
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    /// Gap between samples, w_max / w >= 1; max-weight edges fire every
    /// epoch.
    pub epochs_per_sample: f64,
}

/// Weight-proportional sampling schedule over the union of all graphs.
/// Edge e with weight w fires ceil(n_epochs * w / w_max) times over the
/// run. Edges from all datasets interleave in one stream ordered by
/// next-due counter with index tie-break.
#[derive(Debug, Clone)]
pub struct EdgeSchedule {
    pub entries: Vec<ScheduledEdge>,
    pub n_epochs: usize,
    pub max_weight: f64,
}

impl EdgeSchedule {
    pub fn build(graphs: &[FuzzyGraph], n_epochs: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(ManeError::Schedule("no graphs to schedule".into()));
        }
        if n_epochs == 0 {
            return Err(ManeError::Schedule("n_epochs must be positive".into()));
        }
        for (m, g) in graphs.iter().enumerate() {
            if g.edges.is_empty() {
                return Err(ManeError::Schedule(format!("graph {m} has no edges")));
            }
        }
        let max_weight = graphs
            .iter()
            .map(|g| g.max_weight())
            .fold(0.0f64, f64::max);
        if !(max_weight > 0.0) {
            return Err(ManeError::Schedule("no positive edge weight".into()));
        }

        // Interleave edges position-major across graphs so that equal-weight
        // edges from different datasets alternate under the index tie-break.
        let longest = graphs.iter().map(|g| g.edges.len()).max().unwrap_or(0);
        let mut entries = Vec::with_capacity(graphs.iter().map(|g| g.edges.len()).sum());
        for pos in 0..longest {
            for (m, g) in graphs.iter().enumerate() {
                if let Some(e) = g.edges.get(pos) {
                    entries.push(ScheduledEdge {
                        dataset: m,
                        i: e.i,
                        j: e.j,
                        weight: e.weight,
                        epochs_per_sample: max_weight / e.weight,
                    });
                }
            }
        }
        Ok(Self {
            entries,
            n_epochs,
            max_weight,
        })
    }

    /// How many times entry `idx` fires over the whole run.
    pub fn samples_for(&self, idx: usize) -> usize {
        let eps = self.entries[idx].epochs_per_sample;
        let mut count = 0usize;
        while count as f64 * eps < self.n_epochs as f64 {
            count += 1;
        }
        count
    }

    pub fn stream(&self) -> ScheduleStream<'_> {
        let mut heap = BinaryHeap::with_capacity(self.entries.len());
        for idx in 0..self.entries.len() {
            heap.push(std::cmp::Reverse(DueEntry { due: 0.0, idx }));
        }
        ScheduleStream {
            schedule: self,
            heap,
            counts: vec![0u64; self.entries.len()],
        }
    }
}

#[derive(PartialEq)]
struct DueEntry {
    due: f64,
    idx: usize,
}

impl Eq for DueEntry {}

impl Ord for DueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // due values are finite nonnegative products, never NaN.
        self.due
            .partial_cmp(&other.due)
            .unwrap()
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for DueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Yields (epoch, entry index) pairs in processing order: ascending next-due
/// counter, ties broken by entry index.
pub struct ScheduleStream<'a> {
    schedule: &'a EdgeSchedule,
    heap: BinaryHeap<std::cmp::Reverse<DueEntry>>,
    counts: Vec<u64>,
}

impl Iterator for ScheduleStream<'_> {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        let std::cmp::Reverse(DueEntry { due, idx }) = self.heap.pop()?;
        let epoch = due as usize;
        self.counts[idx] += 1;
        // Keep the next due time as an exact product rather than a running
        // sum so it cannot drift.
        let next = self.schedule.entries[idx].epochs_per_sample * self.counts[idx] as f64;
        if next < self.schedule.n_epochs as f64 {
            self.heap.push(std::cmp::Reverse(DueEntry { due: next, idx }));
        }
        Some((epoch, idx))
    }
}

/// Per-epoch trace entry. `sampled_loss` is a Monte-Carlo estimate of the
/// objective the negative-sampling updates descend: the weight-averaged
/// attractive term -ln q over a fixed probe of edges, plus the negative
/// sample count times the matching repulsive term -ln(1 - q) against fixed
/// uniform negatives. The probe set is fixed for the whole run so the
/// estimates are comparable across epochs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub sampled_loss: f64,
    pub learning_rate: f64,
}

struct LossProbe {
    /// (dataset, i, j, edge weight)
    positives: Vec<(usize, usize, usize, f64)>,
    /// (dataset, i, j')
    negatives: Vec<(usize, usize, usize)>,
    neg_per_positive: f64,
}

const LOSS_PROBE_SIZE: usize = 2000;

impl LossProbe {
    fn build(
        schedule: &EdgeSchedule,
        embedding: &AlignedEmbedding,
        rng_seed: u64,
        neg_per_positive: usize,
    ) -> Self {
        // Separate stream so the probe never perturbs the negative-sampling
        // sequence of the optimizer itself.
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x9e37_79b9_7f4a_7c15);
        let len = schedule.entries.len();
        let take = LOSS_PROBE_SIZE.min(len);
        let stride = (len / take).max(1);
        let mut positives = Vec::with_capacity(take);
        let mut negatives = Vec::with_capacity(take);
        for t in 0..take {
            let e = &schedule.entries[t * stride];
            positives.push((e.dataset, e.i, e.j, e.weight));
            let other = rng.random_range(0..embedding.dataset_size(e.dataset));
            negatives.push((e.dataset, e.i, other));
        }
        Self {
            positives,
            negatives,
            neg_per_positive: neg_per_positive as f64,
        }
    }

    fn eval(&self, embedding: &AlignedEmbedding, params: &KernelParams) -> f64 {
        let dim = embedding.dim();
        let mut yi = vec![0.0; dim];
        let mut yj = vec![0.0; dim];
        let mut q_of = |m: usize, i: usize, j: usize| -> f64 {
            embedding.read_row(m, i, &mut yi);
            embedding.read_row(m, j, &mut yj);
            let mut dist_sq = 0.0;
            for c in 0..dim {
                let d = yi[c] - yj[c];
                dist_sq += d * d;
            }
            kernel_value(dist_sq, params.a, params.b).clamp(LOSS_Q_CLAMP, 1.0 - LOSS_Q_CLAMP)
        };

        // Edges are sampled proportionally to weight during optimization;
        // weighting a uniform probe by w estimates the same expectation.
        let mut attract = 0.0;
        let mut repel = 0.0;
        let mut weight_sum = 0.0;
        for (&(m, i, j, w), &(mn, ni, nj)) in self.positives.iter().zip(self.negatives.iter()) {
            attract += w * -q_of(m, i, j).ln();
            repel += w * -(1.0 - q_of(mn, ni, nj)).ln();
            weight_sum += w;
        }
        (attract + self.neg_per_positive * repel) / weight_sum
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub epochs: Vec<EpochStat>,
}

/// Optimize all embeddings jointly. Sequential and deterministic: a fixed
/// rng_seed reproduces the final embedding bit for bit.
///
/// For each due edge (i, j) of dataset m the attractive update moves both
/// endpoints; then ceil(negative_sample_rate) vertices drawn uniformly from
/// dataset m's view receive repulsive updates applied to y_i only. Updates
/// to anchor vertices write the shared block directly, so every dataset
/// observes them immediately.
pub fn optimize(
    embedding: &mut AlignedEmbedding,
    graphs: &[FuzzyGraph],
    config: &OptimizerConfig,
) -> Result<RunTrace> {
    config.validate()?;
    if graphs.len() != embedding.n_datasets() {
        return Err(ManeError::Shape(format!(
            "{} graphs for {} datasets",
            graphs.len(),
            embedding.n_datasets()
        )));
    }
    for (m, g) in graphs.iter().enumerate() {
        if g.n_vertices != embedding.dataset_size(m) {
            return Err(ManeError::Shape(format!(
                "graph {m} has {} vertices, embedding view has {}",
                g.n_vertices,
                embedding.dataset_size(m)
            )));
        }
    }

    let params = fit_ab(config.min_dist)?;
    let schedule = EdgeSchedule::build(graphs, config.n_epochs)?;
    let n_neg = config.negative_sample_rate.ceil() as usize;
    let probe = LossProbe::build(&schedule, embedding, config.rng_seed, n_neg);
    let mut stream = schedule.stream();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let n_epochs = config.n_epochs;
    let dim = embedding.dim();
    let clip = config.grad_clip;

    let mut yi = vec![0.0; dim];
    let mut yj = vec![0.0; dim];
    let mut delta = vec![0.0; dim];

    let mut trace = RunTrace::default();
    let mut cur_epoch = 0usize;

    let alpha_at =
        |epoch: usize| config.learning_rate * (1.0 - epoch as f64 / n_epochs as f64);

    macro_rules! finish_epoch {
        ($epoch:expr) => {{
            let epoch = $epoch;
            if embedding.has_non_finite() {
                return Err(ManeError::Divergence { epoch });
            }
            trace.epochs.push(EpochStat {
                epoch,
                sampled_loss: probe.eval(embedding, &params),
                learning_rate: alpha_at(epoch),
            });
        }};
    }

    while let Some((epoch, idx)) = stream.next() {
        while cur_epoch < epoch {
            finish_epoch!(cur_epoch);
            cur_epoch += 1;
        }
        let entry = &schedule.entries[idx];
        let (m, i, j) = (entry.dataset, entry.i, entry.j);
        let alpha = alpha_at(epoch);
        let view_size = embedding.dataset_size(m);

        // Attractive update along the sampled positive edge, moving both
        // endpoints.
        embedding.read_row(m, i, &mut yi);
        embedding.read_row(m, j, &mut yj);
        let mut dist_sq = 0.0;
        for c in 0..dim {
            let d = yi[c] - yj[c];
            dist_sq += d * d;
        }
        let coef = attractive_coefficient(dist_sq, params.a, params.b);
        for c in 0..dim {
            let g = (coef * (yi[c] - yj[c])).clamp(-clip, clip);
            delta[c] = alpha * g;
            yi[c] += delta[c];
        }
        embedding.add_to_row(m, i, &delta);
        for d in delta.iter_mut() {
            *d = -*d;
        }
        embedding.add_to_row(m, j, &delta);

        // Repulsive updates against uniform negatives from the same view,
        // applied to the sampled endpoint only.
        for _ in 0..n_neg {
            let neg = rng.random_range(0..view_size);
            embedding.read_row(m, neg, &mut yj);
            let mut dist_sq = 0.0;
            for c in 0..dim {
                let d = yi[c] - yj[c];
                dist_sq += d * d;
            }
            let coef = repulsive_coefficient(dist_sq, params.a, params.b, REPULSION_EPS);
            for c in 0..dim {
                let g = (coef * (yi[c] - yj[c])).clamp(-clip, clip);
                delta[c] = alpha * g;
                yi[c] += delta[c];
            }
            embedding.add_to_row(m, i, &delta);
        }
    }

    while cur_epoch < n_epochs {
        finish_epoch!(cur_epoch);
        cur_epoch += 1;
    }
    Ok(trace)
}

/// Sidecar describing a coordinate checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n_anchors: usize,
    pub n_datasets: usize,
    pub private_sizes: Vec<usize>,
    pub dim: usize,
    pub config: OptimizerConfig,
}

/// Write the embedding as a flat little-endian f32 coordinate dump (anchor
/// block row-major, then each private block) plus a JSON sidecar.
pub fn save_checkpoint(
    embedding: &AlignedEmbedding,
    config: &OptimizerConfig,
    bin_path: &Path,
    meta_path: &Path,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(embedding.total_coords() * 4);
    for v in embedding.iter_coords() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(bin_path, bytes)?;

    let meta = CheckpointMeta {
        n_anchors: embedding.n_anchors(),
        n_datasets: embedding.n_datasets(),
        private_sizes: (0..embedding.n_datasets())
            .map(|m| embedding.private_block(m).nrows())
            .collect(),
        dim: embedding.dim(),
        config: config.clone(),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| ManeError::Format(format!("sidecar serialization: {e}")))?;
    std::fs::write(meta_path, json)?;
    Ok(())
}

pub fn load_checkpoint(bin_path: &Path, meta_path: &Path) -> Result<(AlignedEmbedding, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)
        .map_err(|e| ManeError::Parse(format!("checkpoint sidecar: {e}")))?;
    if meta.private_sizes.len() != meta.n_datasets {
        return Err(ManeError::Consistency(format!(
            "sidecar lists {} private sizes for {} datasets",
            meta.private_sizes.len(),
            meta.n_datasets
        )));
    }
    let total = (meta.n_anchors + meta.private_sizes.iter().sum::<usize>()) * meta.dim;
    let bytes = std::fs::read(bin_path)?;
    if bytes.len() != total * 4 {
        return Err(ManeError::Consistency(format!(
            "checkpoint holds {} bytes, sidecar implies {}",
            bytes.len(),
            total * 4
        )));
    }
    let mut coords = Vec::with_capacity(total);
    for chunk in bytes.chunks_exact(4) {
        coords.push(f64::from(f32::from_le_bytes(chunk.try_into().unwrap())));
    }

    let mut cursor = 0usize;
    let mut take = |rows: usize, dim: usize| {
        let slice = &coords[cursor..cursor + rows * dim];
        cursor += rows * dim;
        ndarray::Array2::from_shape_vec((rows, dim), slice.to_vec()).expect("sized above")
    };
    let anchor_block = take(meta.n_anchors, meta.dim);
    let private_blocks = meta
        .private_sizes
        .iter()
        .map(|&n| take(n, meta.dim))
        .collect();
    let embedding = AlignedEmbedding::new(anchor_block, private_blocks)?;
    Ok((embedding, meta))
}
