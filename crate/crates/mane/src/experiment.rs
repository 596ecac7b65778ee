//! Experiment pipeline: split, embed (umap | mane | pca-baseline),
//! evaluate, and emit coordinates, plots, and reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    extend, gen_swiss_roll, load_csv, load_idx, split_shared, ExtendedDataset, LabeledMatrix,
    SplitPlan,
};
use crate::embedding::AlignedEmbedding;
use crate::error::{ManeError, Result};
use crate::graph::{build_fuzzy_graph, write_edge_list, FuzzyGraph, Metric};
use crate::init::{pca_axes, pca_baseline, project, project_init, rescale_in_place, Projection};
use crate::metrics::{anchor_drift, procrustes_distance, trustworthiness, MetricReport, SharedPairMetric};
use crate::optim::{optimize, save_checkpoint, OptimizerConfig, RunTrace};
use crate::plot::emit_plot;

const SALT_SUBSAMPLE: u64 = 1;
const SALT_SPLIT: u64 = 2;
const SALT_UMAP_DATASET: u64 = 100;

/// Deterministically derive an independent stream seed for one purpose.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: Option<PathBuf>,
    },
    Csv {
        path: PathBuf,
        label_column: Option<String>,
    },
    SwissRoll {
        n_samples: usize,
        noise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// M independent optimizations, no shared coordinate block.
    Umap,
    /// Joint constrained optimization with one shared anchor block.
    Mane,
    /// Linear projection onto the seed data's principal axes.
    PcaBaseline,
}

impl std::str::FromStr for Method {
    type Err = ManeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "umap" => Ok(Method::Umap),
            "mane" => Ok(Method::Mane),
            "pca-baseline" => Ok(Method::PcaBaseline),
            other => Err(ManeError::Parameter(format!(
                "unknown method '{other}' (expected umap | mane | pca-baseline)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Umap => "umap",
            Method::Mane => "mane",
            Method::PcaBaseline => "pca-baseline",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// Optional seeded subsample applied before splitting.
    pub subsample: Option<usize>,
    pub n_shared: usize,
    pub n_partitions: usize,
    pub method: Method,
    pub optimizer: OptimizerConfig,
    /// Embedding dimension.
    pub dim: usize,
    /// Initialization scale: maximum absolute coordinate after PCA init.
    pub spread: f64,
    /// Neighborhood size of the trustworthiness metric.
    pub metric_k: usize,
    pub rng_seed: u64,
    pub out_dir: PathBuf,
    pub save_graphs: bool,
}

impl ExperimentConfig {
    pub fn new(source: DataSource, out_dir: PathBuf) -> Self {
        Self {
            source,
            subsample: None,
            n_shared: 0,
            n_partitions: 1,
            method: Method::Mane,
            optimizer: OptimizerConfig::default(),
            dim: 2,
            spread: 10.0,
            metric_k: 5,
            rng_seed: 42,
            out_dir,
            save_graphs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.dim == 0 {
            return Err(ManeError::Parameter("dim must be at least 1".into()));
        }
        if self.metric_k == 0 {
            return Err(ManeError::Parameter("metric_k must be at least 1".into()));
        }
        if self.n_partitions == 0 {
            return Err(ManeError::Parameter("n_partitions must be at least 1".into()));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(ManeError::Parameter(format!(
                "spread must be a positive real, got {}",
                self.spread
            )));
        }
        if self.subsample == Some(0) {
            return Err(ManeError::Parameter("subsample must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub load_s: f64,
    pub split_s: f64,
    pub graph_s: f64,
    pub init_s: f64,
    pub optimize_s: f64,
    pub metrics_s: f64,
    pub output_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub run_config: PathBuf,
    pub coords_csv: PathBuf,
    pub checkpoint_bin: PathBuf,
    pub checkpoint_meta: PathBuf,
    pub trace_json: PathBuf,
    pub graphs: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub metrics_json: Option<PathBuf>,
    pub report_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub metrics: MetricReport,
    pub timings: PhaseTimings,
    pub paths: ArtifactPaths,
}

/// Everything the embed stage produces, kept in memory for the metric stage.
pub struct EmbedOutput {
    pub data: LabeledMatrix,
    pub plan: SplitPlan,
    pub datasets: Vec<ExtendedDataset>,
    pub embedding: AlignedEmbedding,
    pub traces: Vec<RunTrace>,
    pub paths: ArtifactPaths,
    pub timings: PhaseTimings,
}

fn load_source(cfg: &ExperimentConfig) -> Result<LabeledMatrix> {
    match &cfg.source {
        DataSource::Idx { images, labels } => load_idx(images, labels.as_deref()),
        DataSource::Csv { path, label_column } => load_csv(path, label_column.as_deref()),
        DataSource::SwissRoll { n_samples, noise } => {
            gen_swiss_roll(*n_samples, *noise, cfg.rng_seed)
        }
    }
}

/// Load the source, apply the optional seeded subsample, and split into
/// extended datasets.
pub fn prepare_data(
    cfg: &ExperimentConfig,
) -> Result<(LabeledMatrix, SplitPlan, Vec<ExtendedDataset>)> {
    let mut data = load_source(cfg).map_err(|e| e.in_phase("load"))?;
    if let Some(n_sub) = cfg.subsample {
        if n_sub > data.n_points() {
            return Err(ManeError::Capacity(format!(
                "subsample {n_sub} exceeds {} points",
                data.n_points()
            ))
            .in_phase("load"));
        }
        let mut idx: Vec<usize> = (0..data.n_points()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, SALT_SUBSAMPLE));
        idx.shuffle(&mut rng);
        idx.truncate(n_sub);
        idx.sort_unstable();
        data = data.select_rows(&idx).map_err(|e| e.in_phase("load"))?;
    }

    let plan = split_shared(
        &data,
        cfg.n_shared,
        cfg.n_partitions,
        derive_seed(cfg.rng_seed, SALT_SPLIT),
    )
    .map_err(|e| e.in_phase("split"))?;
    let datasets = (1..=cfg.n_partitions)
        .map(|m| extend(&data, &plan, m))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_phase("split"))?;
    Ok((data, plan, datasets))
}

/// PCA axes for initialization: from the seed rows when there are enough of
/// them, otherwise from all loaded points.
fn init_projection(
    cfg: &ExperimentConfig,
    data: &LabeledMatrix,
    datasets: &[ExtendedDataset],
) -> Result<Projection> {
    let n0 = datasets[0].n_anchors();
    if n0 >= 2 {
        let seed_rows = datasets[0].points().slice(s![..n0, ..]).to_owned();
        pca_axes(&seed_rows.view(), cfg.dim)
    } else {
        pca_axes(&data.points(), cfg.dim)
    }
}

fn write_coords_csv(
    path: &Path,
    embedding: &AlignedEmbedding,
    datasets: &[ExtendedDataset],
) -> Result<()> {
    let dim = embedding.dim();
    let mut out = String::from("dataset_id,point_id,label");
    for c in 0..dim {
        out.push_str(&format!(",y{c}"));
    }
    out.push('\n');
    for (m, ds) in datasets.iter().enumerate() {
        let coords = embedding.dataset_coords(m);
        for v in 0..coords.nrows() {
            out.push_str(&format!("{},{}", m + 1, ds.source_rows()[v]));
            match ds.labels() {
                Some(l) => out.push_str(&format!(",{}", l[v])),
                None => out.push(','),
            }
            for c in 0..dim {
                out.push_str(&format!(",{}", coords[[v, c]]));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One dataset block parsed back out of an exported coordinates CSV.
#[derive(Debug, Clone)]
pub struct ExportedCoords {
    pub dataset_id: usize,
    pub point_ids: Vec<usize>,
    pub labels: Option<Vec<i64>>,
    pub coords: Array2<f64>,
}

/// Parse an exported coordinates CSV back into per-dataset blocks, in file
/// order.
pub fn read_coords_csv(path: &Path) -> Result<Vec<ExportedCoords>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ManeError::Parse("empty coordinates file".into()))?;
    let n_fields = header.split(',').count();
    if n_fields < 4 {
        return Err(ManeError::Parse(format!(
            "coordinates header has {n_fields} fields, expected at least 4"
        )));
    }
    let dim = n_fields - 3;

    struct Block {
        dataset_id: usize,
        point_ids: Vec<usize>,
        labels: Vec<Option<i64>>,
        values: Vec<f64>,
    }
    let mut blocks: Vec<Block> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| ManeError::Parse(format!("coordinates line {}: {what}", lineno + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_fields {
            return Err(bad(&format!(
                "{} fields, expected {n_fields}",
                fields.len()
            )));
        }
        let dataset_id: usize = fields[0].parse().map_err(|_| bad("bad dataset id"))?;
        if blocks.last().map(|b| b.dataset_id) != Some(dataset_id) {
            blocks.push(Block {
                dataset_id,
                point_ids: Vec::new(),
                labels: Vec::new(),
                values: Vec::new(),
            });
        }
        let block = blocks.last_mut().expect("pushed above");
        block
            .point_ids
            .push(fields[1].parse().map_err(|_| bad("bad point id"))?);
        block.labels.push(if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse().map_err(|_| bad("bad label"))?)
        });
        for f in &fields[3..] {
            block
                .values
                .push(f.parse().map_err(|_| bad("bad coordinate"))?);
        }
    }

    blocks
        .into_iter()
        .map(|b| {
            let rows = b.point_ids.len();
            let labels = if b.labels.iter().all(Option::is_some) {
                Some(b.labels.into_iter().map(Option::unwrap).collect())
            } else {
                None
            };
            Ok(ExportedCoords {
                dataset_id: b.dataset_id,
                point_ids: b.point_ids,
                labels,
                coords: Array2::from_shape_vec((rows, dim), b.values)
                    .map_err(|e| ManeError::Parse(format!("coordinate block shape: {e}")))?,
            })
        })
        .collect()
}

/// Per-dataset anchor coordinates from an exported CSV (the first
/// n_anchors rows of each dataset block).
pub fn read_anchor_blocks_csv(path: &Path, n_anchors: usize, dim: usize) -> Result<Vec<Array2<f64>>> {
    let blocks = read_coords_csv(path)?;
    blocks
        .into_iter()
        .map(|b| {
            if b.coords.ncols() != dim {
                return Err(ManeError::Shape(format!(
                    "exported coordinates have dimension {}, expected {dim}",
                    b.coords.ncols()
                )));
            }
            if b.coords.nrows() < n_anchors {
                return Err(ManeError::Consistency(format!(
                    "dataset {} exports {} rows, fewer than {n_anchors} anchors",
                    b.dataset_id,
                    b.coords.nrows()
                )));
            }
            Ok(b.coords.slice(s![..n_anchors, ..]).to_owned())
        })
        .collect()
}

/// Run the embedding stages (load, split, graphs, init, optimize) and write
/// coordinates, checkpoint, and trace. Metrics and plots are left to
/// `run_experiment`.
pub fn run_embed(cfg: &ExperimentConfig) -> Result<EmbedOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let run_config_path = cfg.out_dir.join("run.json");
    std::fs::write(
        &run_config_path,
        serde_json::to_string_pretty(cfg).expect("config serializes"),
    )?;

    let mut timings = PhaseTimings::default();

    let t0 = Instant::now();
    let (data, plan, datasets) = prepare_data(cfg)?;
    timings.split_s = t0.elapsed().as_secs_f64();

    let needs_graphs = cfg.method != Method::PcaBaseline;
    let t0 = Instant::now();
    let graphs: Vec<FuzzyGraph> = if needs_graphs {
        datasets
            .iter()
            .map(|ds| build_fuzzy_graph(&ds.points(), cfg.optimizer.n_neighbors, Metric::Euclidean))
            .collect::<Result<_>>()
            .map_err(|e| e.in_phase("graph"))?
    } else {
        Vec::new()
    };
    timings.graph_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let projection = init_projection(cfg, &data, &datasets).map_err(|e| e.in_phase("init"))?;
    let refs: Vec<&ExtendedDataset> = datasets.iter().collect();
    timings.init_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let (embedding, traces) = match cfg.method {
        Method::Mane => {
            let mut embedding =
                project_init(&refs, &projection, cfg.spread).map_err(|e| e.in_phase("init"))?;
            let trace = optimize(&mut embedding, &graphs, &cfg.optimizer)
                .map_err(|e| e.in_phase("optimize"))?;
            (embedding, vec![trace])
        }
        Method::Umap => {
            let mut private_blocks = Vec::with_capacity(datasets.len());
            let mut traces = Vec::with_capacity(datasets.len());
            for (m, ds) in datasets.iter().enumerate() {
                let coords = project(&ds.points(), &projection).map_err(|e| e.in_phase("init"))?;
                let mut anchor = Array2::zeros((0, cfg.dim));
                let mut blocks = [coords];
                rescale_in_place(&mut anchor, &mut blocks, cfg.spread);
                let [coords] = blocks;
                let mut emb = AlignedEmbedding::new(anchor, vec![coords])?;
                let mut opt = cfg.optimizer.clone();
                opt.rng_seed =
                    derive_seed(cfg.optimizer.rng_seed, SALT_UMAP_DATASET + m as u64);
                let trace = optimize(&mut emb, std::slice::from_ref(&graphs[m]), &opt)
                    .map_err(|e| e.in_phase("optimize"))?;
                private_blocks.push(emb.private_block(0).to_owned());
                traces.push(trace);
            }
            let embedding = AlignedEmbedding::new(Array2::zeros((0, cfg.dim)), private_blocks)?;
            (embedding, traces)
        }
        Method::PcaBaseline => {
            let embedding =
                pca_baseline(&refs, &projection).map_err(|e| e.in_phase("init"))?;
            (embedding, Vec::new())
        }
    };
    timings.optimize_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let coords_csv = cfg.out_dir.join("coords.csv");
    write_coords_csv(&coords_csv, &embedding, &datasets).map_err(|e| e.in_phase("output"))?;
    let checkpoint_bin = cfg.out_dir.join("checkpoint.bin");
    let checkpoint_meta = cfg.out_dir.join("checkpoint.meta.json");
    save_checkpoint(&embedding, &cfg.optimizer, &checkpoint_bin, &checkpoint_meta)
        .map_err(|e| e.in_phase("output"))?;
    let trace_json = cfg.out_dir.join("trace.json");
    std::fs::write(
        &trace_json,
        serde_json::to_string_pretty(&traces).expect("traces serialize"),
    )?;
    let mut graph_paths = Vec::new();
    if cfg.save_graphs {
        for (m, g) in graphs.iter().enumerate() {
            let path = cfg.out_dir.join(format!("graph_d{}.txt", m + 1));
            write_edge_list(g, &path).map_err(|e| e.in_phase("output"))?;
            graph_paths.push(path);
        }
    }
    timings.output_s = t0.elapsed().as_secs_f64();

    Ok(EmbedOutput {
        data,
        plan,
        datasets,
        embedding,
        traces,
        paths: ArtifactPaths {
            run_config: run_config_path,
            coords_csv,
            checkpoint_bin,
            checkpoint_meta,
            trace_json,
            graphs: graph_paths,
            plots: Vec::new(),
            metrics_json: None,
            report_json: None,
        },
        timings,
    })
}

/// Deduplicated union of all datasets: seed rows once plus every local row,
/// with the matching embedding rows.
fn union_views(
    embedding: &AlignedEmbedding,
    datasets: &[ExtendedDataset],
) -> (Array2<f64>, Array2<f64>) {
    let n0 = embedding.n_anchors();
    let dim_high = datasets[0].n_features();
    let dim_low = embedding.dim();
    let total: usize = n0 + datasets.iter().map(|d| d.total_size() - d.n_anchors()).sum::<usize>();

    let mut high = Array2::zeros((total, dim_high));
    let mut low = Array2::zeros((total, dim_low));
    let mut cursor = 0usize;
    if n0 > 0 {
        high.slice_mut(s![..n0, ..])
            .assign(&datasets[0].points().slice(s![..n0, ..]));
        low.slice_mut(s![..n0, ..]).assign(&embedding.anchor_block());
        cursor = n0;
    }
    for (m, ds) in datasets.iter().enumerate() {
        // For unconstrained embeddings n0 is 0 and the private block covers
        // the whole dataset view.
        let local_start = if embedding.n_anchors() > 0 { ds.n_anchors() } else { 0 };
        let rows = ds.total_size() - local_start;
        high.slice_mut(s![cursor..cursor + rows, ..])
            .assign(&ds.points().slice(s![local_start.., ..]));
        low.slice_mut(s![cursor..cursor + rows, ..])
            .assign(&embedding.private_block(m));
        cursor += rows;
    }
    (high, low)
}

/// Anchor coordinates of dataset m as embedded by this run (the shared
/// block for constrained methods, the first n_shared private rows for
/// independent ones).
fn dataset_anchor_coords(
    embedding: &AlignedEmbedding,
    n_shared: usize,
    m: usize,
) -> Array2<f64> {
    if embedding.n_anchors() > 0 {
        embedding.anchor_block().to_owned()
    } else {
        embedding.private_block(m).slice(s![..n_shared, ..]).to_owned()
    }
}

/// Compute the full metric report for a finished embedding.
pub fn compute_metrics(
    cfg: &ExperimentConfig,
    datasets: &[ExtendedDataset],
    embedding: &AlignedEmbedding,
    plan: &SplitPlan,
    coords_csv: &Path,
) -> Result<MetricReport> {
    let k = cfg.metric_k;
    let m_count = datasets.len();
    let n0 = plan.n_shared();

    let mut per_dataset = Vec::with_capacity(m_count);
    for (m, ds) in datasets.iter().enumerate() {
        let coords = embedding.dataset_coords(m);
        per_dataset.push(trustworthiness(&ds.points(), &coords.view(), k)?);
    }

    let (t_union, t_union_reason) = if cfg.method == Method::Umap && m_count >= 2 {
        (
            None,
            Some("independent embeddings live in unrelated coordinate spaces".to_string()),
        )
    } else {
        let (high, low) = union_views(embedding, datasets);
        (Some(trustworthiness(&high.view(), &low.view(), k)?), None)
    };

    let (procrustes, procrustes_reason) = if m_count >= 2 && n0 >= 2 {
        let blocks: Vec<Array2<f64>> = (0..m_count)
            .map(|m| dataset_anchor_coords(embedding, n0, m))
            .collect();
        let mut pairs = Vec::new();
        for a in 0..m_count {
            for b in (a + 1)..m_count {
                pairs.push(SharedPairMetric {
                    dataset_a: a + 1,
                    dataset_b: b + 1,
                    distance: procrustes_distance(&blocks[a].view(), &blocks[b].view())?,
                });
            }
        }
        (Some(pairs), None)
    } else {
        (
            None,
            Some(format!(
                "needs at least 2 datasets and 2 shared points, have {m_count} and {n0}"
            )),
        )
    };

    let (drift, drift_reason) = if m_count >= 2 && n0 >= 1 {
        let blocks = read_anchor_blocks_csv(coords_csv, n0, embedding.dim())?;
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        (Some(anchor_drift(&views)?), None)
    } else {
        (
            None,
            Some(format!(
                "needs at least 2 datasets and 1 shared point, have {m_count} and {n0}"
            )),
        )
    };

    Ok(MetricReport {
        k_used: k,
        trustworthiness_per_dataset: per_dataset,
        trustworthiness_union: t_union,
        trustworthiness_union_reason: t_union_reason,
        procrustes_shared: procrustes,
        procrustes_shared_reason: procrustes_reason,
        anchor_drift: drift,
        anchor_drift_reason: drift_reason,
    })
}

/// Full pipeline: split, graphs, init, optimize, metrics, plots, report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut output = run_embed(cfg)?;

    let t0 = Instant::now();
    let metrics = compute_metrics(
        cfg,
        &output.datasets,
        &output.embedding,
        &output.plan,
        &output.paths.coords_csv,
    )
    .map_err(|e| e.in_phase("metrics"))?;
    output.timings.metrics_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    if cfg.dim == 2 {
        for (m, ds) in output.datasets.iter().enumerate() {
            let coords = output.embedding.dataset_coords(m);
            let path = cfg.out_dir.join(format!("plot_d{}.svg", m + 1));
            emit_plot(&coords.view(), ds.labels(), output.data.label_names(), &path)
                .map_err(|e| e.in_phase("output"))?;
            output.paths.plots.push(path);
        }
    }
    let metrics_json = cfg.out_dir.join("metrics.json");
    std::fs::write(
        &metrics_json,
        serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )?;
    output.paths.metrics_json = Some(metrics_json);

    let report_json = cfg.out_dir.join("report.json");
    output.paths.report_json = Some(report_json.clone());
    output.timings.output_s += t0.elapsed().as_secs_f64();

    let report = RunReport {
        config: cfg.clone(),
        metrics,
        timings: output.timings.clone(),
        paths: output.paths.clone(),
    };
    std::fs::write(
        &report_json,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

/// Recompute the metric report for a finished run directory, reloading the
/// data named in its config echo and the checkpointed coordinates (f32
/// precision).
pub fn evaluate_run(run_dir: &Path, metric_k: Option<usize>) -> Result<MetricReport> {
    let cfg_text = std::fs::read_to_string(run_dir.join("run.json"))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&cfg_text)
        .map_err(|e| ManeError::Parse(format!("run.json: {e}")))?;
    if let Some(k) = metric_k {
        cfg.metric_k = k;
    }

    let (_, plan, datasets) = prepare_data(&cfg)?;
    let (embedding, _) = crate::optim::load_checkpoint(
        &run_dir.join("checkpoint.bin"),
        &run_dir.join("checkpoint.meta.json"),
    )?;
    let metrics = compute_metrics(
        &cfg,
        &datasets,
        &embedding,
        &plan,
        &run_dir.join("coords.csv"),
    )?;
    std::fs::write(
        run_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )?;
    Ok(metrics)
}
