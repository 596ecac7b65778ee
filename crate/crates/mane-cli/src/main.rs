//! Command-line driver for manifold-aligned neighbor embedding: split,
//! embed (umap | mane | pca-baseline), evaluate, and plot.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! divergence.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mane::data::{gen_swiss_roll, load_csv, load_idx, LabeledMatrix};
use mane::experiment::{
    prepare_data, read_coords_csv, run_embed, run_experiment, DataSource, ExperimentConfig,
    Method,
};
use mane::plot::emit_plot;
use mane::{ManeError, Result};

#[derive(Parser)]
#[command(
    name = "mane",
    version,
    about = "Manifold-aligned neighbor embedding of datasets that share a seed subset"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SourceArgs {
    /// Generate a swiss roll instead of loading a file.
    #[arg(long)]
    swiss_roll: bool,

    /// Number of swiss roll samples.
    #[arg(long, default_value_t = 6000)]
    n: usize,

    /// Gaussian noise standard deviation for the swiss roll.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,

    /// IDX image file (e.g. MNIST/Fashion-MNIST train images).
    #[arg(long, conflicts_with = "swiss_roll")]
    idx_images: Option<PathBuf>,

    /// IDX label file accompanying --idx-images.
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,

    /// CSV file of numeric features with an optional label column.
    #[arg(long, conflicts_with_all = ["swiss_roll", "idx_images"])]
    csv: Option<PathBuf>,

    /// Name of the CSV label column.
    #[arg(long, requires = "csv")]
    label_column: Option<String>,
}

impl SourceArgs {
    fn to_source(&self) -> Result<DataSource> {
        match (self.swiss_roll, &self.idx_images, &self.csv) {
            (true, None, None) => Ok(DataSource::SwissRoll {
                n_samples: self.n,
                noise: self.noise,
            }),
            (false, Some(images), None) => Ok(DataSource::Idx {
                images: images.clone(),
                labels: self.idx_labels.clone(),
            }),
            (false, None, Some(path)) => Ok(DataSource::Csv {
                path: path.clone(),
                label_column: self.label_column.clone(),
            }),
            _ => Err(ManeError::Parameter(
                "choose exactly one data source: --swiss-roll, --idx-images, or --csv".into(),
            )),
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    /// Number of shared seed points.
    #[arg(long, default_value_t = 0)]
    n_shared: usize,

    /// Number of local partitions.
    #[arg(long, default_value_t = 1)]
    partitions: usize,

    /// Take a seeded random subsample of this size before splitting.
    #[arg(long)]
    subsample: Option<usize>,
}

#[derive(Args)]
struct OptArgs {
    #[arg(long, default_value_t = 30)]
    n_neighbors: usize,

    #[arg(long, default_value_t = 0.1)]
    min_dist: f64,

    /// Negative sampling rate.
    #[arg(long, default_value_t = 1.0)]
    neg_rate: f64,

    #[arg(long, default_value_t = 200)]
    epochs: usize,

    /// Initial learning rate (decays linearly to 0).
    #[arg(long, default_value_t = 1.0)]
    lr: f64,

    #[arg(long, default_value_t = 4.0)]
    grad_clip: f64,

    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,

    /// Initialization scale: maximum absolute coordinate after PCA init.
    #[arg(long, default_value_t = 10.0)]
    spread: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Load or generate a dataset and write it as a canonical CSV.
    Ingest {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a seed/partition split plan and write it as JSON.
    Split {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output plan path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build graphs, initialize, and optimize; write coordinates,
    /// checkpoint, and trace.
    Embed {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        opt: OptArgs,
        /// umap | mane | pca-baseline
        #[arg(long, default_value = "mane")]
        method: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write each fuzzy graph as an "i j weight" edge list.
        #[arg(long)]
        save_graphs: bool,
    },
    /// Recompute the metric report for a finished run directory.
    Metrics {
        #[arg(long)]
        run_dir: PathBuf,
        /// Trustworthiness neighborhood size.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Render scatter plots from an exported coordinates CSV.
    Plot {
        #[arg(long)]
        coords: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Full pipeline: split, embed, evaluate, plot, report.
    Experiment {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        opt: OptArgs,
        /// umap | mane | pca-baseline
        #[arg(long, default_value = "mane")]
        method: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Trustworthiness neighborhood size.
        #[arg(long, default_value_t = 5)]
        metric_k: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write each fuzzy graph as an "i j weight" edge list.
        #[arg(long)]
        save_graphs: bool,
    },
}

fn build_config(
    source: &SourceArgs,
    split: &SplitArgs,
    opt: &OptArgs,
    method: &str,
    seed: u64,
    metric_k: usize,
    out_dir: PathBuf,
    save_graphs: bool,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(source.to_source()?, out_dir);
    cfg.subsample = split.subsample;
    cfg.n_shared = split.n_shared;
    cfg.n_partitions = split.partitions;
    cfg.method = method.parse::<Method>()?;
    cfg.optimizer.n_epochs = opt.epochs;
    cfg.optimizer.learning_rate = opt.lr;
    cfg.optimizer.negative_sample_rate = opt.neg_rate;
    cfg.optimizer.n_neighbors = opt.n_neighbors;
    cfg.optimizer.min_dist = opt.min_dist;
    cfg.optimizer.rng_seed = seed;
    cfg.optimizer.grad_clip = opt.grad_clip;
    cfg.dim = opt.dim;
    cfg.spread = opt.spread;
    cfg.metric_k = metric_k;
    cfg.rng_seed = seed;
    cfg.save_graphs = save_graphs;
    Ok(cfg)
}

fn load_for_ingest(source: &SourceArgs, seed: u64) -> Result<LabeledMatrix> {
    match source.to_source()? {
        DataSource::SwissRoll { n_samples, noise } => gen_swiss_roll(n_samples, noise, seed),
        DataSource::Idx { images, labels } => load_idx(&images, labels.as_deref()),
        DataSource::Csv { path, label_column } => load_csv(&path, label_column.as_deref()),
    }
}

fn write_canonical_csv(data: &LabeledMatrix, out: &PathBuf) -> Result<()> {
    let mut text = String::new();
    for c in 0..data.n_features() {
        if c > 0 {
            text.push(',');
        }
        text.push_str(&format!("f{c}"));
    }
    if data.labels().is_some() {
        text.push_str(",label");
    }
    text.push('\n');
    for (i, row) in data.points().rows().into_iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                text.push(',');
            }
            text.push_str(&v.to_string());
        }
        if let Some(labels) = data.labels() {
            text.push_str(&format!(",{}", labels[i]));
        }
        text.push('\n');
    }
    std::fs::write(out, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { source, seed, out } => {
            let data = load_for_ingest(&source, seed)?;
            write_canonical_csv(&data, &out)?;
            println!(
                "ingested {} points x {} features{} -> {}",
                data.n_points(),
                data.n_features(),
                match data.labels() {
                    Some(l) => {
                        let distinct: std::collections::BTreeSet<_> = l.iter().collect();
                        format!(", {} labels", distinct.len())
                    }
                    None => String::new(),
                },
                out.display()
            );
        }
        Command::Split {
            source,
            split,
            seed,
            out,
        } => {
            let cfg = build_config(
                &source,
                &split,
                &OptArgs {
                    n_neighbors: 30,
                    min_dist: 0.1,
                    neg_rate: 1.0,
                    epochs: 200,
                    lr: 1.0,
                    grad_clip: 4.0,
                    dim: 2,
                    spread: 10.0,
                },
                "mane",
                seed,
                5,
                PathBuf::from("."),
                false,
            )?;
            let (_, plan, datasets) = prepare_data(&cfg)?;
            std::fs::write(
                &out,
                serde_json::to_string_pretty(&plan).expect("plan serializes"),
            )?;
            let sizes: Vec<usize> = datasets.iter().map(|d| d.total_size()).collect();
            println!(
                "split: {} shared + partitions {:?} (extended sizes {:?}) -> {}",
                plan.n_shared(),
                plan.partition_indices.iter().map(Vec::len).collect::<Vec<_>>(),
                sizes,
                out.display()
            );
        }
        Command::Embed {
            source,
            split,
            opt,
            method,
            seed,
            out_dir,
            save_graphs,
        } => {
            let cfg = build_config(&source, &split, &opt, &method, seed, 5, out_dir, save_graphs)?;
            let output = run_embed(&cfg)?;
            println!(
                "embedded {} datasets ({} anchors) in {:.2}s graph + {:.2}s optimize",
                output.datasets.len(),
                output.plan.n_shared(),
                output.timings.graph_s,
                output.timings.optimize_s
            );
            println!("coordinates: {}", output.paths.coords_csv.display());
            println!("checkpoint:  {}", output.paths.checkpoint_bin.display());
        }
        Command::Metrics { run_dir, k } => {
            let report = mane::experiment::evaluate_run(&run_dir, k)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("metrics serialize")
            );
        }
        Command::Plot { coords, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let blocks = read_coords_csv(&coords)?;
            for block in &blocks {
                let path = out_dir.join(format!("plot_d{}.svg", block.dataset_id));
                emit_plot(
                    &block.coords.view(),
                    block.labels.as_deref(),
                    None,
                    &path,
                )?;
                println!("wrote {}", path.display());
            }
        }
        Command::Experiment {
            source,
            split,
            opt,
            method,
            seed,
            metric_k,
            out_dir,
            save_graphs,
        } => {
            let cfg = build_config(
                &source, &split, &opt, &method, seed, metric_k, out_dir, save_graphs,
            )?;
            let report = run_experiment(&cfg)?;
            let m = &report.metrics;
            println!("method {} seed {}", cfg.method, cfg.rng_seed);
            for (i, t) in m.trustworthiness_per_dataset.iter().enumerate() {
                println!("T (dataset {}): {t:.4}", i + 1);
            }
            match (m.trustworthiness_union, &m.trustworthiness_union_reason) {
                (Some(t), _) => println!("T (union):     {t:.4}"),
                (None, Some(reason)) => println!("T (union):     n/a ({reason})"),
                (None, None) => {}
            }
            match (&m.procrustes_shared, &m.procrustes_shared_reason) {
                (Some(pairs), _) => {
                    for p in pairs {
                        println!(
                            "d_p shared ({}, {}): {}",
                            p.dataset_a, p.dataset_b, p.distance
                        );
                    }
                }
                (None, Some(reason)) => println!("d_p shared:    n/a ({reason})"),
                (None, None) => {}
            }
            match (m.anchor_drift, &m.anchor_drift_reason) {
                (Some(d), _) => println!("anchor drift:  {d}"),
                (None, Some(reason)) => println!("anchor drift:  n/a ({reason})"),
                (None, None) => {}
            }
            if let Some(path) = &report.paths.report_json {
                println!("report: {}", path.display());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &ManeError) -> i32 {
    match err.root() {
        ManeError::Divergence { .. } => 4,
        ManeError::Io(_)
        | ManeError::Format(_)
        | ManeError::Consistency(_)
        | ManeError::Parse(_)
        | ManeError::Degenerate(_) => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
