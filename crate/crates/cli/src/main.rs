//! `spgnn` command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors (including missing inputs).

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spgnn::checkpoint::Checkpoint;
use spgnn::conv::ConvKind;
use spgnn::graph::dataset_stats;
use spgnn::model::ModelConfig;
use spgnn::pool::{selection_csv, selection_frequency, PoolKind};
use spgnn::train::{cross_validate, model_from_checkpoint, CvReport};
use spgnn::Error;

use config::{RunConfig, CONFIG_ECHO};

#[derive(Parser)]
#[command(
    name = "spgnn",
    version,
    about = "Graph classification with Cat-Agg convolution and WL-SortPool"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset statistics.
    Stats {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        /// Print a CSV row instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Cross-validate one configuration.
    Cv(RunArgs),
    /// Cross-validate the four ablation wirings with shared settings.
    Ablate(RunArgs),
    /// Export per-node selection counts from a checkpoint.
    ExportSelection {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Number of top-ranked nodes listed per graph.
        #[arg(long, default_value_t = 10)]
        m: usize,
    },
}

#[derive(Args, Clone, Debug, Default)]
struct RunArgs {
    /// `key=value` file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Social-network dataset (90% size quantile for large graphs).
    #[arg(long)]
    social: bool,
    /// catagg, gin or normadj.
    #[arg(long)]
    conv: Option<String>,
    /// wlsortpool, sortpool or sumpool.
    #[arg(long)]
    pool: Option<String>,
    /// sum, mean or max.
    #[arg(long)]
    inner_pool: Option<String>,
    /// Pooling size; `auto` applies the dataset-size rule.
    #[arg(long)]
    k: Option<String>,
    /// Keep the importance score as an extra grid column.
    #[arg(long)]
    importance_channel: bool,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// Comma-separated candidate epoch counts.
    #[arg(long)]
    epochs: Option<String>,
    /// L2 strength; `auto` applies the large-graph rule.
    #[arg(long)]
    l2: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    folds_seed: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> spgnn::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let mut push = |key: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                pairs.push((key, v.clone()));
            }
        };
        push("dataset", &self.dataset);
        push("conv", &self.conv);
        push("pool", &self.pool);
        push("inner_pool", &self.inner_pool);
        push("k", &self.k);
        push("lr", &self.lr);
        push("batch_size", &self.batch_size);
        push("epochs", &self.epochs);
        push("l2", &self.l2);
        push("seed", &self.seed);
        push("folds_seed", &self.folds_seed);
        push("folds", &self.folds);
        push("layers", &self.layers);
        push("width", &self.width);
        if self.social {
            pairs.push(("social", "true".into()));
        }
        if self.importance_channel {
            pairs.push(("importance_channel", "true".into()));
        }
        if let Some(d) = &self.data_dir {
            pairs.push(("data_dir", d.display().to_string()));
        }
        if let Some(o) = &self.out {
            pairs.push(("out", o.display().to_string()));
        }
        for (k, v) in pairs {
            cfg.set(k, &v)?;
        }
        Ok(cfg)
    }
}

/// Usage-level problems exit with 2, everything else with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::MissingFile(_) => 2,
        _ => 1,
    }
}

fn write(path: &Path, contents: &str) -> spgnn::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_stats(dataset: &str, data_dir: &Path, csv: bool) -> spgnn::Result<()> {
    let cfg = RunConfig {
        dataset: dataset.to_string(),
        data_dir: data_dir.to_path_buf(),
        ..RunConfig::default()
    };
    let stats = dataset_stats(&cfg.load_dataset()?);
    if csv {
        println!("{}", spgnn::graph::StatsRecord::CSV_HEADER);
        println!("{}", stats.to_csv_row());
    } else {
        print!("{}", stats.to_table());
    }
    Ok(())
}

/// Runs one cross-validation and writes its artifacts under `cfg.out`.
fn run_cv(cfg: &RunConfig) -> spgnn::Result<CvReport> {
    let dataset = cfg.load_dataset()?;
    let train = cfg.resolved_train(&dataset);
    let ks = cfg.k_candidates(&dataset);
    let out = &cfg.out;
    write(&out.join(CONFIG_ECHO), &cfg.echo())?;
    let report = cross_validate(
        &dataset,
        &cfg.model,
        &train,
        &ks,
        Some(&out.join("checkpoints")),
    )?;
    write(&out.join("report.txt"), &report.to_text())?;
    write(&out.join("report.kv"), &report.to_kv())?;
    write(&out.join("epochs.csv"), &report.epochs_csv())?;
    Ok(report)
}

fn cmd_cv(args: &RunArgs) -> spgnn::Result<()> {
    let cfg = args.resolve()?;
    let report = run_cv(&cfg)?;
    println!(
        "{}: accuracy {:.4} ± {:.4} (k = {}, epochs = {})",
        report.dataset, report.mean, report.std, report.k, report.chosen_epochs
    );
    Ok(())
}

/// The four ablation rows: label, output slug, convolution, pooling.
pub const ABLATION_ROWS: [(&str, &str, ConvKind, PoolKind); 4] = [
    ("SPGNN", "spgnn", ConvKind::CatAgg, PoolKind::WlSortPool),
    (
        "Architecture 1: proposed graph conv + sortpool",
        "catagg_sortpool",
        ConvKind::CatAgg,
        PoolKind::SortPool,
    ),
    (
        "Architecture 2: GIN graph conv + sortpool",
        "gin_sortpool",
        ConvKind::Gin,
        PoolKind::SortPool,
    ),
    ("DGCNN", "dgcnn", ConvKind::NormAdj, PoolKind::SortPool),
];

fn cmd_ablate(args: &RunArgs) -> spgnn::Result<()> {
    let base = args.resolve()?;
    write(&base.out.join(CONFIG_ECHO), &base.echo())?;
    let mut table = String::from("row,mean,std,k,epochs\n");
    let mut shared_k = base.k;
    for (label, slug, conv, pool) in ABLATION_ROWS {
        let cfg = RunConfig {
            model: ModelConfig {
                conv,
                pool,
                ..base.model.clone()
            },
            // Rows after the first reuse the first row's pooling size.
            k: shared_k,
            out: base.out.join(slug),
            ..base.clone()
        };
        let report = run_cv(&cfg)?;
        shared_k = Some(report.k);
        let _ = writeln!(
            table,
            "{label},{},{},{},{}",
            report.mean, report.std, report.k, report.chosen_epochs
        );
        println!("{label:<48} {:.4} ± {:.4}", report.mean, report.std);
    }
    write(&base.out.join("ablation.csv"), &table)
}

fn cmd_export_selection(
    dataset: &str,
    data_dir: &Path,
    checkpoint: &Path,
    out: &Path,
    m: usize,
) -> spgnn::Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = model_from_checkpoint(&ck)?;
    let cfg = RunConfig {
        dataset: dataset.to_string(),
        data_dir: data_dir.to_path_buf(),
        ..RunConfig::default()
    };
    let data = cfg.load_dataset()?;
    let mut records = Vec::with_capacity(data.len());
    let mut top = String::new();
    for (gid, g) in data.graphs().iter().enumerate() {
        let pooled = model.pooled(g)?;
        let counts = selection_frequency(&pooled.selected, g.num_nodes());
        let ids: Vec<String> = counts.top(m).iter().map(usize::to_string).collect();
        let _ = writeln!(top, "{gid}: {}", ids.join(" "));
        records.push((gid, counts));
    }
    write(&out.join("selection.csv"), &selection_csv(&records))?;
    write(&out.join("top_nodes.txt"), &top)?;
    println!(
        "wrote selection counts for {} graphs to {}",
        records.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Stats {
            dataset,
            data_dir,
            csv,
        } => cmd_stats(dataset, data_dir, *csv),
        Command::Cv(args) => cmd_cv(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::ExportSelection {
            dataset,
            data_dir,
            checkpoint,
            out,
            m,
        } => cmd_export_selection(dataset, data_dir, checkpoint, out, *m),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
