use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kmfm::dataset::{fetch_uci, UciDataset};
use kmfm::pipeline::{
    benchmark, emit_loss_curves, fit, load_dataset, run_kmfm_on, sweep_clusters, sweep_feature_dim,
    write_run_outputs, write_sweep_csv, PipelineConfig, PipelineError, RunReport,
};

#[derive(Parser)]
#[command(
    name = "kmfm",
    about = "K-means on learned feature maps of mixed-type tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download or copy a UCI table into the cache.
    Fetch {
        dataset: UciDataset,
        #[arg(long, default_value = "cache")]
        cache: PathBuf,
        /// Local file or directory holding the raw UCI files.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Print the default config for a UCI table as TOML.
    Config {
        dataset: UciDataset,
        #[arg(long, default_value = "cache")]
        cache: PathBuf,
    },
    /// Train, project, cluster and score; write all artifacts to `--out`.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Scores for several feature dimensions `L` from one fitted model.
    SweepL {
        #[command(flatten)]
        source: Source,
        /// Comma-separated values to score.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long, default_value = "sweep_l.csv")]
        out: PathBuf,
    },
    /// Scores for several cluster counts `k` from one fitted model.
    SweepK {
        #[command(flatten)]
        source: Source,
        /// Comma-separated values to score.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long, default_value = "sweep_k.csv")]
        out: PathBuf,
    },
    /// Run each table with its default config beside the published scores.
    Bench {
        #[arg(required = true)]
        datasets: Vec<UciDataset>,
        #[arg(long, default_value = "cache")]
        cache: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "benchmark.csv")]
        out: PathBuf,
    },
    /// Re-emit the loss curves stored in a `report.json`.
    Curves { report: PathBuf, out: PathBuf },
}

/// A config file or a UCI table's defaults, plus overrides.
#[derive(Args)]
struct Source {
    /// TOML config file.
    #[arg(conflicts_with = "dataset", required_unless_present = "dataset")]
    config: Option<PathBuf>,
    /// Use a UCI table's defaults instead of a config file.
    #[arg(long)]
    dataset: Option<UciDataset>,
    /// Cache directory for `--dataset`.
    #[arg(long, default_value = "cache")]
    cache: PathBuf,
    /// Override `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the feature dimension `L`.
    #[arg(long)]
    dims: Option<usize>,
    /// Override the number of clusters.
    #[arg(long)]
    k: Option<usize>,
    /// Override the epoch count of both networks.
    #[arg(long)]
    epochs: Option<usize>,
}

impl Source {
    fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match (&self.config, self.dataset) {
            (Some(path), _) => PipelineConfig::load(path)?,
            (None, Some(d)) => PipelineConfig::for_uci(d, &self.cache),
            (None, None) => return Err(PipelineError::Config("need --config or --dataset".into())),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(l) = self.dims {
            cfg.dims = l;
        }
        if let Some(k) = self.k {
            cfg.kmeans.k = k;
        }
        if let Some(e) = self.epochs {
            cfg.train_num.epochs = e;
            cfg.train_cat.epochs = e;
        }
        cfg.validate_static()?;
        Ok(cfg)
    }
}

fn print_scores(report: &RunReport) {
    match report.scores {
        Some(s) => println!(
            "{} seed {} L={} k={}: RI {:.4} NMI {:.4}",
            report.dataset,
            report.config.master_seed,
            report.config.dims,
            report.config.kmeans.k,
            s.rand_index,
            s.nmi
        ),
        None => println!(
            "{}: no ground truth, {} labels written",
            report.dataset,
            report.labels.len()
        ),
    }
}

fn sweep(
    source: &Source,
    values: &[usize],
    out: &Path,
    by_dims: bool,
) -> Result<(), PipelineError> {
    let cfg = source.resolve()?;
    let ds = load_dataset(&cfg)?;
    let model = fit(&cfg, &ds)?;
    let (rows, column) = if by_dims {
        (sweep_feature_dim(&cfg, &model, &ds, values)?, "dims")
    } else {
        (sweep_clusters(&cfg, &model, &ds, values)?, "k")
    };
    write_sweep_csv(&rows, column, out)?;
    for r in &rows {
        println!(
            "{column}={} RI {:.4} NMI {:.4}",
            r.value, r.rand_index, r.nmi
        );
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Fetch {
            dataset,
            cache,
            from,
        } => {
            let path = fetch_uci(dataset, &cache, from.as_deref())?;
            println!("{}", path.display());
        }
        Command::Config { dataset, cache } => {
            print!(
                "{}",
                PipelineConfig::for_uci(dataset, &cache).to_toml_string()
            );
        }
        Command::Run { source, out } => {
            let cfg = source.resolve()?;
            let ds = load_dataset(&cfg)?;
            let (report, model) = run_kmfm_on(&cfg, &ds)?;
            write_run_outputs(&report, &model, &out)?;
            print_scores(&report);
        }
        Command::SweepL {
            source,
            values,
            out,
        } => sweep(&source, &values, &out, true)?,
        Command::SweepK {
            source,
            values,
            out,
        } => sweep(&source, &values, &out, false)?,
        Command::Bench {
            datasets,
            cache,
            seed,
            out,
        } => {
            let rows = benchmark(
                &datasets,
                |d| PipelineConfig {
                    master_seed: seed,
                    ..PipelineConfig::for_uci(d, &cache)
                },
                &out,
            )?;
            for r in rows {
                println!(
                    "{}: RI {:.4} NMI {:.4} (published {:.4} / {:.4})",
                    r.dataset,
                    r.rand_index,
                    r.nmi,
                    r.paper_reported_rand_index,
                    r.paper_reported_nmi
                );
            }
        }
        Command::Curves { report, out } => {
            let text = std::fs::read_to_string(&report).map_err(|e| PipelineError::Io {
                path: report.display().to_string(),
                source: e,
            })?;
            let parsed: RunReport = serde_json::from_str(&text).map_err(|e| PipelineError::Io {
                path: report.display().to_string(),
                source: std::io::Error::other(e),
            })?;
            for p in emit_loss_curves(&parsed, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
