//! `infodemic`: prepare data, fetch embeddings, train cells, run the grid, evaluate, predict
//! and report.

mod fetch;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use infodemic::config::RunConfig;
use infodemic::evaluation::TableStyle;
use infodemic::experiment::{
    collect_reports, evaluate_model, predict_file, prepare, render_report, run_cell, run_grid, FeatureSet,
    LoadedModel,
};
use infodemic::kinds::{FeaturizerKind, ModelKind};

#[derive(Parser, Debug)]
#[command(name = "infodemic", version, about = "COVID-19 misinformation classification workbench")]
struct Cli {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Generate N synthetic documents instead of reading the dataset.
    #[arg(long, global = true, value_name = "N")]
    synthetic: Option<usize>,
    /// Full-length recurrent inputs and wider recurrent state.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Comma-separated model names for the grid, e.g. `rf,knn`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    only: Option<Vec<String>>,
    /// Concurrent grid cells; 0 uses every core.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Preprocess the splits and cache tokens, vocabulary and embeddings.
    Prepare,
    /// Download the embedding archive (or copy a local one) and extract the vectors.
    FetchEmbeddings {
        /// Use this local archive or vector file instead of downloading.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Train and test one model on one featurizer.
    Train {
        model: ModelKind,
        /// Required for every model except rmdl.
        featurizer: Option<FeaturizerKind>,
    },
    /// Train every model and featurizer pair plus the ensemble and write the comparison table.
    Grid,
    /// Score a saved model (container file, cell directory or ensemble directory) on the test split.
    Evaluate { model: PathBuf },
    /// Label each row of a CSV with `id` and text columns.
    Predict {
        model: PathBuf,
        input: PathBuf,
        /// Defaults to `predictions.csv` in the run directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the comparison table for an earlier run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long)]
        markdown: bool,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.synthetic {
        cfg.synthetic = Some(n);
    }
    if cli.paper_scale {
        cfg.paper_scale = true;
    }
    if let Some(only) = &cli.only {
        cfg.only = only.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `runs/<timestamp>-<seed>/`, adding a suffix when that name is taken.
fn run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let stem = format!("{}-{}", chrono::Local::now().format("%Y%m%d-%H%M%S"), cfg.seed);
    for n in 1.. {
        let name = if n == 1 { stem.clone() } else { format!("{stem}-{n}") };
        let dir = cfg.output_dir.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => {
                cfg.echo(&dir)?;
                return Ok(dir);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = resolve_config(&cli)?;
    let out = run_dir(&cfg)?;
    println!("run directory {}", out.display());
    match cli.command {
        Command::Prepare => {
            let prepared = prepare(&cfg)?;
            print!("{}", prepared.summary());
        }
        Command::FetchEmbeddings { from } => {
            let path = fetch::fetch_embeddings(&cfg, from.as_deref())?;
            println!("embeddings ready at {}", path.display());
        }
        Command::Train { model, featurizer } => {
            if model != ModelKind::Rmdl && featurizer.is_none() {
                bail!("{model} needs a featurizer: tfidf or embedding");
            }
            let prepared = prepare(&cfg)?;
            let features = FeatureSet::build(&prepared, &cfg);
            let featurizer = if model == ModelKind::Rmdl { None } else { featurizer };
            let cell = run_cell(&cfg, &prepared, &features, model, featurizer, &out)?;
            print!("{}", cell.report.render());
            for w in &cell.warnings {
                println!("warning: {w}");
            }
            println!("model written to {}", cell.dir.display());
        }
        Command::Grid => {
            let prepared = prepare(&cfg)?;
            let grid = run_grid(&cfg, &prepared, &out)?;
            print!("{}", render_report(&grid.reports, TableStyle::Plain));
            for w in &grid.warnings {
                println!("warning: {w}");
            }
            for f in &grid.failures {
                eprintln!("error: cell {} failed: {}", f.cell, f.error);
            }
            return Ok(grid.failures.is_empty());
        }
        Command::Evaluate { model } => {
            let prepared = prepare(&cfg)?;
            let report = evaluate_model(&cfg, &prepared, &model)?;
            let text = report.render();
            fs::write(out.join("report.txt"), &text)?;
            print!("{text}");
        }
        Command::Predict { model, input, output } => {
            let prepared = prepare(&cfg)?;
            let loaded = LoadedModel::load(&model, &prepared, &cfg)?;
            let path = output.unwrap_or_else(|| out.join("predictions.csv"));
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let summary = predict_file(&cfg, &prepared, &loaded, &input, BufWriter::new(file))?;
            println!(
                "{} rows written to {}, {} malformed rows skipped",
                summary.written,
                path.display(),
                summary.skipped
            );
        }
        Command::Report { run_dir, markdown } => {
            let reports = collect_reports(&run_dir)?;
            if reports.is_empty() {
                bail!("no cell reports under {}", run_dir.join("cells").display());
            }
            let style = if markdown { TableStyle::Markdown } else { TableStyle::Plain };
            let text = render_report(&reports, style);
            write_report(&out, &text, markdown)?;
            print!("{text}");
        }
    }
    Ok(true)
}

fn write_report(out: &Path, text: &str, markdown: bool) -> Result<()> {
    let name = if markdown { "table.md" } else { "table.txt" };
    fs::write(out.join(name), text).with_context(|| format!("writing {name}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
