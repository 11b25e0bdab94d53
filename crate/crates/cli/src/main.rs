//! Command-line front end: train, evaluate, rank features, inspect saved
//! models, and benchmark, over IDX image data and CSV tables.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use greenlearn::archive::{load_model, save_model};
use greenlearn::config::TrainConfig;
use greenlearn::dataset::{load_idx, load_tabular_csv, DatasetBundle, LabelKind, Labels, Samples, Split};
use greenlearn::features::{rank_features, ElbowMode, RankTargets, RowMatrix};
use greenlearn::pipeline::HopStage;
use greenlearn::workflow::{run_eval, run_train};
use greenlearn::{GlError, Result};

#[derive(Parser)]
#[command(
    name = "greenlearn",
    about = "Train and run feed-forward Saab pipelines with feature selection and tree or linear decision models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ImageData {
    /// IDX image file (magic 2051)
    #[arg(long)]
    images: PathBuf,
    /// IDX label file (magic 2049)
    #[arg(long)]
    labels: PathBuf,
    /// Zero-pad every image to this square size, content centered
    #[arg(long)]
    pad_to: Option<usize>,
    /// Use only the first N samples
    #[arg(long)]
    limit: Option<usize>,
}

impl ImageData {
    fn load(&self, split: Split) -> Result<DatasetBundle> {
        let mut bundle = load_idx(
            &self.images,
            &self.labels,
            self.pad_to.map(|s| (s, s)),
            split,
        )?;
        if let Some(limit) = self.limit {
            let Samples::Images(images) = &mut bundle.samples else {
                unreachable!("IDX loading always produces images");
            };
            images.truncate(limit);
            let Labels::Classes(labels) = &mut bundle.labels else {
                unreachable!("IDX loading always produces class labels");
            };
            labels.truncate(limit);
        }
        Ok(bundle)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a pipeline on labeled images and save the model
    Fit {
        #[command(flatten)]
        data: ImageData,
        /// Training configuration file (key = value lines); defaults to the
        /// built-in two-hop spectral pipeline
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the trained model archive
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate a saved model on labeled images
    Eval {
        /// Trained model archive
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: ImageData,
    },
    /// Rank the columns of a CSV table by split cost and emit the sorted
    /// cost curve as tab-separated (rank, cost) lines
    Rank {
        /// CSV file with a header row
        #[arg(long)]
        csv: PathBuf,
        /// Name of the label column
        #[arg(long)]
        label_column: String,
        /// Threshold grid resolution
        #[arg(long, default_value_t = 16)]
        bins: usize,
        /// Score against regression targets even if the labels are integral
        #[arg(long)]
        regression: bool,
        /// Write the table here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a summary of a saved model archive
    Inspect {
        /// Trained model archive
        #[arg(long)]
        model: PathBuf,
    },
    /// Train without saving and print the timing table
    Bench {
        #[command(flatten)]
        data: ImageData,
        /// Training configuration file; defaults as for fit
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read_config(path: &Option<PathBuf>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default_iphop()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| GlError::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            TrainConfig::parse(&text)
        }
    }
}

fn cmd_fit(data: &ImageData, config: &Option<PathBuf>, model_path: &PathBuf) -> Result<()> {
    let config = read_config(config)?;
    let bundle = data.load(Split::Train)?;
    println!(
        "training on {} samples from {}",
        bundle.len(),
        bundle.provenance
    );
    let (model, report) = run_train(&config, &bundle)?;
    save_model(&model, model_path)?;
    println!("model written to {}", model_path.display());
    println!();
    print!("{}", report.render());
    Ok(())
}

fn cmd_eval(model_path: &PathBuf, data: &ImageData) -> Result<()> {
    let model = load_model(model_path)?;
    let bundle = data.load(Split::Test)?;
    println!(
        "evaluating {} on {} samples from {}",
        model_path.display(),
        bundle.len(),
        bundle.provenance
    );
    let report = run_eval(&model, &bundle)?;
    println!();
    print!("{}", report.render());
    Ok(())
}

fn cmd_rank(
    csv: &PathBuf,
    label_column: &str,
    bins: usize,
    regression: bool,
    out: &Option<PathBuf>,
) -> Result<()> {
    let force = regression.then_some(LabelKind::Values);
    let bundle = load_tabular_csv(csv, label_column, force, Split::Train)?;
    let Samples::Tabular {
        features,
        num_features,
    } = &bundle.samples
    else {
        unreachable!("CSV loading always produces tabular features");
    };
    let matrix = RowMatrix::new(features, features.len() / num_features, *num_features);
    let targets = match &bundle.labels {
        Labels::Classes(l) => RankTargets::Classes(l),
        Labels::Values(v) => RankTargets::Values(v),
    };
    let ranking = rank_features(&matrix, targets, bins, ElbowMode::Late)?;
    let mut table = String::new();
    for (rank, &column) in ranking.order.iter().enumerate() {
        table.push_str(&format!("{}\t{}\n", rank + 1, ranking.costs[column]));
    }
    match out {
        None => print!("{table}"),
        Some(p) => {
            std::fs::write(p, table).map_err(|e| GlError::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            println!(
                "{} ranked columns written to {} ({} selected at the elbow)",
                ranking.order.len(),
                p.display(),
                ranking.elbow
            );
        }
    }
    Ok(())
}

fn cmd_inspect(model_path: &PathBuf) -> Result<()> {
    let model = load_model(model_path)?;
    let bytes = greenlearn::archive::encode_model(&model).len();
    println!(
        "archive: {} ({bytes} bytes, format version {})",
        model_path.display(),
        greenlearn::archive::ARCHIVE_VERSION
    );
    let coverage = model
        .pipeline
        .variant
        .spectral_coverage()
        .map_or(String::new(), |c| format!(" (spectral coverage {c})"));
    println!(
        "variant: {}{coverage}",
        model.pipeline.variant.tag()
    );
    let (h, w, c) = model.pipeline.input_shape;
    println!("input shape: {h}x{w}x{c}");
    for (i, hop) in model.pipeline.hops.iter().enumerate() {
        let cfg = &hop.config;
        let (ih, iw, ic) = hop.input_shape;
        let (oh, ow, oc) = hop.output_shape;
        let kind = match &hop.stage {
            HopStage::Standard(_) => "standard".to_string(),
            HopStage::ChannelWise(s) => format!(
                "channel-wise, {} kept of {} channels",
                s.num_kept(),
                s.channels().len()
            ),
        };
        let spectral = match &hop.spectral {
            None => String::new(),
            Some(sets) => format!(", {} spectral kernel sets", sets.len()),
        };
        println!(
            "hop{}: {}x{} window stride {}, pool {}x{}, {kind}{spectral}, {ih}x{iw}x{ic} -> {oh}x{ow}x{oc}",
            i + 1,
            cfg.window.0,
            cfg.window.1,
            cfg.stride,
            cfg.pool.0,
            cfg.pool.1,
        );
    }
    println!(
        "selection: {} of {} columns kept{}",
        model.ranking.selected.len(),
        model.ranking.costs.len(),
        if model.ranking.elbow_fallback {
            " (flat-curve fallback)"
        } else {
            ""
        }
    );
    let classes = model
        .predictor
        .num_classes()
        .map_or(String::new(), |c| format!(", {c} classes"));
    println!(
        "predictor: {}{classes}, {} features in, {} parameters",
        model.predictor.tag(),
        model.predictor.num_features(),
        model.predictor.num_parameters()
    );
    println!("configuration:");
    for line in model.config.to_text().lines() {
        println!("  {line}");
    }
    Ok(())
}

fn cmd_bench(data: &ImageData, config: &Option<PathBuf>) -> Result<()> {
    let config = read_config(config)?;
    let bundle = data.load(Split::Train)?;
    println!("benchmarking on {} samples", bundle.len());
    let (_, report) = run_train(&config, &bundle)?;
    println!();
    println!("wall clock:");
    let mut total = 0.0;
    for (phase, seconds) in &report.timings {
        println!("  {phase:<16} {seconds:>9.3} s");
        total += seconds;
    }
    println!("  {:<16} {total:>9.3} s", "total");
    println!();
    println!(
        "model size: {} parameters, {} bytes serialized",
        report.model_parameters, report.model_bytes
    );
    println!("training accuracy: {:.2}%", report.accuracy * 100.0);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit {
            data,
            config,
            model,
        } => cmd_fit(data, config, model),
        Command::Eval { model, data } => cmd_eval(model, data),
        Command::Rank {
            csv,
            label_column,
            bins,
            regression,
            out,
        } => cmd_rank(csv, label_column, *bins, *regression, out),
        Command::Inspect { model } => cmd_inspect(model),
        Command::Bench { data, config } => cmd_bench(data, config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; only real usage errors
            // should exit non-zero
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
