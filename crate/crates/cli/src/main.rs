//! `ropstage` — dataset pipeline driver.
//!
//! Exit codes: 0 on success, 1 when some records failed, 2 on
//! configuration or parse errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{ApMethod, EvalMode, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "ropstage",
    version,
    about = "Retinal fundus dataset pipeline: build, preprocess, predict, evaluate, report"
)]
struct Cli {
    /// TOML config file; flags below override its fields.
    #[arg(long, global = true, env = "ROPSTAGE_CONFIG")]
    config: Option<PathBuf>,

    /// RNG seed for splitting, augmentation, and fixtures.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory holding the source PNG images.
    #[arg(long, global = true)]
    images_dir: Option<PathBuf>,

    /// VIA annotation export.
    #[arg(long, global = true)]
    via_json: Option<PathBuf>,

    /// Dataset manifest path.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Directory for generated artifacts.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Detection backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,

    /// Confidence threshold applied by the backend.
    #[arg(long, global = true)]
    confidence_threshold: Option<f64>,

    /// Sidecar prediction directory for the file backend.
    #[arg(long, global = true)]
    predictions_dir: Option<PathBuf>,

    /// CLAHE tile counts as X,Y (default 8,8).
    #[arg(long, global = true, value_name = "X,Y", value_parser = parse_tiles)]
    clahe_tiles: Option<(u32, u32)>,

    /// CLAHE clip limit in multiples of the uniform bin level.
    #[arg(long, global = true)]
    clahe_clip: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Oracle,
    Null,
    File,
}

impl From<BackendArg> for ropstage::detect::BackendKind {
    fn from(arg: BackendArg) -> Self {
        match arg {
            BackendArg::Oracle => Self::Oracle,
            BackendArg::Null => Self::Null,
            BackendArg::File => Self::File,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse annotations, split, augment, and write the dataset manifest.
    Build,
    /// Materialize every manifest record as a preprocessed PNG.
    Preprocess,
    /// Run the backend on test records; write sidecar dumps and fused samples.
    Predict,
    /// Evaluate stage classification and/or detection quality on the test split.
    Evaluate {
        #[arg(long, value_enum)]
        mode: Option<EvalMode>,
        #[arg(long)]
        iou_threshold: Option<f64>,
        #[arg(long, value_enum)]
        ap_method: Option<ApMethod>,
    },
    /// Compute classification statistics from a confusion-matrix JSON file.
    Report {
        /// JSON file with row_labels, col_labels, and counts.
        #[arg(long)]
        matrix: PathBuf,
        /// Where to write the JSON report (default: <output_dir>/report.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the bundled synthetic fixture set (images + VIA JSON).
    GenFixtures {
        /// Images to generate per stage.
        #[arg(long, default_value_t = 10)]
        per_stage: u32,
        /// Square image edge length in pixels.
        #[arg(long, default_value_t = 96)]
        size: u32,
        /// Target directory (default: fixtures).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

/// Outcome of a command that processes per-record work items.
pub enum CommandStatus {
    Clean,
    PartialFailures(usize),
}

fn parse_tiles(value: &str) -> Result<(u32, u32), String> {
    let (x, y) = value
        .split_once(',')
        .ok_or_else(|| format!("expected X,Y, got {value:?}"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|e| format!("bad tile count {s:?}: {e}"))
    };
    Ok((parse(x)?, parse(y)?))
}

fn apply_overrides(mut config: PipelineConfig, cli: &Cli) -> PipelineConfig {
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.images_dir {
        config.images_dir = dir.clone();
    }
    if let Some(path) = &cli.via_json {
        config.via_json = path.clone();
    }
    if let Some(path) = &cli.manifest {
        config.manifest = path.clone();
    }
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(backend) = cli.backend {
        config.backend.kind = backend.into();
    }
    if let Some(threshold) = cli.confidence_threshold {
        config.backend.confidence_threshold = threshold;
    }
    if let Some(dir) = &cli.predictions_dir {
        config.backend.file_dir = Some(dir.clone());
    }
    if let Some((tiles_x, tiles_y)) = cli.clahe_tiles {
        config.clahe.tiles_x = tiles_x;
        config.clahe.tiles_y = tiles_y;
    }
    if let Some(clip) = cli.clahe_clip {
        config.clahe.clip_limit = clip;
    }
    if let Command::Evaluate {
        mode,
        iou_threshold,
        ap_method,
    } = &cli.command
    {
        if let Some(mode) = mode {
            config.evaluate.mode = *mode;
        }
        if let Some(threshold) = iou_threshold {
            config.evaluate.iou_threshold = *threshold;
        }
        if let Some(method) = ap_method {
            config.evaluate.ap_method = *method;
        }
    }
    config
}

fn run(cli: &Cli) -> anyhow::Result<CommandStatus> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    let config = apply_overrides(config, cli);
    config.validate()?;

    match &cli.command {
        Command::Build => commands::build::run(&config),
        Command::Preprocess => commands::preprocess::run(&config),
        Command::Predict => commands::predict::run(&config),
        Command::Evaluate { .. } => commands::evaluate::run(&config),
        Command::Report { matrix, out } => commands::report::run(&config, matrix, out.as_deref()),
        Command::GenFixtures {
            per_stage,
            size,
            dir,
        } => commands::fixtures::run(&config, *per_stage, *size, dir.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(CommandStatus::Clean) => ExitCode::SUCCESS,
        Ok(CommandStatus::PartialFailures(count)) => {
            eprintln!("{count} record(s) failed");
            ExitCode::from(1)
        }
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(2)
        }
    }
}
