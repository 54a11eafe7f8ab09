//! `report`: classification statistics from a confusion-matrix JSON file.
//!
//! Input format matches the serialized matrix:
//!
//! ```json
//! {
//!   "row_labels": ["stage1", "stage2", "stage3"],
//!   "col_labels": ["rop_free", "stage1", "stage2", "stage3"],
//!   "counts": [[31, 18, 234, 67], [20, 8, 240, 130], [26, 4, 68, 262]]
//! }
//! ```

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use ropstage::metrics::{report, ConfusionMatrix, MetricsReport};

use crate::config::PipelineConfig;
use crate::CommandStatus;

use super::{ensure_dir, require_file};

#[derive(Serialize)]
struct ReportDoc<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

pub fn run(config: &PipelineConfig, matrix_path: &Path, out: Option<&Path>) -> Result<CommandStatus> {
    require_file(matrix_path, "matrix file")?;
    let text = fs::read_to_string(matrix_path)
        .with_context(|| format!("reading {}", matrix_path.display()))?;
    let matrix: ConfusionMatrix = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", matrix_path.display()))?;

    let stats = report(&matrix);
    print!("{stats}");

    let hash = config.hash();
    let doc = ReportDoc {
        config_hash: &hash,
        report: &stats,
    };
    let json = serde_json::to_string_pretty(&doc).context("serializing report")?;
    let out_path = match out {
        Some(path) => path.to_path_buf(),
        None => {
            ensure_dir(&config.output_dir)?;
            config.output_dir.join("report.json")
        }
    };
    fs::write(&out_path, json + "\n").with_context(|| format!("writing {}", out_path.display()))?;
    println!("wrote {}", out_path.display());
    Ok(CommandStatus::Clean)
}
