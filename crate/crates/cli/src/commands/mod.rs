pub mod build;
pub mod evaluate;
pub mod fixtures;
pub mod predict;
pub mod preprocess;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::CommandStatus;

/// One failed work item, reported in the run summary.
#[derive(Debug, Clone, Serialize)]
pub struct RecordFailure {
    pub id: String,
    pub error: String,
}

/// Deterministic per-command summary (no timestamps) written to
/// `<output_dir>/<command>_run.json` for provenance.
#[derive(Serialize)]
struct RunSummary<'a> {
    command: &'a str,
    config_hash: String,
    records_total: usize,
    records_failed: usize,
    failures: &'a [RecordFailure],
    config: &'a PipelineConfig,
}

pub fn write_run_summary(
    config: &PipelineConfig,
    command: &str,
    records_total: usize,
    failures: &[RecordFailure],
) -> Result<()> {
    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let summary = RunSummary {
        command,
        config_hash: config.hash(),
        records_total,
        records_failed: failures.len(),
        failures,
        config,
    };
    let path = config.output_dir.join(format!("{command}_run.json"));
    let text = serde_json::to_string_pretty(&summary).context("serializing run summary")?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn status_from_failures(failures: &[RecordFailure]) -> CommandStatus {
    if failures.is_empty() {
        CommandStatus::Clean
    } else {
        for failure in failures {
            eprintln!("  failed {}: {}", failure.id, failure.error);
        }
        CommandStatus::PartialFailures(failures.len())
    }
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    anyhow::ensure!(path.is_file(), "{what} {} does not exist", path.display());
    Ok(())
}

pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    anyhow::ensure!(path.is_dir(), "{what} {} does not exist", path.display());
    Ok(())
}

pub fn ensure_dir(path: &PathBuf) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Sorts failures by record id so summaries are byte-stable across runs.
pub fn sort_failures(mut failures: Vec<RecordFailure>) -> Vec<RecordFailure> {
    failures.sort_by(|a, b| a.id.cmp(&b.id));
    failures
}
