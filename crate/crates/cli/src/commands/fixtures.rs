//! `gen-fixtures`: synthetic images plus a matching VIA export, so the
//! pipeline can be exercised without clinical data.

use std::path::Path;

use anyhow::{Context, Result};

use ropstage::fixture::{generate_fixtures, FixtureSpec};

use crate::config::PipelineConfig;
use crate::CommandStatus;

pub fn run(
    config: &PipelineConfig,
    per_stage: u32,
    size: u32,
    dir: Option<&Path>,
) -> Result<CommandStatus> {
    anyhow::ensure!(per_stage > 0, "--per-stage must be at least 1");
    anyhow::ensure!(size >= 16, "--size must be at least 16 pixels");

    let root = dir.unwrap_or_else(|| Path::new("fixtures"));
    let spec = FixtureSpec {
        images_per_stage: per_stage,
        width: size,
        height: size,
        seed: config.seed,
    };
    let generated = generate_fixtures(root, &spec).context("generating fixtures")?;
    println!(
        "generated {} images under {} with annotations {}",
        generated.image_count,
        generated.images_dir.display(),
        generated.via_json.display()
    );
    Ok(CommandStatus::Clean)
}
