//! `build`: VIA annotations -> split -> augment -> manifest file, printing
//! a per-class per-split count table.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use ropstage::annot::{parse_via, StageLabel};
use ropstage::dataset::{
    augment_class, split_records, DatasetManifest, ManifestParams, Split, StagedSource,
};

use crate::config::PipelineConfig;
use crate::CommandStatus;

use super::{require_file, write_run_summary};

pub fn run(config: &PipelineConfig) -> Result<CommandStatus> {
    require_file(&config.via_json, "annotation file")?;

    let text = fs::read_to_string(&config.via_json)
        .with_context(|| format!("reading {}", config.via_json.display()))?;
    let images = parse_via(&text, &config.stage_attribute)
        .with_context(|| format!("parsing {}", config.via_json.display()))?;

    let mut skipped = Vec::new();
    let mut sources = Vec::new();
    for image in images {
        let Some(first) = image.polygons.first() else {
            skipped.push(image.filename);
            continue;
        };
        // The image-level class comes from its first region; this dataset
        // carries a single stage per image.
        let stage = first.stage();
        let id = Path::new(&image.filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| image.filename.clone());
        sources.push(StagedSource {
            id,
            source_path: image.filename,
            stage,
            polygons: image.polygons,
        });
    }
    for filename in &skipped {
        eprintln!("skipping {filename}: no regions");
    }

    let records = split_records(sources, config.split_ratios(), config.seed)?;
    let records = augment_class(
        records,
        config.augment.stage,
        config.augment_factor(),
        config.seed,
    );

    let params = ManifestParams {
        split_ratios: config.split_ratios(),
        augment_stage: config.augment.stage,
        augment_factor: config.augment.factor,
        clahe: config.clahe_params()?,
        stage_attribute: config.stage_attribute.clone(),
    };
    let mut manifest = DatasetManifest::new(
        records,
        params,
        config.seed,
        format!("ropstage {}", env!("CARGO_PKG_VERSION")),
    );
    manifest.config_hash = Some(config.hash());

    if let Some(parent) = config.manifest.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    manifest.save_json(&config.manifest)?;

    print_count_table(&manifest);
    println!(
        "wrote {} records to {}",
        manifest.records.len(),
        config.manifest.display()
    );

    write_run_summary(config, "build", manifest.records.len(), &[])?;
    Ok(CommandStatus::Clean)
}

fn print_count_table(manifest: &DatasetManifest) {
    let counts = manifest.counts();
    println!("{:>8} {:>7} {:>7} {:>11}", "", "train", "test", "validation");
    let mut totals = [0usize; 3];
    for stage in StageLabel::GROUND_TRUTH {
        let row: Vec<usize> = Split::ALL
            .iter()
            .map(|&split| counts[&(stage, split)])
            .collect();
        println!(
            "{:>8} {:>7} {:>7} {:>11}",
            stage.as_str(),
            row[0],
            row[1],
            row[2]
        );
        for (total, value) in totals.iter_mut().zip(&row) {
            *total += value;
        }
    }
    println!(
        "{:>8} {:>7} {:>7} {:>11}",
        "total", totals[0], totals[1], totals[2]
    );
}
