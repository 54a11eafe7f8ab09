//! `preprocess`: materialize every manifest record as a PNG. Re-running
//! overwrites the same bytes.

use anyhow::Result;
use rayon::prelude::*;

use ropstage::dataset::DatasetManifest;

use crate::config::PipelineConfig;
use crate::CommandStatus;

use super::{
    ensure_dir, require_dir, require_file, sort_failures, status_from_failures, write_run_summary,
    RecordFailure,
};

pub fn run(config: &PipelineConfig) -> Result<CommandStatus> {
    require_file(&config.manifest, "manifest")?;
    require_dir(&config.images_dir, "images directory")?;
    let manifest = DatasetManifest::load_json(&config.manifest)?;

    let out_dir = config.output_dir.join("preprocessed");
    ensure_dir(&out_dir)?;

    let failures: Vec<RecordFailure> = manifest
        .records
        .par_iter()
        .filter_map(|record| {
            let result = manifest
                .materialize_record(record, &config.images_dir)
                .and_then(|img| {
                    let path = out_dir.join(format!("{}.png", record.id));
                    img.save_png(&path).map_err(Into::into)
                });
            result.err().map(|error| RecordFailure {
                id: record.id.clone(),
                error: error.to_string(),
            })
        })
        .collect();
    let failures = sort_failures(failures);

    println!(
        "materialized {}/{} records into {}",
        manifest.records.len() - failures.len(),
        manifest.records.len(),
        out_dir.display()
    );
    write_run_summary(config, "preprocess", manifest.records.len(), &failures)?;
    Ok(status_from_failures(&failures))
}
