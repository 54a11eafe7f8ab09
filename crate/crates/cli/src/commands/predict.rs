//! `predict`: run the configured backend over the test split, dumping
//! sidecar-format detections and fused two-channel samples.

use anyhow::Result;
use rayon::prelude::*;

use ropstage::annot::BinaryMask;
use ropstage::dataset::{fuse, write_fused, DatasetManifest, SampleRecord, Split};
use ropstage::detect::{predict, sidecar_file_name, save_sidecar};

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
    let backend = config.backend_config();

    let predictions_dir = config.output_dir.join("predictions");
    let fused_dir = config.output_dir.join("fused");
    ensure_dir(&predictions_dir)?;
    ensure_dir(&fused_dir)?;

    let test_records: Vec<&SampleRecord> = manifest.records_in(Split::Test).collect();
    let failures: Vec<RecordFailure> = test_records
        .par_iter()
        .filter_map(|record| {
            let result = (|| -> anyhow::Result<()> {
                let img = manifest.materialize_record(record, &config.images_dir)?;
                let detections = predict(&backend, record, &img)?;
                save_sidecar(
                    &detections,
                    &predictions_dir.join(sidecar_file_name(&record.source_path)),
                )?;

                // Channel 1 carries the union of this record's detections.
                let mut union = BinaryMask::new(img.width(), img.height())?;
                for detection in &detections {
                    union = union.union(&detection.mask)?;
                }
                let sample = fuse(&img, &union)?;
                write_fused(&sample, &fused_dir.join(format!("{}.ropf", record.id)))?;
                Ok(())
            })();
            result.err().map(|error| RecordFailure {
                id: record.id.clone(),
                error: format!("{error:#}"),
            })
        })
        .collect();
    let failures = sort_failures(failures);

    println!(
        "predicted {}/{} test records ({} backend) into {}",
        test_records.len() - failures.len(),
        test_records.len(),
        match backend.kind {
            ropstage::detect::BackendKind::Oracle => "oracle",
            ropstage::detect::BackendKind::Null => "null",
            ropstage::detect::BackendKind::File => "file",
        },
        config.output_dir.display()
    );
    write_run_summary(config, "predict", test_records.len(), &failures)?;
    Ok(status_from_failures(&failures))
}
