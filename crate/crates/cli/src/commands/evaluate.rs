//! `evaluate`: stage-classification and/or detection evaluation of the
//! test split, written as JSON + text reports and a PR-curve CSV.

use std::fs;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use ropstage::annot::{rasterize, BinaryMask};
use ropstage::dataset::{DatasetManifest, SampleRecord, Split};
use ropstage::detect::{extract_stage, predict, Detection};
use ropstage::metrics::{
    average_precision, average_precision_trapezoid, confusion_matrix, match_detections, pr_curve,
    MetricsReport, PrCurve,
};

use crate::config::{ApMethod, EvalMode, PipelineConfig};
use crate::CommandStatus;

use super::{
    ensure_dir, require_dir, require_file, sort_failures, status_from_failures, write_run_summary,
    RecordFailure,
};

#[derive(Serialize)]
struct ClassificationDoc<'a> {
    config_hash: &'a str,
    records_evaluated: usize,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

#[derive(Serialize)]
struct DetectionDoc<'a> {
    config_hash: &'a str,
    iou_threshold: f64,
    ap_method: ApMethod,
    num_ground_truth: usize,
    num_detections: usize,
    average_precision: f64,
    pr_points: &'a [ropstage::metrics::PrPoint],
}

pub fn run(config: &PipelineConfig) -> Result<CommandStatus> {
    require_file(&config.manifest, "manifest")?;
    require_dir(&config.images_dir, "images directory")?;
    let manifest = DatasetManifest::load_json(&config.manifest)?;
    let backend = config.backend_config();

    let eval_dir = config.output_dir.join("evaluation");
    ensure_dir(&eval_dir)?;

    let test_records: Vec<&SampleRecord> = manifest.records_in(Split::Test).collect();
    anyhow::ensure!(!test_records.is_empty(), "manifest has no test records");

    // Gather predictions for every record first; evaluating a partial set
    // would silently skew the statistics, so any failure aborts.
    let results: Vec<Result<(&SampleRecord, Vec<Detection>), RecordFailure>> = test_records
        .par_iter()
        .map(|record| {
            let detections = manifest
                .materialize_record(record, &config.images_dir)
                .map_err(anyhow::Error::from)
                .and_then(|img| predict(&backend, record, &img).map_err(Into::into));
            match detections {
                Ok(detections) => Ok((*record, detections)),
                Err(error) => Err(RecordFailure {
                    id: record.id.clone(),
                    error: format!("{error:#}"),
                }),
            }
        })
        .collect();

    let mut predictions = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(entry) => predictions.push(entry),
            Err(failure) => failures.push(failure),
        }
    }
    if !failures.is_empty() {
        let failures = sort_failures(failures);
        eprintln!("evaluation aborted; missing or failed predictions:");
        write_run_summary(config, "evaluate", test_records.len(), &failures)?;
        return Ok(status_from_failures(&failures));
    }

    let hash = config.hash();
    if matches!(config.evaluate.mode, EvalMode::Stage | EvalMode::Both) {
        evaluate_stage(&hash, &eval_dir, &predictions)?;
    }
    if matches!(config.evaluate.mode, EvalMode::Detection | EvalMode::Both) {
        evaluate_detection(config, &hash, &eval_dir, predictions)?;
    }

    write_run_summary(config, "evaluate", test_records.len(), &[])?;
    Ok(CommandStatus::Clean)
}

fn evaluate_stage(
    hash: &str,
    eval_dir: &std::path::Path,
    predictions: &[(&SampleRecord, Vec<Detection>)],
) -> Result<()> {
    let mut pairs = Vec::with_capacity(predictions.len());
    for (record, detections) in predictions {
        let prediction = extract_stage(detections)?;
        pairs.push((record.stage, prediction.stage));
    }
    let stats = ropstage::metrics::report(&confusion_matrix(&pairs)?);

    let text = stats.to_string();
    print!("{text}");
    fs::write(eval_dir.join("classification.txt"), &text)
        .with_context(|| "writing classification.txt")?;

    let doc = ClassificationDoc {
        config_hash: hash,
        records_evaluated: pairs.len(),
        report: &stats,
    };
    let json = serde_json::to_string_pretty(&doc).context("serializing classification report")?;
    fs::write(eval_dir.join("classification.json"), json + "\n")
        .with_context(|| "writing classification.json")?;
    Ok(())
}

fn evaluate_detection(
    config: &PipelineConfig,
    hash: &str,
    eval_dir: &std::path::Path,
    predictions: Vec<(&SampleRecord, Vec<Detection>)>,
) -> Result<()> {
    let mut pooled: Vec<(Detection, bool)> = Vec::new();
    let mut num_ground_truth = 0usize;
    for (record, detections) in predictions {
        num_ground_truth += record.polygons.len();
        if detections.is_empty() {
            continue;
        }
        let (w, h) = (detections[0].mask.width(), detections[0].mask.height());
        let ground_truths: Vec<BinaryMask> = record
            .polygons
            .iter()
            .map(|poly| rasterize(poly, w, h).map(|r| r.mask))
            .collect::<Result<_, _>>()?;
        pooled.extend(match_detections(
            detections,
            &ground_truths,
            config.evaluate.iou_threshold,
        )?);
    }

    let curve = pr_curve(&pooled, num_ground_truth)?;
    let ap = match config.evaluate.ap_method {
        ApMethod::Envelope => average_precision(&curve),
        ApMethod::Trapezoid => average_precision_trapezoid(&curve),
    };

    println!(
        "detection: {} detections vs {} ground truths, AP {:.4}",
        curve.points.len(),
        num_ground_truth,
        ap
    );

    write_pr_csv(&curve, &eval_dir.join("pr_curve.csv"))?;
    let doc = DetectionDoc {
        config_hash: hash,
        iou_threshold: config.evaluate.iou_threshold,
        ap_method: config.evaluate.ap_method,
        num_ground_truth,
        num_detections: curve.points.len(),
        average_precision: ap,
        pr_points: &curve.points,
    };
    let json = serde_json::to_string_pretty(&doc).context("serializing detection report")?;
    fs::write(eval_dir.join("detection.json"), json + "\n")
        .with_context(|| "writing detection.json")?;
    Ok(())
}

fn write_pr_csv(curve: &PrCurve, path: &std::path::Path) -> Result<()> {
    let mut csv = String::from("confidence,precision,recall\n");
    for point in &curve.points {
        csv.push_str(&format!(
            "{},{},{}\n",
            point.confidence, point.precision, point.recall
        ));
    }
    fs::write(path, csv).with_context(|| format!("writing {}", path.display()))
}
