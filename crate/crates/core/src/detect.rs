//! The detection-backend contract that stands in for the segmentation
//! model at the pipeline boundary, three concrete backends, and the rule
//! that turns a set of detections into a single stage prediction.
//!
//! External models plug in through sidecar files: one
//! `<image-stem>.pred.json` per image holding an array of
//! `{stage: 1|2|3, confidence: <real>, mask: {width, height, runs}}`
//! entries with RLE masks in the same coordinate frame as the
//! annotations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{rasterize, BinaryMask, MaskError, RleMask, StageLabel};
use crate::dataset::SampleRecord;
use crate::img::GrayImage;

/// Inference confidence threshold applied by every backend.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("confidence threshold {0} outside [0, 1]")]
    BadThreshold(f64),

    #[error("file backend requires file_dir")]
    MissingFileDir,

    #[error("record {record_id:?}: sidecar prediction file {path} is missing")]
    MissingSidecar { record_id: String, path: String },

    #[error("sidecar {path}: {message}")]
    SidecarParse { path: String, message: String },

    #[error("sidecar {path} entry {index}: stage {stage} is not 1, 2, or 3")]
    SidecarStage {
        path: String,
        index: usize,
        stage: u8,
    },

    #[error("sidecar {path} entry {index}: confidence {confidence} outside [0, 1]")]
    SidecarConfidence {
        path: String,
        index: usize,
        confidence: f64,
    },

    #[error("detection masks have mixed dimensions: {0}x{1} vs {2}x{3}")]
    MixedDimensions(u32, u32, u32, u32),

    #[error("detection carries the prediction-only rop_free label")]
    RopFreeDetection,

    #[error(transparent)]
    Mask(#[from] MaskError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One model output: a segmentation mask with its stage and confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub mask: BinaryMask,
    pub stage: StageLabel,
    pub confidence: f64,
}

/// Which backend produces detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Rasterizes the ground-truth polygons at confidence 1.0.
    Oracle,
    /// Returns no detections.
    Null,
    /// Reads per-image sidecar prediction files.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub confidence_threshold: f64,
    pub file_dir: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Oracle,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            file_dir: None,
        }
    }
}

/// Stage decision for one image, with the per-stage union areas that
/// produced it. `stage` is `RopFree` exactly when every area is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePrediction {
    pub stage: StageLabel,
    pub per_stage_area: BTreeMap<StageLabel, u64>,
}

/// Runs the configured backend on one record and filters the detections to
/// `confidence >= threshold`.
pub fn predict(
    config: &BackendConfig,
    record: &SampleRecord,
    img: &GrayImage,
) -> Result<Vec<Detection>, DetectError> {
    if !(0.0..=1.0).contains(&config.confidence_threshold) {
        return Err(DetectError::BadThreshold(config.confidence_threshold));
    }
    let mut detections = match config.kind {
        BackendKind::Null => Vec::new(),
        BackendKind::Oracle => {
            let mut out = Vec::with_capacity(record.polygons.len());
            for polygon in &record.polygons {
                let rasterized = rasterize(polygon, img.width(), img.height())?;
                out.push(Detection {
                    mask: rasterized.mask,
                    stage: polygon.stage(),
                    confidence: 1.0,
                });
            }
            out
        }
        BackendKind::File => {
            let dir = config.file_dir.as_ref().ok_or(DetectError::MissingFileDir)?;
            let path = dir.join(sidecar_file_name(&record.source_path));
            if !path.exists() {
                return Err(DetectError::MissingSidecar {
                    record_id: record.id.clone(),
                    path: path.display().to_string(),
                });
            }
            load_sidecar(&path)?
        }
    };
    detections.retain(|d| d.confidence >= config.confidence_threshold);
    Ok(detections)
}

/// Unions all detections of each stage and predicts the stage with the
/// largest union area; ties go to the lower-numbered stage. No detections,
/// or only empty masks, predict `RopFree`.
pub fn extract_stage(detections: &[Detection]) -> Result<StagePrediction, DetectError> {
    let mut per_stage_area: BTreeMap<StageLabel, u64> = StageLabel::GROUND_TRUTH
        .iter()
        .map(|&stage| (stage, 0))
        .collect();

    if let Some(first) = detections.first() {
        let (w, h) = (first.mask.width(), first.mask.height());
        let mut unions: BTreeMap<StageLabel, BinaryMask> = BTreeMap::new();
        for detection in detections {
            if detection.stage == StageLabel::RopFree {
                return Err(DetectError::RopFreeDetection);
            }
            if detection.mask.width() != w || detection.mask.height() != h {
                return Err(DetectError::MixedDimensions(
                    w,
                    h,
                    detection.mask.width(),
                    detection.mask.height(),
                ));
            }
            match unions.get_mut(&detection.stage) {
                Some(existing) => *existing = existing.union(&detection.mask)?,
                None => {
                    unions.insert(detection.stage, detection.mask.clone());
                }
            }
        }
        for (stage, mask) in &unions {
            per_stage_area.insert(*stage, mask.area());
        }
    }

    let mut stage = StageLabel::RopFree;
    let mut best_area = 0u64;
    for candidate in StageLabel::GROUND_TRUTH {
        let area = per_stage_area[&candidate];
        if area > best_area {
            best_area = area;
            stage = candidate;
        }
    }
    Ok(StagePrediction {
        stage,
        per_stage_area,
    })
}

/// Sidecar file name for an image path: `<stem>.pred.json`.
pub fn sidecar_file_name(source_path: &str) -> String {
    let stem = Path::new(source_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source_path.to_owned());
    format!("{stem}.pred.json")
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarEntry {
    stage: u8,
    confidence: f64,
    mask: RleMask,
}

/// Reads and validates a sidecar prediction file (unfiltered).
pub fn load_sidecar(path: &Path) -> Result<Vec<Detection>, DetectError> {
    let display = || path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DetectError::Io {
        path: display(),
        source,
    })?;
    let entries: Vec<SidecarEntry> =
        serde_json::from_str(&text).map_err(|e| DetectError::SidecarParse {
            path: display(),
            message: e.to_string(),
        })?;

    let mut detections = Vec::with_capacity(entries.len());
    for (index, entry) in entries.into_iter().enumerate() {
        let stage = StageLabel::from_stage_number(entry.stage).ok_or(DetectError::SidecarStage {
            path: display(),
            index,
            stage: entry.stage,
        })?;
        if !(0.0..=1.0).contains(&entry.confidence) {
            return Err(DetectError::SidecarConfidence {
                path: display(),
                index,
                confidence: entry.confidence,
            });
        }
        detections.push(Detection {
            mask: entry.mask.decode()?,
            stage,
            confidence: entry.confidence,
        });
    }
    Ok(detections)
}

/// Writes detections in the sidecar format.
pub fn save_sidecar(detections: &[Detection], path: &Path) -> Result<(), DetectError> {
    let entries: Vec<SidecarEntry> = detections
        .iter()
        .map(|d| SidecarEntry {
            stage: d.stage.stage_number().expect("detections are staged"),
            confidence: d.confidence,
            mask: RleMask::encode(&d.mask),
        })
        .collect();
    let text = serde_json::to_string_pretty(&entries).expect("sidecar entries serialize");
    fs::write(path, text + "\n").map_err(|source| DetectError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::AnnotatedPolygon;
    use crate::dataset::Split;

    fn record_with_polygons(polygons: Vec<AnnotatedPolygon>) -> SampleRecord {
        SampleRecord {
            id: "rec".into(),
            source_path: "rec.png".into(),
            stage: StageLabel::Stage2,
            split: Split::Test,
            group_id: "rec".into(),
            augmentation: None,
            polygons,
        }
    }

    fn square(x0: f64, y0: f64, size: f64, stage: StageLabel) -> AnnotatedPolygon {
        AnnotatedPolygon::new(
            vec![
                (x0, y0),
                (x0 + size, y0),
                (x0 + size, y0 + size),
                (x0, y0 + size),
            ],
            stage,
        )
        .unwrap()
    }

    fn mask_of(poly: &AnnotatedPolygon, w: u32, h: u32) -> BinaryMask {
        rasterize(poly, w, h).unwrap().mask
    }

    #[test]
    fn null_backend_returns_nothing() {
        let config = BackendConfig {
            kind: BackendKind::Null,
            ..BackendConfig::default()
        };
        let record = record_with_polygons(vec![square(0.0, 0.0, 4.0, StageLabel::Stage2)]);
        let img = GrayImage::new(16, 16).unwrap();
        assert!(predict(&config, &record, &img).unwrap().is_empty());
    }

    #[test]
    fn oracle_backend_rasterizes_ground_truth() {
        let poly = square(2.0, 2.0, 5.0, StageLabel::Stage2);
        let record = record_with_polygons(vec![poly.clone()]);
        let img = GrayImage::new(16, 16).unwrap();
        let detections = predict(&BackendConfig::default(), &record, &img).unwrap();
        assert_eq!(detections.len(), 1);
        assert_eq!(detections[0].stage, StageLabel::Stage2);
        assert_eq!(detections[0].confidence, 1.0);
        assert_eq!(detections[0].mask, mask_of(&poly, 16, 16));
    }

    #[test]
    fn file_backend_filters_below_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let poly = square(1.0, 1.0, 4.0, StageLabel::Stage1);
        let mask = mask_of(&poly, 8, 8);
        let detections = vec![
            Detection {
                mask: mask.clone(),
                stage: StageLabel::Stage1,
                confidence: 0.9,
            },
            Detection {
                mask,
                stage: StageLabel::Stage2,
                confidence: 0.7,
            },
        ];
        save_sidecar(&detections, &dir.path().join("rec.pred.json")).unwrap();

        let config = BackendConfig {
            kind: BackendKind::File,
            confidence_threshold: 0.8,
            file_dir: Some(dir.path().to_path_buf()),
        };
        let record = record_with_polygons(vec![]);
        let img = GrayImage::new(8, 8).unwrap();
        let kept = predict(&config, &record, &img).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);
        assert_eq!(kept[0].stage, StageLabel::Stage1);
    }

    #[test]
    fn file_backend_reports_missing_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let config = BackendConfig {
            kind: BackendKind::File,
            confidence_threshold: 0.8,
            file_dir: Some(dir.path().to_path_buf()),
        };
        let record = record_with_polygons(vec![]);
        let img = GrayImage::new(8, 8).unwrap();
        match predict(&config, &record, &img) {
            Err(DetectError::MissingSidecar { record_id, .. }) => assert_eq!(record_id, "rec"),
            other => panic!("expected MissingSidecar, got {other:?}"),
        }
    }

    #[test]
    fn sidecar_rejects_bad_stage_and_confidence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pred.json");
        std::fs::write(
            &path,
            r#"[{"stage": 4, "confidence": 0.5, "mask": {"width": 2, "height": 2, "runs": [4]}}]"#,
        )
        .unwrap();
        assert!(matches!(load_sidecar(&path), Err(DetectError::SidecarStage { .. })));

        std::fs::write(
            &path,
            r#"[{"stage": 2, "confidence": 1.5, "mask": {"width": 2, "height": 2, "runs": [4]}}]"#,
        )
        .unwrap();
        assert!(matches!(
            load_sidecar(&path),
            Err(DetectError::SidecarConfidence { .. })
        ));
    }

    #[test]
    fn extract_stage_empty_input_is_rop_free() {
        let prediction = extract_stage(&[]).unwrap();
        assert_eq!(prediction.stage, StageLabel::RopFree);
        assert!(prediction.per_stage_area.values().all(|&a| a == 0));
    }

    #[test]
    fn extract_stage_takes_largest_area() {
        let d2 = Detection {
            mask: mask_of(&square(0.0, 0.0, 10.0, StageLabel::Stage2), 32, 32),
            stage: StageLabel::Stage2,
            confidence: 0.99,
        };
        let d3 = Detection {
            mask: mask_of(&square(12.0, 12.0, 13.0, StageLabel::Stage3), 32, 32),
            stage: StageLabel::Stage3,
            confidence: 0.5,
        };
        let prediction = extract_stage(&[d2, d3]).unwrap();
        assert_eq!(prediction.per_stage_area[&StageLabel::Stage2], 100);
        assert_eq!(prediction.per_stage_area[&StageLabel::Stage3], 169);
        assert_eq!(prediction.stage, StageLabel::Stage3);
    }

    #[test]
    fn extract_stage_unions_overlapping_masks() {
        // Two 60-pixel stage-2 masks overlapping in 30 pixels union to 90,
        // which beats a single 80-pixel stage-3 mask. The overlap comes
        // from 6x10 rectangles shifted by 3 columns.
        let rect = |x0: f64| {
            AnnotatedPolygon::new(
                vec![(x0, 0.0), (x0 + 6.0, 0.0), (x0 + 6.0, 10.0), (x0, 10.0)],
                StageLabel::Stage2,
            )
            .unwrap()
        };
        let m1 = mask_of(&rect(0.0), 32, 32);
        let m2 = mask_of(&rect(3.0), 32, 32);
        assert_eq!(m1.area(), 60);
        assert_eq!(m2.area(), 60);
        assert_eq!(m1.union(&m2).unwrap().area(), 90);

        let stage3 = AnnotatedPolygon::new(
            vec![(12.0, 12.0), (22.0, 12.0), (22.0, 20.0), (12.0, 20.0)],
            StageLabel::Stage3,
        )
        .unwrap();
        let m3 = mask_of(&stage3, 32, 32);
        assert_eq!(m3.area(), 80);

        let detections = vec![
            Detection { mask: m1, stage: StageLabel::Stage2, confidence: 0.9 },
            Detection { mask: m2, stage: StageLabel::Stage2, confidence: 0.85 },
            Detection { mask: m3, stage: StageLabel::Stage3, confidence: 0.95 },
        ];
        let prediction = extract_stage(&detections).unwrap();
        assert_eq!(prediction.stage, StageLabel::Stage2);
        assert_eq!(prediction.per_stage_area[&StageLabel::Stage2], 90);
    }

    #[test]
    fn extract_stage_is_order_invariant_and_ties_go_low() {
        let m1 = mask_of(&square(0.0, 0.0, 5.0, StageLabel::Stage1), 16, 16);
        let m3 = mask_of(&square(8.0, 8.0, 5.0, StageLabel::Stage3), 16, 16);
        let d1 = Detection { mask: m1, stage: StageLabel::Stage1, confidence: 0.81 };
        let d3 = Detection { mask: m3, stage: StageLabel::Stage3, confidence: 0.99 };

        let forward = extract_stage(&[d1.clone(), d3.clone()]).unwrap();
        let backward = extract_stage(&[d3, d1]).unwrap();
        assert_eq!(forward, backward);
        // Equal 25-pixel areas: the lower stage wins.
        assert_eq!(forward.stage, StageLabel::Stage1);
    }

    #[test]
    fn extract_stage_all_empty_masks_is_rop_free() {
        let empty = Detection {
            mask: BinaryMask::new(8, 8).unwrap(),
            stage: StageLabel::Stage2,
            confidence: 0.9,
        };
        assert_eq!(extract_stage(&[empty]).unwrap().stage, StageLabel::RopFree);
    }

    #[test]
    fn extract_stage_rejects_mixed_dimensions() {
        let a = Detection {
            mask: BinaryMask::new(8, 8).unwrap(),
            stage: StageLabel::Stage1,
            confidence: 0.9,
        };
        let b = Detection {
            mask: BinaryMask::new(9, 8).unwrap(),
            stage: StageLabel::Stage1,
            confidence: 0.9,
        };
        assert!(matches!(
            extract_stage(&[a, b]),
            Err(DetectError::MixedDimensions(..))
        ));
    }
}
