//! Dataset lifecycle: manifest bookkeeping, seeded train/test/validation
//! splitting, class augmentation with group integrity, preprocessing
//! materialization, and mask-channel fusion.
//!
//! Reproducibility contract: every random choice flows from a caller
//! supplied 64-bit seed through ChaCha8 (via `rand_chacha::ChaCha8Rng`,
//! `seed_from_u64`), with a distinct stream id per purpose (stream 0 for
//! splitting, stream 1 for augmentation). The same seed therefore
//! reproduces the same manifest on any platform.

mod fused;

pub use fused::{read_fused, write_fused, FusedError, FusedSample, FUSED_MAGIC, FUSED_VERSION};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::num::NonZeroU32;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{AnnotatedPolygon, BinaryMask, MaskError, StageLabel};
use crate::enhance::{clahe, equalize, ClaheParams, EnhanceError};
use crate::img::{
    center_zoom, crop_edges, resize_bilinear, to_grayscale, EdgeCrop, GrayImage, ImgError, RgbImage,
};

/// Output edge length of every materialized image.
pub const TARGET_EDGE: u32 = 299;

/// Manifest schema version written to and expected from JSON files.
pub const MANIFEST_VERSION: u32 = 1;

const STREAM_SPLIT: u64 = 0;
const STREAM_AUGMENT: u64 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot split an empty record list")]
    EmptyInput,

    #[error("split ratios must all be positive, got {0}:{1}:{2}")]
    BadRatios(u32, u32, u32),

    #[error("source {id:?} carries the prediction-only rop_free label")]
    RopFreeSource { id: String },

    #[error("record {id:?}: {source}")]
    RecordImage { id: String, source: ImgError },

    #[error("record {id:?}: {source}")]
    RecordEnhance { id: String, source: EnhanceError },

    #[error(transparent)]
    Img(#[from] ImgError),

    #[error(transparent)]
    Mask(#[from] MaskError),

    #[error("fused-sample channels differ from image dimensions {0}x{1} vs {2}x{3}")]
    FuseDimensionMismatch(u32, u32, u32, u32),

    #[error("manifest {path}: {source}")]
    ManifestIo {
        path: String,
        source: std::io::Error,
    },

    #[error("manifest {path}: {source}")]
    ManifestJson {
        path: String,
        source: serde_json::Error,
    },

    #[error("manifest version {found} is not supported (expected {MANIFEST_VERSION})")]
    ManifestVersion { found: u32 },

    #[error("manifest invariant violated: {reason}")]
    ManifestInvariant { reason: String },
}

/// Dataset partition a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Validation];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Train : test : validation proportions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub test: u32,
    pub validation: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 6,
            test: 3,
            validation: 1,
        }
    }
}

/// Stored crop and zoom applied when an augmented record is materialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub crop: EdgeCrop,
    pub zoom: f64,
}

/// An unsplit input sample: one annotated source image.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedSource {
    pub id: String,
    pub source_path: String,
    pub stage: StageLabel,
    pub polygons: Vec<AnnotatedPolygon>,
}

/// One dataset sample. Augmented variants share their original's
/// `group_id` and split; the original of a group is never augmented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub source_path: String,
    pub stage: StageLabel,
    pub split: Split,
    pub group_id: String,
    pub augmentation: Option<Augmentation>,
    pub polygons: Vec<AnnotatedPolygon>,
}

impl SampleRecord {
    pub fn is_augmented(&self) -> bool {
        self.augmentation.is_some()
    }
}

/// Build parameters recorded in the manifest for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParams {
    pub split_ratios: SplitRatios,
    pub augment_stage: StageLabel,
    pub augment_factor: u32,
    pub clahe: ClaheParams,
    pub stage_attribute: String,
}

impl Default for ManifestParams {
    fn default() -> Self {
        Self {
            split_ratios: SplitRatios::default(),
            augment_stage: StageLabel::Stage1,
            augment_factor: 5,
            clahe: ClaheParams::default(),
            stage_attribute: crate::annot::DEFAULT_STAGE_ATTRIBUTE.to_owned(),
        }
    }
}

/// The dataset manifest: every sample with its split assignment, plus the
/// seed and parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub created_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub seed: u64,
    pub params: ManifestParams,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn new(records: Vec<SampleRecord>, params: ManifestParams, seed: u64, created_by: String) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            created_by,
            config_hash: None,
            seed,
            params,
            records,
        }
    }

    /// Per-(stage, split) record counts, in the layout of the dataset table.
    pub fn counts(&self) -> BTreeMap<(StageLabel, Split), usize> {
        let mut counts = BTreeMap::new();
        for stage in StageLabel::GROUND_TRUTH {
            for split in Split::ALL {
                counts.insert((stage, split), 0);
            }
        }
        for record in &self.records {
            *counts.entry((record.stage, record.split)).or_insert(0) += 1;
        }
        counts
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Checks the structural invariants: unique ids, group integrity (all
    /// records of a group share one split), originals not augmented, valid
    /// polygons and crop fractions.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invariant = |reason: String| DatasetError::ManifestInvariant { reason };

        if self.format_version != MANIFEST_VERSION {
            return Err(DatasetError::ManifestVersion {
                found: self.format_version,
            });
        }

        let mut ids = BTreeSet::new();
        let mut group_split: BTreeMap<&str, Split> = BTreeMap::new();
        for record in &self.records {
            if !ids.insert(record.id.as_str()) {
                return Err(invariant(format!("duplicate record id {:?}", record.id)));
            }
            if record.stage == StageLabel::RopFree {
                return Err(invariant(format!(
                    "record {:?} carries the prediction-only rop_free label",
                    record.id
                )));
            }
            match group_split.get(record.group_id.as_str()) {
                Some(&split) if split != record.split => {
                    return Err(invariant(format!(
                        "group {:?} spans splits {} and {}",
                        record.group_id, split, record.split
                    )));
                }
                Some(_) => {}
                None => {
                    group_split.insert(record.group_id.as_str(), record.split);
                }
            }
            if let Some(augmentation) = &record.augmentation {
                augmentation.crop.validate()?;
                if !augmentation.zoom.is_finite() || augmentation.zoom < 1.0 {
                    return Err(invariant(format!(
                        "record {:?} stores zoom factor {}",
                        record.id, augmentation.zoom
                    )));
                }
            } else if record.id != record.group_id {
                // Originals anchor their group.
                return Err(invariant(format!(
                    "unaugmented record {:?} does not anchor its group {:?}",
                    record.id, record.group_id
                )));
            }
            for polygon in &record.polygons {
                polygon
                    .validate()
                    .map_err(|e| invariant(format!("record {:?}: {e}", record.id)))?;
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<(), DatasetError> {
        self.validate()?;
        let text = serde_json::to_string_pretty(self).map_err(|source| DatasetError::ManifestJson {
            path: path.display().to_string(),
            source,
        })?;
        fs::write(path, text + "\n").map_err(|source| DatasetError::ManifestIo {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_json(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::ManifestIo {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|source| DatasetError::ManifestJson {
                path: path.display().to_string(),
                source,
            })?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Materializes one record with this manifest's CLAHE parameters.
    pub fn materialize_record(
        &self,
        record: &SampleRecord,
        images_root: &Path,
    ) -> Result<GrayImage, DatasetError> {
        materialize(record, &self.params.clahe, images_root)
    }
}

/// Allocates `total` items to parties with the given integer weights by the
/// highest-averages rule: each item goes to the party maximizing
/// `weight / (allocated + 1)`, with quotient ties resolved toward the
/// larger weight and then the earlier party. Comparisons use exact integer
/// cross-multiplication.
pub fn apportion(total: usize, weights: &[u32]) -> Vec<usize> {
    let mut allocated = vec![0usize; weights.len()];
    for _ in 0..total {
        let mut best = 0usize;
        for candidate in 1..weights.len() {
            let lhs = weights[candidate] as u128 * (allocated[best] as u128 + 1);
            let rhs = weights[best] as u128 * (allocated[candidate] as u128 + 1);
            if lhs > rhs || (lhs == rhs && weights[candidate] > weights[best]) {
                best = candidate;
            }
        }
        allocated[best] += 1;
    }
    allocated
}

/// Shuffles each stage's sources with the seeded generator and partitions
/// them into train/test/validation with counts apportioned from `ratios`.
/// Deterministic for a fixed seed.
pub fn split_records(
    sources: Vec<StagedSource>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<SampleRecord>, DatasetError> {
    if sources.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    if ratios.train == 0 || ratios.test == 0 || ratios.validation == 0 {
        return Err(DatasetError::BadRatios(ratios.train, ratios.test, ratios.validation));
    }

    let mut by_stage: BTreeMap<StageLabel, Vec<StagedSource>> = BTreeMap::new();
    for source in sources {
        if source.stage == StageLabel::RopFree {
            return Err(DatasetError::RopFreeSource { id: source.id });
        }
        by_stage.entry(source.stage).or_default().push(source);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SPLIT);

    let mut records = Vec::new();
    for stage in StageLabel::GROUND_TRUTH {
        let Some(mut stage_sources) = by_stage.remove(&stage) else {
            continue;
        };
        stage_sources.shuffle(&mut rng);
        let counts = apportion(
            stage_sources.len(),
            &[ratios.train, ratios.test, ratios.validation],
        );
        let mut remaining = stage_sources.into_iter();
        for (split, &count) in Split::ALL.iter().zip(&counts) {
            for source in remaining.by_ref().take(count) {
                records.push(SampleRecord {
                    group_id: source.id.clone(),
                    id: source.id,
                    source_path: source.source_path,
                    stage: source.stage,
                    split: *split,
                    augmentation: None,
                    polygons: source.polygons,
                });
            }
        }
    }
    Ok(records)
}

/// Adds `factor - 1` augmented variants for every train-split record of the
/// given stage. Each variant gets a fresh id, its original's group id and
/// split, and seeded random crop fractions in `[0, 0.05]` plus a zoom
/// factor in `[1.0, 1.1]` applied at materialization. Test and validation
/// records are untouched.
pub fn augment_class(
    records: Vec<SampleRecord>,
    stage: StageLabel,
    factor: NonZeroU32,
    seed: u64,
) -> Vec<SampleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_AUGMENT);

    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let is_target =
            record.split == Split::Train && record.stage == stage && !record.is_augmented();
        out.push(record);
        if !is_target {
            continue;
        }
        let original = out.last().expect("just pushed").clone();
        for k in 1..factor.get() {
            let crop = EdgeCrop::new(
                rng.random_range(0.0..=crate::img::MAX_EDGE_CROP_FRACTION),
                rng.random_range(0.0..=crate::img::MAX_EDGE_CROP_FRACTION),
                rng.random_range(0.0..=crate::img::MAX_EDGE_CROP_FRACTION),
                rng.random_range(0.0..=crate::img::MAX_EDGE_CROP_FRACTION),
            )
            .expect("sampled fractions stay in range");
            let zoom = rng.random_range(1.0..=1.1);
            out.push(SampleRecord {
                id: format!("{}-aug{}", original.id, k),
                augmentation: Some(Augmentation { crop, zoom }),
                ..original.clone()
            });
        }
    }
    out
}

/// Loads a record's source image and runs the preprocessing chain:
/// grayscale, global equalization, CLAHE, then (for augmented records) the
/// stored crop and zoom, and finally the resize to 299x299.
pub fn materialize(
    record: &SampleRecord,
    clahe_params: &ClaheParams,
    images_root: &Path,
) -> Result<GrayImage, DatasetError> {
    let path = images_root.join(&record.source_path);
    let rgb = RgbImage::load_png(&path).map_err(|source| DatasetError::RecordImage {
        id: record.id.clone(),
        source,
    })?;
    let gray = equalize(&to_grayscale(&rgb));
    let gray = clahe(&gray, clahe_params).map_err(|source| DatasetError::RecordEnhance {
        id: record.id.clone(),
        source,
    })?;
    let gray = match &record.augmentation {
        Some(augmentation) => {
            let cropped = crop_edges(&gray, augmentation.crop).map_err(|source| {
                DatasetError::RecordImage {
                    id: record.id.clone(),
                    source,
                }
            })?;
            center_zoom(&cropped, augmentation.zoom).map_err(|source| DatasetError::RecordImage {
                id: record.id.clone(),
                source,
            })?
        }
        None => gray,
    };
    Ok(resize_bilinear(&gray, TARGET_EDGE, TARGET_EDGE)?)
}

/// Stacks a standardized image with a binary mask into a two-channel
/// sample: channel 0 holds the standardized values, channel 1 the mask as
/// 0.0/1.0.
pub fn fuse(img: &GrayImage, mask: &BinaryMask) -> Result<FusedSample, DatasetError> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(DatasetError::FuseDimensionMismatch(
            img.width(),
            img.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let channel0 = crate::enhance::standardize(img).into_data();
    let channel1 = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Ok(FusedSample {
        width: img.width(),
        height: img.height(),
        channel0,
        channel1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::rasterize;

    fn sources(stage: StageLabel, count: usize) -> Vec<StagedSource> {
        (0..count)
            .map(|i| StagedSource {
                id: format!("{}_{i:04}", stage.as_str()),
                source_path: format!("{}_{i:04}.png", stage.as_str()),
                stage,
                polygons: vec![],
            })
            .collect()
    }

    fn count_split(records: &[SampleRecord], stage: StageLabel) -> (usize, usize, usize) {
        let count = |split| {
            records
                .iter()
                .filter(|r| r.stage == stage && r.split == split)
                .count()
        };
        (
            count(Split::Train),
            count(Split::Test),
            count(Split::Validation),
        )
    }

    #[test]
    fn apportion_exact_ratio() {
        assert_eq!(apportion(10, &[6, 3, 1]), vec![6, 3, 1]);
        assert_eq!(apportion(20, &[6, 3, 1]), vec![12, 6, 2]);
    }

    #[test]
    fn apportion_reference_class_counts() {
        assert_eq!(apportion(234, &[6, 3, 1]), vec![141, 70, 23]);
        assert_eq!(apportion(1326, &[6, 3, 1]), vec![796, 398, 132]);
        assert_eq!(apportion(1199, &[6, 3, 1]), vec![720, 360, 119]);
    }

    #[test]
    fn apportion_sums_to_total() {
        for total in 0..200 {
            let shares = apportion(total, &[6, 3, 1]);
            assert_eq!(shares.iter().sum::<usize>(), total);
        }
    }

    #[test]
    fn split_ten_records_six_three_one() {
        let records = split_records(sources(StageLabel::Stage2, 10), SplitRatios::default(), 1).unwrap();
        assert_eq!(count_split(&records, StageLabel::Stage2), (6, 3, 1));
    }

    #[test]
    fn split_is_deterministic_for_a_seed() {
        let a = split_records(sources(StageLabel::Stage1, 50), SplitRatios::default(), 99).unwrap();
        let b = split_records(sources(StageLabel::Stage1, 50), SplitRatios::default(), 99).unwrap();
        assert_eq!(a, b);
        let c = split_records(sources(StageLabel::Stage1, 50), SplitRatios::default(), 100).unwrap();
        assert_ne!(a, c, "different seeds should shuffle differently");
    }

    #[test]
    fn split_rejects_empty_and_zero_ratios() {
        assert!(matches!(
            split_records(vec![], SplitRatios::default(), 0),
            Err(DatasetError::EmptyInput)
        ));
        let bad = SplitRatios {
            train: 6,
            test: 0,
            validation: 1,
        };
        assert!(matches!(
            split_records(sources(StageLabel::Stage1, 3), bad, 0),
            Err(DatasetError::BadRatios(..))
        ));
    }

    #[test]
    fn augment_multiplies_train_only() {
        let mut all = sources(StageLabel::Stage1, 234);
        all.extend(sources(StageLabel::Stage2, 20));
        let records = split_records(all, SplitRatios::default(), 7).unwrap();
        assert_eq!(count_split(&records, StageLabel::Stage1), (141, 70, 23));

        let augmented = augment_class(records, StageLabel::Stage1, NonZeroU32::new(5).unwrap(), 7);
        assert_eq!(count_split(&augmented, StageLabel::Stage1), (705, 70, 23));
        assert_eq!(count_split(&augmented, StageLabel::Stage2), (12, 6, 2));
    }

    #[test]
    fn augment_factor_one_is_identity() {
        let records = split_records(sources(StageLabel::Stage1, 20), SplitRatios::default(), 3).unwrap();
        let augmented = augment_class(records.clone(), StageLabel::Stage1, NonZeroU32::new(1).unwrap(), 3);
        assert_eq!(augmented, records);
    }

    #[test]
    fn augmented_records_keep_group_and_split() {
        let records = split_records(sources(StageLabel::Stage1, 30), SplitRatios::default(), 11).unwrap();
        let augmented = augment_class(records, StageLabel::Stage1, NonZeroU32::new(5).unwrap(), 11);

        let mut group_split: BTreeMap<&str, Split> = BTreeMap::new();
        for record in &augmented {
            let entry = group_split.entry(record.group_id.as_str()).or_insert(record.split);
            assert_eq!(*entry, record.split, "group {} leaks across splits", record.group_id);
            if record.is_augmented() {
                assert_ne!(record.id, record.group_id);
                let augmentation = record.augmentation.unwrap();
                assert!((1.0..=1.1).contains(&augmentation.zoom));
            }
        }
        let manifest = DatasetManifest::new(augmented, ManifestParams::default(), 11, "test".into());
        manifest.validate().unwrap();
    }

    #[test]
    fn manifest_validate_rejects_split_leak() {
        let mut records =
            split_records(sources(StageLabel::Stage1, 10), SplitRatios::default(), 5).unwrap();
        let mut leaked = records[0].clone();
        leaked.id = format!("{}-aug1", leaked.id);
        leaked.augmentation = Some(Augmentation {
            crop: EdgeCrop::NONE,
            zoom: 1.0,
        });
        leaked.split = if records[0].split == Split::Train {
            Split::Test
        } else {
            Split::Train
        };
        records.push(leaked);
        let manifest = DatasetManifest::new(records, ManifestParams::default(), 5, "test".into());
        assert!(matches!(
            manifest.validate(),
            Err(DatasetError::ManifestInvariant { .. })
        ));
    }

    #[test]
    fn manifest_json_round_trip() {
        let records = augment_class(
            split_records(sources(StageLabel::Stage3, 12), SplitRatios::default(), 21).unwrap(),
            StageLabel::Stage3,
            NonZeroU32::new(3).unwrap(),
            21,
        );
        let manifest = DatasetManifest::new(records, ManifestParams::default(), 21, "test".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        manifest.save_json(&path).unwrap();
        let loaded = DatasetManifest::load_json(&path).unwrap();
        assert_eq!(loaded, manifest);
    }

    #[test]
    fn fuse_channels_match_inputs() {
        let img = GrayImage::from_raw(4, 2, vec![0, 10, 20, 30, 40, 50, 60, 70]).unwrap();
        let square = AnnotatedPolygon::new(
            vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)],
            StageLabel::Stage1,
        )
        .unwrap();
        let mask = rasterize(&square, 4, 2).unwrap().mask;

        let sample = fuse(&img, &mask).unwrap();
        assert_eq!(sample.channel0, crate::enhance::standardize(&img).into_data());
        let expected: Vec<f32> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        assert_eq!(sample.channel1, expected);

        let empty = BinaryMask::new(4, 2).unwrap();
        assert!(fuse(&img, &empty).unwrap().channel1.iter().all(|&v| v == 0.0));
        let full = BinaryMask::from_bits(4, 2, vec![true; 8]).unwrap();
        assert!(fuse(&img, &full).unwrap().channel1.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fuse_rejects_dimension_mismatch() {
        let img = GrayImage::new(4, 4).unwrap();
        let mask = BinaryMask::new(4, 5).unwrap();
        assert!(matches!(
            fuse(&img, &mask),
            Err(DatasetError::FuseDimensionMismatch(..))
        ));
    }

    #[test]
    fn materialize_identity_augmentation_matches_original() {
        let dir = tempfile::tempdir().unwrap();
        let mut rgb = RgbImage::new(64, 48).unwrap();
        for y in 0..48 {
            for x in 0..64 {
                let v = ((x * 3 + y * 5) % 256) as u8;
                rgb.set_pixel(x, y, (v, v.wrapping_add(30), v.wrapping_add(60)));
            }
        }
        rgb.save_png(&dir.path().join("src.png")).unwrap();

        let original = SampleRecord {
            id: "src".into(),
            source_path: "src.png".into(),
            stage: StageLabel::Stage1,
            split: Split::Train,
            group_id: "src".into(),
            augmentation: None,
            polygons: vec![],
        };
        let mut identity = original.clone();
        identity.id = "src-aug1".into();
        identity.augmentation = Some(Augmentation {
            crop: EdgeCrop::NONE,
            zoom: 1.0,
        });

        let params = ClaheParams::default();
        let a = materialize(&original, &params, dir.path()).unwrap();
        let b = materialize(&identity, &params, dir.path()).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.width(), a.height()), (TARGET_EDGE, TARGET_EDGE));
    }

    #[test]
    fn materialize_matches_step_by_step_chain() {
        let dir = tempfile::tempdir().unwrap();
        let mut rgb = RgbImage::new(40, 40).unwrap();
        for y in 0..40 {
            for x in 0..40 {
                rgb.set_pixel(x, y, ((x as u8) * 6, (y as u8) * 6, 128));
            }
        }
        rgb.save_png(&dir.path().join("img.png")).unwrap();

        let crop = EdgeCrop::new(0.02, 0.03, 0.0, 0.05).unwrap();
        let record = SampleRecord {
            id: "img-aug1".into(),
            source_path: "img.png".into(),
            stage: StageLabel::Stage2,
            split: Split::Train,
            group_id: "img".into(),
            augmentation: Some(Augmentation { crop, zoom: 1.08 }),
            polygons: vec![],
        };
        let params = ClaheParams::new(4, 4, 2.0).unwrap();
        let out = materialize(&record, &params, dir.path()).unwrap();

        // The same chain, applied one operation at a time.
        let gray = to_grayscale(&RgbImage::load_png(&dir.path().join("img.png")).unwrap());
        let enhanced = clahe(&equalize(&gray), &params).unwrap();
        let zoomed = center_zoom(&crop_edges(&enhanced, crop).unwrap(), 1.08).unwrap();
        let expected = resize_bilinear(&zoomed, TARGET_EDGE, TARGET_EDGE).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn materialize_missing_source_names_record() {
        let dir = tempfile::tempdir().unwrap();
        let record = SampleRecord {
            id: "ghost".into(),
            source_path: "missing.png".into(),
            stage: StageLabel::Stage1,
            split: Split::Test,
            group_id: "ghost".into(),
            augmentation: None,
            polygons: vec![],
        };
        match materialize(&record, &ClaheParams::default(), dir.path()) {
            Err(DatasetError::RecordImage { id, .. }) => assert_eq!(id, "ghost"),
            other => panic!("expected RecordImage error, got {other:?}"),
        }
    }
}
