//! Pipeline configuration: a TOML file plus flag overrides, hashed for
//! provenance and echoed into every run summary.

use std::fs;
use std::num::NonZeroU32;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ropstage::annot::StageLabel;
use ropstage::dataset::SplitRatios;
use ropstage::detect::{BackendConfig, BackendKind, DEFAULT_CONFIDENCE_THRESHOLD};
use ropstage::enhance::ClaheParams;
use ropstage::metrics::DEFAULT_IOU_THRESHOLD;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub images_dir: PathBuf,
    pub via_json: PathBuf,
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub stage_attribute: String,
    pub clahe: ClaheSection,
    pub split: SplitSection,
    pub augment: AugmentSection,
    pub backend: BackendSection,
    pub evaluate: EvaluateSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            images_dir: PathBuf::from("fixtures/images"),
            via_json: PathBuf::from("fixtures/annotations.json"),
            manifest: PathBuf::from("out/manifest.json"),
            output_dir: PathBuf::from("out"),
            stage_attribute: ropstage::annot::DEFAULT_STAGE_ATTRIBUTE.to_owned(),
            clahe: ClaheSection::default(),
            split: SplitSection::default(),
            augment: AugmentSection::default(),
            backend: BackendSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheSection {
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub clip_limit: f64,
}

impl Default for ClaheSection {
    fn default() -> Self {
        let params = ClaheParams::default();
        Self {
            tiles_x: params.tiles_x,
            tiles_y: params.tiles_y,
            clip_limit: params.clip_limit,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: u32,
    pub test: u32,
    pub validation: u32,
}

impl Default for SplitSection {
    fn default() -> Self {
        let ratios = SplitRatios::default();
        Self {
            train: ratios.train,
            test: ratios.test,
            validation: ratios.validation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub stage: StageLabel,
    pub factor: u32,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            stage: StageLabel::Stage1,
            factor: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub confidence_threshold: f64,
    pub file_dir: Option<PathBuf>,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Oracle,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            file_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Stage,
    Detection,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// Monotone precision-envelope integration.
    Envelope,
    /// Raw trapezoidal integration, for sensitivity checks.
    Trapezoid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub mode: EvalMode,
    pub iou_threshold: f64,
    pub ap_method: ApMethod,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            mode: EvalMode::Both,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            ap_method: ApMethod::Envelope,
        }
    }
}

impl PipelineConfig {
    /// Loads the TOML file when given, otherwise starts from defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
            }
        }
    }

    /// Semantic validation beyond what parsing can catch.
    pub fn validate(&self) -> Result<()> {
        self.clahe_params()?;
        if self.split.train == 0 || self.split.test == 0 || self.split.validation == 0 {
            bail!(
                "split ratios must all be positive, got {}:{}:{}",
                self.split.train,
                self.split.test,
                self.split.validation
            );
        }
        if self.augment.factor == 0 {
            bail!("augment.factor must be at least 1");
        }
        if self.augment.stage == StageLabel::RopFree {
            bail!("augment.stage cannot be rop_free");
        }
        if !(0.0..=1.0).contains(&self.backend.confidence_threshold) {
            bail!(
                "backend.confidence_threshold {} outside [0, 1]",
                self.backend.confidence_threshold
            );
        }
        if self.backend.kind == BackendKind::File && self.backend.file_dir.is_none() {
            bail!("backend.kind = \"file\" requires backend.file_dir");
        }
        if !(0.0..=1.0).contains(&self.evaluate.iou_threshold) {
            bail!(
                "evaluate.iou_threshold {} outside [0, 1]",
                self.evaluate.iou_threshold
            );
        }
        Ok(())
    }

    pub fn clahe_params(&self) -> Result<ClaheParams> {
        ClaheParams::new(self.clahe.tiles_x, self.clahe.tiles_y, self.clahe.clip_limit)
            .map_err(|e| anyhow::anyhow!(e))
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.split.train,
            test: self.split.test,
            validation: self.split.validation,
        }
    }

    pub fn augment_factor(&self) -> NonZeroU32 {
        NonZeroU32::new(self.augment.factor).expect("validated to be nonzero")
    }

    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            kind: self.backend.kind,
            confidence_threshold: self.backend.confidence_threshold,
            file_dir: self.backend.file_dir.clone(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the effective config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass_validation() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let config = PipelineConfig::default();
        assert_eq!(config.hash(), config.hash());
        let mut changed = config.clone();
        changed.seed = 1;
        assert_ne!(config.hash(), changed.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<PipelineConfig>("sede = 4").unwrap_err();
        assert!(err.to_string().contains("sede"));
    }

    #[test]
    fn file_backend_requires_dir() {
        let mut config = PipelineConfig::default();
        config.backend.kind = BackendKind::File;
        assert!(config.validate().is_err());
        config.backend.file_dir = Some(PathBuf::from("preds"));
        config.validate().unwrap();
    }
}
