//! Annotation handling: stage labels, stage-labeled polygons, binary
//! masks with RLE persistence, and the VGG Image Annotator JSON parser.

mod mask;
mod via;

pub use mask::{rasterize, BinaryMask, MaskError, Rasterized, RleMask};
pub use via::{parse_via, ViaError, ViaImage, DEFAULT_STAGE_ATTRIBUTE};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Disease stage. `RopFree` is prediction-only: it marks the fallback when
/// no demarcation line is detected and never appears as ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLabel {
    Stage1,
    Stage2,
    Stage3,
    RopFree,
}

impl StageLabel {
    /// The stages that occur as ground-truth annotations.
    pub const GROUND_TRUTH: [StageLabel; 3] = [StageLabel::Stage1, StageLabel::Stage2, StageLabel::Stage3];

    pub fn as_str(&self) -> &'static str {
        match self {
            StageLabel::Stage1 => "stage1",
            StageLabel::Stage2 => "stage2",
            StageLabel::Stage3 => "stage3",
            StageLabel::RopFree => "rop_free",
        }
    }

    /// Numeric stage, `None` for `RopFree`.
    pub fn stage_number(&self) -> Option<u8> {
        match self {
            StageLabel::Stage1 => Some(1),
            StageLabel::Stage2 => Some(2),
            StageLabel::Stage3 => Some(3),
            StageLabel::RopFree => None,
        }
    }

    pub fn from_stage_number(n: u8) -> Option<StageLabel> {
        match n {
            1 => Some(StageLabel::Stage1),
            2 => Some(StageLabel::Stage2),
            3 => Some(StageLabel::Stage3),
            _ => None,
        }
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PolygonError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),

    #[error("polygon vertex ({x}, {y}) is not finite")]
    NonFiniteVertex { x: f64, y: f64 },

    #[error("ground-truth polygon cannot carry the rop_free label")]
    RopFreeLabel,
}

/// A stage-labeled bounding polygon in source-image pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPolygon {
    vertices: Vec<(f64, f64)>,
    stage: StageLabel,
}

impl AnnotatedPolygon {
    pub fn new(vertices: Vec<(f64, f64)>, stage: StageLabel) -> Result<Self, PolygonError> {
        if vertices.len() < 3 {
            return Err(PolygonError::TooFewVertices(vertices.len()));
        }
        for &(x, y) in &vertices {
            if !x.is_finite() || !y.is_finite() {
                return Err(PolygonError::NonFiniteVertex { x, y });
            }
        }
        if stage == StageLabel::RopFree {
            return Err(PolygonError::RopFreeLabel);
        }
        Ok(Self { vertices, stage })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn stage(&self) -> StageLabel {
        self.stage
    }

    pub(crate) fn validate(&self) -> Result<(), PolygonError> {
        Self::new(self.vertices.clone(), self.stage).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_label_round_trips_numbers() {
        for stage in StageLabel::GROUND_TRUTH {
            let n = stage.stage_number().unwrap();
            assert_eq!(StageLabel::from_stage_number(n), Some(stage));
        }
        assert_eq!(StageLabel::RopFree.stage_number(), None);
        assert_eq!(StageLabel::from_stage_number(4), None);
    }

    #[test]
    fn polygon_rejects_too_few_vertices() {
        let err = AnnotatedPolygon::new(vec![(0.0, 0.0), (1.0, 1.0)], StageLabel::Stage1);
        assert!(matches!(err, Err(PolygonError::TooFewVertices(2))));
    }

    #[test]
    fn polygon_rejects_rop_free() {
        let verts = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(matches!(
            AnnotatedPolygon::new(verts, StageLabel::RopFree),
            Err(PolygonError::RopFreeLabel)
        ));
    }

    #[test]
    fn polygon_rejects_nan_vertex() {
        let verts = vec![(0.0, 0.0), (f64::NAN, 0.0), (0.0, 1.0)];
        assert!(AnnotatedPolygon::new(verts, StageLabel::Stage1).is_err());
    }
}
