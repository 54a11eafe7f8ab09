//! Parser for VGG Image Annotator (VIA) JSON exports.
//!
//! Accepts both the plain export (an object keyed by `filename + filesize`)
//! and full project files (the image map under `_via_img_metadata`). Only
//! polygon regions are supported; each region must carry a stage attribute
//! whose value is one of `"1"`, `"2"`, `"3"` (numeric forms are accepted).

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

use super::{AnnotatedPolygon, StageLabel};

/// Default name of the region attribute that carries the stage.
pub const DEFAULT_STAGE_ATTRIBUTE: &str = "stage";

#[derive(Debug, Error)]
pub enum ViaError {
    #[error("malformed JSON at byte {offset} (line {line}, column {column}): {message}")]
    Json {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("top-level VIA value must be an object")]
    NotAnObject,

    #[error("image {image:?}: entry is not an object")]
    BadImageEntry { image: String },

    #[error("image {image:?}: regions must be an array")]
    BadRegions { image: String },

    #[error("image {image:?} region {region}: unsupported shape {shape:?} (only polygon)")]
    UnknownShape {
        image: String,
        region: usize,
        shape: String,
    },

    #[error("image {image:?} region {region}: missing attribute {attribute:?}")]
    MissingStage {
        image: String,
        region: usize,
        attribute: String,
    },

    #[error("image {image:?} region {region}: stage value {value:?} is not one of 1, 2, 3")]
    BadStage {
        image: String,
        region: usize,
        value: String,
    },

    #[error("image {image:?} region {region}: {reason}")]
    BadPolygon {
        image: String,
        region: usize,
        reason: String,
    },
}

/// One annotated image: its filename and parsed polygons. Images present in
/// the document with zero regions parse to an empty polygon list.
#[derive(Debug, Clone, PartialEq)]
pub struct ViaImage {
    pub filename: String,
    pub polygons: Vec<AnnotatedPolygon>,
}

/// Parses a VIA export. Entries are returned sorted by filename; multiple
/// map entries for the same filename are merged in document order.
pub fn parse_via(json_text: &str, stage_attribute: &str) -> Result<Vec<ViaImage>, ViaError> {
    let root: Value = serde_json::from_str(json_text).map_err(|e| ViaError::Json {
        offset: byte_offset(json_text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let top = root.as_object().ok_or(ViaError::NotAnObject)?;
    let image_map = match top.get("_via_img_metadata") {
        Some(meta) => meta.as_object().ok_or(ViaError::NotAnObject)?,
        None => top,
    };

    let mut images: BTreeMap<String, Vec<AnnotatedPolygon>> = BTreeMap::new();
    for (key, entry) in image_map {
        if key.starts_with("_via_") {
            continue;
        }
        let obj = entry.as_object().ok_or_else(|| ViaError::BadImageEntry {
            image: key.clone(),
        })?;
        let filename = obj
            .get("filename")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .unwrap_or_else(|| key.clone());

        let polygons = images.entry(filename.clone()).or_default();
        let Some(regions_value) = obj.get("regions") else {
            continue;
        };
        let regions = regions_value
            .as_array()
            .ok_or_else(|| ViaError::BadRegions {
                image: filename.clone(),
            })?;
        for (index, region) in regions.iter().enumerate() {
            polygons.push(parse_region(&filename, index, region, stage_attribute)?);
        }
    }

    Ok(images
        .into_iter()
        .map(|(filename, polygons)| ViaImage {
            filename,
            polygons,
        })
        .collect())
}

fn parse_region(
    image: &str,
    region: usize,
    value: &Value,
    stage_attribute: &str,
) -> Result<AnnotatedPolygon, ViaError> {
    let bad = |reason: &str| ViaError::BadPolygon {
        image: image.to_owned(),
        region,
        reason: reason.to_owned(),
    };

    let shape = value
        .get("shape_attributes")
        .and_then(Value::as_object)
        .ok_or_else(|| bad("missing shape_attributes object"))?;
    let shape_name = shape.get("name").and_then(Value::as_str).unwrap_or("");
    if shape_name != "polygon" {
        return Err(ViaError::UnknownShape {
            image: image.to_owned(),
            region,
            shape: shape_name.to_owned(),
        });
    }

    let xs = coord_array(shape.get("all_points_x")).ok_or_else(|| bad("missing all_points_x"))?;
    let ys = coord_array(shape.get("all_points_y")).ok_or_else(|| bad("missing all_points_y"))?;
    if xs.len() != ys.len() {
        return Err(bad(&format!(
            "all_points_x has {} entries but all_points_y has {}",
            xs.len(),
            ys.len()
        )));
    }

    let stage_value = value
        .get("region_attributes")
        .and_then(Value::as_object)
        .and_then(|attrs| attrs.get(stage_attribute))
        .ok_or_else(|| ViaError::MissingStage {
            image: image.to_owned(),
            region,
            attribute: stage_attribute.to_owned(),
        })?;
    let stage = parse_stage(stage_value).ok_or_else(|| ViaError::BadStage {
        image: image.to_owned(),
        region,
        value: stage_value.to_string(),
    })?;

    let vertices: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
    AnnotatedPolygon::new(vertices, stage).map_err(|e| bad(&e.to_string()))
}

fn coord_array(value: Option<&Value>) -> Option<Vec<f64>> {
    value?
        .as_array()?
        .iter()
        .map(Value::as_f64)
        .collect::<Option<Vec<f64>>>()
}

fn parse_stage(value: &Value) -> Option<StageLabel> {
    let number = match value {
        Value::String(s) => s.trim().parse::<u8>().ok()?,
        Value::Number(n) => u8::try_from(n.as_u64()?).ok()?,
        _ => return None,
    };
    StageLabel::from_stage_number(number)
}

/// Byte offset of a 1-based (line, column) position reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut remaining_lines = line.saturating_sub(1);
    let mut offset = 0;
    for (i, b) in text.bytes().enumerate() {
        if remaining_lines == 0 {
            break;
        }
        if b == b'\n' {
            remaining_lines -= 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}
