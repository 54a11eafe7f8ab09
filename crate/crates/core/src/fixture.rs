//! Synthetic fixture generator: tiny retina-like images with a painted
//! demarcation band and a matching VIA annotation export, so the whole
//! pipeline can run end to end without any clinical data.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::annot::{rasterize, AnnotatedPolygon, StageLabel};
use crate::img::{ImgError, RgbImage};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Img(#[from] ImgError),

    #[error(transparent)]
    Mask(#[from] crate::annot::MaskError),
}

/// Size and seed of the generated set.
#[derive(Debug, Clone, Copy)]
pub struct FixtureSpec {
    pub images_per_stage: u32,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            images_per_stage: 10,
            width: 96,
            height: 96,
            seed: 0,
        }
    }
}

/// Where the generated files landed.
#[derive(Debug, Clone)]
pub struct GeneratedFixtures {
    pub images_dir: PathBuf,
    pub via_json: PathBuf,
    pub image_count: usize,
}

/// Writes `images/<stageN_idx>.png` files and a matching `annotations.json`
/// VIA export under `root`. Deterministic for a fixed spec.
pub fn generate_fixtures(root: &Path, spec: &FixtureSpec) -> Result<GeneratedFixtures, FixtureError> {
    let images_dir = root.join("images");
    fs::create_dir_all(&images_dir).map_err(|source| FixtureError::Io {
        path: images_dir.display().to_string(),
        source,
    })?;

    let mut image_map = Map::new();
    let mut image_count = 0usize;
    for (stage_index, stage) in StageLabel::GROUND_TRUTH.iter().enumerate() {
        for index in 0..spec.images_per_stage {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((stage_index as u64) << 32 | index as u64);

            let filename = format!("{}_{index:03}.png", stage.as_str());
            let polygon = band_polygon(&mut rng, spec, *stage);
            let image = paint(&mut rng, spec, &polygon)?;
            let path = images_dir.join(&filename);
            image.save_png(&path)?;
            let size = fs::metadata(&path)
                .map_err(|source| FixtureError::Io {
                    path: path.display().to_string(),
                    source,
                })?
                .len();

            let xs: Vec<f64> = polygon.vertices().iter().map(|v| v.0).collect();
            let ys: Vec<f64> = polygon.vertices().iter().map(|v| v.1).collect();
            image_map.insert(
                format!("{filename}{size}"),
                json!({
                    "filename": filename,
                    "size": size,
                    "regions": [{
                        "shape_attributes": {
                            "name": "polygon",
                            "all_points_x": xs,
                            "all_points_y": ys,
                        },
                        "region_attributes": {
                            "stage": stage.stage_number().expect("ground-truth stage").to_string(),
                        },
                    }],
                    "file_attributes": {},
                }),
            );
            image_count += 1;
        }
    }

    let via_json = root.join("annotations.json");
    let text = serde_json::to_string_pretty(&Value::Object(image_map)).expect("fixture map serializes");
    fs::write(&via_json, text + "\n").map_err(|source| FixtureError::Io {
        path: via_json.display().to_string(),
        source,
    })?;

    Ok(GeneratedFixtures {
        images_dir,
        via_json,
        image_count,
    })
}

/// A slanted band across the frame; thicker bands for later stages.
fn band_polygon(rng: &mut ChaCha8Rng, spec: &FixtureSpec, stage: StageLabel) -> AnnotatedPolygon {
    let w = spec.width as f64;
    let h = spec.height as f64;
    let thickness = match stage {
        StageLabel::Stage1 => rng.random_range(0.03..0.06),
        StageLabel::Stage2 => rng.random_range(0.08..0.12),
        _ => rng.random_range(0.14..0.2),
    } * h;
    let y_left = rng.random_range(0.25 * h..0.75 * h);
    let y_right = (y_left + rng.random_range(-0.2 * h..0.2 * h)).clamp(0.15 * h, 0.85 * h);
    let x0 = rng.random_range(0.02 * w..0.1 * w);
    let x1 = rng.random_range(0.9 * w..0.98 * w);

    let round1 = |v: f64| (v * 10.0).round() / 10.0;
    AnnotatedPolygon::new(
        vec![
            (round1(x0), round1(y_left - thickness / 2.0)),
            (round1(x1), round1(y_right - thickness / 2.0)),
            (round1(x1), round1(y_right + thickness / 2.0)),
            (round1(x0), round1(y_left + thickness / 2.0)),
        ],
        stage,
    )
    .expect("band quadrilateral is a valid polygon")
}

/// Dark noisy fundus-ish background with a bright band inside the polygon.
fn paint(
    rng: &mut ChaCha8Rng,
    spec: &FixtureSpec,
    polygon: &AnnotatedPolygon,
) -> Result<RgbImage, FixtureError> {
    let band = rasterize(polygon, spec.width, spec.height)?.mask;
    let mut image = RgbImage::new(spec.width, spec.height)?;
    for y in 0..spec.height {
        for x in 0..spec.width {
            let vignette = {
                let dx = x as f64 / spec.width as f64 - 0.5;
                let dy = y as f64 / spec.height as f64 - 0.5;
                (1.0 - (dx * dx + dy * dy).sqrt()).max(0.2)
            };
            let pixel = if band.get(x, y) {
                let v = 170.0 + rng.random_range(0.0..50.0);
                ((v * vignette) as u8, (v * 0.85 * vignette) as u8, (v * 0.8 * vignette) as u8)
            } else {
                let v = 50.0 + rng.random_range(0.0..35.0);
                ((v * 1.6 * vignette) as u8, (v * vignette) as u8, (v * 0.7 * vignette) as u8)
            };
            image.set_pixel(x, y, pixel);
        }
    }
    Ok(image)
}
