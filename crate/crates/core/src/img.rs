//! Pixel-raster types and the geometry operations of the preprocessing
//! pipeline: grayscale conversion, bilinear resize, edge cropping, and
//! center zoom.
//!
//! All quantization in this crate rounds half-up (`x -> floor(x + 0.5)`),
//! and bilinear resampling maps coordinates with half-pixel centers
//! (align-corners off). Both conventions are load-bearing for the golden
//! tests and must not change silently.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest fraction of an image edge that [`EdgeCrop`] may remove.
pub const MAX_EDGE_CROP_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ImgError {
    #[error("image dimensions {width}x{height} are invalid (both must be >= 1)")]
    InvalidDimensions { width: u32, height: u32 },

    #[error("pixel buffer holds {actual} bytes, expected {expected} for {width}x{height}")]
    BufferSize {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },

    #[error("crop fraction {value} outside [0, {MAX_EDGE_CROP_FRACTION}]")]
    CropFraction { value: f64 },

    #[error("crop removes every pixel along the {axis} axis")]
    EmptyCrop { axis: &'static str },

    #[error("zoom factor {0} must be a finite value >= 1.0")]
    ZoomFactor(f64),

    #[error("reading {path}: {source}")]
    PngRead {
        path: String,
        source: image::ImageError,
    },

    #[error("writing {path}: {source}")]
    PngWrite {
        path: String,
        source: image::ImageError,
    },

    #[error("{path}: unsupported PNG pixel format {format} (8-bit grayscale or 24-bit RGB required)")]
    UnsupportedPngFormat { path: String, format: String },
}

/// 24-bit RGB raster, row-major `R G B` triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    /// All-black image of the given dimensions.
    pub fn new(width: u32, height: u32) -> Result<Self, ImgError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        })
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImgError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImgError::BufferSize {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: (u8, u8, u8)) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i] = rgb.0;
        self.data[i + 1] = rgb.1;
        self.data[i + 2] = rgb.2;
    }

    /// Decodes a PNG file. Accepts 24-bit RGB directly and promotes 8-bit
    /// grayscale by channel replication; anything else is rejected.
    pub fn load_png(path: &Path) -> Result<Self, ImgError> {
        let decoded = image::open(path).map_err(|source| ImgError::PngRead {
            path: path.display().to_string(),
            source,
        })?;
        match decoded {
            image::DynamicImage::ImageRgb8(img) => {
                let (w, h) = img.dimensions();
                Self::from_raw(w, h, img.into_raw())
            }
            image::DynamicImage::ImageLuma8(img) => {
                let (w, h) = img.dimensions();
                let mut data = Vec::with_capacity(w as usize * h as usize * 3);
                for v in img.into_raw() {
                    data.extend_from_slice(&[v, v, v]);
                }
                Self::from_raw(w, h, data)
            }
            other => Err(ImgError::UnsupportedPngFormat {
                path: path.display().to_string(),
                format: format!("{:?}", other.color()),
            }),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImgError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|source| ImgError::PngWrite {
            path: path.display().to_string(),
            source,
        })
    }
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    /// All-black image of the given dimensions.
    pub fn new(width: u32, height: u32) -> Result<Self, ImgError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        })
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImgError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImgError::BufferSize {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn load_png(path: &Path) -> Result<Self, ImgError> {
        let decoded = image::open(path).map_err(|source| ImgError::PngRead {
            path: path.display().to_string(),
            source,
        })?;
        match decoded {
            image::DynamicImage::ImageLuma8(img) => {
                let (w, h) = img.dimensions();
                Self::from_raw(w, h, img.into_raw())
            }
            other => Err(ImgError::UnsupportedPngFormat {
                path: path.display().to_string(),
                format: format!("{:?}", other.color()),
            }),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImgError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|source| ImgError::PngWrite {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Per-edge crop fractions, each limited to [0, 0.05] of the corresponding
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCrop {
    top: f64,
    bottom: f64,
    left: f64,
    right: f64,
}

impl EdgeCrop {
    /// The identity crop.
    pub const NONE: EdgeCrop = EdgeCrop {
        top: 0.0,
        bottom: 0.0,
        left: 0.0,
        right: 0.0,
    };

    pub fn new(top: f64, bottom: f64, left: f64, right: f64) -> Result<Self, ImgError> {
        for value in [top, bottom, left, right] {
            if !(0.0..=MAX_EDGE_CROP_FRACTION).contains(&value) {
                return Err(ImgError::CropFraction { value });
            }
        }
        Ok(Self {
            top,
            bottom,
            left,
            right,
        })
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn bottom(&self) -> f64 {
        self.bottom
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::NONE
    }

    pub(crate) fn validate(&self) -> Result<(), ImgError> {
        Self::new(self.top, self.bottom, self.left, self.right).map(|_| ())
    }
}

/// Rounds half-up and clamps to the 8-bit range.
pub(crate) fn quantize(value: f64) -> u8 {
    (value + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Luma conversion with weights 0.3 / 0.59 / 0.11, rounded half-up.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let mut data = Vec::with_capacity(img.width as usize * img.height as usize);
    for pixel in img.data.chunks_exact(3) {
        let luma = 0.3 * pixel[0] as f64 + 0.59 * pixel[1] as f64 + 0.11 * pixel[2] as f64;
        data.push(quantize(luma));
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Bilinear resample to `out_w` x `out_h` with half-pixel-center source
/// mapping. Resizing to the input dimensions is the identity.
pub fn resize_bilinear(img: &GrayImage, out_w: u32, out_h: u32) -> Result<GrayImage, ImgError> {
    check_dims(out_w, out_h)?;
    let (w, h) = (img.width as i64, img.height as i64);
    let scale_x = img.width as f64 / out_w as f64;
    let scale_y = img.height as f64 / out_h as f64;

    let mut data = Vec::with_capacity(out_w as usize * out_h as usize);
    for oy in 0..out_h {
        let sy = (oy as f64 + 0.5) * scale_y - 0.5;
        let y0f = sy.floor();
        let ty = sy - y0f;
        let y0 = (y0f as i64).clamp(0, h - 1) as usize;
        let y1 = (y0f as i64 + 1).clamp(0, h - 1) as usize;
        for ox in 0..out_w {
            let sx = (ox as f64 + 0.5) * scale_x - 0.5;
            let x0f = sx.floor();
            let tx = sx - x0f;
            let x0 = (x0f as i64).clamp(0, w - 1) as usize;
            let x1 = (x0f as i64 + 1).clamp(0, w - 1) as usize;

            let stride = img.width as usize;
            let v00 = img.data[y0 * stride + x0] as f64;
            let v10 = img.data[y0 * stride + x1] as f64;
            let v01 = img.data[y1 * stride + x0] as f64;
            let v11 = img.data[y1 * stride + x1] as f64;
            let top = v00 * (1.0 - tx) + v10 * tx;
            let bottom = v01 * (1.0 - tx) + v11 * tx;
            data.push(quantize(top * (1.0 - ty) + bottom * ty));
        }
    }
    Ok(GrayImage {
        width: out_w,
        height: out_h,
        data,
    })
}

/// Removes `floor(fraction * dimension)` pixels from each edge; the
/// surviving region is copied bit-identically.
pub fn crop_edges(img: &GrayImage, crop: EdgeCrop) -> Result<GrayImage, ImgError> {
    crop.validate()?;
    let top = (crop.top * img.height as f64).floor() as u32;
    let bottom = (crop.bottom * img.height as f64).floor() as u32;
    let left = (crop.left * img.width as f64).floor() as u32;
    let right = (crop.right * img.width as f64).floor() as u32;

    if top + bottom >= img.height {
        return Err(ImgError::EmptyCrop { axis: "vertical" });
    }
    if left + right >= img.width {
        return Err(ImgError::EmptyCrop { axis: "horizontal" });
    }

    let new_w = img.width - left - right;
    let new_h = img.height - top - bottom;
    let mut data = Vec::with_capacity(new_w as usize * new_h as usize);
    for y in top..img.height - bottom {
        let row_start = y as usize * img.width as usize;
        data.extend_from_slice(
            &img.data[row_start + left as usize..row_start + (img.width - right) as usize],
        );
    }
    Ok(GrayImage {
        width: new_w,
        height: new_h,
        data,
    })
}

/// Crops the centered `(width/factor, height/factor)` region (floored,
/// at least one pixel) and resizes it back to the input dimensions.
pub fn center_zoom(img: &GrayImage, factor: f64) -> Result<GrayImage, ImgError> {
    if !factor.is_finite() || factor < 1.0 {
        return Err(ImgError::ZoomFactor(factor));
    }
    let crop_w = ((img.width as f64 / factor).floor() as u32).max(1);
    let crop_h = ((img.height as f64 / factor).floor() as u32).max(1);
    let x0 = (img.width - crop_w) / 2;
    let y0 = (img.height - crop_h) / 2;

    let mut data = Vec::with_capacity(crop_w as usize * crop_h as usize);
    for y in y0..y0 + crop_h {
        let row_start = y as usize * img.width as usize;
        data.extend_from_slice(&img.data[row_start + x0 as usize..row_start + (x0 + crop_w) as usize]);
    }
    let cropped = GrayImage {
        width: crop_w,
        height: crop_h,
        data,
    };
    resize_bilinear(&cropped, img.width, img.height)
}

fn check_dims(width: u32, height: u32) -> Result<(), ImgError> {
    if width == 0 || height == 0 {
        return Err(ImgError::InvalidDimensions { width, height });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(width: u32, height: u32, data: Vec<u8>) -> GrayImage {
        GrayImage::from_raw(width, height, data).unwrap()
    }

    #[test]
    fn grayscale_black_and_white() {
        let mut img = RgbImage::new(2, 1).unwrap();
        img.set_pixel(1, 0, (255, 255, 255));
        let g = to_grayscale(&img);
        assert_eq!(g.data(), &[0, 255]);
    }

    #[test]
    fn grayscale_fixed_point_on_equal_channels() {
        // Weights sum to 1.0, so R=G=B=v must map to v for every v.
        for v in 0..=255u8 {
            let img = RgbImage::from_raw(1, 1, vec![v, v, v]).unwrap();
            assert_eq!(to_grayscale(&img).get(0, 0), v);
        }
    }

    #[test]
    fn grayscale_rounds_half_up() {
        // 0.3*100 + 0.59*150 + 0.11*200 = 140.5
        let img = RgbImage::from_raw(1, 1, vec![100, 150, 200]).unwrap();
        assert_eq!(to_grayscale(&img).get(0, 0), 141);
    }

    #[test]
    fn resize_to_same_dims_is_identity() {
        let img = gray(3, 2, vec![10, 20, 30, 40, 50, 60]);
        let out = resize_bilinear(&img, 3, 2).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn resize_constant_image_stays_constant() {
        let img = gray(5, 4, vec![77; 20]);
        let out = resize_bilinear(&img, 13, 9).unwrap();
        assert!(out.data().iter().all(|&v| v == 77));
    }

    /// Straight-line half-pixel-center bilinear evaluation of one sample.
    fn reference_bilinear_1d(src: &[u8], out_len: usize, ox: usize) -> u8 {
        let scale = src.len() as f64 / out_len as f64;
        let sx = (ox as f64 + 0.5) * scale - 0.5;
        let x0f = sx.floor();
        let t = sx - x0f;
        let clamp = |i: i64| i.clamp(0, src.len() as i64 - 1) as usize;
        let a = src[clamp(x0f as i64)] as f64;
        let b = src[clamp(x0f as i64 + 1)] as f64;
        quantize(a * (1.0 - t) + b * t)
    }

    #[test]
    fn resize_2x1_to_4x1_matches_reference_oracle() {
        let img = gray(2, 1, vec![0, 255]);
        let out = resize_bilinear(&img, 4, 1).unwrap();
        let expected: Vec<u8> = (0..4).map(|ox| reference_bilinear_1d(&[0, 255], 4, ox)).collect();
        assert_eq!(out.data(), expected.as_slice());
        // Hand evaluation: centers land at source offsets -0.25, 0.25, 0.75, 1.25.
        assert_eq!(out.data(), &[0, 64, 191, 255]);
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let img = gray(2, 2, vec![0; 4]);
        assert!(resize_bilinear(&img, 0, 2).is_err());
        assert!(resize_bilinear(&img, 2, 0).is_err());
    }

    #[test]
    fn crop_zero_fractions_is_identity() {
        let img = gray(4, 3, (0..12).collect());
        let out = crop_edges(&img, EdgeCrop::NONE).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn crop_all_edges_five_percent() {
        let img = GrayImage::new(100, 100).unwrap();
        let crop = EdgeCrop::new(0.05, 0.05, 0.05, 0.05).unwrap();
        let out = crop_edges(&img, crop).unwrap();
        assert_eq!((out.width(), out.height()), (90, 90));
    }

    #[test]
    fn crop_top_only_keeps_remaining_rows() {
        let data: Vec<u8> = (0..10_000).map(|i| (i % 251) as u8).collect();
        let img = gray(100, 100, data.clone());
        let crop = EdgeCrop::new(0.03, 0.0, 0.0, 0.0).unwrap();
        let out = crop_edges(&img, crop).unwrap();
        assert_eq!((out.width(), out.height()), (100, 97));
        // Rows 3..99 of the source, bit-identical.
        assert_eq!(out.data(), &data[300..]);
    }

    #[test]
    fn crop_rejects_out_of_range_fraction() {
        assert!(EdgeCrop::new(0.06, 0.0, 0.0, 0.0).is_err());
        assert!(EdgeCrop::new(-0.01, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn center_zoom_factor_one_is_identity() {
        let img = gray(7, 5, (0..35).collect());
        let out = center_zoom(&img, 1.0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn center_zoom_constant_image() {
        let img = gray(20, 20, vec![123; 400]);
        let out = center_zoom(&img, 1.07).unwrap();
        assert!(out.data().iter().all(|&v| v == 123));
    }

    #[test]
    fn center_zoom_matches_crop_then_resize() {
        let data: Vec<u8> = (0..10_000).map(|i| (i * 7 % 256) as u8).collect();
        let img = gray(100, 100, data);
        let out = center_zoom(&img, 1.1).unwrap();

        // Reference: the centered 90x90 region resized back to 100x100.
        let mut region = Vec::new();
        for y in 5..95u32 {
            for x in 5..95u32 {
                region.push(img.get(x, y));
            }
        }
        let cropped = gray(90, 90, region);
        let expected = resize_bilinear(&cropped, 100, 100).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn center_zoom_rejects_small_factor() {
        let img = gray(2, 2, vec![0; 4]);
        assert!(center_zoom(&img, 0.99).is_err());
    }

    #[test]
    fn ops_preserve_value_range() {
        // u8 storage makes this structural, but keep one end-to-end check.
        let data: Vec<u8> = (0..64).map(|i| (i * 4) as u8).collect();
        let img = gray(8, 8, data);
        let out = center_zoom(&resize_bilinear(&img, 21, 13).unwrap(), 1.05).unwrap();
        assert_eq!((out.width(), out.height()), (21, 13));
    }
}
