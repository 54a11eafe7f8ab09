//! Contrast pipeline: 256-bin histograms, global histogram equalization,
//! CLAHE, and per-image standardization.
//!
//! Equalization uses the inclusive cumulative histogram with C_min
//! normalization: `v -> round(255 * (C(v) - C_min) / (N - C_min))` where
//! `C_min` is the smallest nonzero cumulative count. A constant image is a
//! fixed point (the degenerate `C_min = N` case maps every pixel to itself).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::img::{quantize, GrayImage};

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("CLAHE grid {tiles_x}x{tiles_y} is finer than the {width}x{height} image")]
    GridTooFine {
        tiles_x: u32,
        tiles_y: u32,
        width: u32,
        height: u32,
    },

    #[error("invalid CLAHE parameters: {reason}")]
    BadClaheParams { reason: String },
}

/// Per-intensity pixel counts; bin `i` counts pixels of intensity `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    bins: [u64; 256],
}

impl Histogram256 {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        Self { bins }
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn count(&self, intensity: u8) -> u64 {
        self.bins[intensity as usize]
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }
}

/// Tile grid and clip limit for [`clahe`]. The clip limit is a multiple of
/// the uniform bin level `tile_pixels / 256`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaheParams {
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub clip_limit: f64,
}

impl ClaheParams {
    pub fn new(tiles_x: u32, tiles_y: u32, clip_limit: f64) -> Result<Self, EnhanceError> {
        let params = Self {
            tiles_x,
            tiles_y,
            clip_limit,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), EnhanceError> {
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return Err(EnhanceError::BadClaheParams {
                reason: format!("tile grid {}x{} must be at least 1x1", self.tiles_x, self.tiles_y),
            });
        }
        if !self.clip_limit.is_finite() || self.clip_limit <= 0.0 {
            return Err(EnhanceError::BadClaheParams {
                reason: format!("clip limit {} must be a positive finite value", self.clip_limit),
            });
        }
        Ok(())
    }
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 2.0,
        }
    }
}

/// Real-valued raster produced by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl StandardizedImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

pub fn histogram(img: &GrayImage) -> Histogram256 {
    let mut bins = [0u64; 256];
    for &v in img.data() {
        bins[v as usize] += 1;
    }
    Histogram256 { bins }
}

/// Builds the equalization lookup for a histogram, or `None` when the
/// histogram is degenerate (all mass at or below the first occupied bin),
/// in which case the mapping is the identity.
pub fn equalization_lut(hist: &Histogram256) -> Option<[u8; 256]> {
    let mut cumulative = [0u64; 256];
    let mut running = 0u64;
    for (i, &count) in hist.bins.iter().enumerate() {
        running += count;
        cumulative[i] = running;
    }
    let total = running;
    let c_min = cumulative.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if c_min == total {
        return None;
    }
    let denom = (total - c_min) as f64;
    let mut lut = [0u8; 256];
    for (i, &c) in cumulative.iter().enumerate() {
        let shifted = c.saturating_sub(c_min) as f64;
        lut[i] = quantize(255.0 * shifted / denom);
    }
    Some(lut)
}

/// Global histogram equalization. Constant images are returned unchanged.
pub fn equalize(img: &GrayImage) -> GrayImage {
    match equalization_lut(&histogram(img)) {
        None => img.clone(),
        Some(lut) => {
            let data = img.data().iter().map(|&v| lut[v as usize]).collect();
            GrayImage::from_raw(img.width(), img.height(), data)
                .expect("mapped buffer keeps source dimensions")
        }
    }
}

/// Clips bins above `clip_limit * total / 256` (integer floor, at least 1)
/// and redistributes the clipped excess evenly across all 256 bins, with
/// the remainder handed out one count per bin from bin 0 upward. Total
/// mass is preserved exactly.
pub fn clipped_histogram(hist: &Histogram256, clip_limit: f64) -> Histogram256 {
    let total = hist.total();
    let limit = ((clip_limit * total as f64 / 256.0).floor() as u64).max(1);

    let mut bins = hist.bins;
    let mut excess = 0u64;
    for bin in bins.iter_mut() {
        if *bin > limit {
            excess += *bin - limit;
            *bin = limit;
        }
    }

    let per_bin = excess / 256;
    let remainder = (excess % 256) as usize;
    for (i, bin) in bins.iter_mut().enumerate() {
        *bin += per_bin;
        if i < remainder {
            *bin += 1;
        }
    }
    Histogram256 { bins }
}

/// Contrast-limited adaptive histogram equalization.
///
/// The image is partitioned into `tiles_x` x `tiles_y` tiles whose last
/// row/column absorbs any division remainder. Each tile gets a clipped,
/// redistributed histogram and an equalization lookup; every output pixel
/// bilinearly blends the lookups of its up-to-four nearest tile centers.
///
/// With a 1x1 grid and a clip limit high enough never to bind, the result
/// equals [`equalize`] pixel for pixel.
pub fn clahe(img: &GrayImage, params: &ClaheParams) -> Result<GrayImage, EnhanceError> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    if w < params.tiles_x || h < params.tiles_y {
        return Err(EnhanceError::GridTooFine {
            tiles_x: params.tiles_x,
            tiles_y: params.tiles_y,
            width: w,
            height: h,
        });
    }

    let spans_x = tile_spans(w, params.tiles_x);
    let spans_y = tile_spans(h, params.tiles_y);

    // Per-tile lookups; a degenerate tile keeps the identity mapping.
    let identity: [u8; 256] = std::array::from_fn(|i| i as u8);
    let mut luts = Vec::with_capacity(spans_x.len() * spans_y.len());
    for &(y0, y1) in &spans_y {
        for &(x0, x1) in &spans_x {
            let mut bins = [0u64; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    bins[img.get(x, y) as usize] += 1;
                }
            }
            let clipped = clipped_histogram(&Histogram256 { bins }, params.clip_limit);
            luts.push(equalization_lut(&clipped).unwrap_or(identity));
        }
    }

    let centers_x: Vec<f64> = spans_x.iter().map(|&(a, b)| a as f64 + (b - a - 1) as f64 / 2.0).collect();
    let centers_y: Vec<f64> = spans_y.iter().map(|&(a, b)| a as f64 + (b - a - 1) as f64 / 2.0).collect();
    let blend_x: Vec<(usize, usize, f64)> = (0..w).map(|x| blend_coords(x as f64, &centers_x)).collect();
    let blend_y: Vec<(usize, usize, f64)> = (0..h).map(|y| blend_coords(y as f64, &centers_y)).collect();

    let tiles_x = spans_x.len();
    let mut data = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        let (ty0, ty1, wy) = blend_y[y as usize];
        for x in 0..w {
            let (tx0, tx1, wx) = blend_x[x as usize];
            let p = img.get(x, y) as usize;
            let v00 = luts[ty0 * tiles_x + tx0][p] as f64;
            let v10 = luts[ty0 * tiles_x + tx1][p] as f64;
            let v01 = luts[ty1 * tiles_x + tx0][p] as f64;
            let v11 = luts[ty1 * tiles_x + tx1][p] as f64;
            let top = v00 * (1.0 - wx) + v10 * wx;
            let bottom = v01 * (1.0 - wx) + v11 * wx;
            data.push(quantize(top * (1.0 - wy) + bottom * wy));
        }
    }
    Ok(GrayImage::from_raw(w, h, data).expect("output keeps source dimensions"))
}

/// Tile boundaries along one axis; the last tile absorbs the remainder.
fn tile_spans(extent: u32, tiles: u32) -> Vec<(u32, u32)> {
    let base = extent / tiles;
    (0..tiles)
        .map(|i| {
            let start = i * base;
            let end = if i + 1 == tiles { extent } else { (i + 1) * base };
            (start, end)
        })
        .collect()
}

/// Bracketing tile indices and the blend weight toward the second one.
/// Coordinates outside the first/last center collapse to that tile.
fn blend_coords(pos: f64, centers: &[f64]) -> (usize, usize, f64) {
    if centers.len() == 1 || pos <= centers[0] {
        return (0, 0, 0.0);
    }
    let last = centers.len() - 1;
    if pos >= centers[last] {
        return (last, last, 0.0);
    }
    let hi = centers.partition_point(|&c| c <= pos);
    let lo = hi - 1;
    let weight = (pos - centers[lo]) / (centers[hi] - centers[lo]);
    (lo, hi, weight)
}

/// Subtracts the mean and divides by the population standard deviation.
/// A constant image (zero deviation) maps to all zeros.
pub fn standardize(img: &GrayImage) -> StandardizedImage {
    let n = img.data().len() as f64;
    let mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let variance = img
        .data()
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = variance.sqrt();

    let data = if std == 0.0 {
        vec![0.0f32; img.data().len()]
    } else {
        img.data()
            .iter()
            .map(|&v| ((v as f64 - mean) / std) as f32)
            .collect()
    };
    StandardizedImage {
        width: img.width(),
        height: img.height(),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(width: u32, height: u32, data: Vec<u8>) -> GrayImage {
        GrayImage::from_raw(width, height, data).unwrap()
    }

    #[test]
    fn histogram_constant_image() {
        let img = gray(2, 2, vec![7; 4]);
        let hist = histogram(&img);
        assert_eq!(hist.count(7), 4);
        assert_eq!(hist.total(), 4);
    }

    #[test]
    fn histogram_two_levels() {
        let img = gray(2, 2, vec![0, 0, 255, 255]);
        let hist = histogram(&img);
        assert_eq!(hist.count(0), 2);
        assert_eq!(hist.count(255), 2);
    }

    #[test]
    fn histogram_matches_brute_force_count() {
        let data: Vec<u8> = (0..256).map(|i| i as u8).collect();
        let img = gray(16, 16, data.clone());
        let hist = histogram(&img);
        for i in 0..=255u8 {
            let expected = data.iter().filter(|&&v| v == i).count() as u64;
            assert_eq!(hist.count(i), expected);
        }
    }

    #[test]
    fn equalize_constant_image_is_fixed_point() {
        let img = gray(3, 3, vec![42; 9]);
        assert_eq!(equalize(&img), img);
    }

    #[test]
    fn equalize_two_pixel_extremes() {
        // C(0)=1, C(255)=2, C_min=1, N=2: 0 -> 0, 255 -> 255.
        let img = gray(2, 1, vec![0, 255]);
        assert_eq!(equalize(&img).data(), &[0, 255]);
    }

    #[test]
    fn equalize_four_pixel_hand_evaluation() {
        // Cumulative: C(10)=2, C(20)=3, C(30)=4; C_min=2, N=4.
        // 10 -> round(255*0/2)=0, 20 -> round(255*1/2)=128, 30 -> 255.
        let img = gray(4, 1, vec![10, 10, 20, 30]);
        assert_eq!(equalize(&img).data(), &[0, 0, 128, 255]);
    }

    #[test]
    fn equalize_mapping_is_monotone() {
        let data: Vec<u8> = (0..400).map(|i| (i * 13 % 251) as u8).collect();
        let img = gray(20, 20, data);
        let lut = equalization_lut(&histogram(&img)).unwrap();
        for i in 1..256 {
            assert!(lut[i] >= lut[i - 1], "lut not monotone at {i}");
        }
    }

    #[test]
    fn clipped_histogram_preserves_mass() {
        let img = gray(16, 16, (0..256).map(|i| (i % 7 * 30) as u8).collect());
        let hist = histogram(&img);
        for clip in [0.5, 1.0, 2.0, 4.0, 100.0] {
            let clipped = clipped_histogram(&hist, clip);
            assert_eq!(clipped.total(), hist.total(), "mass lost at clip {clip}");
        }
    }

    #[test]
    fn clahe_1x1_nonbinding_clip_equals_equalize() {
        let data: Vec<u8> = (0..252).map(|i| (i * 31 % 200 + 20) as u8).collect();
        let img = gray(18, 14, data);
        let params = ClaheParams::new(1, 1, 256.0).unwrap();
        assert_eq!(clahe(&img, &params).unwrap(), equalize(&img));
    }

    #[test]
    fn clahe_constant_image_stays_constant() {
        // Evenly divided grid: all tiles share one histogram, so every
        // lookup agrees and blending equal values keeps the image flat.
        let img = gray(16, 16, vec![200; 256]);
        let params = ClaheParams::new(2, 2, 2.0).unwrap();
        let out = clahe(&img, &params).unwrap();
        let v = out.get(0, 0);
        assert!(out.data().iter().all(|&p| p == v));

        // Uneven tiles with a clip limit that never binds: identity lookups.
        let img = gray(17, 19, vec![61; 17 * 19]);
        let params = ClaheParams::new(2, 2, 300.0).unwrap();
        let out = clahe(&img, &params).unwrap();
        assert!(out.data().iter().all(|&p| p == 61));
    }

    #[test]
    fn clahe_rejects_grid_finer_than_image() {
        let img = gray(4, 4, vec![0; 16]);
        let params = ClaheParams::new(5, 1, 2.0).unwrap();
        assert!(matches!(
            clahe(&img, &params),
            Err(EnhanceError::GridTooFine { .. })
        ));
    }

    /// Independent straight-line CLAHE on the same rules, kept free of the
    /// production helpers on purpose.
    fn reference_clahe_2x2(img: &GrayImage, clip_limit: f64) -> Vec<u8> {
        let (w, h) = (img.width(), img.height());
        let (tw, th) = (w / 2, h / 2);
        let bounds = [
            (0, tw, 0, th),
            (tw, w, 0, th),
            (0, tw, th, h),
            (tw, w, th, h),
        ];

        let mut luts = Vec::new();
        for &(x0, x1, y0, y1) in &bounds {
            let mut hist = vec![0u64; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[img.get(x, y) as usize] += 1;
                }
            }
            let total: u64 = hist.iter().sum();
            let limit = ((clip_limit * total as f64 / 256.0).floor() as u64).max(1);
            let mut excess = 0u64;
            for bin in hist.iter_mut() {
                if *bin > limit {
                    excess += *bin - limit;
                    *bin = limit;
                }
            }
            for (i, bin) in hist.iter_mut().enumerate() {
                *bin += excess / 256;
                if (i as u64) < excess % 256 {
                    *bin += 1;
                }
            }
            let mut cumulative = 0u64;
            let mut cdf = vec![0u64; 256];
            for i in 0..256 {
                cumulative += hist[i];
                cdf[i] = cumulative;
            }
            let c_min = cdf.iter().copied().find(|&c| c > 0).unwrap();
            let mut lut = vec![0u8; 256];
            if c_min == total {
                for (i, slot) in lut.iter_mut().enumerate() {
                    *slot = i as u8;
                }
            } else {
                for i in 0..256 {
                    let num = 255.0 * cdf[i].saturating_sub(c_min) as f64;
                    lut[i] = ((num / (total - c_min) as f64) + 0.5).floor().clamp(0.0, 255.0) as u8;
                }
            }
            luts.push(lut);
        }

        let cx = [(tw - 1) as f64 / 2.0, tw as f64 + (w - tw - 1) as f64 / 2.0];
        let cy = [(th - 1) as f64 / 2.0, th as f64 + (h - th - 1) as f64 / 2.0];
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64, y as f64);
                let (tx0, tx1, wx) = if px <= cx[0] {
                    (0, 0, 0.0)
                } else if px >= cx[1] {
                    (1, 1, 0.0)
                } else {
                    (0, 1, (px - cx[0]) / (cx[1] - cx[0]))
                };
                let (ty0, ty1, wy) = if py <= cy[0] {
                    (0, 0, 0.0)
                } else if py >= cy[1] {
                    (1, 1, 0.0)
                } else {
                    (0, 1, (py - cy[0]) / (cy[1] - cy[0]))
                };
                let p = img.get(x, y) as usize;
                let v00 = luts[ty0 * 2 + tx0][p] as f64;
                let v10 = luts[ty0 * 2 + tx1][p] as f64;
                let v01 = luts[ty1 * 2 + tx0][p] as f64;
                let v11 = luts[ty1 * 2 + tx1][p] as f64;
                let blended = (v00 * (1.0 - wx) + v10 * wx) * (1.0 - wy)
                    + (v01 * (1.0 - wx) + v11 * wx) * wy;
                out.push((blended + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    #[test]
    fn clahe_matches_reference_oracle() {
        let data: Vec<u8> = (0..256).map(|i| (i * 37 % 149 + (i / 16) * 5) as u8).collect();
        let img = gray(16, 16, data);
        let params = ClaheParams::new(2, 2, 2.0).unwrap();
        let out = clahe(&img, &params).unwrap();
        assert_eq!(out.data(), reference_clahe_2x2(&img, 2.0).as_slice());
    }

    #[test]
    fn standardize_constant_image_is_zero() {
        let img = gray(3, 2, vec![99; 6]);
        let out = standardize(&img);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardize_two_pixels() {
        let img = gray(2, 1, vec![0, 2]);
        assert_eq!(standardize(&img).data(), &[-1.0, 1.0]);
    }

    #[test]
    fn standardize_four_pixel_hand_evaluation() {
        // mean 15, population std sqrt(125).
        let img = gray(4, 1, vec![0, 10, 20, 30]);
        let std = 125.0f64.sqrt();
        let expected: Vec<f32> = [0.0, 10.0, 20.0, 30.0]
            .iter()
            .map(|&v| ((v - 15.0) / std) as f32)
            .collect();
        assert_eq!(standardize(&img).data(), expected.as_slice());
    }

    #[test]
    fn standardize_hits_unit_moments() {
        let data: Vec<u8> = (0..500).map(|i| (i * 7 % 256) as u8).collect();
        let img = gray(25, 20, data);
        let out = standardize(&img);
        let n = out.data().len() as f64;
        let mean: f64 = out.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = out.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }
}
