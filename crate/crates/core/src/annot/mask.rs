//! Binary masks, scanline polygon rasterization, and run-length coding.
//!
//! Rasterization samples pixel centers `(x + 0.5, y + 0.5)` under the
//! even-odd rule with a half-open tie-break: a center exactly on a left or
//! top boundary is inside, on a right or bottom boundary outside. The
//! scanline fill is exactly equivalent to testing every pixel center
//! independently, which is what the test oracle does.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AnnotatedPolygon;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask dimensions {0}x{1} are invalid (both must be >= 1)")]
    InvalidDimensions(u32, u32),

    #[error("mask buffer holds {actual} bits, expected {expected}")]
    BufferSize { expected: usize, actual: usize },

    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),

    #[error("RLE runs sum to {actual}, expected {expected} for {width}x{height}")]
    RunSum {
        width: u32,
        height: u32,
        expected: u64,
        actual: u64,
    },

    #[error("RLE contains a zero-length run past the leading position")]
    ZeroRun,
}

/// Row-major boolean raster aligned to an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-false mask.
    pub fn new(width: u32, height: u32) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidDimensions(width, height));
        }
        Ok(Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        })
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidDimensions(width, height));
        }
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(MaskError::BufferSize {
                expected,
                actual: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Pixelwise OR.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask, MaskError> {
        if !self.same_dims(other) {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }
}

/// Run-length coded mask: alternating run lengths starting with the count
/// of unset pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<u64>,
}

impl RleMask {
    pub fn encode(mask: &BinaryMask) -> RleMask {
        let mut runs = Vec::new();
        let mut current = false;
        let mut count = 0u64;
        for &bit in &mask.bits {
            if bit == current {
                count += 1;
            } else {
                runs.push(count);
                current = bit;
                count = 1;
            }
        }
        runs.push(count);
        RleMask {
            width: mask.width,
            height: mask.height,
            runs,
        }
    }

    pub fn decode(&self) -> Result<BinaryMask, MaskError> {
        if self.width == 0 || self.height == 0 {
            return Err(MaskError::InvalidDimensions(self.width, self.height));
        }
        let expected = self.width as u64 * self.height as u64;
        let actual: u64 = self.runs.iter().sum();
        if actual != expected {
            return Err(MaskError::RunSum {
                width: self.width,
                height: self.height,
                expected,
                actual,
            });
        }
        if self.runs.iter().skip(1).any(|&r| r == 0) {
            return Err(MaskError::ZeroRun);
        }
        let mut bits = Vec::with_capacity(expected as usize);
        let mut value = false;
        for &run in &self.runs {
            for _ in 0..run {
                bits.push(value);
            }
            value = !value;
        }
        BinaryMask::from_bits(self.width, self.height, bits)
    }
}

/// Rasterization result with its warning flags.
#[derive(Debug, Clone)]
pub struct Rasterized {
    pub mask: BinaryMask,
    /// The polygon covered no pixel center after clamping.
    pub degenerate: bool,
    /// One or more vertices fell outside the raster and were clamped.
    pub clamped: bool,
}

/// Scanline even-odd fill of the polygon at the given raster size.
/// Out-of-bounds vertices are clamped to the raster rectangle.
pub fn rasterize(poly: &AnnotatedPolygon, width: u32, height: u32) -> Result<Rasterized, MaskError> {
    let mut mask = BinaryMask::new(width, height)?;
    let mut clamped = false;
    let vertices: Vec<(f64, f64)> = poly
        .vertices()
        .iter()
        .map(|&(x, y)| {
            let cx = x.clamp(0.0, width as f64);
            let cy = y.clamp(0.0, height as f64);
            if cx != x || cy != y {
                clamped = true;
            }
            (cx, cy)
        })
        .collect();

    let n = vertices.len();
    let mut crossings: Vec<f64> = Vec::with_capacity(n);
    for y in 0..height {
        let py = y as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (ax, ay) = vertices[i];
            let (bx, by) = vertices[(i + 1) % n];
            if ay == by {
                continue;
            }
            let (ylo, yhi) = if ay < by { (ay, by) } else { (by, ay) };
            if ylo <= py && py < yhi {
                let t = (py - ay) / (by - ay);
                crossings.push(ax + t * (bx - ax));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
        for pair in crossings.chunks_exact(2) {
            // Pixel center x+0.5 lies in [c0, c1) iff x in [ceil(c0-0.5), ceil(c1-0.5)).
            let start = ((pair[0] - 0.5).ceil() as i64).max(0);
            let end = ((pair[1] - 0.5).ceil() as i64).min(width as i64);
            for x in start..end {
                mask.set(x as u32, y, true);
            }
        }
    }

    let degenerate = mask.area() == 0;
    Ok(Rasterized {
        mask,
        degenerate,
        clamped,
    })
}
