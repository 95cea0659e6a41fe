//! Depth rasters.
//!
//! A [`DepthFrame`] is a row-major grid of depths in millimeters. A sample of
//! `0.0` means "no data": masked background or a missing sensor return. Every
//! operation downstream treats zeros that way.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    samples: Vec<f64>,
    mm_per_pixel: f64,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, samples: Vec<f64>, mm_per_pixel: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension { width, height });
        }
        if samples.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "{} samples for a {width}x{height} frame",
                samples.len()
            )));
        }
        if !(mm_per_pixel.is_finite() && mm_per_pixel > 0.0) {
            return Err(Error::InvalidFrame(format!(
                "mm_per_pixel must be positive, got {mm_per_pixel}"
            )));
        }
        if let Some((i, v)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidFrame(format!("sample {i} is {v}")));
        }
        Ok(Self {
            width,
            height,
            samples,
            mm_per_pixel,
        })
    }

    pub fn filled(width: usize, height: usize, depth: f64, mm_per_pixel: f64) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height], mm_per_pixel)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mm_per_pixel: f64,
        f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut f = f;
        let mut samples = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                samples.push(f(r, c));
            }
        }
        Self::new(width, height, samples, mm_per_pixel)
    }

    /// Builds a frame whose samples are already known to be valid.
    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        samples: Vec<f64>,
        mm_per_pixel: f64,
    ) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        Self {
            width,
            height,
            samples,
            mm_per_pixel,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mm_per_pixel(&self) -> f64 {
        self.mm_per_pixel
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.samples[row * self.width..(row + 1) * self.width]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.height).map(|r| self.get(r, col)).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|v| **v > 0.0).count()
    }

    pub fn same_shape(&self, other: &DepthFrame) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.mm_per_pixel == other.mm_per_pixel
    }

    /// Exact sub-grid starting at `(row, col)`; the scale is inherited.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<DepthFrame> {
        let oob = || Error::OutOfBounds {
            row,
            col,
            height,
            width,
            frame_height: self.height,
            frame_width: self.width,
        };
        if height == 0 || width == 0 {
            return Err(oob());
        }
        let row_end = row.checked_add(height).ok_or_else(oob)?;
        let col_end = col.checked_add(width).ok_or_else(oob)?;
        if row_end > self.height || col_end > self.width {
            return Err(oob());
        }
        let mut samples = Vec::with_capacity(width * height);
        for r in row..row_end {
            samples.extend_from_slice(&self.row(r)[col..col_end]);
        }
        Ok(Self::from_parts_unchecked(
            width,
            height,
            samples,
            self.mm_per_pixel,
        ))
    }

    /// Integer translation with zero fill: output `(r, c)` takes input `(r - dy, c - dx)`.
    pub fn shifted(&self, dy: i64, dx: i64) -> DepthFrame {
        let (h, w) = (self.height as i64, self.width as i64);
        let mut out = vec![0.0; self.samples.len()];
        for r in 0..h {
            let sr = r - dy;
            if sr < 0 || sr >= h {
                continue;
            }
            for c in 0..w {
                let sc = c - dx;
                if sc < 0 || sc >= w {
                    continue;
                }
                out[(r * w + c) as usize] = self.samples[(sr * w + sc) as usize];
            }
        }
        Self::from_parts_unchecked(self.width, self.height, out, self.mm_per_pixel)
    }

    pub fn mirrored_horizontally(&self) -> DepthFrame {
        let mut out = Vec::with_capacity(self.samples.len());
        for r in 0..self.height {
            out.extend(self.row(r).iter().rev());
        }
        Self::from_parts_unchecked(self.width, self.height, out, self.mm_per_pixel)
    }

    /// Rounds every sample to whole millimeters, the resolution a 16-bit PGM stores.
    pub fn quantized(&self) -> DepthFrame {
        let samples = self
            .samples
            .iter()
            .map(|v| v.round().min(u16::MAX as f64))
            .collect();
        Self::from_parts_unchecked(self.width, self.height, samples, self.mm_per_pixel)
    }

    pub(crate) fn map_samples(&self, f: impl Fn(f64) -> f64) -> DepthFrame {
        let samples = self.samples.iter().map(|&v| f(v)).collect();
        Self::from_parts_unchecked(self.width, self.height, samples, self.mm_per_pixel)
    }
}

/// Pixel rectangle, `row, col` of the top-left corner plus its size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl std::str::FromStr for Rect {
    type Err = Error;

    /// Parses `r,c,h,w`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("rectangle {s:?}: {e}")))?;
        match parts.as_slice() {
            &[row, col, height, width] => Ok(Rect {
                row,
                col,
                height,
                width,
            }),
            _ => Err(Error::InvalidConfig(format!(
                "rectangle {s:?}: expected r,c,h,w"
            ))),
        }
    }
}

/// Neck patch cut from a reference session, used to relocate the neck later.
#[derive(Clone, Debug, PartialEq)]
pub struct NeckTemplate {
    patch: DepthFrame,
    origin_row: usize,
    origin_col: usize,
}

impl NeckTemplate {
    pub const MIN_SIDE: usize = 8;

    pub fn from_reference(reference: &DepthFrame, rect: Rect) -> Result<Self> {
        if rect.height < Self::MIN_SIDE || rect.width < Self::MIN_SIDE {
            return Err(Error::InvalidConfig(format!(
                "template must be at least {0}x{0} pixels, got {1}x{2}",
                Self::MIN_SIDE,
                rect.height,
                rect.width
            )));
        }
        let patch = reference.crop(rect.row, rect.col, rect.height, rect.width)?;
        Ok(Self {
            patch,
            origin_row: rect.row,
            origin_col: rect.col,
        })
    }

    pub fn patch(&self) -> &DepthFrame {
        &self.patch
    }

    pub fn origin(&self) -> (usize, usize) {
        (self.origin_row, self.origin_col)
    }

    pub fn rect(&self) -> Rect {
        Rect {
            row: self.origin_row,
            col: self.origin_col,
            height: self.patch.height(),
            width: self.patch.width(),
        }
    }
}
