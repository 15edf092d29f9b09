//! RGB float images and PNG export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interleaved RGB image with `f64` channels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [f64; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.data.len() == other.data.len()
    }

    /// 8-bit quantization used for PNG storage.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn from_rgb8(width: u32, height: u32, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            data: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = ::image::RgbImage::from_raw(self.width, self.height, self.to_rgb8())
            .ok_or_else(|| Error::contract("image buffer size mismatch"))?;
        buf.save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = ::image::open(path)?.to_rgb8();
        Ok(Self::from_rgb8(img.width(), img.height(), img.as_raw()))
    }
}

/// Sidecar describing how a 16-bit depth PNG maps back to world units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

/// Writes `depth` as 16-bit grayscale, linearly mapped from the range of
/// non-zero depths, plus a JSON sidecar `<stem>.json` with that range.
pub fn save_depth_png(depth: &[f64], width: u32, height: u32, path: &Path) -> Result<DepthRange> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &d in depth.iter().filter(|d| **d > 0.0) {
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 0.0;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u16> = depth
        .iter()
        .map(|&d| if d > 0.0 { ((d - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16 } else { 0 })
        .collect();
    let buf = ::image::ImageBuffer::<::image::Luma<u16>, Vec<u16>>::from_raw(width, height, pixels)
        .ok_or_else(|| Error::contract("depth buffer size mismatch"))?;
    buf.save_with_format(path, ::image::ImageFormat::Png)?;
    let range = DepthRange { min: lo, max: hi };
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&range)?)?;
    Ok(range)
}
