//! PNG codecs for masks, colour frames, depth maps and instance maps.

use std::collections::BTreeMap;
use std::io::Cursor;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma, RgbImage};

use super::raster::{CropWindow, Raster};
use super::{IngestError, Result};

/// Binary motion mask: 0 static/background, 1 moving.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskImage {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl MaskImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        MaskImage { height, width, labels: vec![0; height * width] }
    }

    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(IngestError::DimensionMismatch(format!(
                "{} labels for {height}x{width}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(IngestError::InvalidValue {
                path: "mask".into(),
                reason: format!("label {bad} is not 0 or 1"),
            });
        }
        Ok(MaskImage { height, width, labels })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.labels[y * self.width + x] = v;
    }

    pub fn count_moving(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn crop(&self, win: CropWindow) -> MaskImage {
        MaskImage {
            height: win.height,
            width: win.width,
            labels: win.apply(self.height, self.width, 1, &self.labels),
        }
    }
}

/// 8-bit grayscale PNG with 0 → 0 and 1 → 255.
pub fn write_mask_png(mask: &MaskImage) -> Result<Vec<u8>> {
    let img = GrayImage::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) == 1 { 255 } else { 0 }])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn read_mask_png(bytes: &[u8]) -> Result<MaskImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let DynamicImage::ImageLuma8(img) = img else {
        return Err(IngestError::PixelFormat(format!("mask PNG is {:?}, expected 8-bit gray", img.color())));
    };
    let labels = img
        .pixels()
        .map(|p| match p[0] {
            0 => Ok(0),
            255 => Ok(1),
            v => Err(IngestError::BadPixelValue(u16::from(v))),
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(MaskImage { height: img.height() as usize, width: img.width() as usize, labels })
}

/// Decodes any 8-bit colour PNG to `H×W×3`.
pub fn read_rgb_png(bytes: &[u8]) -> Result<Raster<u8>> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::new(h, w, 3, img.into_raw())
}

pub fn write_rgb_png(img: &Raster<u8>) -> Result<Vec<u8>> {
    if img.channels != 3 {
        return Err(IngestError::PixelFormat(format!("{} channels, expected 3", img.channels)));
    }
    let buf = RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .ok_or_else(|| IngestError::DimensionMismatch("rgb buffer".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

const DEPTH_SCALE: f32 = 256.0;

/// KITTI depth PNG: 16-bit gray, meters × 256, 0 = no measurement.
pub fn read_depth_png(bytes: &[u8]) -> Result<Raster<f32>> {
    let img = read_gray16(bytes, "depth")?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::new(h, w, 1, img.pixels().map(|p| f32::from(p[0]) / DEPTH_SCALE).collect())
}

pub fn write_depth_png(depth: &Raster<f32>) -> Result<Vec<u8>> {
    write_gray16(depth.width, depth.height, |i| {
        (depth.data[i] * DEPTH_SCALE).round().clamp(0.0, 65535.0) as u16
    })
}

fn read_gray16(bytes: &[u8], what: &str) -> Result<ImageBuffer<Luma<u16>, Vec<u16>>> {
    match image::load_from_memory_with_format(bytes, ImageFormat::Png)? {
        DynamicImage::ImageLuma16(img) => Ok(img),
        other => Err(IngestError::PixelFormat(format!(
            "{what} PNG is {:?}, expected 16-bit gray",
            other.color()
        ))),
    }
}

fn write_gray16(width: usize, height: usize, value: impl Fn(usize) -> u16) -> Result<Vec<u8>> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(width as u32, height as u32, |x, y| Luma([value(y as usize * width + x as usize)]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Per-frame instance segmentation: pixel value `k > 0` is instance `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceImage {
    pub height: usize,
    pub width: usize,
    pub ids: Vec<u16>,
}

impl InstanceImage {
    /// Instance ids present in the image, ascending, excluding 0.
    pub fn instance_ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.ids.iter().copied().filter(|&k| k > 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

pub fn read_instance_png(bytes: &[u8]) -> Result<InstanceImage> {
    let img = read_gray16(bytes, "instance")?;
    Ok(InstanceImage {
        height: img.height() as usize,
        width: img.width() as usize,
        ids: img.into_raw(),
    })
}

pub fn write_instance_png(inst: &InstanceImage) -> Result<Vec<u8>> {
    write_gray16(inst.width, inst.height, |i| inst.ids[i])
}

/// Sidecar `frame_id instance_id category` lines, keyed by
/// `(frame, instance)`.
pub fn parse_instance_categories(text: &str) -> Result<BTreeMap<(usize, u16), String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut it = line.split_whitespace();
        let (Some(f), Some(k), Some(cat), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(IngestError::InvalidValue {
                path: "instances".into(),
                reason: format!("expected `frame_id instance_id category`, got `{line}`"),
            });
        };
        let f = f.parse().map_err(|_| IngestError::MalformedNumber(line.to_string()))?;
        let k = k.parse().map_err(|_| IngestError::MalformedNumber(line.to_string()))?;
        out.insert((f, k), cat.to_string());
    }
    Ok(out)
}

pub fn format_instance_categories(entries: &BTreeMap<(usize, u16), String>) -> String {
    entries.iter().map(|((f, k), c)| format!("{f} {k} {c}\n")).collect()
}
