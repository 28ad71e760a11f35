use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};

use super::raster::CropWindow;
use super::{read_bytes, IngestError, Result};

/// Middlebury `.flo` sanity tag.
pub const FLO_MAGIC: f32 = 202021.25;

const PNG_OFFSET: f64 = 32768.0;
const PNG_SCALE: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowFormat {
    /// Middlebury float32 container.
    Flo,
    /// KITTI 16-bit RGB PNG: `(u·64 + 2¹⁵, v·64 + 2¹⁵, valid)`.
    KittiPng16,
}

impl FlowFormat {
    /// Picks the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("flo") => Ok(FlowFormat::Flo),
            Some(e) if e.eq_ignore_ascii_case("png") => Ok(FlowFormat::KittiPng16),
            _ => Err(IngestError::PixelFormat(format!(
                "cannot infer flow format of {}",
                path.display()
            ))),
        }
    }
}

/// Per-pixel displacement field, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMap {
    pub height: usize,
    pub width: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub valid: Vec<bool>,
}

impl FlowMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        FlowMap { height, width, u: vec![0.0; n], v: vec![0.0; n], valid: vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.valid.iter().filter(|&&v| v).count() as f64 / self.len() as f64
    }

    pub fn crop(&self, win: CropWindow) -> FlowMap {
        FlowMap {
            height: win.height,
            width: win.width,
            u: win.apply(self.height, self.width, 1, &self.u),
            v: win.apply(self.height, self.width, 1, &self.v),
            valid: win.apply(self.height, self.width, 1, &self.valid),
        }
    }
}

fn read_flo(bytes: &[u8]) -> Result<FlowMap> {
    let word = |i: usize| -> Result<[u8; 4]> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| b.try_into().unwrap())
            .ok_or_else(|| IngestError::DimensionMismatch(format!("{} byte header", bytes.len())))
    };
    if f32::from_le_bytes(word(0)?) != FLO_MAGIC {
        return Err(IngestError::BadMagic);
    }
    let width = i32::from_le_bytes(word(1)?);
    let height = i32::from_le_bytes(word(2)?);
    if width < 0 || height < 0 {
        return Err(IngestError::DimensionMismatch(format!("{width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let payload = &bytes[12..];
    if payload.len() != width * height * 8 {
        return Err(IngestError::DimensionMismatch(format!(
            "{} payload bytes for {width}x{height}",
            payload.len()
        )));
    }
    let mut flow = FlowMap::zeros(height, width);
    for (i, px) in payload.chunks_exact(8).enumerate() {
        flow.u[i] = f32::from_le_bytes(px[..4].try_into().unwrap());
        flow.v[i] = f32::from_le_bytes(px[4..].try_into().unwrap());
    }
    Ok(flow)
}

fn write_flo(flow: &FlowMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for (u, v) in flow.u.iter().zip(&flow.v) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_png16(bytes: &[u8]) -> Result<FlowMap> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let DynamicImage::ImageRgb16(img) = img else {
        return Err(IngestError::PixelFormat(format!("flow PNG is {:?}, expected 16-bit RGB", img.color())));
    };
    let (width, height) = (img.width() as usize, img.height() as usize);
    let mut flow = FlowMap::zeros(height, width);
    for (i, px) in img.pixels().enumerate() {
        flow.u[i] = ((f64::from(px[0]) - PNG_OFFSET) / PNG_SCALE) as f32;
        flow.v[i] = ((f64::from(px[1]) - PNG_OFFSET) / PNG_SCALE) as f32;
        flow.valid[i] = px[2] > 0;
    }
    Ok(flow)
}

fn encode_component(x: f32) -> u16 {
    (f64::from(x) * PNG_SCALE + PNG_OFFSET).round().clamp(0.0, 65535.0) as u16
}

fn write_png16(flow: &FlowMap) -> Result<Vec<u8>> {
    let mut buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::new(flow.width as u32, flow.height as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        *px = if flow.valid[i] {
            Rgb([encode_component(flow.u[i]), encode_component(flow.v[i]), 1])
        } else {
            Rgb([PNG_OFFSET as u16, PNG_OFFSET as u16, 0])
        };
    }
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn read_flow(bytes: &[u8], format: FlowFormat) -> Result<FlowMap> {
    match format {
        FlowFormat::Flo => read_flo(bytes),
        FlowFormat::KittiPng16 => read_png16(bytes),
    }
}

/// Reads a flow file, choosing the format by extension.
pub fn read_flow_file(path: &Path) -> Result<FlowMap> {
    read_flow(&read_bytes(path)?, FlowFormat::from_path(path)?)
}

pub fn write_flow(flow: &FlowMap, format: FlowFormat) -> Result<Vec<u8>> {
    match format {
        FlowFormat::Flo => Ok(write_flo(flow)),
        FlowFormat::KittiPng16 => write_png16(flow),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_flo() {
        // "PIEH" is 202021.25 as little-endian f32; then width 1, height 1, u=3, v=-2
        let bytes = [
            b'P', b'I', b'E', b'H', 1, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x00,
            0xc0,
        ];
        let f = read_flow(&bytes, FlowFormat::Flo).unwrap();
        assert_eq!((f.u[0], f.v[0], f.valid[0]), (3.0, -2.0, true));
        assert_eq!(write_flow(&f, FlowFormat::Flo).unwrap(), bytes);
    }

    #[test]
    fn flo_errors() {
        let mut bytes = write_flo(&FlowMap::zeros(2, 3));
        assert!(matches!(read_flow(&bytes[..20], FlowFormat::Flo), Err(IngestError::DimensionMismatch(_))));
        bytes[..4].copy_from_slice(&0f32.to_le_bytes());
        assert!(matches!(read_flow(&bytes, FlowFormat::Flo), Err(IngestError::BadMagic)));
        assert!(matches!(read_flow(&[], FlowFormat::Flo), Err(IngestError::DimensionMismatch(_))));
    }

    #[test]
    fn png16_pixel_formula() {
        let mut buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::new(2, 1);
        buf.put_pixel(0, 0, Rgb([32768 + 64, 32768 - 128, 1]));
        buf.put_pixel(1, 0, Rgb([32768, 32768, 0]));
        let mut bytes = Cursor::new(Vec::new());
        buf.write_to(&mut bytes, ImageFormat::Png).unwrap();
        let f = read_flow(bytes.get_ref(), FlowFormat::KittiPng16).unwrap();
        assert_eq!((f.u[0], f.v[0], f.valid[0]), (1.0, -2.0, true));
        assert!(!f.valid[1]);
    }

    #[test]
    fn png16_rejects_8bit() {
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::new(1, 1);
        let mut bytes = Cursor::new(Vec::new());
        buf.write_to(&mut bytes, ImageFormat::Png).unwrap();
        assert!(matches!(
            read_flow(bytes.get_ref(), FlowFormat::KittiPng16),
            Err(IngestError::PixelFormat(_))
        ));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(FlowFormat::from_path(Path::new("a/b.FLO")).unwrap(), FlowFormat::Flo);
        assert_eq!(FlowFormat::from_path(Path::new("b.png")).unwrap(), FlowFormat::KittiPng16);
        assert!(FlowFormat::from_path(Path::new("b.txt")).is_err());
    }
}
