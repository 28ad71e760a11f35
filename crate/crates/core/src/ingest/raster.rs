use super::{IngestError, Result};

pub const STANDARD_HEIGHT: usize = 256;
pub const STANDARD_WIDTH: usize = 1224;

/// Interleaved `H×W×C` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(IngestError::DimensionMismatch(format!(
                "{} values for {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Raster { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Raster {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: T) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn crop(&self, win: CropWindow) -> Raster<T> {
        Raster {
            height: win.height,
            width: win.width,
            channels: self.channels,
            data: win.apply(self.height, self.width, self.channels, &self.data),
        }
    }
}

/// A rectangular sub-window of an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CropWindow {
    /// Bottom-most `height` rows, horizontally centred `width` columns
    /// (left offset `floor((W - width) / 2)`).
    pub fn bottom_center(src_h: usize, src_w: usize, height: usize, width: usize) -> Result<Self> {
        if src_h < height || src_w < width {
            return Err(IngestError::TooSmall { height: src_h, width: src_w });
        }
        Ok(CropWindow {
            top: src_h - height,
            left: (src_w - width) / 2,
            height,
            width,
        })
    }

    /// The 256×1224 window used for every frame.
    pub fn standard(src_h: usize, src_w: usize) -> Result<Self> {
        CropWindow::bottom_center(src_h, src_w, STANDARD_HEIGHT, STANDARD_WIDTH)
    }

    /// Crops an interleaved `src_h × src_w × channels` buffer.
    pub fn apply<T: Copy>(&self, src_h: usize, src_w: usize, channels: usize, data: &[T]) -> Vec<T> {
        debug_assert!(self.top + self.height <= src_h && self.left + self.width <= src_w);
        let mut out = Vec::with_capacity(self.height * self.width * channels);
        for y in self.top..self.top + self.height {
            let start = (y * src_w + self.left) * channels;
            out.extend_from_slice(&data[start..start + self.width * channels]);
        }
        out
    }
}

/// Keeps the bottom 256 rows and the centred 1224 columns.
pub fn crop_standard<T: Copy>(image: &Raster<T>) -> Result<Raster<T>> {
    Ok(image.crop(CropWindow::standard(image.height, image.width)?))
}
