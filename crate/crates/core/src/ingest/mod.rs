//! Readers and writers for every external file the pipeline touches.
//!
//! All parsers are pure functions over bytes or text. Thin `*_file` helpers
//! add path context to I/O errors.

mod calib;
mod flow;
mod layout;
mod oxts;
mod raster;
mod tracklets;
mod velodyne;

pub mod images;

use std::path::PathBuf;

use thiserror::Error;

pub use calib::{format_calib_cam_to_cam, format_calib_velo_to_cam, parse_calib, CalibCamToCam, CalibVeloToCam};
pub use flow::{read_flow, read_flow_file, write_flow, FlowFormat, FlowMap, FLO_MAGIC};
pub use images::{read_mask_png, write_mask_png, MaskImage};
pub use layout::{frame_name, DriveLayout};
pub use oxts::{format_oxts, format_timestamps, parse_oxts, parse_timestamps, OxtsRecord};
pub use raster::{crop_standard, CropWindow, Raster, STANDARD_HEIGHT, STANDARD_WIDTH};
pub use tracklets::{format_tracklets, parse_tracklets, Tracklet, TrackletPose};
pub use velodyne::{read_velodyne, write_velodyne, PointCloud};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing key `{0}`")]
    MissingKey(String),

    #[error("malformed number in `{0}`")]
    MalformedNumber(String),

    #[error("expected 30 OXTS fields, got {0}")]
    WrongFieldCount(usize),

    #[error("{name} = {value} is outside [-pi, pi]")]
    AngleOutOfRange { name: &'static str, value: f64 },

    #[error("bad timestamp `{0}`")]
    BadTimestamp(String),

    #[error("unexpected XML structure at `{0}`")]
    XmlStructure(String),

    #[error("invalid value at `{path}`: {reason}")]
    InvalidValue { path: String, reason: String },

    #[error("velodyne payload truncated: trailing bytes start at offset {0}")]
    TruncatedRecord(usize),

    #[error("non-finite coordinate in velodyne point {0}")]
    NonFinitePoint(usize),

    #[error("bad .flo magic")]
    BadMagic,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image {height}x{width} is smaller than the standard 256x1224 crop")]
    TooSmall { height: usize, width: usize },

    #[error("mask pixel value {0} is neither 0 nor 255")]
    BadPixelValue(u16),

    #[error("unsupported pixel layout: {0}")]
    PixelFormat(String),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Reads a file, attaching its path to any I/O error.
pub fn read_bytes(path: impl Into<PathBuf>) -> Result<Vec<u8>> {
    let path = path.into();
    std::fs::read(&path).map_err(|source| IngestError::Io { path, source })
}

pub fn read_text(path: impl Into<PathBuf>) -> Result<String> {
    let path = path.into();
    std::fs::read_to_string(&path).map_err(|source| IngestError::Io { path, source })
}

/// Writes a file, creating parent directories.
pub fn write_bytes(path: impl Into<PathBuf>, bytes: &[u8]) -> Result<()> {
    let path = path.into();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| IngestError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(&path, bytes).map_err(|source| IngestError::Io { path, source })
}
