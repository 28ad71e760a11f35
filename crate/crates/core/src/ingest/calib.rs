use std::collections::HashMap;

use nalgebra::{Matrix3, Matrix3x4, Vector3};

use super::{IngestError, Result};

/// Rectification and projection for the left colour camera (camera 02).
#[derive(Clone, Debug, PartialEq)]
pub struct CalibCamToCam {
    pub r_rect_00: Matrix3<f64>,
    pub p_rect_02: Matrix3x4<f64>,
}

/// Rigid transform from the Velodyne frame to the reference camera frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibVeloToCam {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

fn entries(text: &str) -> HashMap<&str, &str> {
    text.lines()
        .filter_map(|line| line.split_once(':'))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect()
}

fn numbers(map: &HashMap<&str, &str>, key: &str, expected: usize) -> Result<Vec<f64>> {
    let raw = map.get(key).ok_or_else(|| IngestError::MissingKey(key.to_string()))?;
    let values = raw
        .split_whitespace()
        .map(str::parse::<f64>)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| IngestError::MalformedNumber(format!("{key}: {raw}")))?;
    if values.len() != expected {
        return Err(IngestError::MalformedNumber(format!(
            "{key}: expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Parses `calib_cam_to_cam.txt` and `calib_velo_to_cam.txt`. Keys other
/// than `R_rect_00`, `P_rect_02`, `R` and `T` are ignored.
pub fn parse_calib(cam_to_cam: &str, velo_to_cam: &str) -> Result<(CalibCamToCam, CalibVeloToCam)> {
    let cam = entries(cam_to_cam);
    let velo = entries(velo_to_cam);
    let cam_calib = CalibCamToCam {
        r_rect_00: Matrix3::from_row_slice(&numbers(&cam, "R_rect_00", 9)?),
        p_rect_02: Matrix3x4::from_row_slice(&numbers(&cam, "P_rect_02", 12)?),
    };
    let velo_calib = CalibVeloToCam {
        rotation: Matrix3::from_row_slice(&numbers(&velo, "R", 9)?),
        translation: Vector3::from_row_slice(&numbers(&velo, "T", 3)?),
    };
    Ok((cam_calib, velo_calib))
}

fn row_major(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

/// Writes the subset of `calib_cam_to_cam.txt` this crate consumes.
pub fn format_calib_cam_to_cam(c: &CalibCamToCam) -> String {
    format!(
        "R_rect_00: {}\nP_rect_02: {}\n",
        row_major(c.r_rect_00.transpose().iter().copied()),
        row_major(c.p_rect_02.transpose().iter().copied()),
    )
}

pub fn format_calib_velo_to_cam(c: &CalibVeloToCam) -> String {
    format!(
        "R: {}\nT: {}\n",
        row_major(c.rotation.transpose().iter().copied()),
        row_major(c.translation.iter().copied()),
    )
}
