use std::path::{Path, PathBuf};

use super::{IngestError, Result};

/// Ten-digit zero-padded frame stem used throughout KITTI raw.
pub fn frame_name(index: usize) -> String {
    format!("{index:010}")
}

/// Paths inside one KITTI raw drive directory, plus the derived inputs
/// (flows, depth, instances) stored alongside it.
#[derive(Clone, Debug)]
pub struct DriveLayout {
    pub root: PathBuf,
}

impl DriveLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DriveLayout { root: root.into() }
    }

    /// Directory name, used as the drive identifier.
    pub fn name(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.root.display().to_string())
    }

    /// Calibration files live in the drive directory or, as in the
    /// official archives, in the date directory above it.
    fn calib(&self, file: &str) -> PathBuf {
        let local = self.root.join(file);
        if local.exists() {
            return local;
        }
        match self.root.parent() {
            Some(parent) if parent.join(file).exists() => parent.join(file),
            _ => local,
        }
    }

    pub fn calib_cam_to_cam(&self) -> PathBuf {
        self.calib("calib_cam_to_cam.txt")
    }

    pub fn calib_velo_to_cam(&self) -> PathBuf {
        self.calib("calib_velo_to_cam.txt")
    }

    pub fn oxts(&self, frame: usize) -> PathBuf {
        self.root.join("oxts/data").join(format!("{}.txt", frame_name(frame)))
    }

    pub fn oxts_timestamps(&self) -> PathBuf {
        self.root.join("oxts/timestamps.txt")
    }

    pub fn tracklets(&self) -> PathBuf {
        self.root.join("tracklet_labels.xml")
    }

    pub fn velodyne(&self, frame: usize) -> PathBuf {
        self.root.join("velodyne_points/data").join(format!("{}.bin", frame_name(frame)))
    }

    pub fn image(&self, frame: usize) -> PathBuf {
        self.root.join("image_02/data").join(format!("{}.png", frame_name(frame)))
    }

    pub fn rgb_flow(&self, frame: usize) -> PathBuf {
        self.root.join("rgbflow/data").join(format!("{}.flo", frame_name(frame)))
    }

    pub fn lidar_flow(&self, frame: usize) -> PathBuf {
        self.root.join("lidarflow/data").join(format!("{}.png", frame_name(frame)))
    }

    pub fn depth(&self, frame: usize) -> PathBuf {
        self.root.join("depth/data").join(format!("{}.png", frame_name(frame)))
    }

    pub fn instances(&self, frame: usize) -> PathBuf {
        self.root.join("instances/data").join(format!("{}.png", frame_name(frame)))
    }

    pub fn instance_categories(&self) -> PathBuf {
        self.root.join("instances/categories.txt")
    }

    /// Number of frames, taken from `image_02/data`. Frame files must be
    /// contiguous from zero.
    pub fn frame_count(&self) -> Result<usize> {
        let dir = self.root.join("image_02/data");
        let entries = std::fs::read_dir(&dir).map_err(|source| IngestError::Io { path: dir.clone(), source })?;
        let mut count = 0;
        for entry in entries {
            let entry = entry.map_err(|source| IngestError::Io { path: dir.clone(), source })?;
            if entry.path().extension().is_some_and(|e| e == "png") {
                count += 1;
            }
        }
        for frame in 0..count {
            if !self.image(frame).exists() {
                return Err(IngestError::InvalidValue {
                    path: dir.display().to_string(),
                    reason: format!("frame {} missing", frame_name(frame)),
                });
            }
        }
        Ok(count)
    }

    /// Path relative to `base`, with forward slashes, for manifests.
    pub fn relative(base: &Path, path: &Path) -> String {
        let rel = path.strip_prefix(base).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_names() {
        assert_eq!(frame_name(0), "0000000000");
        assert_eq!(frame_name(123), "0000000123");
    }

    #[test]
    fn devkit_paths() {
        let d = DriveLayout::new("/data/2011_09_26/2011_09_26_drive_0001_sync");
        assert_eq!(d.name(), "2011_09_26_drive_0001_sync");
        assert!(d.velodyne(7).ends_with("velodyne_points/data/0000000007.bin"));
        assert!(d.image(7).ends_with("image_02/data/0000000007.png"));
        assert!(d.oxts(7).ends_with("oxts/data/0000000007.txt"));
    }

    #[test]
    fn calib_falls_back_to_parent() {
        let tmp = tempfile::tempdir().unwrap();
        let drive = tmp.path().join("drive_a");
        std::fs::create_dir_all(&drive).unwrap();
        std::fs::write(tmp.path().join("calib_cam_to_cam.txt"), "").unwrap();
        std::fs::write(drive.join("calib_velo_to_cam.txt"), "").unwrap();
        let d = DriveLayout::new(&drive);
        assert_eq!(d.calib_cam_to_cam(), tmp.path().join("calib_cam_to_cam.txt"));
        assert_eq!(d.calib_velo_to_cam(), drive.join("calib_velo_to_cam.txt"));
    }
}
