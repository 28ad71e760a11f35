use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::{Matrix3, Matrix3x4, Vector3};

use super::Result;
use crate::geometry::{box_corners, corners_to_bbox2d, CameraModel, EARTH_RADIUS};
use crate::ingest::{
    self, format_calib_cam_to_cam, format_calib_velo_to_cam, format_oxts, format_timestamps, format_tracklets,
    frame_name, images, write_velodyne, CalibCamToCam, CalibVeloToCam, OxtsRecord, PointCloud, Raster, Tracklet,
    TrackletPose,
};

/// A box-shaped object in a synthetic drive.
#[derive(Clone, Debug, PartialEq)]
pub struct KittiObject {
    pub object_type: String,
    /// Box centre at frame 0 in the Velodyne frame (x forward, y left), m.
    pub x: f64,
    pub y: f64,
    /// Ground-plane velocity (m/s), expressed along the ego's initial axes.
    pub vx: f64,
    pub vy: f64,
    pub h: f64,
    pub w: f64,
    pub l: f64,
}

impl KittiObject {
    pub fn car(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        KittiObject { object_type: "Car".into(), x, y, vx, vy, h: 1.5, w: 1.7, l: 4.2 }
    }
}

/// A straight-line drive with constant-velocity objects, written in the
/// KITTI raw layout.
#[derive(Clone, Debug, PartialEq)]
pub struct KittiDriveSpec {
    pub frames: usize,
    /// Seconds between frames.
    pub dt: f64,
    pub ego_speed: f64,
    /// Heading (rad, counter-clockwise from east).
    pub ego_yaw: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub objects: Vec<KittiObject>,
    /// `(width, height)`
    pub image_size: (usize, usize),
    /// Also write instance images (one id per visible object) and their
    /// category sidecar.
    pub with_instances: bool,
}

/// Height of the Velodyne above the road (m).
const SENSOR_HEIGHT: f64 = 1.73;

impl Default for KittiDriveSpec {
    fn default() -> Self {
        KittiDriveSpec {
            frames: 10,
            dt: 0.1,
            ego_speed: 10.0,
            ego_yaw: 0.0,
            origin_lat: 49.0,
            origin_lon: 8.4,
            objects: Vec::new(),
            image_size: (1242, 375),
            with_instances: false,
        }
    }
}

impl KittiDriveSpec {
    pub fn calibration() -> (CalibCamToCam, CalibVeloToCam) {
        let cam = CalibCamToCam {
            r_rect_00: Matrix3::identity(),
            p_rect_02: Matrix3x4::new(721.5, 0.0, 609.6, 44.9, 0.0, 721.5, 172.9, 0.2, 0.0, 0.0, 1.0, 0.003),
        };
        let velo = CalibVeloToCam {
            rotation: Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0),
            translation: Vector3::new(0.0, -0.08, -0.27),
        };
        (cam, velo)
    }

    pub fn camera(&self) -> CameraModel {
        let (cam, velo) = Self::calibration();
        CameraModel::from_calib(&cam, &velo, self.image_size).expect("fixed calibration is valid")
    }

    fn heading(&self) -> (f64, f64) {
        (self.ego_yaw.cos(), self.ego_yaw.sin())
    }

    /// Ego position in the local metric frame at frame `f`.
    fn ego_xy(&self, f: usize) -> (f64, f64) {
        let (c, s) = self.heading();
        let d = self.ego_speed * self.dt * f as f64;
        (d * c, d * s)
    }

    fn oxts(&self, f: usize) -> OxtsRecord {
        let scale = (self.origin_lat.to_radians()).cos();
        let mx0 = scale * EARTH_RADIUS * self.origin_lon.to_radians();
        let my0 = scale * EARTH_RADIUS * (std::f64::consts::FRAC_PI_4 + self.origin_lat.to_radians() / 2.0).tan().ln();
        let (dx, dy) = self.ego_xy(f);
        let (mx, my) = (mx0 + dx, my0 + dy);
        let lon = (mx / (scale * EARTH_RADIUS)).to_degrees();
        let lat = (2.0 * (my / (scale * EARTH_RADIUS)).exp().atan() - std::f64::consts::FRAC_PI_2).to_degrees();
        let (c, s) = self.heading();
        OxtsRecord {
            lat,
            lon,
            alt: 110.0,
            yaw: self.ego_yaw,
            ve: self.ego_speed * c,
            vn: self.ego_speed * s,
            vf: self.ego_speed,
            ..OxtsRecord::zero()
        }
    }

    /// Object pose in the Velodyne frame at frame `f`.
    fn pose(&self, o: &KittiObject, f: usize) -> TrackletPose {
        let t = self.dt * f as f64;
        // the ego only translates along its own x axis
        let ex = self.ego_speed * t;
        let rz = if o.vx == 0.0 && o.vy == 0.0 { 0.0 } else { o.vy.atan2(o.vx) };
        TrackletPose { tx: o.x + o.vx * t - ex, ty: o.y + o.vy * t, tz: -SENSOR_HEIGHT, rz }
    }

    pub fn tracklets(&self) -> Vec<Tracklet> {
        self.objects
            .iter()
            .map(|o| Tracklet {
                object_type: o.object_type.clone(),
                h: o.h,
                w: o.w,
                l: o.l,
                first_frame: 0,
                poses: (0..self.frames).map(|f| self.pose(o, f)).collect(),
            })
            .collect()
    }
}

/// Writes calibration, OXTS, timestamps, tracklets, grey images, empty
/// scans and optionally instance images under `dir`.
pub fn write_kitti_drive(dir: &Path, spec: &KittiDriveSpec) -> Result<PathBuf> {
    let (cam, velo) = KittiDriveSpec::calibration();
    ingest::write_bytes(dir.join("calib_cam_to_cam.txt"), format_calib_cam_to_cam(&cam).as_bytes())?;
    ingest::write_bytes(dir.join("calib_velo_to_cam.txt"), format_calib_velo_to_cam(&velo).as_bytes())?;

    let offsets: Vec<f64> = (0..spec.frames).map(|f| f as f64 * spec.dt).collect();
    let start = NaiveDate::from_ymd_opt(2011, 9, 26).and_then(|d| d.and_hms_opt(13, 2, 25)).expect("valid date");
    ingest::write_bytes(dir.join("oxts/timestamps.txt"), format_timestamps(start, &offsets).as_bytes())?;

    let tracklets = spec.tracklets();
    ingest::write_bytes(dir.join("tracklet_labels.xml"), format_tracklets(&tracklets).as_bytes())?;

    let (w, h) = spec.image_size;
    let grey = images::write_rgb_png(&Raster::filled(h, w, 3, 96u8))?;
    let scan = write_velodyne(&PointCloud { points: Vec::new() });
    let camera = spec.camera();
    let layout = ingest::DriveLayout::new(dir);
    let mut categories = BTreeMap::new();
    for f in 0..spec.frames {
        let name = frame_name(f);
        ingest::write_bytes(dir.join(format!("oxts/data/{name}.txt")), format_oxts(&spec.oxts(f)).as_bytes())?;
        ingest::write_bytes(dir.join(format!("image_02/data/{name}.png")), &grey)?;
        ingest::write_bytes(dir.join(format!("velodyne_points/data/{name}.bin")), &scan)?;
        if spec.with_instances {
            let mut inst = images::InstanceImage { height: h, width: w, ids: vec![0; h * w] };
            for (k, t) in tracklets.iter().enumerate() {
                let b = corners_to_bbox2d(&camera, &box_corners(t, f)?);
                if b.all_behind || b.area() <= 0.0 {
                    continue;
                }
                let id = k as u16 + 1;
                categories.insert((f, id), t.object_type.to_lowercase());
                // an ellipse inscribed in the box stands in for the silhouette
                let (cu, cv) = ((b.u_min + b.u_max) / 2.0, (b.v_min + b.v_max) / 2.0);
                let (ru, rv) = ((b.u_max - b.u_min) / 2.0, (b.v_max - b.v_min) / 2.0);
                for y in (b.v_min.floor().max(0.0) as usize)..(b.v_max.ceil().min(h as f64) as usize) {
                    for x in (b.u_min.floor().max(0.0) as usize)..(b.u_max.ceil().min(w as f64) as usize) {
                        let (du, dv) = ((x as f64 + 0.5 - cu) / ru, (y as f64 + 0.5 - cv) / rv);
                        if du * du + dv * dv <= 1.0 {
                            inst.ids[y * w + x] = id;
                        }
                    }
                }
            }
            ingest::write_bytes(layout.instances(f), &images::write_instance_png(&inst)?)?;
        }
    }
    if spec.with_instances {
        ingest::write_bytes(layout.instance_categories(), images::format_instance_categories(&categories).as_bytes())?;
    }
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{ego_velocity, load_drive, VelocityMode};
    use crate::ingest::DriveLayout;

    #[test]
    fn drive_round_trips_through_loader() {
        let dir = tempfile::tempdir().unwrap();
        let spec = KittiDriveSpec { frames: 4, objects: vec![KittiObject::car(15.0, 3.5, 8.0, 0.0)], ..Default::default() };
        let root = write_kitti_drive(&dir.path().join("2011_09_26_drive_0001_sync"), &spec).unwrap();
        let data = load_drive(&DriveLayout::new(root)).unwrap();
        assert_eq!(data.oxts.len(), 4);
        assert_eq!(data.tracklets.len(), 1);
        assert!((data.timestamps[3] - 0.3).abs() < 1e-9);
        for mode in [VelocityMode::PoseDiff, VelocityMode::OxtsChannels] {
            let v = ego_velocity(&data.oxts, &data.timestamps, mode).unwrap();
            for vel in v {
                assert!((vel.x - 10.0).abs() < 1e-3 && vel.y.abs() < 1e-3, "{mode:?} {vel:?}");
            }
        }
    }
}
