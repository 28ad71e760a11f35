//! Motion labels from tracklets and GPS, mask rasterization and
//! refinement, and dataset export with a drive-level train/test split.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    self, box_corners, corners_to_bbox2d, finite_velocity, oxts_to_pose, BBox2d, CameraModel, GeometryError,
    RigidTransform,
};
use crate::ingest::{
    self, frame_name, images, parse_calib, parse_oxts, parse_timestamps, parse_tracklets, DriveLayout, IngestError,
    MaskImage, OxtsRecord, Tracklet,
};

pub const DEFAULT_THRESHOLD: f64 = 1.0;
/// Instance-to-box assignment ratio `|inst ∩ box| / |inst|`.
pub const OVERLAP_RATIO: f64 = 0.5;
/// Tolerance (px) by which refined instance pixels may exceed a box.
pub const BOX_MARGIN: f64 = 2.0;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("tracklet {tracklet} reaches frame {frame} but the drive has {frames} frames")]
    FrameOutOfRange { tracklet: usize, frame: usize, frames: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("drive {drive} is incomplete: missing {}", missing.display())]
    IncompleteDrive { drive: String, missing: PathBuf },

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

pub type Result<T, E = AnnotationError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotionLabel {
    Static,
    Moving,
}

impl fmt::Display for MotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionLabel::Static => "static",
            MotionLabel::Moving => "moving",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VelocityMode {
    /// Differentiate the Mercator positions.
    #[default]
    PoseDiff,
    /// Use the reported east/north velocity channels.
    OxtsChannels,
}

impl std::str::FromStr for VelocityMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pose_diff" | "posediff" => Ok(VelocityMode::PoseDiff),
            "oxts" | "oxts_channels" => Ok(VelocityMode::OxtsChannels),
            other => Err(format!("unknown velocity mode `{other}` (expected pose_diff or oxts)")),
        }
    }
}

/// World poses of every OXTS record, Mercator scale from the first one.
pub fn ego_poses(oxts: &[OxtsRecord]) -> Result<Vec<RigidTransform>> {
    let Some(origin) = oxts.first() else {
        return Ok(Vec::new());
    };
    Ok(oxts.iter().map(|r| oxts_to_pose(r, origin)).collect::<Result<_, _>>()?)
}

/// Ego velocity in the world frame (x east, y north, z up), m/s.
pub fn ego_velocity(oxts: &[OxtsRecord], timestamps: &[f64], mode: VelocityMode) -> Result<Vec<Vector3<f64>>> {
    match mode {
        VelocityMode::PoseDiff => {
            let positions: Vec<_> = ego_poses(oxts)?.iter().map(|p| p.translation).collect();
            Ok(finite_velocity(&positions, timestamps)?)
        }
        VelocityMode::OxtsChannels => Ok(oxts.iter().map(|r| Vector3::new(r.ve, r.vn, 0.0)).collect()),
    }
}

/// World-frame velocity of a tracklet at each of its poses. The Velodyne
/// frame is taken as the ego body frame, so world position is
/// `ego_pose ∘ (tx, ty, tz)`. A single-pose tracklet has zero velocity.
pub fn object_world_velocity(
    tracklet_id: usize,
    t: &Tracklet,
    ego: &[RigidTransform],
    timestamps: &[f64],
) -> Result<Vec<Vector3<f64>>> {
    let frames = ego.len().min(timestamps.len());
    if t.last_frame() >= frames {
        return Err(AnnotationError::FrameOutOfRange { tracklet: tracklet_id, frame: t.last_frame(), frames });
    }
    if t.poses.len() == 1 {
        return Ok(vec![Vector3::zeros()]);
    }
    let mut positions = Vec::with_capacity(t.poses.len());
    let mut times = Vec::with_capacity(t.poses.len());
    for (k, p) in t.poses.iter().enumerate() {
        let f = t.first_frame + k;
        positions.push(geometry::apply(&ego[f], &Vector3::new(p.tx, p.ty, p.tz)));
        times.push(timestamps[f]);
    }
    Ok(finite_velocity(&positions, &times)?)
}

/// Moving iff `speed_abs > threshold`.
pub fn classify_motion(speed_abs: f64, threshold: f64) -> MotionLabel {
    if speed_abs > threshold {
        MotionLabel::Moving
    } else {
        MotionLabel::Static
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectMotionLabel {
    pub tracklet_id: usize,
    pub frame_index: usize,
    pub speed_abs: f64,
    pub label: MotionLabel,
    pub bbox2d: BBox2d,
}

/// Everything needed to label one drive, already parsed.
#[derive(Clone, Debug)]
pub struct DriveData {
    pub name: String,
    pub camera: CameraModel,
    pub oxts: Vec<OxtsRecord>,
    pub timestamps: Vec<f64>,
    pub tracklets: Vec<Tracklet>,
}

/// Per-object speeds and projected boxes, grouped by frame.
pub fn label_drive(d: &DriveData, threshold: f64) -> Result<Vec<Vec<ObjectMotionLabel>>> {
    let frames = d.oxts.len();
    let ego = ego_poses(&d.oxts)?;
    let mut per_frame: Vec<Vec<ObjectMotionLabel>> = vec![Vec::new(); frames];
    for (id, t) in d.tracklets.iter().enumerate() {
        let vel = object_world_velocity(id, t, &ego, &d.timestamps)?;
        for (k, v) in vel.iter().enumerate() {
            let frame = t.first_frame + k;
            let speed_abs = v.norm();
            per_frame[frame].push(ObjectMotionLabel {
                tracklet_id: id,
                frame_index: frame,
                speed_abs,
                label: classify_motion(speed_abs, threshold),
                bbox2d: corners_to_bbox2d(&d.camera, &box_corners(t, k)?),
            });
        }
    }
    Ok(per_frame)
}

/// Externally produced instance masks for one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InstanceMaskSet {
    pub height: usize,
    pub width: usize,
    pub instances: Vec<Instance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub category: String,
    pub mask: Vec<bool>,
}

impl InstanceMaskSet {
    pub fn empty(height: usize, width: usize) -> Self {
        InstanceMaskSet { height, width, instances: Vec::new() }
    }

    /// Splits an id image into boolean masks; categories default to
    /// `unknown` when the sidecar has no entry.
    pub fn from_image(img: &images::InstanceImage, frame: usize, categories: &BTreeMap<(usize, u16), String>) -> Self {
        let instances = img
            .instance_ids()
            .into_iter()
            .map(|k| Instance {
                category: categories.get(&(frame, k)).cloned().unwrap_or_else(|| "unknown".into()),
                mask: img.ids.iter().map(|&v| v == k).collect(),
            })
            .collect();
        InstanceMaskSet { height: img.height, width: img.width, instances }
    }
}

fn box_pixels(b: &BBox2d, height: usize, width: usize, margin: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
    let lo = |v: f64| (v - margin - 0.5).ceil().max(0.0) as usize;
    let (y0, y1) = (lo(b.v_min), ((b.v_max + margin - 0.5).floor() + 1.0).clamp(0.0, height as f64) as usize);
    let (x0, x1) = (lo(b.u_min), ((b.u_max + margin - 0.5).floor() + 1.0).clamp(0.0, width as f64) as usize);
    (y0.min(y1)..y1)
        .flat_map(move |y| (x0.min(x1)..x1).map(move |x| (y, x)))
        .filter(move |&(y, x)| b.contains_pixel(x, y, margin))
}

/// Union of instances assigned to Moving boxes, clipped to the boxes grown
/// by [`BOX_MARGIN`]. A Moving box that received no instance contributes
/// its own rectangle.
pub fn refine_mask(labels: &[ObjectMotionLabel], inst: &InstanceMaskSet, height: usize, width: usize) -> Result<MaskImage> {
    if inst.height != height || inst.width != width {
        return Err(AnnotationError::DimensionMismatch(format!(
            "instances {}x{} vs image {height}x{width}",
            inst.height, inst.width
        )));
    }
    if let Some(bad) = inst.instances.iter().find(|i| i.mask.len() != height * width) {
        return Err(AnnotationError::DimensionMismatch(format!("instance mask of {} pixels", bad.mask.len())));
    }
    let moving: Vec<&BBox2d> = labels
        .iter()
        .filter(|l| l.label == MotionLabel::Moving && !l.bbox2d.all_behind)
        .map(|l| &l.bbox2d)
        .collect();

    let mut out = MaskImage::zeros(height, width);
    let mut allowed = vec![false; height * width];
    let mut box_masks = Vec::with_capacity(moving.len());
    for b in &moving {
        let mut m = vec![false; height * width];
        for (y, x) in box_pixels(b, height, width, 0.0) {
            m[y * width + x] = true;
        }
        for (y, x) in box_pixels(b, height, width, BOX_MARGIN) {
            allowed[y * width + x] = true;
        }
        box_masks.push(m);
    }

    let mut box_claimed = vec![false; moving.len()];
    for instance in &inst.instances {
        let area = instance.mask.iter().filter(|&&v| v).count();
        if area == 0 {
            continue;
        }
        let mut assigned = false;
        for (bi, bm) in box_masks.iter().enumerate() {
            let inter = instance.mask.iter().zip(bm).filter(|(&a, &b)| a && b).count();
            if inter as f64 / area as f64 >= OVERLAP_RATIO {
                box_claimed[bi] = true;
                assigned = true;
            }
        }
        if assigned {
            for (i, _) in instance.mask.iter().enumerate().filter(|(_, &v)| v) {
                if allowed[i] {
                    out.labels[i] = 1;
                }
            }
        }
    }
    for (bm, _) in box_masks.iter().zip(&box_claimed).filter(|(_, &c)| !c) {
        for (i, _) in bm.iter().enumerate().filter(|(_, &v)| v) {
            out.labels[i] = 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One manifest line: `split rgb rgbflow lidarflow mask [depth]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameRecord {
    pub split: Split,
    pub rgb: String,
    pub rgb_flow: String,
    pub lidar_flow: String,
    pub mask: String,
    pub depth: Option<String>,
}

/// Line-delimited frame list. Relative paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<FrameRecord>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&format!("{} {} {} {} {}", r.split, r.rgb, r.rgb_flow, r.lidar_flow, r.mask));
            if let Some(d) = &r.depth {
                s.push(' ');
                s.push_str(d);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if !(5..=6).contains(&f.len()) {
                return Err(AnnotationError::Manifest {
                    line: i + 1,
                    reason: format!("expected 5 or 6 fields, found {}", f.len()),
                });
            }
            let split = match f[0] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(AnnotationError::Manifest { line: i + 1, reason: format!("unknown split `{other}`") })
                }
            };
            records.push(FrameRecord {
                split,
                rgb: f[1].into(),
                rgb_flow: f[2].into(),
                lidar_flow: f[3].into(),
                mask: f[4].into(),
                depth: f.get(5).map(|s| s.to_string()),
            });
        }
        Ok(DatasetManifest { records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        DatasetManifest::parse(&ingest::read_text(path)?)
    }

    pub fn split(&self, which: Split) -> impl Iterator<Item = &FrameRecord> {
        self.records.iter().filter(move |r| r.split == which)
    }

    pub fn train_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.split(Split::Train).count() as f64 / self.records.len() as f64
    }
}

/// Resolves a manifest path against the manifest directory.
pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Chooses whole drives for training so the train frame count is as close
/// as possible to `fraction · total`. Drives are visited in a seeded order
/// and the first subset found for the best sum wins. Returns one flag per
/// input drive.
pub fn split_drives(frame_counts: &[usize], fraction: f64, seed: u64) -> Vec<bool> {
    let total: usize = frame_counts.iter().sum();
    let mut order: Vec<usize> = (0..frame_counts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // reach[s] = Some(step) at which sum s first became reachable
    let mut reach: Vec<Option<usize>> = vec![None; total + 1];
    let mut parent: Vec<usize> = vec![usize::MAX; total + 1];
    reach[0] = Some(0);
    for (step, &d) in order.iter().enumerate() {
        let c = frame_counts[d];
        for s in (c..=total).rev() {
            if reach[s].is_none() && reach[s - c].is_some_and(|k| k <= step) {
                reach[s] = Some(step + 1);
                parent[s] = step;
            }
        }
    }
    let target = fraction * total as f64;
    let best = (0..=total)
        .filter(|&s| reach[s].is_some())
        .min_by(|&a, &b| {
            let da = (a as f64 - target).abs();
            let db = (b as f64 - target).abs();
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .unwrap_or(0);

    let mut train = vec![false; frame_counts.len()];
    let mut s = best;
    while s > 0 {
        let step = parent[s];
        let d = order[step];
        train[d] = true;
        s -= frame_counts[d];
    }
    train
}

#[derive(Clone, Debug)]
pub struct ExportConfig {
    pub threshold: f64,
    pub split_seed: u64,
    pub velocity_mode: VelocityMode,
    pub train_fraction: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            threshold: DEFAULT_THRESHOLD,
            split_seed: 0,
            velocity_mode: VelocityMode::PoseDiff,
            train_fraction: TRAIN_FRACTION,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveSummary {
    pub name: String,
    pub frames: usize,
    pub split: Split,
    pub moving_labels: usize,
    pub static_labels: usize,
    pub moving_pixels: usize,
}

#[derive(Clone, Debug)]
pub struct ExportSummary {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    pub drives: Vec<DriveSummary>,
}

fn require(drive: &str, path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(AnnotationError::IncompleteDrive { drive: drive.into(), missing: path })
    }
}

/// Parses calibration, OXTS and tracklets of one drive.
pub fn load_drive(layout: &DriveLayout) -> Result<DriveData> {
    let name = layout.name();
    let cam_path = require(&name, layout.calib_cam_to_cam())?;
    let velo_path = require(&name, layout.calib_velo_to_cam())?;
    let ts_path = require(&name, layout.oxts_timestamps())?;
    let tr_path = require(&name, layout.tracklets())?;
    let frames = layout.frame_count().map_err(|_| AnnotationError::IncompleteDrive {
        drive: name.clone(),
        missing: layout.image(0),
    })?;
    if frames == 0 {
        return Err(AnnotationError::IncompleteDrive { drive: name, missing: layout.image(0) });
    }
    let (w, h) = image::image_dimensions(layout.image(0)).map_err(IngestError::from)?;
    let (cam, velo) = parse_calib(&ingest::read_text(cam_path)?, &ingest::read_text(velo_path)?)?;
    let camera = CameraModel::from_calib(&cam, &velo, (w as usize, h as usize))?;

    let timestamps = parse_timestamps(&ingest::read_text(ts_path)?)?;
    let mut oxts = Vec::with_capacity(frames);
    for f in 0..frames {
        let p = require(&name, layout.oxts(f))?;
        oxts.push(parse_oxts(&ingest::read_text(p)?)?);
    }
    if timestamps.len() < frames {
        return Err(AnnotationError::DimensionMismatch(format!(
            "{name}: {} timestamps for {frames} frames",
            timestamps.len()
        )));
    }
    let tracklets = parse_tracklets(&ingest::read_text(tr_path)?)?;
    Ok(DriveData { name, camera, oxts, timestamps: timestamps[..frames].to_vec(), tracklets })
}

fn frame_instances(layout: &DriveLayout, frame: usize, h: usize, w: usize, cats: &BTreeMap<(usize, u16), String>) -> Result<InstanceMaskSet> {
    let path = layout.instances(frame);
    if !path.is_file() {
        return Ok(InstanceMaskSet::empty(h, w));
    }
    let img = images::read_instance_png(&ingest::read_bytes(path)?)?;
    Ok(InstanceMaskSet::from_image(&img, frame, cats))
}

fn manifest_path(out_dir: &Path, p: &Path) -> String {
    if p.starts_with(out_dir) {
        DriveLayout::relative(out_dir, p)
    } else {
        p.to_string_lossy().replace('\\', "/")
    }
}

/// Labels every frame of every drive, writes `out/<drive>/mask/*.png`,
/// `out/<drive>/labels.txt` and `out/manifest.txt`.
pub fn export_dataset(drives: &[DriveLayout], out_dir: &Path, cfg: &ExportConfig) -> Result<ExportSummary> {
    let loaded: Vec<DriveData> = drives.iter().map(load_drive).collect::<Result<_>>()?;
    let counts: Vec<usize> = loaded.iter().map(|d| d.oxts.len()).collect();
    let train = split_drives(&counts, cfg.train_fraction, cfg.split_seed);

    let mut manifest = DatasetManifest::default();
    let mut summaries = Vec::new();
    for ((layout, data), &is_train) in drives.iter().zip(&loaded).zip(&train) {
        let split = if is_train { Split::Train } else { Split::Test };
        let per_frame = label_drive(data, cfg.threshold)?;
        let (w, h) = data.camera.image_size;
        let cats = match layout.instance_categories() {
            p if p.is_file() => images::parse_instance_categories(&ingest::read_text(p)?)?,
            _ => BTreeMap::new(),
        };
        let drive_out = out_dir.join(&data.name);

        let moving_pixels: Vec<usize> = per_frame
            .par_iter()
            .enumerate()
            .map(|(f, labels)| -> Result<usize> {
                let inst = frame_instances(layout, f, h, w, &cats)?;
                let mask = refine_mask(labels, &inst, h, w)?;
                let bytes = images::write_mask_png(&mask)?;
                ingest::write_bytes(drive_out.join("mask").join(format!("{}.png", frame_name(f))), &bytes)?;
                Ok(mask.count_moving())
            })
            .collect::<Result<_>>()?;

        let mut labels_txt = String::from("# frame tracklet speed_mps label u_min v_min u_max v_max\n");
        let (mut n_moving, mut n_static) = (0, 0);
        for l in per_frame.iter().flatten() {
            match l.label {
                MotionLabel::Moving => n_moving += 1,
                MotionLabel::Static => n_static += 1,
            }
            let b = &l.bbox2d;
            labels_txt.push_str(&format!(
                "{} {} {:.6} {} {:.3} {:.3} {:.3} {:.3}\n",
                l.frame_index, l.tracklet_id, l.speed_abs, l.label, b.u_min, b.v_min, b.u_max, b.v_max
            ));
        }
        ingest::write_bytes(drive_out.join("labels.txt"), labels_txt.as_bytes())?;

        for f in 0..data.oxts.len() {
            let depth = layout.depth(f);
            manifest.records.push(FrameRecord {
                split,
                rgb: manifest_path(out_dir, &layout.image(f)),
                rgb_flow: manifest_path(out_dir, &layout.rgb_flow(f)),
                lidar_flow: manifest_path(out_dir, &layout.lidar_flow(f)),
                mask: manifest_path(out_dir, &drive_out.join("mask").join(format!("{}.png", frame_name(f)))),
                depth: depth.is_file().then(|| manifest_path(out_dir, &depth)),
            });
        }
        summaries.push(DriveSummary {
            name: data.name.clone(),
            frames: data.oxts.len(),
            split,
            moving_labels: n_moving,
            static_labels: n_static,
            moving_pixels: moving_pixels.iter().sum(),
        });
    }
    let manifest_path = out_dir.join("manifest.txt");
    ingest::write_bytes(&manifest_path, manifest.to_text().as_bytes())?;
    Ok(ExportSummary { manifest, manifest_path, drives: summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox(u0: f64, v0: f64, u1: f64, v1: f64) -> BBox2d {
        BBox2d { u_min: u0, v_min: v0, u_max: u1, v_max: v1, all_behind: false }
    }

    fn label(b: BBox2d, label: MotionLabel) -> ObjectMotionLabel {
        ObjectMotionLabel { tracklet_id: 0, frame_index: 0, speed_abs: 0.0, label, bbox2d: b }
    }

    fn rect_instance(h: usize, w: usize, y: std::ops::Range<usize>, x: std::ops::Range<usize>) -> Instance {
        let mut mask = vec![false; h * w];
        for yy in y {
            for xx in x.clone() {
                mask[yy * w + xx] = true;
            }
        }
        Instance { category: "car".into(), mask }
    }

    #[test]
    fn classify() {
        assert_eq!(classify_motion(0.0, 1.0), MotionLabel::Static);
        assert_eq!(classify_motion(1.0, 1.0), MotionLabel::Static);
        assert_eq!(classify_motion(8.0, 1.0), MotionLabel::Moving);
    }

    #[test]
    fn contained_instance_copied() {
        let (h, w) = (20, 20);
        let inst = rect_instance(h, w, 5..9, 6..12);
        let set = InstanceMaskSet { height: h, width: w, instances: vec![inst.clone()] };
        let m = refine_mask(&[label(bbox(4.0, 3.0, 14.0, 11.0), MotionLabel::Moving)], &set, h, w).unwrap();
        let expect: Vec<u8> = inst.mask.iter().map(|&b| u8::from(b)).collect();
        assert_eq!(m.labels, expect);
    }

    #[test]
    fn weak_overlap_falls_back_to_box() {
        let (h, w) = (20, 20);
        // 10 instance columns, 3 of them inside the box: 30 % overlap
        let set = InstanceMaskSet { height: h, width: w, instances: vec![rect_instance(h, w, 2..4, 7..17)] };
        let m = refine_mask(&[label(bbox(0.0, 0.0, 10.0, 10.0), MotionLabel::Moving)], &set, h, w).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(m.get(y, x), u8::from(y < 10 && x < 10), "({y},{x})");
            }
        }
    }

    #[test]
    fn static_box_instance_dropped() {
        let (h, w) = (20, 30);
        let a = rect_instance(h, w, 2..6, 2..6);
        let b = rect_instance(h, w, 10..14, 20..25);
        let set = InstanceMaskSet { height: h, width: w, instances: vec![a.clone(), b] };
        let labels = [
            label(bbox(1.0, 1.0, 7.0, 7.0), MotionLabel::Moving),
            label(bbox(19.0, 9.0, 26.0, 15.0), MotionLabel::Static),
        ];
        let m = refine_mask(&labels, &set, h, w).unwrap();
        let expect: Vec<u8> = a.mask.iter().map(|&b| u8::from(b)).collect();
        assert_eq!(m.labels, expect);
    }

    #[test]
    fn refine_dimension_mismatch() {
        let set = InstanceMaskSet::empty(4, 4);
        assert!(matches!(refine_mask(&[], &set, 4, 5), Err(AnnotationError::DimensionMismatch(_))));
    }

    #[test]
    fn split_single_drive_goes_to_train() {
        assert_eq!(split_drives(&[10], 0.8, 7), vec![true]);
    }

    #[test]
    fn split_hits_exact_fraction_when_possible() {
        let counts = [30, 50, 20, 100, 40, 60];
        for seed in 0..5 {
            let t = split_drives(&counts, 0.8, seed);
            let train: usize = counts.iter().zip(&t).filter(|(_, &b)| b).map(|(c, _)| c).sum();
            assert_eq!(train, 240, "seed {seed}");
        }
    }

    #[test]
    fn manifest_round_trip() {
        let m = DatasetManifest {
            records: vec![
                FrameRecord {
                    split: Split::Train,
                    rgb: "a/image_02/data/0000000000.png".into(),
                    rgb_flow: "a/rgbflow/data/0000000000.flo".into(),
                    lidar_flow: "a/lidarflow/data/0000000000.png".into(),
                    mask: "a/mask/0000000000.png".into(),
                    depth: Some("a/depth/data/0000000000.png".into()),
                },
                FrameRecord {
                    split: Split::Test,
                    rgb: "b/x.png".into(),
                    rgb_flow: "b/y.flo".into(),
                    lidar_flow: "b/z.png".into(),
                    mask: "b/m.png".into(),
                    depth: None,
                },
            ],
        };
        assert_eq!(DatasetManifest::parse(&m.to_text()).unwrap(), m);
        assert!(DatasetManifest::parse("valid a b c d").is_err());
        assert!(DatasetManifest::parse("train a b c").is_err());
        assert_eq!(m.train_fraction(), 0.5);
    }
}
