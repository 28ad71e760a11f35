use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{degrade_sample, mix, value_noise, DegradeSpec, Result, SynthError};
use crate::annotation::{split_drives, DatasetManifest, FrameRecord, Split};
use crate::ingest::{self, frame_name, images, write_flow, FlowFormat, FlowMap, MaskImage, Raster};
use crate::models::FrameSample;

/// A textured rectangle. Positions are in pixels at frame 0; `vx`, `vy`
/// are pixels per frame relative to the background, so an object with
/// zero velocity drifts with the ego flow and is not in the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
    pub vx: i64,
    pub vy: i64,
    /// Amplitude of the object's texture around its base colour.
    pub contrast: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Painted in order; later objects occlude earlier ones.
    pub objects: Vec<ObjectSpec>,
    /// Background displacement (px/frame) caused by camera motion.
    pub ego_flow: (i64, i64),
    /// Lattice spacing (px) of the background texture.
    pub background_scale: f32,
    /// Fraction of pixels carrying a LiDAR flow and depth sample.
    pub lidar_fraction: f64,
    pub frames: usize,
}

impl SceneSpec {
    /// Random scene with `moving` moving and `parked` static objects, all
    /// staying inside the image for `frames + 1` frames.
    pub fn random(seed: u64, height: usize, width: usize, moving: usize, parked: usize, frames: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x5CE7E));
        let ego_flow = (rng.random_range(-1..=1), 0);
        let span = frames as i64;
        let mut objects = Vec::with_capacity(moving + parked);
        for k in 0..moving + parked {
            let is_moving = k < moving;
            let w = rng.random_range(width / 8..=width / 4).max(4);
            let h = rng.random_range(height / 5..=height * 2 / 5).max(4);
            let (vx, vy) = if is_moving {
                loop {
                    let v = (rng.random_range(-3i64..=3), rng.random_range(-1i64..=1));
                    if v.0.abs() >= 2 && (v.0 + ego_flow.0) != 0 {
                        break v;
                    }
                }
            } else {
                (0, 0)
            };
            let (dx, dy) = ((vx + ego_flow.0) * span, (vy + ego_flow.1) * span);
            let x_lo = (-dx).max(0);
            let x_hi = (width as i64 - w as i64 - dx.max(0)).max(x_lo);
            let y_lo = (-dy).max(0);
            let y_hi = (height as i64 - h as i64 - dy.max(0)).max(y_lo);
            objects.push(ObjectSpec {
                x0: rng.random_range(x_lo..=x_hi),
                y0: rng.random_range(y_lo..=y_hi),
                width: w,
                height: h,
                vx,
                vy,
                contrast: rng.random_range(0.2..0.45),
            });
        }
        // shuffle paint order so moving objects are not always underneath
        for i in (1..objects.len()).rev() {
            let j = rng.random_range(0..=i);
            objects.swap(i, j);
        }
        SceneSpec {
            seed,
            height,
            width,
            objects,
            ego_flow,
            background_scale: 6.0,
            lidar_fraction: 0.15,
            frames,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lidar_fraction > 0.0 && self.lidar_fraction <= 1.0) {
            return Err(SynthError::InvalidSpec(format!("lidar fraction {}", self.lidar_fraction)));
        }
        if self.height == 0 || self.width == 0 || self.frames == 0 {
            return Err(SynthError::InvalidSpec("empty image or no frames".into()));
        }
        if !(self.background_scale > 0.0) {
            return Err(SynthError::InvalidSpec("background scale must be positive".into()));
        }
        for (index, o) in self.objects.iter().enumerate() {
            if o.width == 0 || o.height == 0 {
                return Err(SynthError::InvalidSpec(format!("object {index} is empty")));
            }
            for frame in [0, self.frames] {
                let (x, y) = self.position(o, frame);
                if x < 0 || y < 0 || x + o.width as i64 > self.width as i64 || y + o.height as i64 > self.height as i64 {
                    return Err(SynthError::ObjectOutOfBounds { index, frame, height: self.height, width: self.width });
                }
            }
        }
        Ok(())
    }

    /// Top-left corner of `o` at frame `t`.
    pub fn position(&self, o: &ObjectSpec, t: usize) -> (i64, i64) {
        let t = t as i64;
        (o.x0 + t * (o.vx + self.ego_flow.0), o.y0 + t * (o.vy + self.ego_flow.1))
    }

    /// Index of the topmost object covering pixel `(x, y)` at frame `t`.
    fn cover(&self, t: usize, x: i64, y: i64) -> Option<usize> {
        self.objects.iter().enumerate().rev().find_map(|(k, o)| {
            let (px, py) = self.position(o, t);
            (x >= px && x < px + o.width as i64 && y >= py && y < py + o.height as i64).then_some(k)
        })
    }

    fn render(&self, t: usize) -> (Raster<f32>, Vec<Option<usize>>) {
        let (h, w) = (self.height, self.width);
        let mut img = Raster::filled(h, w, 3, 0.0f32);
        let mut owner = vec![None; h * w];
        let (ex, ey) = (t as i64 * self.ego_flow.0, t as i64 * self.ego_flow.1);
        let bg_seed = mix(self.seed ^ 0xB6);
        for y in 0..h {
            for x in 0..w {
                let k = self.cover(t, x as i64, y as i64);
                owner[y * w + x] = k;
                for c in 0..3u64 {
                    let v = match k {
                        None => {
                            let (wx, wy) = ((x as i64 - ex) as f32, (y as i64 - ey) as f32);
                            0.15 + 0.55 * value_noise(bg_seed, wx, wy, self.background_scale, c)
                                + 0.2 * value_noise(bg_seed ^ 1, wx, wy, self.background_scale / 3.0, c)
                        }
                        Some(k) => {
                            let o = &self.objects[k];
                            let (px, py) = self.position(o, t);
                            let (lx, ly) = ((x as i64 - px) as f32, (y as i64 - py) as f32);
                            let oseed = mix(self.seed ^ mix(k as u64 + 0x0B));
                            let base = 0.2 + 0.6 * super::lattice(oseed, 0, 0, c);
                            base + o.contrast * (value_noise(oseed, lx, ly, 4.0, c) - 0.5)
                        }
                    };
                    img.set(y, x, c as usize, v.clamp(0.0, 1.0));
                }
            }
        }
        (img, owner)
    }

    fn depth_at(&self, y: usize, owner: Option<usize>) -> f32 {
        match owner {
            Some(k) => 8.0 + 2.0 * k as f32,
            // ground plane: farther towards the top of the image
            None => 5.0 + 45.0 * (1.0 - y as f32 / self.height as f32),
        }
    }
}

/// Renders frames `0..frames`, each with the following frame, exact flow,
/// sparse LiDAR flow and depth, and the motion mask.
pub fn gen_scene(spec: &SceneSpec) -> Result<Vec<FrameSample>> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let rendered: Vec<_> = (0..=spec.frames).map(|t| spec.render(t)).collect();
    let mut out = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let (rgb, owner) = &rendered[t];
        let mut flow = FlowMap::zeros(h, w);
        let mut mask = MaskImage::zeros(h, w);
        let mut lidar = FlowMap::zeros(h, w);
        let mut depth = Raster::filled(h, w, 1, 0.0f32);
        let mut depth_next = Raster::filled(h, w, 1, 0.0f32);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed ^ mix(t as u64 + 0x11D)));
        let next_owner = &rendered[t + 1].1;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (u, v, moving) = match owner[i] {
                    Some(k) => {
                        let o = &spec.objects[k];
                        ((o.vx + spec.ego_flow.0) as f32, (o.vy + spec.ego_flow.1) as f32, o.vx != 0 || o.vy != 0)
                    }
                    None => (spec.ego_flow.0 as f32, spec.ego_flow.1 as f32, false),
                };
                flow.u[i] = u;
                flow.v[i] = v;
                mask.labels[i] = u8::from(moving);
                let sampled = rng.random_bool(spec.lidar_fraction);
                lidar.valid[i] = sampled;
                if sampled {
                    lidar.u[i] = u;
                    lidar.v[i] = v;
                    depth.set(y, x, 0, spec.depth_at(y, owner[i]));
                    depth_next.set(y, x, 0, spec.depth_at(y, next_owner[i]));
                } else {
                    lidar.u[i] = 0.0;
                    lidar.v[i] = 0.0;
                }
            }
        }
        out.push(FrameSample {
            rgb: rgb.clone(),
            rgb_next: Some(rendered[t + 1].0.clone()),
            rgb_flow: flow,
            lidar_flow: lidar,
            depth: Some(depth),
            depth_next: Some(depth_next),
            mask,
        });
    }
    Ok(out)
}

fn to_u8(r: &Raster<f32>) -> Raster<u8> {
    r.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Writes frames in the drive layout used by exported datasets:
/// `image_02/data`, `rgbflow/data` (.flo), `lidarflow/data` (16-bit PNG),
/// `depth/data`, `mask/`. Returns manifest records relative to `base`.
pub fn write_scene(frames: &[FrameSample], base: &Path, drive: &str, split: Split) -> Result<Vec<FrameRecord>> {
    let root = base.join(drive);
    let mut records = Vec::with_capacity(frames.len());
    for (t, f) in frames.iter().enumerate() {
        let name = frame_name(t);
        let rel = |sub: &str, ext: &str| format!("{drive}/{sub}/{name}.{ext}");
        ingest::write_bytes(root.join(format!("image_02/data/{name}.png")), &images::write_rgb_png(&to_u8(&f.rgb))?)?;
        ingest::write_bytes(root.join(format!("rgbflow/data/{name}.flo")), &write_flow(&f.rgb_flow, FlowFormat::Flo)?)?;
        ingest::write_bytes(
            root.join(format!("lidarflow/data/{name}.png")),
            &write_flow(&f.lidar_flow, FlowFormat::KittiPng16)?,
        )?;
        ingest::write_bytes(root.join(format!("mask/{name}.png")), &images::write_mask_png(&f.mask)?)?;
        let depth = f.depth.as_ref().map(|d| -> Result<String> {
            ingest::write_bytes(root.join(format!("depth/data/{name}.png")), &images::write_depth_png(d)?)?;
            Ok(rel("depth/data", "png"))
        });
        records.push(FrameRecord {
            split,
            rgb: rel("image_02/data", "png"),
            rgb_flow: rel("rgbflow/data", "flo"),
            lidar_flow: rel("lidarflow/data", "png"),
            mask: format!("{drive}/mask/{name}.png"),
            depth: depth.transpose()?,
        });
        // the last frame's successor, so temporal plans can read frame t+1
        if t + 1 == frames.len() {
            let next = frame_name(t + 1);
            if let Some(r) = &f.rgb_next {
                ingest::write_bytes(root.join(format!("image_02/data/{next}.png")), &images::write_rgb_png(&to_u8(r))?)?;
            }
            if let Some(d) = &f.depth_next {
                ingest::write_bytes(root.join(format!("depth/data/{next}.png")), &images::write_depth_png(d)?)?;
            }
        }
    }
    Ok(records)
}

/// Generates every scene, optionally degrades it, splits scenes into
/// train and test by frame count and writes them plus `manifest.txt`
/// under `base`. Scene `k` is stored as drive `scene_kkkk`.
pub fn write_scene_dataset(
    scenes: &[SceneSpec],
    base: &Path,
    degrade: Option<&DegradeSpec>,
    train_fraction: f64,
    split_seed: u64,
) -> Result<DatasetManifest> {
    let counts: Vec<usize> = scenes.iter().map(|s| s.frames).collect();
    let train = split_drives(&counts, train_fraction, split_seed);
    let mut records = Vec::new();
    for (k, (spec, &is_train)) in scenes.iter().zip(&train).enumerate() {
        let mut frames = gen_scene(spec)?;
        if let Some(d) = degrade {
            frames = frames
                .iter()
                .enumerate()
                .map(|(t, f)| degrade_sample(f, d, mix(spec.seed) ^ t as u64))
                .collect::<Result<_>>()?;
        }
        let split = if is_train { Split::Train } else { Split::Test };
        records.extend(write_scene(&frames, base, &format!("scene_{k:04}"), split)?);
    }
    let manifest = DatasetManifest { records };
    ingest::write_bytes(base.join("manifest.txt"), manifest.to_text().as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_square(vx: i64, vy: i64, ego: (i64, i64)) -> SceneSpec {
        SceneSpec {
            seed: 3,
            height: 24,
            width: 40,
            objects: vec![ObjectSpec { x0: 8, y0: 6, width: 8, height: 8, vx, vy, contrast: 0.3 }],
            ego_flow: ego,
            background_scale: 5.0,
            lidar_fraction: 0.5,
            frames: 3,
        }
    }

    #[test]
    fn square_flow_and_mask() {
        let frames = gen_scene(&one_square(3, 0, (0, 0))).unwrap();
        let f = &frames[1];
        // square occupies x 11..19, y 6..14 at frame 1
        for y in 0..24 {
            for x in 0..40 {
                let inside = (11..19).contains(&x) && (6..14).contains(&y);
                let i = y * 40 + x;
                assert_eq!(f.rgb_flow.u[i], if inside { 3.0 } else { 0.0 });
                assert_eq!(f.rgb_flow.v[i], 0.0);
                assert_eq!(f.mask.labels[i], u8::from(inside));
            }
        }
    }

    #[test]
    fn static_object_not_in_mask_and_moves_with_ego() {
        let frames = gen_scene(&one_square(0, 0, (1, 0))).unwrap();
        assert!(frames.iter().all(|f| f.mask.count_moving() == 0));
        assert!(frames[0].rgb_flow.u.iter().all(|&u| u == 1.0));
    }

    #[test]
    fn warping_by_flow_reproduces_next_frame() {
        let spec = SceneSpec::random(4, 48, 96, 2, 2, 3);
        let (h, w) = (48i64, 96i64);
        for (t, f) in gen_scene(&spec).unwrap().iter().enumerate() {
            let next = f.rgb_next.as_ref().unwrap();
            let mut checked = 0;
            for y in 0..h {
                for x in 0..w {
                    let i = (y * w + x) as usize;
                    let (tx, ty) = (x + f.rgb_flow.u[i] as i64, y + f.rgb_flow.v[i] as i64);
                    if tx < 0 || ty < 0 || tx >= w || ty >= h {
                        continue;
                    }
                    // occluded: a different layer covers the target
                    if spec.cover(t, x, y) != spec.cover(t + 1, tx, ty) {
                        continue;
                    }
                    for c in 0..3 {
                        assert_eq!(f.rgb.get(y as usize, x as usize, c), next.get(ty as usize, tx as usize, c));
                    }
                    checked += 1;
                }
            }
            assert!(checked > (h * w / 2) as usize);
        }
    }

    #[test]
    fn lidar_fraction_within_three_sigma() {
        let spec = SceneSpec { lidar_fraction: 0.15, ..SceneSpec::random(8, 64, 128, 1, 1, 2) };
        for f in gen_scene(&spec).unwrap() {
            let n = f.lidar_flow.len() as f64;
            let sd = (0.15 * 0.85 / n).sqrt();
            assert!((f.lidar_flow.valid_fraction() - 0.15).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn deterministic() {
        let spec = SceneSpec::random(11, 32, 64, 2, 2, 4);
        assert_eq!(gen_scene(&spec).unwrap(), gen_scene(&spec).unwrap());
    }

    #[test]
    fn out_of_bounds() {
        let spec = one_square(12, 0, (0, 0));
        assert!(matches!(gen_scene(&spec), Err(SynthError::ObjectOutOfBounds { index: 0, frame: 3, .. })));
    }

    #[test]
    fn random_scenes_are_valid() {
        for seed in 0..50 {
            let spec = SceneSpec::random(seed, 64, 128, 2, 2, 5);
            spec.validate().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }

    #[test]
    fn dataset_round_trips_through_loader() {
        use crate::models::{load_split, Crop, FusionPlan};
        let dir = tempfile::tempdir().unwrap();
        let scenes: Vec<_> = (0..3).map(|s| SceneSpec::random(s, 32, 64, 1, 1, 2)).collect();
        let m = write_scene_dataset(&scenes, dir.path(), None, 0.67, 1).unwrap();
        assert_eq!(m.records.len(), 6);
        let plan = FusionPlan::three_stream();
        let train = load_split(&dir.path().join("manifest.txt"), Split::Train, &plan, Crop::None).unwrap();
        let test = load_split(&dir.path().join("manifest.txt"), Split::Test, &plan, Crop::None).unwrap();
        assert_eq!((train.len(), test.len()), (4, 2));
        let original = gen_scene(&scenes[0]).unwrap();
        let all: Vec<_> = train.iter().chain(&test).collect();
        let loaded = all.iter().find(|f| f.mask == original[0].mask).expect("scene 0 frame 0 present");
        assert_eq!(loaded.rgb_flow, original[0].rgb_flow);
        assert_eq!(loaded.lidar_flow.valid, original[0].lidar_flow.valid);
        assert!(loaded.rgb.data.iter().zip(&original[0].rgb.data).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-6));
    }
}
