//! Aligned per-frame inputs and their conversion to network tensors.

use std::path::{Path, PathBuf};

use fusemod_tensor::{Shape, Tensor};

use super::plan::{FusionPlan, SignalKind};
use super::{ModelError, Result};
use crate::annotation::{resolve, DatasetManifest, FrameRecord, Split};
use crate::ingest::{self, images, read_flow_file, CropWindow, FlowMap, MaskImage, Raster};

/// Scale applied to flow components (pixels) before they enter a network.
pub const FLOW_SCALE: f64 = 0.1;
/// Scale applied to depth (meters).
pub const DEPTH_SCALE: f64 = 1.0 / 50.0;

/// One frame's aligned signals. Colour is `H×W×3` in `[0, 1]`; depth is
/// `H×W×1` in meters with 0 for no return.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSample {
    pub rgb: Raster<f32>,
    pub rgb_next: Option<Raster<f32>>,
    pub rgb_flow: FlowMap,
    pub lidar_flow: FlowMap,
    pub depth: Option<Raster<f32>>,
    pub depth_next: Option<Raster<f32>>,
    pub mask: MaskImage,
}

impl FrameSample {
    pub fn height(&self) -> usize {
        self.mask.height
    }

    pub fn width(&self) -> usize {
        self.mask.width
    }

    /// Mirrors every signal left-right; horizontal flow changes sign.
    pub fn hflip(&self) -> FrameSample {
        fn raster(r: &Raster<f32>) -> Raster<f32> {
            let mut out = r.clone();
            for y in 0..r.height {
                for x in 0..r.width {
                    for c in 0..r.channels {
                        out.set(y, x, c, r.get(y, r.width - 1 - x, c));
                    }
                }
            }
            out
        }
        fn flow(f: &FlowMap) -> FlowMap {
            let mut out = f.clone();
            for y in 0..f.height {
                for x in 0..f.width {
                    let (d, s) = (y * f.width + x, y * f.width + f.width - 1 - x);
                    out.u[d] = -f.u[s];
                    out.v[d] = f.v[s];
                    out.valid[d] = f.valid[s];
                }
            }
            out
        }
        let mut mask = self.mask.clone();
        for y in 0..mask.height {
            for x in 0..mask.width {
                mask.set(y, x, self.mask.get(y, mask.width - 1 - x));
            }
        }
        FrameSample {
            rgb: raster(&self.rgb),
            rgb_next: self.rgb_next.as_ref().map(raster),
            rgb_flow: flow(&self.rgb_flow),
            lidar_flow: flow(&self.lidar_flow),
            depth: self.depth.as_ref().map(raster),
            depth_next: self.depth_next.as_ref().map(raster),
            mask,
        }
    }

    fn write_signal(&self, kind: SignalKind, out: &mut [f64], plane: usize) -> Result<()> {
        let missing = || ModelError::MissingSignal(kind.name().to_string());
        let put_raster = |r: &Raster<f32>, out: &mut [f64], f: &dyn Fn(f32) -> f64| {
            for c in 0..r.channels {
                for (i, o) in out[c * plane..(c + 1) * plane].iter_mut().enumerate() {
                    *o = f(r.data[i * r.channels + c]);
                }
            }
        };
        let put_flow = |fl: &FlowMap, out: &mut [f64]| {
            for i in 0..plane {
                let ok = fl.valid[i];
                out[i] = if ok { f64::from(fl.u[i]) * FLOW_SCALE } else { 0.0 };
                out[plane + i] = if ok { f64::from(fl.v[i]) * FLOW_SCALE } else { 0.0 };
            }
        };
        let rgb = |v: f32| f64::from(v) - 0.5;
        let depth = |v: f32| f64::from(v) * DEPTH_SCALE;
        match kind {
            SignalKind::Rgb | SignalKind::RgbT => put_raster(&self.rgb, out, &rgb),
            SignalKind::RgbT1 => put_raster(self.rgb_next.as_ref().ok_or_else(missing)?, out, &rgb),
            SignalKind::RgbFlow => put_flow(&self.rgb_flow, out),
            SignalKind::LidarFlow => put_flow(&self.lidar_flow, out),
            SignalKind::Depth | SignalKind::DepthT => put_raster(self.depth.as_ref().ok_or_else(missing)?, out, &depth),
            SignalKind::DepthT1 => put_raster(self.depth_next.as_ref().ok_or_else(missing)?, out, &depth),
        }
        Ok(())
    }
}

/// Stacks the samples into one `N×C×H×W` tensor per stream of `plan`.
pub fn stream_tensors(plan: &FusionPlan, samples: &[&FrameSample]) -> Result<Vec<Tensor>> {
    let first = samples.first().ok_or_else(|| ModelError::InputMismatch("empty batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let plane = h * w;
    let mut out = Vec::with_capacity(plan.streams().len());
    for stream in plan.streams() {
        let c: usize = stream.iter().map(|k| k.channels()).sum();
        let mut t = Tensor::zeros(Shape::new(samples.len(), c, h, w));
        for (n, s) in samples.iter().enumerate() {
            if (s.height(), s.width()) != (h, w) {
                return Err(ModelError::InputMismatch("samples in a batch differ in size".into()));
            }
            let mut ch = 0;
            for &k in stream {
                let start = (n * c + ch) * plane;
                s.write_signal(k, &mut t.data_mut()[start..start + k.channels() * plane], plane)?;
                ch += k.channels();
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Concatenated labels of the batch, `N·H·W` values in `{0, 1}`.
pub fn batch_targets(samples: &[&FrameSample]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.mask.labels.iter().copied()).collect()
}

/// Path of the following frame: the numeric file stem plus one, or `None`
/// when the stem is not a number.
pub fn next_frame_path(path: &Path) -> Option<PathBuf> {
    let stem = path.file_stem()?.to_str()?;
    let n: u64 = stem.parse().ok()?;
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    Some(path.with_file_name(format!("{:0width$}{ext}", n + 1, width = stem.len())))
}

fn rgb_to_float(img: Raster<u8>) -> Raster<f32> {
    img.map(|v| f32::from(v) / 255.0)
}

fn load_rgb(path: &Path) -> Result<Raster<f32>> {
    Ok(rgb_to_float(images::read_rgb_png(&ingest::read_bytes(path)?)?))
}

fn load_depth(path: &Path) -> Result<Raster<f32>> {
    Ok(images::read_depth_png(&ingest::read_bytes(path)?)?)
}

/// Frame `t+1` if it exists, otherwise frame `t` again (end of a drive).
fn next_or_same(path: &Path) -> PathBuf {
    next_frame_path(path).filter(|p| p.is_file()).unwrap_or_else(|| path.to_path_buf())
}

/// How loaded frames are cropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crop {
    /// Keep the full frame.
    None,
    /// Bottom rows, centred columns, of the given `(height, width)`.
    BottomCenter(usize, usize),
}

/// Loads one manifest record, reading only what `plan` needs.
pub fn load_sample(base: &Path, rec: &FrameRecord, plan: &FusionPlan, crop: Crop) -> Result<FrameSample> {
    let signals = plan.signals();
    let needs = |k: SignalKind| signals.contains(&k);
    let mask_bytes = ingest::read_bytes(resolve(base, &rec.mask))?;
    let mask = images::read_mask_png(&mask_bytes)?;
    let (h, w) = (mask.height, mask.width);

    let rgb_path = resolve(base, &rec.rgb);
    let rgb = load_rgb(&rgb_path)?;
    let rgb_next = if needs(SignalKind::RgbT1) { Some(load_rgb(&next_or_same(&rgb_path))?) } else { None };
    let flow = |p: &str, k: SignalKind| -> Result<FlowMap> {
        if needs(k) {
            Ok(read_flow_file(&resolve(base, p))?)
        } else {
            Ok(FlowMap::zeros(h, w))
        }
    };
    let rgb_flow = flow(&rec.rgb_flow, SignalKind::RgbFlow)?;
    let lidar_flow = flow(&rec.lidar_flow, SignalKind::LidarFlow)?;
    let any_depth = needs(SignalKind::Depth) || needs(SignalKind::DepthT) || needs(SignalKind::DepthT1);
    let depth_path = rec.depth.as_ref().map(|d| resolve(base, d));
    let (depth, depth_next) = match (&depth_path, any_depth) {
        (Some(p), true) => {
            let next = if needs(SignalKind::DepthT1) { Some(load_depth(&next_or_same(p))?) } else { None };
            (Some(load_depth(p)?), next)
        }
        (None, true) => return Err(ModelError::MissingSignal("depth".into())),
        _ => (None, None),
    };

    let sample = FrameSample { rgb, rgb_next, rgb_flow, lidar_flow, depth, depth_next, mask };
    check_dims(&sample)?;
    Ok(match crop {
        Crop::None => sample,
        Crop::BottomCenter(ch, cw) => {
            let win = CropWindow::bottom_center(h, w, ch, cw)?;
            FrameSample {
                rgb: sample.rgb.crop(win),
                rgb_next: sample.rgb_next.map(|r| r.crop(win)),
                rgb_flow: sample.rgb_flow.crop(win),
                lidar_flow: sample.lidar_flow.crop(win),
                depth: sample.depth.map(|r| r.crop(win)),
                depth_next: sample.depth_next.map(|r| r.crop(win)),
                mask: sample.mask.crop(win),
            }
        }
    })
}

fn check_dims(s: &FrameSample) -> Result<()> {
    let hw = (s.mask.height, s.mask.width);
    let mut dims = vec![("rgb", (s.rgb.height, s.rgb.width))];
    dims.push(("rgbflow", (s.rgb_flow.height, s.rgb_flow.width)));
    dims.push(("lidarflow", (s.lidar_flow.height, s.lidar_flow.width)));
    if let Some(d) = &s.depth {
        dims.push(("depth", (d.height, d.width)));
    }
    if let Some(r) = &s.rgb_next {
        dims.push(("rgb_t1", (r.height, r.width)));
    }
    if let Some(d) = &s.depth_next {
        dims.push(("depth_t1", (d.height, d.width)));
    }
    for (name, d) in dims {
        if d != hw {
            return Err(ModelError::InputMismatch(format!(
                "{name} is {}x{} but the mask is {}x{}",
                d.0, d.1, hw.0, hw.1
            )));
        }
    }
    Ok(())
}

/// Loads every record of one split.
pub fn load_split(manifest_path: &Path, split: Split, plan: &FusionPlan, crop: Crop) -> Result<Vec<FrameSample>> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.split(split).map(|r| load_sample(base, r, plan, crop)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(h: usize, w: usize) -> FrameSample {
        let rgb = Raster::new(h, w, 3, (0..h * w * 3).map(|i| i as f32 / (h * w * 3) as f32).collect()).unwrap();
        let mut flow = FlowMap::zeros(h, w);
        for i in 0..h * w {
            flow.u[i] = i as f32;
            flow.v[i] = -(i as f32);
        }
        flow.valid[0] = false;
        let mut mask = MaskImage::zeros(h, w);
        mask.set(0, w - 1, 1);
        FrameSample {
            rgb,
            rgb_next: None,
            rgb_flow: flow.clone(),
            lidar_flow: FlowMap::zeros(h, w),
            depth: Some(Raster::filled(h, w, 1, 25.0)),
            depth_next: None,
            mask,
        }
    }

    #[test]
    fn early_fusion_channel_order() {
        let s = sample(2, 3);
        let plan: FusionPlan = "(rgb x rgbflow) + depth".parse().unwrap();
        let t = stream_tensors(&plan, &[&s, &s]).unwrap();
        assert_eq!(t[0].shape(), Shape::new(2, 5, 2, 3));
        assert_eq!(t[1].shape(), Shape::new(2, 1, 2, 3));
        // channel 1 of rgb at pixel (0,1): interleaved index 1*3+1
        assert!((t[0].at(1, 1, 0, 1) - (f64::from(s.rgb.data[4]) - 0.5)).abs() < 1e-12);
        assert_eq!(t[0].at(0, 3, 0, 0), 0.0);
        assert!((t[0].at(0, 3, 1, 2) - 5.0 * FLOW_SCALE).abs() < 1e-12);
        assert!((t[0].at(0, 4, 1, 2) + 5.0 * FLOW_SCALE).abs() < 1e-12);
        assert!((t[1].at(0, 0, 1, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_signal() {
        let s = sample(2, 2);
        let plan: FusionPlan = "rgb_t x rgb_t1".parse().unwrap();
        assert!(matches!(stream_tensors(&plan, &[&s]), Err(ModelError::MissingSignal(_))));
    }

    #[test]
    fn hflip_is_an_involution_and_negates_u() {
        let s = sample(3, 4);
        let f = s.hflip();
        assert_eq!(f.mask.get(0, 0), 1);
        assert_eq!(f.rgb_flow.u[3], -0.0);
        assert!(!f.rgb_flow.valid[3]);
        assert_eq!(f.rgb_flow.u[0], -3.0);
        assert_eq!(f.hflip(), s);
    }

    #[test]
    fn next_frame() {
        assert_eq!(
            next_frame_path(Path::new("d/image_02/data/0000000009.png")).unwrap(),
            PathBuf::from("d/image_02/data/0000000010.png")
        );
        assert!(next_frame_path(Path::new("x/frame.png")).is_none());
    }
}
