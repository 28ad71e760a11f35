//! Confusion matrices, IoU, class weights, relative improvement and the
//! fps harness.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fusemod_tensor::{Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::{self, images, IngestError, MaskImage};
use crate::models::Model;

pub const CLASS_STATIC: usize = 0;
pub const CLASS_MOVING: usize = 1;
pub const WEIGHT_CONSTANT: f64 = 1.02;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: prediction {pred:?} vs truth {truth:?}")]
    DimensionMismatch { pred: (usize, usize), truth: (usize, usize) },

    #[error("IoU of class {0} is undefined: the class never occurs")]
    UndefinedIoU(usize),

    #[error("no training masks")]
    EmptySplit,

    #[error("baseline must be positive, got {0}")]
    NonPositiveBase(f64),

    #[error("no prediction for {0}")]
    MissingPrediction(PathBuf),

    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// `counts[truth][predicted]` over pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn update(&mut self, predicted: &MaskImage, truth: &MaskImage) -> Result<()> {
        if (predicted.height, predicted.width) != (truth.height, truth.width) {
            return Err(EvalError::DimensionMismatch {
                pred: (predicted.height, predicted.width),
                truth: (truth.height, truth.width),
            });
        }
        for (&p, &t) in predicted.labels.iter().zip(&truth.labels) {
            self.counts[usize::from(t)][usize::from(p)] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for t in 0..2 {
            for p in 0..2 {
                self.counts[t][p] += other.counts[t][p];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `TP / (TP + FP + FN)` for `class`.
    pub fn iou(&self, class: usize) -> Result<f64> {
        let other = 1 - class;
        let tp = self.counts[class][class];
        let fn_ = self.counts[class][other];
        let fp = self.counts[other][class];
        let denom = tp + fp + fn_;
        if denom == 0 {
            return Err(EvalError::UndefinedIoU(class));
        }
        Ok(tp as f64 / denom as f64)
    }

    /// Unweighted mean of the two class IoUs.
    pub fn miou(&self) -> Result<f64> {
        Ok((self.iou(CLASS_STATIC)? + self.iou(CLASS_MOVING)?) / 2.0)
    }
}

/// `100 · (new − base) / base`.
pub fn relative_improvement(new: f64, base: f64) -> Result<f64> {
    if !(base > 0.0) {
        return Err(EvalError::NonPositiveBase(base));
    }
    Ok(100.0 * (new - base) / base)
}

/// Background IoU implied by a two-class mean: `2·mIoU − moving`.
pub fn implied_background_iou(miou: f64, moving_iou: f64) -> f64 {
    2.0 * miou - moving_iou
}

/// `w_c = 1 / ln(c + p_c)` from pixel frequencies `p = (static, moving)`.
pub fn class_weights_from_frequencies(p: [f64; 2], c: f64) -> [f64; 2] {
    p.map(|pc| 1.0 / (c + pc).ln())
}

/// Class weights over all pixels of the given training masks.
pub fn class_weights<'a>(masks: impl IntoIterator<Item = &'a MaskImage>, c: f64) -> Result<[f64; 2]> {
    let (mut total, mut moving, mut n) = (0u64, 0u64, 0usize);
    for m in masks {
        total += m.labels.len() as u64;
        moving += m.count_moving() as u64;
        n += 1;
    }
    if n == 0 || total == 0 {
        return Err(EvalError::EmptySplit);
    }
    let pm = moving as f64 / total as f64;
    Ok(class_weights_from_frequencies([1.0 - pm, pm], c))
}

/// Forward-only timing of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub label: String,
    pub resolution: (usize, usize),
    pub warmup: usize,
    pub iterations: usize,
    pub fps: f64,
    pub latencies_ms: Vec<f64>,
}

impl BenchReport {
    /// `fps = iterations / total timed seconds`.
    pub fn from_latencies(label: &str, resolution: (usize, usize), warmup: usize, latencies: &[Duration]) -> Self {
        let total: f64 = latencies.iter().map(Duration::as_secs_f64).sum();
        BenchReport {
            label: label.to_string(),
            resolution,
            warmup,
            iterations: latencies.len(),
            fps: if total > 0.0 { latencies.len() as f64 / total } else { f64::INFINITY },
            latencies_ms: latencies.iter().map(|d| d.as_secs_f64() * 1e3).collect(),
        }
    }

    pub fn mean_latency_ms(&self) -> f64 {
        self.latencies_ms.iter().sum::<f64>() / self.latencies_ms.len().max(1) as f64
    }

    pub fn to_record(&self) -> String {
        format!(
            "model=\"{}\" height={} width={} warmup={} iterations={} fps={:.3} mean_ms={:.3}",
            self.label,
            self.resolution.0,
            self.resolution.1,
            self.warmup,
            self.iterations,
            self.fps,
            self.mean_latency_ms()
        )
    }
}

/// Times `iters` calls of `f` after `warmup` untimed calls.
pub fn time_iterations<E>(warmup: usize, iters: usize, mut f: impl FnMut() -> Result<(), E>) -> Result<Vec<Duration>, E> {
    for _ in 0..warmup {
        f()?;
    }
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t = Instant::now();
        f()?;
        out.push(t.elapsed());
    }
    Ok(out)
}

/// Single-sample eval-mode forward passes on random inputs at
/// `(height, width)`.
pub fn bench_fps(
    model: &Model,
    label: &str,
    resolution: (usize, usize),
    warmup: usize,
    iters: usize,
) -> crate::models::Result<BenchReport> {
    let (h, w) = resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs: Vec<Tensor> = model
        .plan
        .stream_channels()
        .iter()
        .map(|&c| Tensor::randn(Shape::new(1, c, h, w), 1.0, &mut rng))
        .collect();
    let lat = time_iterations(warmup, iters, || model.infer(&inputs).map(|_| ()))?;
    Ok(BenchReport::from_latencies(label, resolution, warmup, &lat))
}

/// One row of an IoU table.
#[derive(Clone, Debug, PartialEq)]
pub struct IouRow {
    pub label: String,
    pub miou: Option<f64>,
    pub moving_iou: Option<f64>,
}

impl IouRow {
    pub fn from_matrix(label: &str, cm: &ConfusionMatrix) -> Self {
        IouRow { label: label.to_string(), miou: cm.miou().ok(), moving_iou: cm.iou(CLASS_MOVING).ok() }
    }

    pub fn to_record(&self) -> String {
        format!("type=\"{}\" miou={} moving_iou={}", self.label, pct(self.miou), pct(self.moving_iou))
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v))
}

/// Columns `Type | mIoU | Moving IoU`, values in percent.
pub fn format_iou_table(rows: &[IouRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(4);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>7}  {:>10}", "Type", "mIoU", "Moving IoU");
    let _ = writeln!(s, "{}", "-".repeat(width + 21));
    for r in rows {
        let _ = writeln!(s, "{:<width$}  {:>7}  {:>10}", r.label, pct(r.miou), pct(r.moving_iou));
    }
    s
}

/// Columns `Model | fps | ms`.
pub fn format_bench_table(reports: &[BenchReport]) -> String {
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>9}  {:>9}", "Model", "fps", "ms/frame");
    let _ = writeln!(s, "{}", "-".repeat(width + 22));
    for r in reports {
        let _ = writeln!(s, "{:<width$}  {:>9.2}  {:>9.2}", r.label, r.fps, r.mean_latency_ms());
    }
    s
}

fn collect_pngs(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|source| IngestError::Io { path: dir.to_path_buf(), source })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect_pngs(root, &p, out)?;
        } else if p.extension().is_some_and(|e| e == "png") {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Compares every mask PNG under `truth_dir` with the same relative path
/// under `pred_dir`.
pub fn compare_mask_dirs(pred_dir: &Path, truth_dir: &Path) -> Result<ConfusionMatrix> {
    let mut rel = Vec::new();
    collect_pngs(truth_dir, truth_dir, &mut rel)?;
    let mut cm = ConfusionMatrix::default();
    for r in rel {
        let pred_path = pred_dir.join(&r);
        if !pred_path.is_file() {
            return Err(EvalError::MissingPrediction(pred_path));
        }
        let truth = images::read_mask_png(&ingest::read_bytes(truth_dir.join(&r))?)?;
        let pred = images::read_mask_png(&ingest::read_bytes(pred_path)?)?;
        cm.update(&pred, &truth)?;
    }
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(h: usize, w: usize, labels: &[u8]) -> MaskImage {
        MaskImage::new(h, w, labels.to_vec()).unwrap()
    }

    #[test]
    fn identical_masks() {
        let m = mask(2, 3, &[0, 1, 1, 0, 0, 1]);
        let mut cm = ConfusionMatrix::default();
        cm.update(&m, &m).unwrap();
        assert_eq!(cm.counts, [[3, 0], [0, 3]]);
        assert_eq!(cm.iou(CLASS_MOVING).unwrap(), 1.0);
        assert_eq!(cm.miou().unwrap(), 1.0);
    }

    #[test]
    fn hand_counted() {
        // truth: 4 moving px out of 8; prediction hits 2 of them and 1 static px
        let truth = mask(2, 4, &[1, 1, 1, 1, 0, 0, 0, 0]);
        let pred = mask(2, 4, &[1, 1, 0, 0, 1, 0, 0, 0]);
        let mut cm = ConfusionMatrix::default();
        cm.update(&pred, &truth).unwrap();
        assert_eq!(cm.counts[1][1], 2);
        assert_eq!(cm.counts[1][0], 2);
        assert_eq!(cm.counts[0][1], 1);
        assert!((cm.iou(CLASS_MOVING).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let mut cm = ConfusionMatrix::default();
        assert!(matches!(cm.update(&mask(1, 2, &[0, 0]), &mask(2, 1, &[0, 0])), Err(EvalError::DimensionMismatch { .. })));
        cm.update(&mask(1, 2, &[0, 0]), &mask(1, 2, &[0, 0])).unwrap();
        assert!(matches!(cm.iou(CLASS_MOVING), Err(EvalError::UndefinedIoU(1))));
        assert!(matches!(relative_improvement(1.0, 0.0), Err(EvalError::NonPositiveBase(_))));
        assert!(matches!(class_weights(std::iter::empty(), WEIGHT_CONSTANT), Err(EvalError::EmptySplit)));
    }

    #[test]
    fn weights() {
        let [a, b] = class_weights_from_frequencies([0.5, 0.5], WEIGHT_CONSTANT);
        assert!((a - 1.0 / 1.52f64.ln()).abs() < 1e-15 && a == b);
        let all_static = [mask(1, 4, &[0, 0, 0, 0])];
        let w = class_weights(&all_static, WEIGHT_CONSTANT).unwrap();
        assert!((w[1] - 1.0 / 1.02f64.ln()).abs() < 1e-12);
        assert!(w.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn fps_arithmetic() {
        let r = BenchReport::from_latencies("m", (1, 1), 0, &[Duration::from_millis(50); 10]);
        assert!((r.fps - 20.0).abs() < 1e-9);
        assert!((r.mean_latency_ms() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn tables() {
        let rows = [IouRow { label: "rgb".into(), miou: Some(0.712), moving_iou: Some(0.435) }];
        let t = format_iou_table(&rows);
        assert!(t.contains("71.20") && t.contains("43.50") && t.starts_with("Type"));
        assert_eq!(rows[0].to_record(), "type=\"rgb\" miou=71.20 moving_iou=43.50");
    }
}
