use std::path::{Component, Path, PathBuf};

use anyhow::Context;
use clap::Args;
use fusemod_core::annotation::{DatasetManifest, FrameRecord};
use fusemod_core::ingest::{images, write_bytes};
use fusemod_core::models::{load_sample, predict_all};

use super::load_model;
use crate::config::RunConfig;

/// Frames loaded at once.
const CHUNK: usize = 32;

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// Predicted masks are written here under each record's mask path.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// `train`, `test` or `all`.
    #[arg(long)]
    pub split: Option<String>,

    #[arg(long)]
    pub crop: Option<String>,
}

/// Where the prediction for `mask` goes under `out`: the manifest-relative
/// path, or the last three components of an absolute one.
pub fn prediction_path(out: &Path, mask: &str) -> PathBuf {
    let p = Path::new(mask);
    if p.is_relative() && !p.components().any(|c| c == Component::ParentDir) {
        return out.join(p);
    }
    let tail: Vec<_> = p.components().rev().take(3).collect();
    tail.into_iter().rev().fold(out.to_path_buf(), |acc, c| acc.join(c))
}

pub fn records(cfg: &RunConfig, manifest: &DatasetManifest) -> anyhow::Result<Vec<FrameRecord>> {
    Ok(match cfg.split()? {
        Some(s) => manifest.split(s).cloned().collect(),
        None => manifest.records.clone(),
    })
}

pub fn run(mut cfg: RunConfig, args: InferArgs) -> anyhow::Result<()> {
    if let Some(s) = args.split {
        cfg.eval.split = s;
    }
    if let Some(c) = args.crop {
        cfg.model.crop = c;
    }
    if let Some(p) = args.manifest {
        cfg.paths.manifest = Some(p);
    }
    let out = args.out.unwrap_or_else(|| cfg.paths.out_dir.join("pred"));
    let crop = cfg.crop()?;
    let model = load_model(&args.checkpoint)?;
    let manifest_path = cfg.manifest();
    let manifest = DatasetManifest::read(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let recs = records(&cfg, &manifest)?;

    for chunk in recs.chunks(CHUNK) {
        let samples = chunk
            .iter()
            .map(|r| load_sample(base, r, &model.plan, crop).with_context(|| format!("loading {}", r.rgb)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        for (rec, mask) in chunk.iter().zip(predict_all(&model, &samples)?) {
            write_bytes(prediction_path(&out, &rec.mask), &images::write_mask_png(&mask)?)?;
        }
    }
    println!("plan=\"{}\" frames={} out={}", model.plan, recs.len(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_paths() {
        let out = Path::new("/o");
        assert_eq!(prediction_path(out, "d/mask/0.png"), PathBuf::from("/o/d/mask/0.png"));
        assert_eq!(prediction_path(out, "/data/x/d/mask/0.png"), PathBuf::from("/o/d/mask/0.png"));
        assert_eq!(prediction_path(out, "../d/mask/0.png"), PathBuf::from("/o/d/mask/0.png"));
    }
}
