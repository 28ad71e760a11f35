use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use fusemod_core::annotation::{resolve, DatasetManifest};
use fusemod_core::eval::{compare_mask_dirs, format_iou_table, ConfusionMatrix, IouRow};
use fusemod_core::ingest::{images, read_bytes};
use fusemod_core::models::{evaluate, load_sample};

use super::infer::{prediction_path, records};
use super::load_model;
use crate::config::{config_err, RunConfig};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted masks (as written by `infer`).
    #[arg(long, conflicts_with = "checkpoint")]
    pub pred: Option<PathBuf>,

    /// Ground-truth mask directory; compared file by file with `--pred`.
    /// Without it, ground truth comes from the manifest.
    #[arg(long, requires = "pred")]
    pub truth: Option<PathBuf>,

    /// Evaluate a checkpoint directly on the manifest split.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// `train`, `test` or `all`.
    #[arg(long)]
    pub split: Option<String>,

    #[arg(long)]
    pub crop: Option<String>,

    /// Row label in the table.
    #[arg(long)]
    pub label: Option<String>,
}

fn manifest_with_base(cfg: &RunConfig) -> anyhow::Result<(DatasetManifest, PathBuf)> {
    let path = cfg.manifest();
    let manifest = DatasetManifest::read(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok((manifest, path.parent().unwrap_or(Path::new(".")).to_path_buf()))
}

pub fn run(mut cfg: RunConfig, args: EvalArgs) -> anyhow::Result<()> {
    if let Some(s) = args.split {
        cfg.eval.split = s;
    }
    if let Some(c) = args.crop {
        cfg.model.crop = c;
    }
    if let Some(p) = args.manifest {
        cfg.paths.manifest = Some(p);
    }
    let (label, cm) = match (&args.pred, &args.truth, &args.checkpoint) {
        (Some(pred), Some(truth), _) => ("predictions".to_string(), compare_mask_dirs(pred, truth)?),
        (Some(pred), None, _) => {
            let (manifest, base) = manifest_with_base(&cfg)?;
            let mut cm = ConfusionMatrix::default();
            for r in records(&cfg, &manifest)? {
                let truth = images::read_mask_png(&read_bytes(resolve(&base, &r.mask))?)?;
                let p = images::read_mask_png(&read_bytes(prediction_path(pred, &r.mask))?)?;
                cm.update(&p, &truth)?;
            }
            ("predictions".to_string(), cm)
        }
        (None, _, Some(ckpt)) => {
            let model = load_model(ckpt)?;
            let crop = cfg.crop()?;
            let (manifest, base) = manifest_with_base(&cfg)?;
            let samples = records(&cfg, &manifest)?
                .iter()
                .map(|r| load_sample(&base, r, &model.plan, crop))
                .collect::<Result<Vec<_>, _>>()?;
            (model.plan.to_string(), evaluate(&model, &samples)?)
        }
        (None, _, None) => return Err(config_err("eval needs --pred or --checkpoint")),
    };
    let row = IouRow::from_matrix(args.label.as_deref().unwrap_or(&label), &cm);
    print!("{}", format_iou_table(std::slice::from_ref(&row)));
    println!("{}", row.to_record());
    Ok(())
}
