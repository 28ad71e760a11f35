use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use fusemod_core::annotation::export_dataset;
use fusemod_core::ingest::DriveLayout;

use crate::config::RunConfig;

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    /// Drive directories, or directories holding drives. Defaults to `paths.data_root`.
    pub drives: Vec<PathBuf>,

    /// Output directory for masks, labels and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Speed threshold (m/s) above which an object is Moving.
    #[arg(long)]
    pub threshold: Option<f64>,

    #[arg(long)]
    pub split_seed: Option<u64>,

    /// `pose_diff` or `oxts`.
    #[arg(long)]
    pub velocity_mode: Option<String>,
}

fn is_drive(p: &std::path::Path) -> bool {
    p.join("tracklet_labels.xml").is_file() || p.join("image_02").is_dir()
}

/// Expands parent directories into the drives they contain, sorted by name.
fn expand(roots: &[PathBuf]) -> anyhow::Result<Vec<DriveLayout>> {
    let mut out = Vec::new();
    for root in roots {
        if is_drive(root) || !root.is_dir() {
            out.push(DriveLayout::new(root));
            continue;
        }
        let mut children: Vec<PathBuf> = std::fs::read_dir(root)
            .with_context(|| format!("listing {}", root.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && is_drive(p))
            .collect();
        children.sort();
        if children.is_empty() {
            out.push(DriveLayout::new(root));
        }
        out.extend(children.into_iter().map(DriveLayout::new));
    }
    Ok(out)
}

pub fn run(mut cfg: RunConfig, args: AnnotateArgs) -> anyhow::Result<()> {
    if let Some(t) = args.threshold {
        cfg.annotation.threshold = t;
    }
    if let Some(s) = args.split_seed {
        cfg.annotation.split_seed = s;
    }
    if let Some(m) = args.velocity_mode {
        cfg.annotation.velocity_mode = m;
    }
    let export = cfg.export()?;
    let out = args.out.unwrap_or_else(|| cfg.paths.out_dir.clone());
    let roots = if args.drives.is_empty() { vec![cfg.paths.data_root.clone()] } else { args.drives };
    let drives = expand(&roots)?;
    log::info!("annotating {} drives at threshold {} m/s", drives.len(), export.threshold);

    let summary = export_dataset(&drives, &out, &export)?;
    for d in &summary.drives {
        println!(
            "drive={} split={} frames={} moving={} static={} moving_px={}",
            d.name, d.split, d.frames, d.moving_labels, d.static_labels, d.moving_pixels
        );
    }
    println!("manifest={}", summary.manifest_path.display());
    Ok(())
}
