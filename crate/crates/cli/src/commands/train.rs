use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use fusemod_core::annotation::Split;
use fusemod_core::models::{build_model, load_split, train_with};

use crate::config::RunConfig;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest. Defaults to `paths.manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// Directory for `train.log`, `model.ckpt` and periodic checkpoints.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Fusion plan, e.g. "rgb + rgbflow + lidarflow" or "(rgb x rgbflow) + (depth x lidarflow)".
    #[arg(long)]
    pub plan: Option<String>,

    /// `tiny`, `full` or an explicit encoder spec.
    #[arg(long)]
    pub encoder: Option<String>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub checkpoint_every: Option<usize>,

    /// `none`, `standard` or `HxW`.
    #[arg(long)]
    pub crop: Option<String>,
}

pub fn run(mut cfg: RunConfig, args: TrainArgs) -> anyhow::Result<()> {
    let m = &mut cfg.model;
    if let Some(p) = args.plan {
        m.plan = p;
    }
    if let Some(e) = args.encoder {
        m.encoder = e;
    }
    if let Some(e) = args.epochs {
        m.epochs = e;
    }
    if let Some(b) = args.batch_size {
        m.batch_size = b;
    }
    if let Some(lr) = args.lr {
        m.lr = lr;
    }
    if let Some(c) = args.checkpoint_every {
        m.checkpoint_every = c;
    }
    if let Some(c) = args.crop {
        m.crop = c;
    }
    if let Some(p) = args.manifest {
        cfg.paths.manifest = Some(p);
    }
    let out = args.out.unwrap_or_else(|| cfg.paths.out_dir.clone());
    let plan = cfg.plan()?;
    let spec = cfg.encoder()?;
    let crop = cfg.crop()?;
    let tcfg = cfg.train((cfg.model.checkpoint_every > 0).then(|| out.join("checkpoints")))?;

    let manifest = cfg.manifest();
    let data = load_split(&manifest, Split::Train, &plan, crop)
        .with_context(|| format!("loading the train split of {}", manifest.display()))?;
    let mut model = build_model(&plan, &spec, cfg.seed)?;
    println!(
        "plan=\"{plan}\" encoders={} params={} frames={}",
        plan.streams().len(),
        model.total_param_count(),
        data.len()
    );

    let mut log = String::new();
    let report = train_with(&mut model, &data, &tcfg, None, |e| {
        let line = e.to_line();
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    })?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("train.log"), &log).context("writing train.log")?;
    let ckpt = out.join("model.ckpt");
    std::fs::write(&ckpt, model.to_checkpoint(Some(&report.adam), tcfg.epochs).to_bytes())
        .with_context(|| format!("writing {}", ckpt.display()))?;
    println!(
        "class_weights=({:.6}, {:.6}) checkpoint={}",
        report.class_weights[0],
        report.class_weights[1],
        ckpt.display()
    );
    Ok(())
}
