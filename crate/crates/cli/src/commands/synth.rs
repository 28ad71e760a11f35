use std::path::PathBuf;

use clap::Args;
use fusemod_core::synth::{write_kitti_drive, write_scene_dataset, DegradeSpec, KittiDriveSpec, KittiObject, SceneSpec};

use crate::config::{config_err, RunConfig};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// `scenes` or `drive`.
    #[arg(long)]
    pub kind: Option<String>,

    #[arg(long)]
    pub scenes: Option<usize>,

    #[arg(long)]
    pub frames: Option<usize>,

    /// Darken images and corrupt rgbFlow (lidarFlow stays clean).
    #[arg(long)]
    pub low_light: bool,

    /// Also write instance masks (drive kind only).
    #[arg(long)]
    pub instances: bool,
}

pub fn run(mut cfg: RunConfig, args: SynthArgs) -> anyhow::Result<()> {
    let s = &mut cfg.synth;
    if let Some(k) = args.kind {
        s.kind = k;
    }
    if let Some(n) = args.scenes {
        s.scenes = n;
    }
    if let Some(f) = args.frames {
        s.frames = f;
    }
    s.low_light |= args.low_light;
    s.instances |= args.instances;
    let out = args.out.unwrap_or_else(|| cfg.paths.out_dir.clone());
    let s = &cfg.synth;
    if s.frames == 0 {
        return Err(config_err("synth.frames must be positive"));
    }

    match s.kind.as_str() {
        "scenes" => {
            if s.scenes == 0 {
                return Err(config_err("synth.scenes must be positive"));
            }
            let scenes: Vec<SceneSpec> = (0..s.scenes as u64)
                .map(|k| SceneSpec::random(cfg.seed.wrapping_mul(1_000_003).wrapping_add(k), s.height, s.width, s.moving, s.parked, s.frames))
                .collect();
            let degrade = s.low_light.then(|| DegradeSpec::low_light(cfg.seed));
            let a = &cfg.annotation;
            let manifest = write_scene_dataset(&scenes, &out, degrade.as_ref(), a.train_fraction, a.split_seed)?;
            println!("scenes={} frames={} train_fraction={:.3}", scenes.len(), manifest.records.len(), manifest.train_fraction());
            println!("manifest={}", out.join("manifest.txt").display());
        }
        "drive" => {
            let spec = KittiDriveSpec {
                frames: s.frames,
                objects: vec![KittiObject::car(15.0, 3.5, 8.0, 0.0), KittiObject::car(25.0, -3.5, 0.0, 0.0)],
                with_instances: s.instances,
                ..KittiDriveSpec::default()
            };
            let dir = write_kitti_drive(&out.join("2011_09_26_drive_0001_sync"), &spec)?;
            println!("drive={}", dir.display());
        }
        other => return Err(config_err(format!("synth.kind must be scenes or drive, got `{other}`"))),
    }
    Ok(())
}
