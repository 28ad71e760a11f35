use std::fmt;
use std::path::{Path, PathBuf};

use fusemod_core::annotation::{ExportConfig, Split, VelocityMode};
use fusemod_core::models::{Crop, EncoderSpec, FusionPlan, TrainConfig};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the file's `seed`.
pub const SEED_ENV: &str = "FUSEMOD_SEED";

/// Bad configuration: unreadable file, unknown key, unparsable value.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub paths: PathsConfig,
    pub annotation: AnnotationConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data_root: PathBuf,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/manifest.txt`.
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    pub threshold: f64,
    pub split_seed: u64,
    pub velocity_mode: String,
    pub train_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub plan: String,
    pub encoder: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2_decay: f64,
    pub hflip: bool,
    pub checkpoint_every: usize,
    /// `none`, `standard` (256x1224) or `HxW`.
    pub crop: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: String,
    pub warmup: usize,
    pub iterations: usize,
    pub height: usize,
    pub width: usize,
    pub bench_plans: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// `scenes` (training-ready dataset) or `drive` (KITTI raw layout).
    pub kind: String,
    pub scenes: usize,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub moving: usize,
    pub parked: usize,
    pub low_light: bool,
    pub instances: bool,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { data_root: "data".into(), out_dir: "out".into(), manifest: None }
    }
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        let e = ExportConfig::default();
        AnnotationConfig {
            threshold: e.threshold,
            split_seed: e.split_seed,
            velocity_mode: "pose_diff".into(),
            train_fraction: e.train_fraction,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelConfig {
            plan: FusionPlan::three_stream().to_string(),
            encoder: "tiny".into(),
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            l2_decay: t.l2_decay,
            hflip: t.hflip,
            checkpoint_every: t.checkpoint_every,
            crop: "none".into(),
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: "test".into(),
            warmup: 10,
            iterations: 100,
            height: 256,
            width: 1224,
            bench_plans: vec!["baseline".into(), "two".into(), "three".into()],
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kind: "scenes".into(),
            scenes: 10,
            height: 64,
            width: 128,
            frames: 5,
            moving: 2,
            parked: 2,
            low_light: false,
            instances: false,
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then `FUSEMOD_SEED`. Command-line
    /// flags are applied by each subcommand afterwards.
    pub fn load(path: Option<&Path>, env_seed: Option<String>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = env_seed {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| config_err(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.message().to_string()))
    }

    pub fn manifest(&self) -> PathBuf {
        self.paths.manifest.clone().unwrap_or_else(|| self.paths.out_dir.join("manifest.txt"))
    }

    pub fn plan(&self) -> anyhow::Result<FusionPlan> {
        parse_plan(&self.model.plan)
    }

    pub fn encoder(&self) -> anyhow::Result<EncoderSpec> {
        self.model.encoder.parse().map_err(|e| config_err(format!("model.encoder: {e}")))
    }

    pub fn crop(&self) -> anyhow::Result<Crop> {
        parse_crop(&self.model.crop)
    }

    pub fn export(&self) -> anyhow::Result<ExportConfig> {
        let a = &self.annotation;
        if !(a.threshold >= 0.0) {
            return Err(config_err(format!("annotation.threshold must be non-negative, got {}", a.threshold)));
        }
        if !(a.train_fraction > 0.0 && a.train_fraction <= 1.0) {
            return Err(config_err(format!("annotation.train_fraction must lie in (0, 1], got {}", a.train_fraction)));
        }
        let velocity_mode: VelocityMode =
            a.velocity_mode.parse().map_err(|e| config_err(format!("annotation.velocity_mode: {e}")))?;
        Ok(ExportConfig { threshold: a.threshold, split_seed: a.split_seed, velocity_mode, train_fraction: a.train_fraction })
    }

    pub fn train(&self, checkpoint_dir: Option<PathBuf>) -> anyhow::Result<TrainConfig> {
        let m = &self.model;
        if m.epochs == 0 || m.batch_size == 0 {
            return Err(config_err("model.epochs and model.batch_size must be positive"));
        }
        if !(m.lr >= 0.0 && m.l2_decay >= 0.0) {
            return Err(config_err("model.lr and model.l2_decay must be non-negative"));
        }
        Ok(TrainConfig {
            epochs: m.epochs,
            batch_size: m.batch_size,
            lr: m.lr,
            l2_decay: m.l2_decay,
            seed: self.seed,
            hflip: m.hflip,
            checkpoint_every: m.checkpoint_every,
            checkpoint_dir,
            ..TrainConfig::default()
        })
    }

    pub fn split(&self) -> anyhow::Result<Option<Split>> {
        match self.eval.split.as_str() {
            "train" => Ok(Some(Split::Train)),
            "test" => Ok(Some(Split::Test)),
            "all" => Ok(None),
            other => Err(config_err(format!("eval.split must be train, test or all, got `{other}`"))),
        }
    }
}

/// A plan string, or one of the aliases `baseline`, `two`, `three`.
pub fn parse_plan(s: &str) -> anyhow::Result<FusionPlan> {
    match s.trim() {
        "baseline" | "one" => Ok(FusionPlan::baseline()),
        "two" | "two-stream" => Ok(FusionPlan::two_stream()),
        "three" | "three-stream" => Ok(FusionPlan::three_stream()),
        other => other.parse().map_err(|e| config_err(format!("plan `{other}`: {e}"))),
    }
}

pub fn parse_crop(s: &str) -> anyhow::Result<Crop> {
    match s.trim() {
        "none" => Ok(Crop::None),
        "standard" => Ok(Crop::BottomCenter(256, 1224)),
        other => {
            let parsed = other
                .split_once('x')
                .and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)))
                .filter(|&(h, w): &(usize, usize)| h > 0 && w > 0);
            parsed
                .map(|(h, w)| Crop::BottomCenter(h, w))
                .ok_or_else(|| config_err(format!("crop must be none, standard or HxW, got `{other}`")))
        }
    }
}

/// Every key, grouped for `--help`.
pub fn keys(sections: &[&str]) -> String {
    let mut s = String::from("Config keys honored (TOML; flags override the file, FUSEMOD_SEED overrides `seed`):\n");
    for &sec in sections {
        let list: &[&str] = match sec {
            "" => &["seed", "workers"],
            "paths" => &["data_root", "out_dir", "manifest"],
            "annotation" => &["threshold", "split_seed", "velocity_mode", "train_fraction"],
            "model" => &["plan", "encoder", "epochs", "batch_size", "lr", "l2_decay", "hflip", "checkpoint_every", "crop"],
            "eval" => &["split", "warmup", "iterations", "height", "width", "bench_plans"],
            "synth" => &["kind", "scenes", "height", "width", "frames", "moving", "parked", "low_light", "instances"],
            _ => &[],
        };
        let prefix = if sec.is_empty() { String::new() } else { format!("{sec}.") };
        let joined: Vec<String> = list.iter().map(|k| format!("{prefix}{k}")).collect();
        s.push_str(&format!("  {}\n", joined.join(", ")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = toml::to_string(&RunConfig::default()).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse("[model]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(err.is::<ConfigError>());
        assert!(err.to_string().contains("learning_rate"), "{err}");
        assert!(RunConfig::parse("colour = 1\n").is_err());
    }

    #[test]
    fn env_seed_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = 3\n").unwrap();
        assert_eq!(RunConfig::load(Some(&p), None).unwrap().seed, 3);
        assert_eq!(RunConfig::load(Some(&p), Some("9".into())).unwrap().seed, 9);
        assert!(RunConfig::load(Some(&p), Some("x".into())).is_err());
    }

    #[test]
    fn plan_aliases() {
        assert_eq!(parse_plan("three").unwrap(), FusionPlan::three_stream());
        assert_eq!(parse_plan("rgb + rgbflow").unwrap(), FusionPlan::two_stream());
        assert!(parse_plan("rgb + sonar").is_err());
    }

    #[test]
    fn crops() {
        assert_eq!(parse_crop("standard").unwrap(), Crop::BottomCenter(256, 1224));
        assert_eq!(parse_crop("64x128").unwrap(), Crop::BottomCenter(64, 128));
        assert!(parse_crop("64x0").is_err());
    }
}
