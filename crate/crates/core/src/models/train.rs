use std::path::PathBuf;

use fusemod_tensor::{adam_step, AdamConfig, AdamState, Tape, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::data::{batch_targets, stream_tensors, FrameSample};
use super::layers::{Ctx, Mode};
use super::network::{predict_mask, Model};
use super::{ModelError, Result};
use crate::eval::{class_weights, ConfusionMatrix, CLASS_MOVING};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2_decay: f64,
    /// Seeds batch order and augmentation; model init has its own seed.
    pub seed: u64,
    pub hflip: bool,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Constant `c` of the class weights `1 / ln(c + p)`.
    pub weight_constant: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 6,
            lr: 1e-4,
            l2_decay: 5e-4,
            seed: 0,
            hflip: false,
            checkpoint_every: 0,
            checkpoint_dir: None,
            weight_constant: 1.02,
        }
    }
}

/// Loss and training-batch IoU of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub moving_iou: Option<f64>,
    pub miou: Option<f64>,
}

impl EpochLog {
    /// Fixed-precision line, stable across runs.
    pub fn to_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
        format!(
            "epoch={} loss={:.9} moving_iou={} miou={}",
            self.epoch,
            self.loss,
            f(self.moving_iou),
            f(self.miou)
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub class_weights: [f64; 2],
    pub adam: AdamState,
    pub checkpoints: Vec<PathBuf>,
}

/// One optimization step on a batch; returns the loss and the batch's
/// train-mode predictions.
pub fn train_step(model: &mut Model, adam: &mut AdamState, batch: &[&FrameSample], weights: &[f64; 2]) -> Result<(f64, ConfusionMatrix)> {
    let inputs = stream_tensors(&model.plan, batch)?;
    let targets = batch_targets(batch);
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.into_iter().map(|t| tape.leaf(t)).collect();
    let mut ctx = Ctx::new(&mut tape, &model.store, Mode::Train);
    let logits = model.forward_on(&mut ctx, &vars)?;
    let updates = ctx.take_bn_updates();
    let bindings: Vec<_> = ctx.bindings().collect();
    drop(ctx);
    let loss = tape.weighted_cross_entropy(logits, &targets, weights)?;
    let grads = tape.backward_scalar(loss)?;

    let mut cm = ConfusionMatrix::default();
    let lv = tape.value(logits);
    for (n, s) in batch.iter().enumerate() {
        cm.update(&predict_mask(lv, n)?, &s.mask)?;
    }
    let loss_value = tape.value(loss).data()[0];

    model.store.zero_grad();
    for (id, var) in bindings {
        if let Some(g) = grads.get(var) {
            model.store.accumulate_grad(id, g);
        }
    }
    adam_step(&mut model.store, adam);
    model.apply_bn_updates(&updates);
    Ok((loss_value, cm))
}

/// Trains in place. Deterministic for a fixed model seed and `cfg.seed`.
pub fn train(model: &mut Model, data: &[FrameSample], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(model, data, cfg, None, |_| {})
}

/// [`train`] resuming from `adam` when given; `on_epoch` sees every log
/// entry as it is produced.
pub fn train_with(
    model: &mut Model,
    data: &[FrameSample],
    cfg: &TrainConfig,
    adam: Option<AdamState>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(ModelError::InputMismatch("no training frames".into()));
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::InputMismatch("batch size must be positive".into()));
    }
    let weights = class_weights(data.iter().map(|s| &s.mask), cfg.weight_constant)?;
    let mut adam = adam.unwrap_or_else(|| {
        AdamState::new(AdamConfig { lr: cfg.lr, l2_decay: cfg.l2_decay, ..AdamConfig::default() }, &model.store)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flipped: Vec<FrameSample> = if cfg.hflip { data.iter().map(FrameSample::hflip).collect() } else { Vec::new() };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut checkpoints = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut cm = ConfusionMatrix::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&FrameSample> = chunk
                .iter()
                .map(|&i| if cfg.hflip && rand::Rng::random_bool(&mut rng, 0.5) { &flipped[i] } else { &data[i] })
                .collect();
            let (loss, batch_cm) = train_step(model, &mut adam, &batch, &weights)?;
            loss_sum += loss * batch.len() as f64;
            cm.merge(&batch_cm);
        }
        let entry = EpochLog {
            epoch,
            loss: loss_sum / data.len() as f64,
            moving_iou: cm.iou(CLASS_MOVING).ok(),
            miou: cm.miou().ok(),
        };
        log::info!("{}", entry.to_line());
        on_epoch(&entry);
        log.push(entry);

        if let (Some(dir), true) = (&cfg.checkpoint_dir, cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            let path = dir.join(format!("epoch_{epoch:04}.ckpt"));
            crate::ingest::write_bytes(&path, &model.to_checkpoint(Some(&adam), epoch).to_bytes())?;
            checkpoints.push(path);
        }
    }
    Ok(TrainReport { log, class_weights: weights, adam, checkpoints })
}

/// Eval-mode predictions for every sample, in order. Frames are processed
/// in parallel against the read-only model.
pub fn predict_all(model: &Model, data: &[FrameSample]) -> Result<Vec<crate::ingest::MaskImage>> {
    data.par_iter()
        .map(|s| {
            let inputs = stream_tensors(&model.plan, &[s])?;
            predict_mask(&model.infer(&inputs)?, 0)
        })
        .collect()
}

/// Confusion matrix of eval-mode predictions against the samples' masks.
pub fn evaluate(model: &Model, data: &[FrameSample]) -> Result<ConfusionMatrix> {
    let preds = predict_all(model, data)?;
    let mut cm = ConfusionMatrix::default();
    for (p, s) in preds.iter().zip(data) {
        cm.update(p, &s.mask)?;
    }
    Ok(cm)
}
