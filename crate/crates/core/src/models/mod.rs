//! Fusion networks: plan parsing, ShuffleNet encoders, the FCN8s decoder,
//! training and inference.

mod data;
mod layers;
mod network;
mod plan;
mod spec;
mod train;

use thiserror::Error;

pub use data::{batch_targets, load_sample, load_split, next_frame_path, stream_tensors, Crop, FrameSample, DEPTH_SCALE, FLOW_SCALE};
pub use layers::{
    batch_norm, bilinear_kernel, conv_bn, decoder_forward, encoder_forward, shuffle_unit, BnParams, BnUpdate, Builder,
    ConvBn, Ctx, DecoderParams, EncoderParams, Mode, Score, UnitParams, BN_EPS, BN_MOMENTUM, SCORE_INIT_STD,
};
pub use network::{adapt_first_layer, build_model, predict_mask, LedgerEntry, Model, ADAPT_SIGMA};
pub use plan::{FusionPlan, SignalKind};
pub use spec::{EncoderSpec, StageSpec};
pub use train::{evaluate, predict_all, train, train_step, train_with, EpochLog, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid fusion plan: {0}")]
    InvalidPlan(String),

    #[error("invalid encoder spec: {0}")]
    InvalidSpec(String),

    #[error("input mismatch: {0}")]
    InputMismatch(String),

    #[error("signal `{0}` is required by the plan but not available")]
    MissingSignal(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Tensor(#[from] fusemod_tensor::TensorError),

    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),

    #[error(transparent)]
    Annotation(#[from] crate::annotation::AnnotationError),

    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
