pub mod annotate;
pub mod bench;
pub mod eval;
pub mod infer;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::Context;
use fusemod_core::models::Model;
use fusemod_tensor::Checkpoint;

pub fn load_model(path: &Path) -> anyhow::Result<Model> {
    let bytes = std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let ck = Checkpoint::from_bytes(&bytes).with_context(|| format!("decoding checkpoint {}", path.display()))?;
    let (model, _) = Model::from_checkpoint(&ck).with_context(|| format!("restoring {}", path.display()))?;
    Ok(model)
}
