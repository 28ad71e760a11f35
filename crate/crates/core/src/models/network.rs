use fusemod_tensor::{AdamConfig, AdamState, Checkpoint, ParamId, ParamStore, Shape, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{
    decoder_forward, encoder_forward, BnUpdate, Builder, Ctx, DecoderParams, EncoderParams, Mode, BN_MOMENTUM,
};
use super::plan::FusionPlan;
use super::spec::EncoderSpec;
use super::{ModelError, Result};
use crate::ingest::MaskImage;

/// Perturbation added to first-layer slices copied by [`adapt_first_layer`].
pub const ADAPT_SIGMA: f64 = 1e-3;

/// A fusion network: one encoder per stream, a shared FCN8s decoder.
#[derive(Clone, Debug)]
pub struct Model {
    pub plan: FusionPlan,
    pub spec: EncoderSpec,
    pub seed: u64,
    pub store: ParamStore,
    pub encoders: Vec<EncoderParams>,
    pub decoder: DecoderParams,
}

/// Name, shape and element count of every parameter, in creation order.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEntry {
    pub name: String,
    pub shape: Shape,
    pub trainable: bool,
}

/// Builds a model with deterministic initialization from `seed`.
pub fn build_model(plan: &FusionPlan, spec: &EncoderSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder { store: &mut store, rng: &mut rng };
    let encoders: Vec<EncoderParams> = plan
        .stream_channels()
        .iter()
        .enumerate()
        .map(|(i, &c)| b.encoder(&format!("enc{i}"), c, spec))
        .collect();
    let k = encoders.len();
    let [c2, c3, c4] = spec.stages.map(|s| s.channels * k);
    let decoder = b.decoder(c2, c3, c4);
    Ok(Model { plan: plan.clone(), spec: spec.clone(), seed, store, encoders, decoder })
}

impl Model {
    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.store
            .iter()
            .map(|(_, p)| LedgerEntry { name: p.name.clone(), shape: p.value.shape(), trainable: p.trainable })
            .collect()
    }

    /// Trainable scalars whose name starts with `prefix`.
    pub fn param_count(&self, prefix: &str) -> usize {
        self.store
            .iter()
            .filter(|(_, p)| p.trainable && p.name.starts_with(prefix))
            .map(|(_, p)| p.value.len())
            .sum()
    }

    pub fn encoder_param_count(&self, stream: usize) -> usize {
        self.param_count(&format!("enc{stream}."))
    }

    pub fn decoder_param_count(&self) -> usize {
        self.param_count("decoder.")
    }

    pub fn total_param_count(&self) -> usize {
        self.param_count("")
    }

    /// Records the forward pass on `ctx.tape`; `inputs[i]` feeds stream `i`.
    pub fn forward_on(&self, ctx: &mut Ctx, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != self.encoders.len() {
            return Err(ModelError::InputMismatch(format!(
                "{} inputs for {} streams",
                inputs.len(),
                self.encoders.len()
            )));
        }
        let (h, w) = {
            let s = ctx.tape.shape(inputs[0]);
            (s.h, s.w)
        };
        if h == 0 || w == 0 {
            return Err(ModelError::InputMismatch("empty input".into()));
        }
        // sizes that are not a multiple of the output stride are zero-padded
        // on the bottom/right and the logits cropped back
        let stride = self.spec.output_stride();
        let (hp, wp) = (h.next_multiple_of(stride), w.next_multiple_of(stride));
        let mut taps: [Vec<Var>; 3] = Default::default();
        for (enc, &x) in self.encoders.iter().zip(inputs) {
            let s = ctx.tape.shape(x);
            if s.c != enc.in_channels || (s.h, s.w) != (h, w) {
                return Err(ModelError::InputMismatch(format!(
                    "stream input {s}, expected {} channels at {h}x{w}",
                    enc.in_channels
                )));
            }
            let x = if (hp, wp) == (h, w) { x } else { ctx.tape.fit_spatial(x, hp, wp) };
            for (t, v) in taps.iter_mut().zip(encoder_forward(ctx, x, enc)?) {
                t.push(v);
            }
        }
        let f2 = ctx.tape.concat_channels(&taps[0])?;
        let f3 = ctx.tape.concat_channels(&taps[1])?;
        let f4 = ctx.tape.concat_channels(&taps[2])?;
        let logits = decoder_forward(ctx, f2, f3, f4, &self.decoder)?;
        Ok(if (hp, wp) == (h, w) { logits } else { ctx.tape.fit_spatial(logits, h, w) })
    }

    /// Eval-mode logits `N×2×H×W`.
    pub fn infer(&self, inputs: &[Tensor]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let mut ctx = Ctx::new(&mut tape, &self.store, Mode::Eval);
        let out = self.forward_on(&mut ctx, &vars)?;
        drop(ctx);
        Ok(tape.value(out).clone())
    }

    /// Folds training-mode batch statistics into the running statistics
    /// (momentum 0.1, unbiased variance).
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate]) {
        for u in updates {
            let n = u.stats.count as f64;
            let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let mean = self.store.get_mut(u.mean).value.data_mut();
            for (m, &b) in mean.iter_mut().zip(&u.stats.mean) {
                *m = (1.0 - BN_MOMENTUM) * *m + BN_MOMENTUM * b;
            }
            let var = self.store.get_mut(u.var).value.data_mut();
            for (v, &b) in var.iter_mut().zip(&u.stats.var) {
                *v = (1.0 - BN_MOMENTUM) * *v + BN_MOMENTUM * b * correction;
            }
        }
    }

    /// Replaces the first convolution of `stream` with a 3-channel kernel
    /// adapted to the stream's channel count.
    pub fn load_first_layer(&mut self, stream: usize, pretrained: &Tensor, seed: u64) -> Result<()> {
        let enc = self.encoders.get(stream).ok_or_else(|| ModelError::InputMismatch(format!("no stream {stream}")))?;
        let id = enc.conv1.weight;
        let adapted = adapt_first_layer(pretrained, enc.in_channels, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let slot = &mut self.store.get_mut(id).value;
        if slot.shape() != adapted.shape() {
            return Err(ModelError::InputMismatch(format!("kernel {} for slot {}", adapted.shape(), slot.shape())));
        }
        *slot = adapted;
        Ok(())
    }

    /// Parameters, metadata and optional optimizer moments.
    pub fn to_checkpoint(&self, adam: Option<&AdamState>, epoch: usize) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert("plan".into(), self.plan.to_string());
        ck.meta.insert("encoder".into(), self.spec.to_string());
        ck.meta.insert("seed".into(), self.seed.to_string());
        ck.scalars.insert("epoch".into(), epoch as f64);
        for (_, p) in self.store.iter() {
            ck.tensors.insert(p.name.clone(), p.value.clone());
        }
        if let Some(a) = adam {
            for ((i, p), (m, v)) in self.store.iter().zip(a.m.iter().zip(&a.v)) {
                let shape = self.store.get(i).value.shape();
                ck.tensors.insert(format!("adam.m/{}", p.name), Tensor::from_vec(shape, m.clone()).expect("moment shape"));
                ck.tensors.insert(format!("adam.v/{}", p.name), Tensor::from_vec(shape, v.clone()).expect("moment shape"));
            }
            let c = a.config;
            for (k, v) in [
                ("adam.step", a.step as f64),
                ("adam.lr", c.lr),
                ("adam.beta1", c.beta1),
                ("adam.beta2", c.beta2),
                ("adam.eps", c.eps),
                ("adam.l2_decay", c.l2_decay),
            ] {
                ck.scalars.insert(k.into(), v);
            }
        }
        ck
    }

    /// Rebuilds a model (and optimizer state when present) from a checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Model, Option<AdamState>)> {
        let meta = |k: &str| ck.meta.get(k).ok_or_else(|| ModelError::Checkpoint(format!("missing meta `{k}`")));
        let plan: FusionPlan = meta("plan")?.parse()?;
        let spec: EncoderSpec = meta("encoder")?.parse()?;
        let seed: u64 = meta("seed")?.parse().map_err(|_| ModelError::Checkpoint("bad seed".into()))?;
        let mut model = build_model(&plan, &spec, seed)?;
        let ids: Vec<(ParamId, String)> = model.store.iter().map(|(i, p)| (i, p.name.clone())).collect();
        for (id, name) in &ids {
            let t = ck.tensors.get(name).ok_or_else(|| ModelError::Checkpoint(format!("missing tensor `{name}`")))?;
            let slot = &mut model.store.get_mut(*id).value;
            if slot.shape() != t.shape() {
                return Err(ModelError::Checkpoint(format!("`{name}` is {} but model expects {}", t.shape(), slot.shape())));
            }
            *slot = t.clone();
        }
        let Some(&step) = ck.scalars.get("adam.step") else {
            return Ok((model, None));
        };
        let scalar = |k: &str| ck.scalars.get(k).copied().ok_or_else(|| ModelError::Checkpoint(format!("missing `{k}`")));
        let config = AdamConfig {
            lr: scalar("adam.lr")?,
            beta1: scalar("adam.beta1")?,
            beta2: scalar("adam.beta2")?,
            eps: scalar("adam.eps")?,
            l2_decay: scalar("adam.l2_decay")?,
        };
        let mut state = AdamState::new(config, &model.store);
        state.step = step as u64;
        for (i, (_, name)) in ids.iter().enumerate() {
            let get = |prefix: &str| {
                ck.tensors
                    .get(&format!("{prefix}/{name}"))
                    .map(|t| t.data().to_vec())
                    .ok_or_else(|| ModelError::Checkpoint(format!("missing {prefix} for `{name}`")))
            };
            state.m[i] = get("adam.m")?;
            state.v[i] = get("adam.v")?;
        }
        Ok((model, Some(state)))
    }
}

/// Adapts a `(C_out, 3, k, k)` kernel to `n` input channels: truncate for
/// `n < 3`; for `n > 3` append copies of input slices `0, 1, 2, 0, …` and
/// perturb only the appended slices with N(0, 1e-3).
pub fn adapt_first_layer(pretrained: &Tensor, n: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let s = pretrained.shape();
    if s.c != 3 || n == 0 {
        return Err(ModelError::InputMismatch(format!("cannot adapt {s} to {n} channels")));
    }
    let noise = Normal::new(0.0, ADAPT_SIGMA).expect("finite sigma");
    let mut out = Tensor::zeros(Shape::new(s.n, n, s.h, s.w));
    for o in 0..s.n {
        for c in 0..n {
            let src = pretrained.plane(o, c % 3).to_vec();
            let dst = out.plane_mut(o, c);
            dst.copy_from_slice(&src);
            if c >= 3 {
                for v in dst.iter_mut() {
                    *v += noise.sample(rng);
                }
            }
        }
    }
    Ok(out)
}

/// Per-pixel argmax of `N×2×H×W` logits for sample `n`; ties go to Static.
pub fn predict_mask(logits: &Tensor, n: usize) -> Result<MaskImage> {
    let s = logits.shape();
    if s.c != 2 || n >= s.n {
        return Err(ModelError::InputMismatch(format!("logits {s}, sample {n}")));
    }
    let (l0, l1) = (logits.plane(n, 0), logits.plane(n, 1));
    let labels = l0.iter().zip(l1).map(|(a, b)| u8::from(b > a)).collect();
    Ok(MaskImage { height: s.h, width: s.w, labels })
}
