//! Parameter layout and forward passes of the ShuffleNet encoder and the
//! FCN8s decoder.

use fusemod_tensor::ops::BatchStats;
use fusemod_tensor::{Conv2dConfig, ParamId, ParamKind, ParamStore, PoolConfig, Shape, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::spec::EncoderSpec;
use super::{ModelError, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
/// Standard deviation of the 1×1 score convolutions at init.
pub const SCORE_INIT_STD: f64 = 0.01;

const POOL: PoolConfig = PoolConfig::new(3, 2, 1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated afterwards.
    Train,
    /// Running statistics.
    Eval,
}

/// Running-statistic update produced by one training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats,
}

/// Forward-pass state: the tape, parameter bindings and pending BN updates.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    mode: Mode,
    bn_updates: Vec<BnUpdate>,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: &'a mut Tape, store: &'a ParamStore, mode: Mode) -> Self {
        Ctx { tape, store, bound: vec![None; store.len()], mode, bn_updates: Vec::new() }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Uses `var` in place of the stored value of `id`.
    pub fn bind(&mut self, id: ParamId, var: Var) {
        self.bound[id.0] = Some(var);
    }

    /// Tape variable of a parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.value(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    /// Parameters touched so far with their tape variables.
    pub fn bindings(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound.iter().enumerate().filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
    }

    pub fn take_bn_updates(&mut self) -> Vec<BnUpdate> {
        std::mem::take(&mut self.bn_updates)
    }
}

/// Affine parameters and running statistics of one batch norm.
#[derive(Clone, Copy, Debug)]
pub struct BnParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
}

/// Bias-free convolution followed by batch norm.
#[derive(Clone, Copy, Debug)]
pub struct ConvBn {
    pub weight: ParamId,
    pub bn: BnParams,
    pub cfg: Conv2dConfig,
}

#[derive(Clone, Copy, Debug)]
pub struct UnitParams {
    pub pw1: ConvBn,
    pub dw: ConvBn,
    pub pw2: ConvBn,
    pub stride: usize,
    pub shuffle_groups: usize,
}

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub in_channels: usize,
    pub conv1: ConvBn,
    pub stages: Vec<Vec<UnitParams>>,
}

#[derive(Clone, Copy, Debug)]
pub struct Score {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderParams {
    pub score4: Score,
    pub score3: Score,
    pub score2: Score,
    pub up4: ParamId,
    pub up3: ParamId,
    pub up_final: ParamId,
}

/// Allocates and initializes parameters.
pub struct Builder<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
}

/// Bilinear upsampling kernel `(c, c, k, k)`, identity across channels.
pub fn bilinear_kernel(channels: usize, k: usize) -> Tensor {
    let factor = k.div_ceil(2) as f64;
    let centre = if k % 2 == 1 { factor - 1.0 } else { factor - 0.5 };
    let mut w = Tensor::zeros(Shape::new(channels, channels, k, k));
    for c in 0..channels {
        let plane = w.plane_mut(c, c);
        for i in 0..k {
            for j in 0..k {
                let fi = 1.0 - (i as f64 - centre).abs() / factor;
                let fj = 1.0 - (j as f64 - centre).abs() / factor;
                plane[i * k + j] = fi * fj;
            }
        }
    }
    w
}

impl<R: Rng> Builder<'_, R> {
    fn normal(&mut self, shape: Shape, std: f64) -> Tensor {
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..shape.len()).map(|_| dist.sample(self.rng)).collect();
        Tensor::from_vec(shape, data).expect("length matches shape")
    }

    /// He-normal kernel `(cout, cin/groups, k, k)`.
    pub fn conv_weight(&mut self, name: &str, cin: usize, cout: usize, k: usize, groups: usize) -> ParamId {
        let fan_in = (cin / groups) * k * k;
        let w = self.normal(Shape::new(cout, cin / groups, k, k), (2.0 / fan_in as f64).sqrt());
        self.store.add(format!("{name}/weight"), ParamKind::ConvWeight, w)
    }

    pub fn bn(&mut self, name: &str, c: usize) -> BnParams {
        let v = Shape::vector(c);
        BnParams {
            gamma: self.store.add(format!("{name}/gamma"), ParamKind::BnGamma, Tensor::full(v, 1.0)),
            beta: self.store.add(format!("{name}/beta"), ParamKind::BnBeta, Tensor::zeros(v)),
            mean: self.store.add(format!("{name}/running_mean"), ParamKind::BnRunningMean, Tensor::zeros(v)),
            var: self.store.add(format!("{name}/running_var"), ParamKind::BnRunningVar, Tensor::full(v, 1.0)),
        }
    }

    pub fn conv_bn(&mut self, name: &str, cin: usize, cout: usize, k: usize, cfg: Conv2dConfig) -> ConvBn {
        ConvBn { weight: self.conv_weight(name, cin, cout, k, cfg.groups), bn: self.bn(&format!("{name}.bn"), cout), cfg }
    }

    /// One ShuffleNet unit taking `cin` to `cout` channels.
    pub fn unit(&mut self, name: &str, cin: usize, cout: usize, stride: usize, groups: usize) -> UnitParams {
        let branch_out = if stride == 2 { cout - cin } else { cout };
        let bottleneck = cout / 4;
        let g1 = if cin.is_multiple_of(groups) && bottleneck.is_multiple_of(groups) { groups } else { 1 };
        let g2 = if branch_out.is_multiple_of(groups) && bottleneck.is_multiple_of(groups) { groups } else { 1 };
        UnitParams {
            pw1: self.conv_bn(&format!("{name}.pw1"), cin, bottleneck, 1, Conv2dConfig::new(1, 0, g1)),
            dw: self.conv_bn(&format!("{name}.dw"), bottleneck, bottleneck, 3, Conv2dConfig::new(stride, 1, bottleneck)),
            pw2: self.conv_bn(&format!("{name}.pw2"), bottleneck, branch_out, 1, Conv2dConfig::new(1, 0, g2)),
            stride,
            shuffle_groups: groups,
        }
    }

    pub fn encoder(&mut self, name: &str, in_channels: usize, spec: &EncoderSpec) -> EncoderParams {
        let conv1 = self.conv_bn(
            &format!("{name}.conv1"),
            in_channels,
            spec.conv1_channels,
            3,
            Conv2dConfig::new(spec.conv1_stride, 1, 1),
        );
        let mut cin = spec.conv1_channels;
        let mut stages = Vec::with_capacity(3);
        for (si, st) in spec.stages.iter().enumerate() {
            let units = (0..st.units)
                .map(|u| {
                    let stride = if u == 0 { 2 } else { 1 };
                    let p = self.unit(&format!("{name}.stage{}.unit{u}", si + 2), cin, st.channels, stride, spec.groups);
                    cin = st.channels;
                    p
                })
                .collect();
            stages.push(units);
        }
        EncoderParams { in_channels, conv1, stages }
    }

    pub fn score(&mut self, name: &str, cin: usize) -> Score {
        let w = self.normal(Shape::new(2, cin, 1, 1), SCORE_INIT_STD);
        Score {
            weight: self.store.add(format!("{name}/weight"), ParamKind::ConvWeight, w),
            bias: self.store.add(format!("{name}/bias"), ParamKind::Bias, Tensor::zeros(Shape::vector(2))),
        }
    }

    pub fn upsample(&mut self, name: &str, k: usize) -> ParamId {
        self.store.add(format!("{name}/weight"), ParamKind::ConvWeight, bilinear_kernel(2, k))
    }

    /// FCN8s head over fused features with the given channel counts at
    /// strides 8, 16 and 32.
    pub fn decoder(&mut self, c2: usize, c3: usize, c4: usize) -> DecoderParams {
        DecoderParams {
            score4: self.score("decoder.score4", c4),
            score3: self.score("decoder.score3", c3),
            score2: self.score("decoder.score2", c2),
            up4: self.upsample("decoder.up4", 4),
            up3: self.upsample("decoder.up3", 4),
            up_final: self.upsample("decoder.up_final", 16),
        }
    }
}

/// Batch norm in the context's mode.
pub fn batch_norm(ctx: &mut Ctx, x: Var, p: &BnParams) -> Result<Var> {
    let gamma = ctx.param(p.gamma);
    let beta = ctx.param(p.beta);
    match ctx.mode {
        Mode::Train => {
            let y = ctx.tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
            let stats = ctx.tape.batch_stats(y).cloned().expect("training batch norm records statistics");
            ctx.bn_updates.push(BnUpdate { mean: p.mean, var: p.var, stats });
            Ok(y)
        }
        Mode::Eval => {
            let (m, v) = (ctx.store.value(p.mean), ctx.store.value(p.var));
            Ok(ctx.tape.batch_norm_eval(x, gamma, beta, m, v, BN_EPS)?)
        }
    }
}

pub fn conv_bn(ctx: &mut Ctx, x: Var, p: &ConvBn) -> Result<Var> {
    let w = ctx.param(p.weight);
    let y = ctx.tape.conv2d(x, w, None, p.cfg)?;
    batch_norm(ctx, y, &p.bn)
}

/// 1×1 group conv, BN, ReLU, channel shuffle, 3×3 depthwise, BN, 1×1
/// group conv, BN; then a residual add (stride 1) or a concat with the
/// 3×3/2 average-pooled input (stride 2), and ReLU.
pub fn shuffle_unit(ctx: &mut Ctx, x: Var, p: &UnitParams) -> Result<Var> {
    let h = conv_bn(ctx, x, &p.pw1)?;
    let h = ctx.tape.relu(h);
    let h = ctx.tape.channel_shuffle(h, p.shuffle_groups)?;
    let h = conv_bn(ctx, h, &p.dw)?;
    let h = conv_bn(ctx, h, &p.pw2)?;
    let merged = match p.stride {
        1 => ctx.tape.add(h, x)?,
        2 => {
            let shortcut = ctx.tape.avg_pool(x, POOL)?;
            ctx.tape.concat_channels(&[shortcut, h])?
        }
        s => return Err(ModelError::InvalidSpec(format!("unit stride {s}"))),
    };
    Ok(ctx.tape.relu(merged))
}

/// Stage outputs at strides 8, 16 and 32.
pub fn encoder_forward(ctx: &mut Ctx, x: Var, p: &EncoderParams) -> Result<[Var; 3]> {
    let h = conv_bn(ctx, x, &p.conv1)?;
    let h = ctx.tape.relu(h);
    let mut h = ctx.tape.max_pool(h, POOL)?;
    let mut taps = Vec::with_capacity(3);
    for stage in &p.stages {
        for unit in stage {
            h = shuffle_unit(ctx, h, unit)?;
        }
        taps.push(h);
    }
    Ok([taps[0], taps[1], taps[2]])
}

fn score(ctx: &mut Ctx, x: Var, s: &Score) -> Result<Var> {
    let w = ctx.param(s.weight);
    let b = ctx.param(s.bias);
    Ok(ctx.tape.conv2d(x, w, Some(b), Conv2dConfig::default())?)
}

/// FCN8s: score the stride-32 features, upsample ×2 and add the stride-16
/// score, upsample ×2 and add the stride-8 score, then upsample ×8.
pub fn decoder_forward(ctx: &mut Ctx, f2: Var, f3: Var, f4: Var, p: &DecoderParams) -> Result<Var> {
    let s4 = score(ctx, f4, &p.score4)?;
    let w = ctx.param(p.up4);
    let u4 = ctx.tape.transposed_conv2d(s4, w, 2, 1)?;
    let s3 = score(ctx, f3, &p.score3)?;
    let h = ctx.tape.add(u4, s3)?;
    let w = ctx.param(p.up3);
    let u3 = ctx.tape.transposed_conv2d(h, w, 2, 1)?;
    let s2 = score(ctx, f2, &p.score2)?;
    let h = ctx.tape.add(u3, s2)?;
    let w = ctx.param(p.up_final);
    Ok(ctx.tape.transposed_conv2d(h, w, 8, 4)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fusemod_tensor::ops::transposed_conv2d;

    #[test]
    fn bilinear_preserves_constants_in_the_interior() {
        for (k, s, p) in [(4, 2, 1), (16, 8, 4)] {
            let x = Tensor::full(Shape::new(1, 2, 6, 6), 3.0);
            let y = transposed_conv2d(&x, &bilinear_kernel(2, k), s, p).unwrap();
            assert_eq!(y.shape(), Shape::new(1, 2, 6 * s, 6 * s));
            // away from the border every output pixel gets full kernel support
            for c in 0..2 {
                for i in s..5 * s {
                    for j in s..5 * s {
                        assert!((y.at(0, c, i, j) - 3.0).abs() < 1e-12, "k={k} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn bilinear_k4_taps() {
        let w = bilinear_kernel(1, 4);
        let row = [0.25, 0.75, 0.75, 0.25];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(w.at(0, 0, i, j), row[i] * row[j]);
            }
        }
    }
}
