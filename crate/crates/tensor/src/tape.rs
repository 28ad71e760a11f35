use crate::error::{Result, TensorError};
use crate::ops::{self, BatchStats, Conv2dConfig, PoolConfig};
use crate::shape::Shape;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        cfg: Conv2dConfig,
    },
    TransposedConv2d {
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: BatchStats,
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Tensor,
        var: Tensor,
        eps: f64,
    },
    Relu(Var),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    AvgPool {
        x: Var,
        cfg: PoolConfig,
    },
    Concat(Vec<Var>),
    Add(Var, Var),
    ChannelShuffle {
        x: Var,
        groups: usize,
    },
    FitSpatial(Var),
    WeightedCrossEntropy {
        logits: Var,
        targets: Vec<u8>,
        weights: Vec<f64>,
        probs: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter value.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Batch statistics of a training-mode batch-norm node.
    pub fn batch_stats(&self, v: Var) -> Option<&BatchStats> {
        match &self.nodes[v.0].op {
            Op::BatchNormTrain { stats, .. } => Some(stats),
            _ => None,
        }
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, cfg: Conv2dConfig) -> Result<Var> {
        let y = ops::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), cfg)?;
        Ok(self.push(y, Op::Conv2d { x, w, b, cfg }))
    }

    pub fn transposed_conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = ops::transposed_conv2d(self.value(x), self.value(w), stride, pad)?;
        Ok(self.push(y, Op::TransposedConv2d { x, w, stride, pad }))
    }

    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (y, stats) =
            ops::batch_norm_train(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(y, Op::BatchNormTrain { x, gamma, beta, stats }))
    }

    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor,
        running_var: &Tensor,
        eps: f64,
    ) -> Result<Var> {
        let y = ops::batch_norm_eval(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            running_mean,
            running_var,
            eps,
        )?;
        let op = Op::BatchNormEval {
            x,
            gamma,
            beta,
            mean: running_mean.clone(),
            var: running_var.clone(),
            eps,
        };
        Ok(self.push(y, op))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu(x))
    }

    pub fn max_pool(&mut self, x: Var, cfg: PoolConfig) -> Result<Var> {
        let (y, argmax) = ops::max_pool(self.value(x), cfg)?;
        Ok(self.push(y, Op::MaxPool { x, argmax }))
    }

    pub fn avg_pool(&mut self, x: Var, cfg: PoolConfig) -> Result<Var> {
        let y = ops::avg_pool(self.value(x), cfg)?;
        Ok(self.push(y, Op::AvgPool { x, cfg }))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let y = ops::concat_channels(&values)?;
        Ok(self.push(y, Op::Concat(parts.to_vec())))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn channel_shuffle(&mut self, x: Var, groups: usize) -> Result<Var> {
        let y = ops::channel_shuffle(self.value(x), groups)?;
        Ok(self.push(y, Op::ChannelShuffle { x, groups }))
    }

    /// Zero-pads or crops the bottom/right of every plane to `h×w`.
    pub fn fit_spatial(&mut self, x: Var, h: usize, w: usize) -> Var {
        let y = ops::fit_spatial(self.value(x), h, w);
        self.push(y, Op::FitSpatial(x))
    }

    /// Scalar (1×1×1×1) weighted cross-entropy loss node.
    pub fn weighted_cross_entropy(&mut self, logits: Var, targets: &[u8], weights: &[f64]) -> Result<Var> {
        let (loss, probs) = ops::weighted_cross_entropy(self.value(logits), targets, weights)?;
        let op = Op::WeightedCrossEntropy {
            logits,
            targets: targets.to_vec(),
            weights: weights.to_vec(),
            probs,
        };
        Ok(self.push(Tensor::full(Shape::scalar(), loss), op))
    }

    /// Reverse pass seeded with `seed` (same shape as `out`).
    pub fn backward(&self, out: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.shape(out) {
            return Err(TensorError::shape(
                "backward",
                format!("seed {} for output {}", seed.shape(), self.shape(out)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&self.nodes[i].op, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward from a scalar output with seed 1.
    pub fn backward_scalar(&self, out: Var) -> Result<Gradients> {
        self.backward(out, Tensor::full(self.shape(out), 1.0))
    }

    fn propagate(&self, op: &Op, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |v: Var, d: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&d),
            slot @ None => *slot = Some(d),
        };
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, cfg } => {
                let (dx, dw, db) = ops::conv2d_backward(self.value(*x), self.value(*w), g, *cfg)?;
                acc(*x, dx);
                acc(*w, dw);
                if let Some(b) = b {
                    let db = db.reshape(self.shape(*b))?;
                    acc(*b, db);
                }
            }
            Op::TransposedConv2d { x, w, stride, pad } => {
                let (dx, dw) = ops::transposed_conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    *stride,
                    *pad,
                )?;
                acc(*x, dx);
                acc(*w, dw);
            }
            Op::BatchNormTrain { x, gamma, beta, stats } => {
                let (dx, dg, db) =
                    ops::batch_norm_train_backward(self.value(*x), self.value(*gamma), stats, g)?;
                acc(*x, dx);
                acc(*gamma, dg.reshape(self.shape(*gamma))?);
                acc(*beta, db.reshape(self.shape(*beta))?);
            }
            Op::BatchNormEval { x, gamma, beta, mean, var, eps } => {
                let (dx, dg, db) = ops::batch_norm_eval_backward(
                    self.value(*x),
                    self.value(*gamma),
                    mean,
                    var,
                    *eps,
                    g,
                )?;
                acc(*x, dx);
                acc(*gamma, dg.reshape(self.shape(*gamma))?);
                acc(*beta, db.reshape(self.shape(*beta))?);
            }
            Op::Relu(x) => acc(*x, ops::relu_backward(self.value(*x), g)),
            Op::MaxPool { x, argmax } => {
                acc(*x, ops::max_pool_backward(self.shape(*x), argmax, g));
            }
            Op::AvgPool { x, cfg } => acc(*x, ops::avg_pool_backward(self.shape(*x), *cfg, g)?),
            Op::Concat(parts) => {
                let channels: Vec<usize> = parts.iter().map(|&p| self.shape(p).c).collect();
                for (p, d) in parts.iter().zip(ops::split_channels(g, &channels)?) {
                    acc(*p, d);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::ChannelShuffle { x, groups } => acc(*x, ops::channel_shuffle_backward(g, *groups)?),
            Op::FitSpatial(x) => {
                let s = self.shape(*x);
                acc(*x, ops::fit_spatial(g, s.h, s.w));
            }
            Op::WeightedCrossEntropy { logits, targets, weights, probs } => {
                let d = ops::weighted_cross_entropy_backward(probs, targets, weights, g.data()[0])?;
                acc(*logits, d);
            }
        }
        Ok(())
    }
}
