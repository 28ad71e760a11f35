use crate::error::{Result, TensorError};
use crate::shape::Shape;
use crate::tensor::Tensor;

/// Per-channel batch statistics saved by the training-mode forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance over `N·H·W`.
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Count of elements reduced per channel.
    pub count: usize,
}

fn check(op: &'static str, x: Shape, gamma: &Tensor, beta: &Tensor) -> Result<()> {
    if gamma.len() != x.c || beta.len() != x.c {
        return Err(TensorError::shape(
            op,
            format!("affine params {} / {} for {} channels", gamma.len(), beta.len(), x.c),
        ));
    }
    if x.n * x.plane() == 0 {
        return Err(TensorError::shape(op, "empty batch"));
    }
    Ok(())
}

/// Training-mode batch normalization: normalize each channel over `(N, H, W)`
/// with the batch's own statistics, then apply `gamma`/`beta`.
pub fn batch_norm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, BatchStats)> {
    let s = x.shape();
    check("batch_norm", s, gamma, beta)?;
    let count = s.n * s.plane();
    let mut mean = vec![0.0; s.c];
    let mut var = vec![0.0; s.c];
    for c in 0..s.c {
        let m = (0..s.n).map(|n| x.plane(n, c).iter().sum::<f64>()).sum::<f64>() / count as f64;
        let v = (0..s.n)
            .map(|n| x.plane(n, c).iter().map(|&v| (v - m) * (v - m)).sum::<f64>())
            .sum::<f64>()
            / count as f64;
        mean[c] = m;
        var[c] = v;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut y = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let (m, is, g, b) = (mean[c], inv_std[c], gamma.data()[c], beta.data()[c]);
            let src = x.plane(n, c);
            for (o, &v) in y.plane_mut(n, c).iter_mut().zip(src) {
                *o = g * (v - m) * is + b;
            }
        }
    }
    Ok((y, BatchStats { mean, var, inv_std, count }))
}

/// Gradients `(dx, dgamma, dbeta)` of [`batch_norm_train`].
pub fn batch_norm_train_backward(
    x: &Tensor,
    gamma: &Tensor,
    stats: &BatchStats,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let s = x.shape();
    if dy.shape() != s {
        return Err(TensorError::shape("batch_norm_backward", format!("dy {} vs x {s}", dy.shape())));
    }
    let m = stats.count as f64;
    let mut dx = Tensor::zeros(s);
    let mut dgamma = Tensor::zeros(Shape::vector(s.c));
    let mut dbeta = Tensor::zeros(Shape::vector(s.c));
    for c in 0..s.c {
        let (mean, is, g) = (stats.mean[c], stats.inv_std[c], gamma.data()[c]);
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for n in 0..s.n {
            for (&d, &v) in dy.plane(n, c).iter().zip(x.plane(n, c)) {
                sum_dy += d;
                sum_dy_xhat += d * (v - mean) * is;
            }
        }
        dgamma.data_mut()[c] = sum_dy_xhat;
        dbeta.data_mut()[c] = sum_dy;
        let k = g * is / m;
        for n in 0..s.n {
            let xs = x.plane(n, c).to_vec();
            let ds = dy.plane(n, c).to_vec();
            for ((o, v), d) in dx.plane_mut(n, c).iter_mut().zip(xs).zip(ds) {
                let xhat = (v - mean) * is;
                *o = k * (m * d - sum_dy - xhat * sum_dy_xhat);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Inference-mode batch normalization using running statistics.
pub fn batch_norm_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let s = x.shape();
    check("batch_norm_eval", s, gamma, beta)?;
    if running_mean.len() != s.c || running_var.len() != s.c {
        return Err(TensorError::shape("batch_norm_eval", "running statistics length"));
    }
    let mut y = Tensor::zeros(s);
    for c in 0..s.c {
        let is = 1.0 / (running_var.data()[c] + eps).sqrt();
        let (m, g, b) = (running_mean.data()[c], gamma.data()[c], beta.data()[c]);
        for n in 0..s.n {
            let src = x.plane(n, c).to_vec();
            for (o, v) in y.plane_mut(n, c).iter_mut().zip(src) {
                *o = g * (v - m) * is + b;
            }
        }
    }
    Ok(y)
}

/// Gradients `(dx, dgamma, dbeta)` of [`batch_norm_eval`]; running statistics are constants.
pub fn batch_norm_eval_backward(
    x: &Tensor,
    gamma: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let s = x.shape();
    if dy.shape() != s {
        return Err(TensorError::shape("batch_norm_eval_backward", "dy shape"));
    }
    let mut dx = Tensor::zeros(s);
    let mut dgamma = Tensor::zeros(Shape::vector(s.c));
    let mut dbeta = Tensor::zeros(Shape::vector(s.c));
    for c in 0..s.c {
        let is = 1.0 / (running_var.data()[c] + eps).sqrt();
        let (m, g) = (running_mean.data()[c], gamma.data()[c]);
        for n in 0..s.n {
            let xs = x.plane(n, c).to_vec();
            let ds = dy.plane(n, c).to_vec();
            for ((o, v), d) in dx.plane_mut(n, c).iter_mut().zip(xs).zip(ds) {
                *o = d * g * is;
                dgamma.data_mut()[c] += d * (v - m) * is;
                dbeta.data_mut()[c] += d;
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}
